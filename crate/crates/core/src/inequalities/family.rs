//! Analytic test densities in phase space and position space.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::quadrature::{integrate_box, simpson};
use crate::error::{Error, Result};
use crate::kernels::GridDensity;

/// Volume of the unit ball in dimension `dim`.
pub fn unit_ball_volume(dim: usize) -> f64 {
    match dim {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => 4.0 / 3.0 * std::f64::consts::PI,
    }
}

fn sphere_area(dim: usize) -> f64 {
    dim as f64 * unit_ball_volume(dim)
}

fn norm2(y: &[f64; 3], dim: usize) -> f64 {
    y[..dim].iter().map(|c| c * c).sum()
}

fn bump(t2: f64) -> f64 {
    if t2 < 1.0 {
        (-1.0 / (1.0 - t2)).exp()
    } else {
        0.0
    }
}

/// `∫_{|y|<1} exp(-1/(1-|y|²)) dy` in dimension `dim`.
fn bump_mass(dim: usize) -> f64 {
    sphere_area(dim) * simpson(|t| bump(t * t) * t.powi(dim as i32 - 1), 0.0, 1.0, 4096)
}

/// One cosine modulation `amplitude · cos(k·y + phase)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub wavevector: [f64; 3],
    pub amplitude: f64,
    pub phase: f64,
}

/// Unit-mass spatial shape centred at the origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Profile {
    Gaussian { width: f64 },
    /// `exp(-1/(1-|y/R|²))` on `|y| < R`.
    Bump { radius: f64 },
    /// Gaussian times `1 + Σ a_j cos(k_j·y + φ_j)` with `Σ|a_j| < 1`.
    ModulatedGaussian { width: f64, modes: Vec<Mode> },
}

impl Profile {
    fn validate(&self) -> Result<()> {
        let scale = match self {
            Profile::Gaussian { width } | Profile::ModulatedGaussian { width, .. } => *width,
            Profile::Bump { radius } => *radius,
        };
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("profile scale must be positive, got {scale}")));
        }
        if let Profile::ModulatedGaussian { modes, .. } = self {
            let total: f64 = modes.iter().map(|m| m.amplitude.abs()).sum();
            if !(total < 1.0) {
                return Err(Error::invalid(format!("modulation amplitudes sum to {total}, need < 1")));
            }
        }
        Ok(())
    }

    /// Radius beyond which the profile is negligible (below `e^{-40}` of its peak).
    fn extent(&self) -> f64 {
        match self {
            Profile::Gaussian { width } | Profile::ModulatedGaussian { width, .. } => 9.0 * width,
            Profile::Bump { radius } => *radius,
        }
    }

    fn dilate(&self, lambda: f64) -> Self {
        match self {
            Profile::Gaussian { width } => Profile::Gaussian { width: width / lambda },
            Profile::Bump { radius } => Profile::Bump { radius: radius / lambda },
            Profile::ModulatedGaussian { width, modes } => Profile::ModulatedGaussian {
                width: width / lambda,
                modes: modes
                    .iter()
                    .map(|m| Mode {
                        wavevector: m.wavevector.map(|k| k * lambda),
                        ..m.clone()
                    })
                    .collect(),
            },
        }
    }
}

/// A profile with its normalisation resolved for a given dimension.
#[derive(Clone, Debug, PartialEq)]
struct Shape {
    profile: Profile,
    norm: f64,
}

impl Shape {
    fn new(profile: Profile, dim: usize) -> Result<Self> {
        profile.validate()?;
        let d = dim as f64;
        let norm = match &profile {
            Profile::Gaussian { width } => (2.0 * std::f64::consts::PI * width * width).powf(-0.5 * d),
            Profile::Bump { radius } => 1.0 / (bump_mass(dim) * radius.powi(dim as i32)),
            Profile::ModulatedGaussian { width, modes } => {
                let z: f64 = 1.0
                    + modes
                        .iter()
                        .map(|m| {
                            let k2 = norm2(&m.wavevector, dim);
                            m.amplitude * (-0.5 * width * width * k2).exp() * m.phase.cos()
                        })
                        .sum::<f64>();
                (2.0 * std::f64::consts::PI * width * width).powf(-0.5 * d) / z
            }
        };
        Ok(Self { profile, norm })
    }

    fn eval(&self, y: &[f64; 3], dim: usize) -> f64 {
        let r2 = norm2(y, dim);
        match &self.profile {
            Profile::Gaussian { width } => self.norm * (-0.5 * r2 / (width * width)).exp(),
            Profile::Bump { radius } => self.norm * bump(r2 / (radius * radius)),
            Profile::ModulatedGaussian { width, modes } => {
                let m: f64 = modes
                    .iter()
                    .map(|m| {
                        let phase: f64 = (0..dim).map(|a| m.wavevector[a] * y[a]).sum::<f64>() + m.phase;
                        m.amplitude * phase.cos()
                    })
                    .sum();
                self.norm * (1.0 + m) * (-0.5 * r2 / (width * width)).exp()
            }
        }
    }
}

/// A weighted, shifted profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub mass: f64,
    pub center: [f64; 3],
    pub profile: Profile,
}

/// `ρ(x) = Σ m_k S_k(x - c_k)` in dimension `dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpatialMixture {
    dim: usize,
    blobs: Vec<Blob>,
    shapes: Vec<Shape>,
}

impl SpatialMixture {
    pub fn new(dim: usize, blobs: Vec<Blob>) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::invalid(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if blobs.is_empty() {
            return Err(Error::invalid("a mixture needs at least one component"));
        }
        for b in &blobs {
            if !(b.mass.is_finite() && b.mass > 0.0) {
                return Err(Error::invalid(format!("component mass must be positive, got {}", b.mass)));
            }
        }
        let shapes = blobs
            .iter()
            .map(|b| Shape::new(b.profile.clone(), dim))
            .collect::<Result<_>>()?;
        Ok(Self { dim, blobs, shapes })
    }

    /// A single centred Gaussian.
    pub fn gaussian(dim: usize, mass: f64, width: f64) -> Result<Self> {
        Self::new(
            dim,
            vec![Blob {
                mass,
                center: [0.0; 3],
                profile: Profile::Gaussian { width },
            }],
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn blobs(&self) -> &[Blob] {
        &self.blobs
    }

    pub fn mass(&self) -> f64 {
        self.blobs.iter().map(|b| b.mass).sum()
    }

    pub fn eval(&self, x: &[f64; 3]) -> f64 {
        self.blobs
            .iter()
            .zip(&self.shapes)
            .map(|(b, s)| {
                let y = [x[0] - b.center[0], x[1] - b.center[1], x[2] - b.center[2]];
                b.mass * s.eval(&y, self.dim)
            })
            .sum()
    }

    /// Axis-aligned box outside which the density is negligible.
    pub fn bounding_box(&self) -> ([f64; 3], [f64; 3]) {
        let mut lo = [0.0; 3];
        let mut hi = [0.0; 3];
        for a in 0..self.dim {
            lo[a] = self
                .blobs
                .iter()
                .map(|b| b.center[a] - b.profile.extent())
                .fold(f64::INFINITY, f64::min);
            hi[a] = self
                .blobs
                .iter()
                .map(|b| b.center[a] + b.profile.extent())
                .fold(f64::NEG_INFINITY, f64::max);
        }
        (lo, hi)
    }

    /// `‖ρ‖_p` by quadrature, `1 ≤ p < ∞`.
    pub fn lp_norm(&self, p: f64, rtol: f64) -> Result<f64> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(Error::domain(format!("p must lie in [1, ∞), got {p}")));
        }
        let (lo, hi) = self.bounding_box();
        let integral = integrate_box(self.dim, lo, hi, &|x| self.eval(&x).max(0.0).powf(p), rtol)?;
        Ok(integral.powf(1.0 / p))
    }

    /// `ρ_λ(x) = λ^d ρ(λx)`, which preserves mass.
    pub fn dilate(&self, lambda: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return Err(Error::invalid(format!("dilation factor must be positive, got {lambda}")));
        }
        let blobs = self
            .blobs
            .iter()
            .map(|b| Blob {
                mass: b.mass,
                center: b.center.map(|c| c / lambda),
                profile: b.profile.dilate(lambda),
            })
            .collect();
        Self::new(self.dim, blobs)
    }

    /// Nodal samples on the geometry of `grid` (its values are replaced).
    pub fn sample(&self, grid: &GridDensity) -> Result<GridDensity> {
        if grid.dim != self.dim {
            return Err(Error::invalid(format!(
                "grid dimension {} differs from density dimension {}",
                grid.dim, self.dim
            )));
        }
        let mut out = grid.clone();
        for (i, v) in out.values.iter_mut().enumerate() {
            *v = self.eval(&grid.node(i));
        }
        Ok(out)
    }
}

/// Velocity law of one phase-space component, normalised to unit mass.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VelocityProfile {
    Maxwellian { temperature: f64 },
    /// Uniform on the ball `|u| < radius`.
    Ball { radius: f64 },
}

impl VelocityProfile {
    fn validate(&self) -> Result<()> {
        let s = match self {
            VelocityProfile::Maxwellian { temperature } => *temperature,
            VelocityProfile::Ball { radius } => *radius,
        };
        if !(s.is_finite() && s > 0.0) {
            return Err(Error::invalid(format!("velocity scale must be positive, got {s}")));
        }
        Ok(())
    }

    fn eval(&self, u: &[f64; 3], dim: usize) -> f64 {
        let u2 = norm2(u, dim);
        match *self {
            VelocityProfile::Maxwellian { temperature } => {
                (2.0 * std::f64::consts::PI * temperature).powf(-0.5 * dim as f64) * (-0.5 * u2 / temperature).exp()
            }
            VelocityProfile::Ball { radius } => {
                if u2 < radius * radius {
                    1.0 / (unit_ball_volume(dim) * radius.powi(dim as i32))
                } else {
                    0.0
                }
            }
        }
    }

    /// `∫|u|² P(u) du`.
    fn second_moment(&self, dim: usize) -> f64 {
        let d = dim as f64;
        match *self {
            VelocityProfile::Maxwellian { temperature } => d * temperature,
            VelocityProfile::Ball { radius } => d * radius * radius / (d + 2.0),
        }
    }
}

/// One phase-space component `m S(x - c) P(v - u)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseBlob {
    #[serde(flatten)]
    pub blob: Blob,
    pub drift: [f64; 3],
    pub velocity: VelocityProfile,
}

/// `f(x, v) = Σ m_k S_k(x - c_k) P_k(v - u_k)`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseMixture {
    spatial: SpatialMixture,
    blobs: Vec<PhaseBlob>,
}

impl PhaseMixture {
    pub fn new(dim: usize, blobs: Vec<PhaseBlob>) -> Result<Self> {
        for b in &blobs {
            b.velocity.validate()?;
        }
        let spatial = SpatialMixture::new(dim, blobs.iter().map(|b| b.blob.clone()).collect())?;
        Ok(Self { spatial, blobs })
    }

    pub fn dim(&self) -> usize {
        self.spatial.dim
    }

    pub fn blobs(&self) -> &[PhaseBlob] {
        &self.blobs
    }

    /// The position density `ρ = ∫ f dv`.
    pub fn density(&self) -> &SpatialMixture {
        &self.spatial
    }

    pub fn eval(&self, x: &[f64; 3], v: &[f64; 3]) -> f64 {
        let dim = self.dim();
        self.blobs
            .iter()
            .zip(&self.spatial.shapes)
            .map(|(b, s)| {
                let y = [x[0] - b.blob.center[0], x[1] - b.blob.center[1], x[2] - b.blob.center[2]];
                let u = [v[0] - b.drift[0], v[1] - b.drift[1], v[2] - b.drift[2]];
                b.blob.mass * s.eval(&y, dim) * b.velocity.eval(&u, dim)
            })
            .sum()
    }

    /// Lower bound on `‖f‖_∞`: the largest value at a component centre.
    /// Using it in an upper bound only makes a check stricter.
    pub fn sup_lower_bound(&self) -> f64 {
        self.blobs
            .iter()
            .map(|b| self.eval(&b.blob.center, &b.drift))
            .fold(0.0, f64::max)
    }

    /// `∬ |v|² f dx dv`.
    pub fn velocity_second_moment(&self) -> f64 {
        let dim = self.dim();
        self.blobs
            .iter()
            .map(|b| b.blob.mass * (b.velocity.second_moment(dim) + norm2(&b.drift, dim)))
            .sum()
    }

    /// Multiplies `f` by `lambda`.
    pub fn scale(&self, lambda: f64) -> Result<Self> {
        let blobs = self
            .blobs
            .iter()
            .map(|b| PhaseBlob {
                blob: Blob {
                    mass: b.blob.mass * lambda,
                    ..b.blob.clone()
                },
                ..b.clone()
            })
            .collect();
        Self::new(self.dim(), blobs)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    GaussianMixture,
    BumpSum,
    RandomNonnegTrig,
}

/// Seeded random family of phase-space test densities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityFamily {
    pub generator: Generator,
    pub dim: usize,
    pub count: usize,
    pub seed: u64,
    #[serde(default = "default_mass_range")]
    pub mass_range: [f64; 2],
    /// Spatial scale: Gaussian width, or half the bump radius.
    #[serde(default = "default_width_range")]
    pub width_range: [f64; 2],
    #[serde(default = "default_max_components")]
    pub max_components: usize,
    /// Centres are uniform in `[-spread, spread]^dim`.
    #[serde(default = "default_center_spread")]
    pub center_spread: f64,
    /// Maxwellian temperature; the ball radius is `2√T`.
    #[serde(default = "default_temperature_range")]
    pub temperature_range: [f64; 2],
    /// Drifts are uniform in `[-drift, drift]^dim`.
    #[serde(default = "default_drift")]
    pub drift: f64,
}

fn default_mass_range() -> [f64; 2] {
    [0.5, 2.0]
}
fn default_width_range() -> [f64; 2] {
    [0.5, 1.5]
}
fn default_max_components() -> usize {
    3
}
fn default_center_spread() -> f64 {
    1.5
}
fn default_temperature_range() -> [f64; 2] {
    [0.25, 2.0]
}
fn default_drift() -> f64 {
    1.0
}

impl DensityFamily {
    pub fn new(generator: Generator, dim: usize, count: usize, seed: u64) -> Self {
        Self {
            generator,
            dim,
            count,
            seed,
            mass_range: default_mass_range(),
            width_range: default_width_range(),
            max_components: default_max_components(),
            center_spread: default_center_spread(),
            temperature_range: default_temperature_range(),
            drift: default_drift(),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, [lo, hi]) in [
            ("mass_range", self.mass_range),
            ("width_range", self.width_range),
            ("temperature_range", self.temperature_range),
        ] {
            if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
                return Err(Error::invalid(format!("{name} must satisfy 0 < lo <= hi, got [{lo}, {hi}]")));
            }
        }
        if self.max_components == 0 {
            return Err(Error::invalid("max_components must be at least 1"));
        }
        if !(self.center_spread >= 0.0 && self.drift >= 0.0) {
            return Err(Error::invalid("center_spread and drift must be >= 0"));
        }
        Ok(())
    }

    /// Draws `count` densities; the same seed always gives the same family.
    pub fn generate(&self) -> Result<Vec<PhaseMixture>> {
        self.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..self.count).map(|_| self.draw(&mut rng)).collect()
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> Result<PhaseMixture> {
        let dim = self.dim;
        let uniform = |rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]| if hi > lo { rng.random_range(lo..=hi) } else { lo };
        let k = rng.random_range(1..=self.max_components);
        let total = uniform(rng, self.mass_range);
        let split: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let norm: f64 = split.iter().sum();
        let mut blobs = Vec::with_capacity(k);
        for share in split {
            let mut center = [0.0; 3];
            let mut drift = [0.0; 3];
            for a in 0..dim {
                center[a] = uniform(rng, [-self.center_spread, self.center_spread]);
                drift[a] = uniform(rng, [-self.drift, self.drift]);
            }
            let width = uniform(rng, self.width_range);
            let temperature = uniform(rng, self.temperature_range);
            let (profile, velocity) = match self.generator {
                Generator::GaussianMixture => (Profile::Gaussian { width }, VelocityProfile::Maxwellian { temperature }),
                Generator::BumpSum => (
                    Profile::Bump { radius: 2.0 * width },
                    VelocityProfile::Ball {
                        radius: 2.0 * temperature.sqrt(),
                    },
                ),
                Generator::RandomNonnegTrig => {
                    let n_modes = rng.random_range(1..=3);
                    let budget = rng.random_range(0.3..0.9);
                    let weights: Vec<f64> = (0..n_modes).map(|_| rng.random_range(0.1..1.0)).collect();
                    let wsum: f64 = weights.iter().sum();
                    let modes = weights
                        .iter()
                        .map(|w| {
                            let mut k = [0.0; 3];
                            for c in k.iter_mut().take(dim) {
                                *c = rng.random_range(-3.0..3.0) / width;
                            }
                            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                            Mode {
                                wavevector: k,
                                amplitude: sign * budget * w / wsum,
                                phase: rng.random_range(0.0..std::f64::consts::TAU),
                            }
                        })
                        .collect();
                    (Profile::ModulatedGaussian { width, modes }, VelocityProfile::Maxwellian { temperature })
                }
            };
            blobs.push(PhaseBlob {
                blob: Blob {
                    mass: total * share / norm,
                    center,
                    profile,
                },
                drift,
                velocity,
            });
        }
        PhaseMixture::new(dim, blobs)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn profiles_have_unit_mass() {
        for dim in 1..=3 {
            for profile in [
                Profile::Gaussian { width: 0.7 },
                Profile::Bump { radius: 1.3 },
                Profile::ModulatedGaussian {
                    width: 0.8,
                    modes: vec![Mode {
                        wavevector: [1.5, -0.5, 2.0],
                        amplitude: 0.6,
                        phase: 0.4,
                    }],
                },
            ] {
                let rho = SpatialMixture::new(
                    dim,
                    vec![Blob {
                        mass: 1.7,
                        center: [0.3, -0.2, 0.1],
                        profile: profile.clone(),
                    }],
                )
                .unwrap();
                assert_relative_eq!(rho.lp_norm(1.0, 1e-9).unwrap(), 1.7, max_relative = 1e-7);
            }
        }
    }

    #[test]
    fn gaussian_lp_norm_matches_closed_form() {
        // ∫ (M φ_s)^p = M^p (2π s²)^{-3(p-1)/2} p^{-3/2}.
        let (m, s, p) = (1.3, 0.8, 5.0 / 3.0);
        let rho = SpatialMixture::gaussian(3, m, s).unwrap();
        let exact = (m.powf(p) * (2.0 * std::f64::consts::PI * s * s).powf(-1.5 * (p - 1.0)) * p.powf(-1.5)).powf(1.0 / p);
        assert_relative_eq!(rho.lp_norm(p, 1e-10).unwrap(), exact, max_relative = 1e-8);
    }

    #[test]
    fn dilation_preserves_mass_and_scales_norms() {
        let fam = DensityFamily::new(Generator::RandomNonnegTrig, 3, 1, 5).generate().unwrap();
        let rho = fam[0].density();
        let half = rho.dilate(2.0).unwrap();
        assert_relative_eq!(half.lp_norm(1.0, 1e-9).unwrap(), rho.mass(), max_relative = 1e-6);
        // ‖ρ_λ‖_p = λ^{d(1-1/p)} ‖ρ‖_p.
        let p = 5.0 / 3.0;
        assert_relative_eq!(
            half.lp_norm(p, 1e-9).unwrap(),
            2f64.powf(3.0 * (1.0 - 1.0 / p)) * rho.lp_norm(p, 1e-9).unwrap(),
            max_relative = 1e-6
        );
    }

    #[test]
    fn families_are_reproducible_and_nonnegative() {
        for generator in [Generator::GaussianMixture, Generator::BumpSum, Generator::RandomNonnegTrig] {
            let fam = DensityFamily::new(generator, 3, 4, 11);
            let a = fam.generate().unwrap();
            assert_eq!(a, fam.generate().unwrap());
            for f in &a {
                assert!(f.velocity_second_moment() > 0.0);
                assert!(f.sup_lower_bound() > 0.0);
                let grid = f.density().sample(&GridDensity::centered(3, 16, 4.0)).unwrap();
                assert!(grid.values.iter().all(|v| *v >= 0.0));
            }
        }
    }

    #[test]
    fn maxwellian_blob_moments() {
        let f = PhaseMixture::new(
            3,
            vec![PhaseBlob {
                blob: Blob {
                    mass: 2.0,
                    center: [0.0; 3],
                    profile: Profile::Gaussian { width: 1.0 },
                },
                drift: [1.0, 0.0, 0.0],
                velocity: VelocityProfile::Maxwellian { temperature: 0.5 },
            }],
        )
        .unwrap();
        assert_relative_eq!(f.velocity_second_moment(), 2.0 * (1.5 + 1.0));
        let peak = 2.0 * (2.0 * std::f64::consts::PI).powf(-1.5) * std::f64::consts::PI.powf(-1.5);
        assert_relative_eq!(f.sup_lower_bound(), peak, max_relative = 1e-12);
    }

    #[test]
    fn invalid_modulation_is_rejected() {
        let blob = Blob {
            mass: 1.0,
            center: [0.0; 3],
            profile: Profile::ModulatedGaussian {
                width: 1.0,
                modes: vec![Mode {
                    wavevector: [1.0, 0.0, 0.0],
                    amplitude: 1.0,
                    phase: 0.0,
                }],
            },
        };
        assert!(SpatialMixture::new(3, vec![blob]).is_err());
    }
}
