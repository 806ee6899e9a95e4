//! Interaction potentials and force evaluation.
//!
//! The attractive family is `K(x) = C_M/|x|^2 + C_C/|x|`, regularized as
//! `K^ε(x) = C_M/(ε + |x|^2) + C_C/(ε + |x|^2)^{1/2}`; related power-law,
//! repulsive and two-dimensional kernels share the same radial machinery.
//! Every radial profile is evaluated as a function of `s = ε + r²` and returns
//! the pair `(K, g)` with `∇K(x) = g · x`.

pub(crate) mod convolution;
mod direct;
mod tree;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::registry::Registry;

pub use convolution::{force_field, interaction_energy_grid, FieldSample, FreeSpaceConvolver, GridDensity};
pub use direct::{interaction_energy_direct, pairwise_force_direct, DirectSum};
pub use tree::{pairwise_force_tree, BarnesHut};

/// A point or vector in up to three dimensions. Unused trailing components of
/// lower-dimensional problems are kept at zero.
pub type Point = [f64; 3];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    /// `C_M/(ε+r²) + C_C/(ε+r²)^{1/2}`, three dimensions.
    #[serde(rename = "manev-combined")]
    ManevCombined,
    /// `C_M/(ε+r²)`, three dimensions.
    #[serde(rename = "pure-manev")]
    PureManev,
    /// `C_C/(ε+r²)^{1/2}`, three dimensions.
    #[serde(rename = "coulomb")]
    Coulomb,
    /// `C_M (ε+r²)^{-α/2}` with `0 < α ≤ 2`, any dimension.
    #[serde(rename = "power-law")]
    PowerLaw,
    /// `-C_M (ε+r²)^{-α/2}` with `0 < α ≤ 2`, any dimension.
    #[serde(rename = "repulsive-power-law")]
    RepulsivePowerLaw,
    /// Two-dimensional Manev analog `C_M/(ε+r²)^{1/2}`.
    #[serde(rename = "manev-2d")]
    Manev2d,
}

impl KernelFamily {
    pub fn name(self) -> &'static str {
        match self {
            KernelFamily::ManevCombined => "manev-combined",
            KernelFamily::PureManev => "pure-manev",
            KernelFamily::Coulomb => "coulomb",
            KernelFamily::PowerLaw => "power-law",
            KernelFamily::RepulsivePowerLaw => "repulsive-power-law",
            KernelFamily::Manev2d => "manev-2d",
        }
    }
}

fn default_alpha() -> f64 {
    2.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    pub family: KernelFamily,
    /// Manev coefficient; also the amplitude of the power-law and 2D families.
    #[serde(default)]
    pub c_manev: f64,
    #[serde(default)]
    pub c_coulomb: f64,
    /// Exponent of the power-law families.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub epsilon: f64,
    pub dim: usize,
}

impl KernelSpec {
    pub fn pure_manev(c_manev: f64, epsilon: f64) -> Self {
        Self {
            family: KernelFamily::PureManev,
            c_manev,
            c_coulomb: 0.0,
            alpha: 2.0,
            epsilon,
            dim: 3,
        }
    }

    pub fn manev_combined(c_manev: f64, c_coulomb: f64, epsilon: f64) -> Self {
        Self {
            family: KernelFamily::ManevCombined,
            c_manev,
            c_coulomb,
            alpha: 2.0,
            epsilon,
            dim: 3,
        }
    }

    pub fn power_law(amplitude: f64, alpha: f64, epsilon: f64, dim: usize) -> Self {
        Self {
            family: KernelFamily::PowerLaw,
            c_manev: amplitude,
            c_coulomb: 0.0,
            alpha,
            epsilon,
            dim,
        }
    }

    /// An identically vanishing kernel in dimension `dim`.
    pub fn zero(dim: usize) -> Self {
        Self::power_law(0.0, 1.0, 1.0, dim)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, value) in [
            ("c_manev", self.c_manev),
            ("c_coulomb", self.c_coulomb),
            ("epsilon", self.epsilon),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(Error::invalid(format!("{name} must be finite and >= 0, got {value}")));
            }
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::invalid(format!("dimension must be 1, 2 or 3, got {}", self.dim)));
        }
        match self.family {
            KernelFamily::ManevCombined | KernelFamily::PureManev | KernelFamily::Coulomb => {
                if self.dim != 3 {
                    return Err(Error::invalid(format!(
                        "{} requires dim = 3, got {}",
                        self.family.name(),
                        self.dim
                    )));
                }
            }
            KernelFamily::Manev2d => {
                if self.dim != 2 {
                    return Err(Error::invalid(format!("manev-2d requires dim = 2, got {}", self.dim)));
                }
            }
            KernelFamily::PowerLaw | KernelFamily::RepulsivePowerLaw => {
                if !(self.alpha > 0.0 && self.alpha <= 2.0) {
                    return Err(Error::invalid(format!("alpha must lie in (0, 2], got {}", self.alpha)));
                }
            }
        }
        Ok(())
    }

    pub fn is_attractive(&self) -> bool {
        self.family != KernelFamily::RepulsivePowerLaw
    }

    /// True when the kernel vanishes identically.
    pub fn is_zero(&self) -> bool {
        match self.family {
            KernelFamily::ManevCombined => self.c_manev == 0.0 && self.c_coulomb == 0.0,
            KernelFamily::Coulomb => self.c_coulomb == 0.0,
            _ => self.c_manev == 0.0,
        }
    }

    /// The homogeneous term entering the virial identity, as
    /// `(signed coefficient, degree α)` with kernel `coef · |x|^{-α}`.
    /// For the combined Manev kernel only the `C_M` term is used.
    pub fn homogeneous_term(&self) -> (f64, f64) {
        match self.family {
            KernelFamily::ManevCombined | KernelFamily::PureManev => (self.c_manev, 2.0),
            KernelFamily::Coulomb => (self.c_coulomb, 1.0),
            KernelFamily::PowerLaw => (self.c_manev, self.alpha),
            KernelFamily::RepulsivePowerLaw => (-self.c_manev, self.alpha),
            KernelFamily::Manev2d => (self.c_manev, 1.0),
        }
    }

    /// `(K, g)` at `s = ε + r²`, with `∇K(x) = g x`.
    #[inline]
    pub fn profile(&self, s: f64) -> (f64, f64) {
        dispatch(self, EvalAt(s))
    }
}

/// Potential `K^ε(r)`.
pub fn potential(spec: &KernelSpec, r: f64) -> Result<f64> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::invalid(format!("distance must be finite and >= 0, got {r}")));
    }
    if spec.epsilon == 0.0 && r == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    Ok(spec.profile(spec.epsilon + r * r).0)
}

/// Gradient `∇K^ε(x)`.
pub fn force(spec: &KernelSpec, x: Point) -> Result<Point> {
    let r2 = norm2(x);
    if !r2.is_finite() {
        return Err(Error::invalid("displacement must be finite"));
    }
    if spec.epsilon == 0.0 && r2 == 0.0 {
        return Err(Error::SingularEvaluation);
    }
    let (_, g) = spec.profile(spec.epsilon + r2);
    Ok([g * x[0], g * x[1], g * x[2]])
}

#[inline]
pub fn norm2(x: Point) -> f64 {
    x[0] * x[0] + x[1] * x[1] + x[2] * x[2]
}

/// A radial profile specialised at compile time, for the hot pair loops.
pub(crate) trait Radial: Copy + Send + Sync {
    fn eval(self, s: f64) -> (f64, f64);
}

#[derive(Clone, Copy)]
pub(crate) struct InverseS(f64);

impl Radial for InverseS {
    #[inline(always)]
    fn eval(self, s: f64) -> (f64, f64) {
        let inv = 1.0 / s;
        let k = self.0 * inv;
        (k, -2.0 * k * inv)
    }
}

#[derive(Clone, Copy)]
pub(crate) struct InverseSqrtS(f64);

impl Radial for InverseSqrtS {
    #[inline(always)]
    fn eval(self, s: f64) -> (f64, f64) {
        let inv = 1.0 / s;
        let k = self.0 * inv.sqrt();
        (k, -k * inv)
    }
}

#[derive(Clone, Copy)]
pub(crate) struct Combined(InverseS, InverseSqrtS);

impl Radial for Combined {
    #[inline(always)]
    fn eval(self, s: f64) -> (f64, f64) {
        let (k1, g1) = self.0.eval(s);
        let (k2, g2) = self.1.eval(s);
        (k1 + k2, g1 + g2)
    }
}

/// `amp · s^{-half_alpha}`.
#[derive(Clone, Copy)]
pub(crate) struct PowerS {
    amp: f64,
    half_alpha: f64,
}

impl Radial for PowerS {
    #[inline(always)]
    fn eval(self, s: f64) -> (f64, f64) {
        let k = self.amp * s.powf(-self.half_alpha);
        (k, -2.0 * self.half_alpha * k / s)
    }
}

pub(crate) trait RadialVisitor {
    type Output;
    fn visit<P: Radial>(self, profile: P) -> Self::Output;
}

struct EvalAt(f64);

impl RadialVisitor for EvalAt {
    type Output = (f64, f64);
    fn visit<P: Radial>(self, profile: P) -> (f64, f64) {
        profile.eval(self.0)
    }
}

pub(crate) fn dispatch<V: RadialVisitor>(spec: &KernelSpec, visitor: V) -> V::Output {
    match spec.family {
        KernelFamily::ManevCombined => {
            visitor.visit(Combined(InverseS(spec.c_manev), InverseSqrtS(spec.c_coulomb)))
        }
        KernelFamily::PureManev => visitor.visit(InverseS(spec.c_manev)),
        KernelFamily::Coulomb => visitor.visit(InverseSqrtS(spec.c_coulomb)),
        KernelFamily::Manev2d => visitor.visit(InverseSqrtS(spec.c_manev)),
        KernelFamily::PowerLaw | KernelFamily::RepulsivePowerLaw => {
            let sign = if spec.family == KernelFamily::PowerLaw { 1.0 } else { -1.0 };
            let half_alpha = 0.5 * spec.alpha;
            if half_alpha == 1.0 {
                // Exact 1/s keeps the α = 2 case on the fast path.
                visitor.visit(InverseS(sign * spec.c_manev))
            } else if half_alpha == 0.5 {
                visitor.visit(InverseSqrtS(sign * spec.c_manev))
            } else {
                visitor.visit(PowerS {
                    amp: sign * spec.c_manev,
                    half_alpha,
                })
            }
        }
    }
}

/// Result of a pairwise evaluation over a particle set.
#[derive(Clone, Debug, Default)]
pub struct PairField {
    /// `F_i = Σ_{j≠i} w_j ∇K^ε(x_i − x_j)`.
    pub forces: Vec<Point>,
    /// `Φ_i = Σ_{j≠i} w_j K^ε(x_i − x_j)`.
    pub potentials: Vec<f64>,
    /// Smallest pair separation seen by the evaluator (exact for direct
    /// summation, restricted to near-field pairs for the tree code).
    pub min_separation: f64,
}

impl PairField {
    /// `(1/2) Σ_i w_i Φ_i`.
    pub fn interaction_energy(&self, weights: &[f64]) -> f64 {
        0.5 * self
            .potentials
            .iter()
            .zip(weights)
            .map(|(p, w)| p * w)
            .sum::<f64>()
    }

    pub fn max_force(&self) -> f64 {
        self.forces.iter().map(|f| norm2(*f).sqrt()).fold(0.0, f64::max)
    }
}

/// A pairwise force evaluator over weighted particles.
pub trait ForceEvaluator: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Evaluates forces and potentials. With `ε = 0`, a pair closer than
    /// `min_separation` yields [`Error::SeparationGuard`] instead of forces.
    fn evaluate(
        &self,
        spec: &KernelSpec,
        positions: &[Point],
        weights: &[f64],
        min_separation: f64,
    ) -> Result<PairField>;
}

/// Built-in evaluators: `direct` and `tree` (option `theta`, default 0.5).
pub fn force_evaluators() -> Registry<dyn ForceEvaluator> {
    let mut reg: Registry<dyn ForceEvaluator> = Registry::new("force evaluator");
    reg.register("direct", |opts| {
        crate::registry::check_option_keys(opts, &[])?;
        Ok(Box::new(DirectSum))
    });
    reg.register("tree", |opts| {
        crate::registry::check_option_keys(opts, &["theta"])?;
        let theta = crate::registry::option_f64(opts, "theta", 0.5)?;
        Ok(Box::new(BarnesHut::new(theta)?))
    });
    reg
}

pub(crate) fn check_inputs(positions: &[Point], weights: &[f64]) -> Result<()> {
    if positions.len() != weights.len() {
        return Err(Error::invalid(format!(
            "{} positions but {} weights",
            positions.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w >= 0.0)) {
        return Err(Error::invalid(format!("weights must be finite and >= 0, got {w}")));
    }
    Ok(())
}

/// Shared post-check for unregularized evaluations.
pub(crate) fn check_separation(spec: &KernelSpec, min_sep: f64, guard: f64) -> Result<()> {
    if spec.epsilon == 0.0 {
        if min_sep == 0.0 {
            return Err(Error::SingularEvaluation);
        }
        if min_sep < guard {
            return Err(Error::SeparationGuard {
                separation: min_sep,
                guard,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn all_families() -> Vec<KernelSpec> {
        vec![
            KernelSpec::manev_combined(1.0, 1.0, 0.0),
            KernelSpec::pure_manev(1.3, 0.0),
            KernelSpec {
                family: KernelFamily::Coulomb,
                c_manev: 0.0,
                c_coulomb: 0.7,
                alpha: 1.0,
                epsilon: 0.0,
                dim: 3,
            },
            KernelSpec::power_law(1.0, 1.0, 0.0, 1),
            KernelSpec::power_law(2.0, 0.5, 0.0, 3),
            KernelSpec {
                family: KernelFamily::RepulsivePowerLaw,
                c_manev: 1.0,
                c_coulomb: 0.0,
                alpha: 1.5,
                epsilon: 0.0,
                dim: 2,
            },
            KernelSpec {
                family: KernelFamily::Manev2d,
                c_manev: 1.0,
                c_coulomb: 0.0,
                alpha: 1.0,
                epsilon: 0.0,
                dim: 2,
            },
        ]
    }

    #[test]
    fn combined_potential_values() {
        let spec = KernelSpec::manev_combined(1.0, 1.0, 0.0);
        assert_eq!(potential(&spec, 1.0).unwrap(), 2.0);
        let reg = KernelSpec::manev_combined(1.0, 1.0, 0.01);
        assert_relative_eq!(potential(&reg, 0.0).unwrap(), 110.0, max_relative = 1e-14);
    }

    #[test]
    fn singular_at_origin_without_regularization() {
        let spec = KernelSpec::pure_manev(1.0, 0.0);
        assert!(matches!(potential(&spec, 0.0), Err(Error::SingularEvaluation)));
        assert!(matches!(force(&spec, [0.0; 3]), Err(Error::SingularEvaluation)));
        assert!(potential(&spec, -1.0).is_err());
    }

    #[test]
    fn pure_manev_unit_force() {
        let spec = KernelSpec::pure_manev(1.0, 0.0);
        assert_eq!(force(&spec, [1.0, 0.0, 0.0]).unwrap(), [-2.0, 0.0, 0.0]);
        let reg = KernelSpec::pure_manev(1.0, 0.1);
        assert_eq!(force(&reg, [0.0; 3]).unwrap(), [0.0; 3]);
    }

    #[test]
    fn validation_rules() {
        let mut spec = KernelSpec::pure_manev(1.0, 0.1);
        spec.dim = 2;
        assert!(spec.validate().is_err());
        let mut m2 = KernelSpec::pure_manev(1.0, 0.1);
        m2.family = KernelFamily::Manev2d;
        assert!(m2.validate().is_err());
        m2.dim = 2;
        assert!(m2.validate().is_ok());
        assert!(KernelSpec::power_law(1.0, 2.5, 0.1, 1).validate().is_err());
        assert!(KernelSpec::power_law(1.0, 0.0, 0.1, 1).validate().is_err());
        assert!(KernelSpec::pure_manev(-1.0, 0.1).validate().is_err());
        assert!(KernelSpec::pure_manev(1.0, -0.1).validate().is_err());
        for s in all_families() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn family_names_round_trip_through_serde() {
        for s in all_families() {
            let json = serde_json::to_string(&s).unwrap();
            assert!(json.contains(s.family.name()), "{json}");
            let back: KernelSpec = serde_json::from_str(&json).unwrap();
            assert_eq!(back, s);
        }
    }

    #[test]
    fn force_matches_central_differences() {
        // Independent oracle: finite differences of the scalar potential.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let h = 1e-4;
        for base in all_families() {
            let spec = base.with_epsilon(0.05);
            for _ in 0..100 {
                let x: Point = [
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                    rng.random_range(-2.0..2.0),
                ];
                let f = force(&spec, x).unwrap();
                for axis in 0..3 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[axis] += h;
                    xm[axis] -= h;
                    let fd = (potential(&spec, norm2(xp).sqrt()).unwrap()
                        - potential(&spec, norm2(xm).sqrt()).unwrap())
                        / (2.0 * h);
                    // Third derivatives of these kernels stay below ~1e3 on this
                    // box, so the O(h²) truncation is below 1e-5.
                    assert!(
                        (f[axis] - fd).abs() <= 1e-5 * (1.0 + fd.abs()),
                        "{:?} axis {axis}: {} vs {}",
                        spec.family,
                        f[axis],
                        fd
                    );
                }
            }
        }
    }

    #[test]
    fn pure_manev_scaling() {
        let spec = KernelSpec::pure_manev(1.0, 0.0);
        for &r in &[0.3, 1.0, 4.0] {
            for &lam in &[0.5, 2.0, 7.0] {
                let a = potential(&spec, lam * r).unwrap();
                let b = potential(&spec, r).unwrap() / (lam * lam);
                assert_relative_eq!(a, b, max_relative = 1e-14);
            }
        }
    }

    #[test]
    fn zero_and_homogeneous_terms() {
        assert!(KernelSpec::zero(1).is_zero());
        assert!(!KernelSpec::pure_manev(1.0, 0.1).is_zero());
        assert_eq!(KernelSpec::manev_combined(2.0, 3.0, 0.0).homogeneous_term(), (2.0, 2.0));
    }

    proptest! {
        #[test]
        fn regularization_lowers_potential(r in 1e-3f64..10.0, eps in 1e-6f64..1.0, idx in 0usize..7) {
            let base = all_families()[idx];
            let reg = base.with_epsilon(eps);
            let p0 = potential(&base, r).unwrap();
            let pe = potential(&reg, r).unwrap();
            if base.is_attractive() {
                prop_assert!(pe <= p0);
            } else {
                prop_assert!(pe >= p0);
            }
        }

        #[test]
        fn force_is_odd(x in prop::array::uniform3(-3.0f64..3.0), eps in 1e-4f64..1.0, idx in 0usize..7) {
            let spec = all_families()[idx].with_epsilon(eps);
            let f = force(&spec, x).unwrap();
            let g = force(&spec, [-x[0], -x[1], -x[2]]).unwrap();
            for a in 0..3 {
                prop_assert_eq!(f[a], -g[a]);
            }
        }

        #[test]
        fn attractive_potential_is_nonincreasing(r in 0.0f64..5.0, dr in 0.0f64..1.0, eps in 1e-4f64..1.0, idx in 0usize..7) {
            let spec = all_families()[idx].with_epsilon(eps);
            let a = potential(&spec, r).unwrap();
            let b = potential(&spec, r + dr).unwrap();
            if spec.is_attractive() {
                prop_assert!(b <= a);
            }
        }
    }
}
