//! The individual inequality checks.

use num_rational::Ratio;
use serde_json::{json, Map, Value};

use super::family::{unit_ball_volume, PhaseMixture, Profile, SpatialMixture};
use super::quadrature::gaussian_power_mean;
use super::{InequalityReport, Sample};
use crate::diagnostics::{self, DiagnosticsRecord, LpSource};
use crate::error::{Error, Result};
use crate::kernels::{FreeSpaceConvolver, GridDensity, KernelFamily, KernelSpec};
use crate::phase_grid::PhaseGrid;

/// Relative tolerance of the box quadratures behind density norms.
const NORM_RTOL: f64 = 1e-7;

/// `‖f(t)‖_p ≤ ‖f₀‖_p e^{dσ(1-1/p)t}` over a grid run.
///
/// `dim` is the velocity dimension of the run. Each record is one sample;
/// the first record is the reference state.
pub fn check_lp_growth(
    records: &[DiagnosticsRecord],
    p: f64,
    sigma: f64,
    dim: usize,
    tolerance: f64,
) -> Result<InequalityReport> {
    let first = records.first().ok_or_else(|| Error::invalid("no records to check"))?;
    if records.iter().any(|r| r.lp_source == Some(LpSource::Kde)) {
        return Err(Error::domain("L^p growth needs grid norms, not KDE estimates"));
    }
    let norm = |r: &DiagnosticsRecord| {
        r.lp(p)
            .ok_or_else(|| Error::invalid(format!("record at t = {} has no L^{p} norm", r.t)))
    };
    let f0 = norm(first)?;
    let rate = dim as f64 * sigma * if p.is_infinite() { 1.0 } else { 1.0 - 1.0 / p };
    let samples = records
        .iter()
        .map(|r| {
            let lhs = norm(r)?;
            let rhs = f0 * (rate * (r.t - first.t)).exp();
            Ok(Sample::new(format!("t={}", r.t), lhs, rhs))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut meta = Map::new();
    meta.insert("p".into(), json!(if p.is_infinite() { "inf".to_string() } else { p.to_string() }));
    meta.insert("sigma".into(), json!(sigma));
    meta.insert("dim".into(), json!(dim));
    Ok(InequalityReport::new("lp-growth", tolerance, samples, meta))
}

/// The moments entering the density interpolation bound.
pub trait KineticMoments {
    /// Velocity (and position) dimension `d`.
    fn dim(&self) -> usize;
    /// `‖ρ‖_p` of the position density.
    fn density_norm(&self, p: f64) -> Result<f64>;
    /// `‖f‖_∞`, or a lower bound on it.
    fn sup_norm(&self) -> f64;
    /// `∬ |v|² f`.
    fn velocity_second_moment(&self) -> f64;
}

impl KineticMoments for PhaseMixture {
    fn dim(&self) -> usize {
        PhaseMixture::dim(self)
    }
    fn density_norm(&self, p: f64) -> Result<f64> {
        self.density().lp_norm(p, NORM_RTOL)
    }
    fn sup_norm(&self) -> f64 {
        self.sup_lower_bound()
    }
    fn velocity_second_moment(&self) -> f64 {
        PhaseMixture::velocity_second_moment(self)
    }
}

impl KineticMoments for PhaseGrid {
    fn dim(&self) -> usize {
        self.geometry.dim
    }
    fn density_norm(&self, p: f64) -> Result<f64> {
        Ok(self.moments().0.lp_norm(p))
    }
    fn sup_norm(&self) -> f64 {
        self.max()
    }
    fn velocity_second_moment(&self) -> f64 {
        2.0 * diagnostics::kinetic(self)
    }
}

/// `‖ρ‖_γ ≤ (c_d‖f‖_∞ + 1)(∬|v|²f)^{d/(d+2)}` with `γ = (d+2)/d` and `c_d`
/// the unit-ball volume.
///
/// The bound follows from splitting `ρ(x) = ∫ f dv` at `|v| = R` with
/// `R = (∫|v|² f dv)^{1/(d+2)}`, which gives the pointwise estimate
/// `ρ ≤ c_d‖f‖_∞ R^d + R^{-2}∫|v|²f dv`.
pub fn check_density_interpolation(items: &[&dyn KineticMoments], tolerance: f64) -> Result<InequalityReport> {
    let mut samples = Vec::with_capacity(items.len());
    let mut dims = Vec::new();
    for (i, f) in items.iter().enumerate() {
        let d = f.dim();
        if !dims.contains(&d) {
            dims.push(d);
        }
        let gamma = (d as f64 + 2.0) / d as f64;
        let lhs = f.density_norm(gamma)?;
        let rhs = (unit_ball_volume(d) * f.sup_norm() + 1.0) * f.velocity_second_moment().powf(1.0 / gamma);
        samples.push(Sample::new(format!("density {i}"), lhs, rhs));
    }
    let mut meta = Map::new();
    let consts: Map<String, Value> = dims
        .iter()
        .map(|d| (format!("c_{d}"), json!(unit_ball_volume(*d))))
        .collect();
    meta.insert("ball_constants".into(), Value::Object(consts));
    meta.insert("exponent".into(), json!("gamma = (d+2)/d, moment power d/(d+2)"));
    Ok(InequalityReport::new("density-interpolation", tolerance, samples, meta))
}

/// Exponents of the interpolation `‖ρ‖_p ≤ ‖ρ‖₁^{1-α}‖ρ‖_γ^α`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InterpolationExponents {
    pub alpha: Ratio<i64>,
    pub beta: Ratio<i64>,
    pub sum: Ratio<i64>,
}

impl InterpolationExponents {
    /// Power of `‖ρ‖₁` in the product bound, `2 - (α + β)`.
    pub fn l1_exponent(&self) -> Ratio<i64> {
        Ratio::from_integer(2) - self.sum
    }
}

/// Solves `1/p = 1 - α + α/γ`, `1/q = 1 - β + β/γ` exactly, given the
/// three-dimensional constraint `1/p + 1/q + λ/3 = 2` and `1 ≤ p, q ≤ γ`.
pub fn interpolation_exponents(
    p: Ratio<i64>,
    q: Ratio<i64>,
    gamma: Ratio<i64>,
    lambda: Ratio<i64>,
) -> Result<InterpolationExponents> {
    let one = Ratio::from_integer(1);
    if gamma <= one {
        return Err(Error::domain(format!("gamma must exceed 1, got {gamma}")));
    }
    for (name, x) in [("p", p), ("q", q)] {
        if x < one || x > gamma {
            return Err(Error::domain(format!("{name} = {x} must lie in [1, {gamma}]")));
        }
    }
    let lhs = p.recip() + q.recip() + lambda / Ratio::from_integer(3);
    if lhs != Ratio::from_integer(2) {
        return Err(Error::domain(format!("1/p + 1/q + λ/3 = {lhs}, expected 2")));
    }
    let factor = gamma / (gamma - one);
    let alpha = (one - p.recip()) * factor;
    let beta = (one - q.recip()) * factor;
    Ok(InterpolationExponents {
        alpha,
        beta,
        sum: alpha + beta,
    })
}

/// Homogeneous power terms of a kernel as `(label, signed coefficient, a)`
/// with kernel `coef · (ε + r²)^{-a}`.
fn power_terms(spec: &KernelSpec) -> Vec<(&'static str, f64, f64)> {
    let terms = match spec.family {
        KernelFamily::ManevCombined => vec![("manev", spec.c_manev, 1.0), ("coulomb", spec.c_coulomb, 0.5)],
        KernelFamily::PureManev => vec![("manev", spec.c_manev, 1.0)],
        KernelFamily::Coulomb => vec![("coulomb", spec.c_coulomb, 0.5)],
        KernelFamily::Manev2d => vec![("manev-2d", spec.c_manev, 0.5)],
        KernelFamily::PowerLaw => vec![("power-law", spec.c_manev, 0.5 * spec.alpha)],
        KernelFamily::RepulsivePowerLaw => vec![("repulsive-power-law", -spec.c_manev, 0.5 * spec.alpha)],
    };
    terms.into_iter().filter(|t| t.1 != 0.0).collect()
}

fn gaussian_width(profile: &Profile) -> Result<f64> {
    match profile {
        Profile::Gaussian { width } => Ok(*width),
        _ => Err(Error::domain("the interaction quadrature needs Gaussian components")),
    }
}

/// `coef · ∬ (ε + |x-y|²)^{-a} ρ(x) ρ(y)` for a Gaussian mixture.
fn gaussian_interaction(rho: &SpatialMixture, coef: f64, a: f64, epsilon: f64) -> Result<f64> {
    let dim = rho.dim();
    let blobs = rho.blobs();
    let mut total = 0.0;
    for bj in blobs {
        let wj = gaussian_width(&bj.profile)?;
        for bk in blobs {
            let wk = gaussian_width(&bk.profile)?;
            let mu2: f64 = (0..dim).map(|c| (bj.center[c] - bk.center[c]).powi(2)).sum();
            total += bj.mass * bk.mass * gaussian_power_mean(a, dim, epsilon, wj * wj + wk * wk, mu2)?;
        }
    }
    Ok(coef * total)
}

/// Interaction energy over its scale-invariant norm combination, per
/// homogeneous kernel term.
///
/// For `(ε + r²)^{-a}` in dimension `d`, the bound pairs `‖ρ‖₁^{2-β}` with
/// `‖ρ‖_γ^β`, where `γ = (d+2)/d` and `β = a(d+2)/d`. This gives `1/3, 5/3`
/// for the Manev term, `7/6, 5/6` for the Coulomb term, and `1, 1` for the
/// two-dimensional analog. With `ε = 0` both sides scale identically under
/// `ρ → λ^d ρ(λ·)`. Each sample compares the ratio at a dilation with the
/// ratio of the undilated member, so the report passes when the ratio is
/// dilation invariant to `tolerance`. The family supremum of the ratio
/// (the empirical constant) is recorded in the metadata.
pub fn check_interaction_bound(
    densities: &[SpatialMixture],
    spec: &KernelSpec,
    dilations: &[f64],
    tolerance: f64,
) -> Result<InequalityReport> {
    spec.validate()?;
    let terms = power_terms(spec);
    if terms.is_empty() {
        return Err(Error::invalid("kernel has no nonzero term"));
    }
    let d = spec.dim as f64;
    let gamma = (d + 2.0) / d;
    let ratio_of = |rho: &SpatialMixture, coef: f64, a: f64| -> Result<(f64, f64)> {
        if rho.dim() != spec.dim {
            return Err(Error::invalid(format!(
                "density dimension {} differs from kernel dimension {}",
                rho.dim(),
                spec.dim
            )));
        }
        let lhs = gaussian_interaction(rho, coef, a, spec.epsilon)?;
        let beta = a * (d + 2.0) / d;
        let norms = rho.mass().powf(2.0 - beta) * rho.lp_norm(gamma, NORM_RTOL)?.powf(beta);
        Ok((lhs, lhs.abs() / (coef.abs() * norms)))
    };

    let mut samples = Vec::new();
    let mut constants = Map::new();
    let (mut min_lhs, mut max_lhs) = (f64::INFINITY, f64::NEG_INFINITY);
    for (label, coef, a) in &terms {
        let mut sup = 0.0f64;
        for (i, rho) in densities.iter().enumerate() {
            let (lhs0, r0) = ratio_of(rho, *coef, *a)?;
            sup = sup.max(r0);
            min_lhs = min_lhs.min(lhs0);
            max_lhs = max_lhs.max(lhs0);
            for &lambda in dilations {
                let (lhs, r) = ratio_of(&rho.dilate(lambda)?, *coef, *a)?;
                sup = sup.max(r);
                min_lhs = min_lhs.min(lhs);
                max_lhs = max_lhs.max(lhs);
                samples.push(Sample::symmetric(format!("{label} density {i} dilation {lambda}"), r, r0));
            }
        }
        constants.insert((*label).into(), json!(sup));
    }
    let mut meta = Map::new();
    meta.insert("empirical_constants".into(), Value::Object(constants));
    meta.insert("epsilon".into(), json!(spec.epsilon));
    meta.insert("kernel".into(), json!(spec.family.name()));
    meta.insert("min_interaction".into(), json!(min_lhs));
    meta.insert("max_interaction".into(), json!(max_lhs));
    let name = if spec.dim == 2 { "interaction-bound-2d" } else { "interaction-bound" };
    Ok(InequalityReport::new(name, tolerance, samples, meta))
}

/// `‖∇K_M^ε ⋆ ρ‖_q / ‖ρ‖_q` on a three-dimensional grid.
fn cz_ratio(conv: &FreeSpaceConvolver, rho: &GridDensity, q: f64) -> Result<f64> {
    let field = conv.field(rho)?;
    let magnitude: Vec<f64> = (0..rho.values.len())
        .map(|i| field.components.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
        .collect();
    let cell = rho.cell_volume();
    let norm = |v: &[f64]| (v.iter().map(|x| x.abs().powf(q)).sum::<f64>() * cell).powf(1.0 / q);
    Ok(norm(&magnitude) / norm(&rho.values))
}

/// Stability of the Manev force map ratio `‖∇K^ε ⋆ ρ‖_q/‖ρ‖_q` under
/// `ε → ε/2`, on densities sampled onto `grid`.
///
/// Norms are taken over the grid box. Each sample compares the ratios at
/// `ε/2` and `ε`; the family supremum is recorded as the empirical constant.
pub fn check_cz(
    spec: &KernelSpec,
    densities: &[SpatialMixture],
    grid: &GridDensity,
    q: f64,
    tolerance: f64,
) -> Result<InequalityReport> {
    if !(q > 1.0 && q < 5.0 / 3.0) {
        return Err(Error::domain(format!("q must lie in (1, 5/3), got {q}")));
    }
    if !matches!(spec.family, KernelFamily::PureManev | KernelFamily::ManevCombined) || spec.c_manev <= 0.0 {
        return Err(Error::invalid("the force map check needs a kernel with a Manev term"));
    }
    if grid.dim != 3 || !(spec.epsilon > 0.0) {
        return Err(Error::invalid("the force map check runs on 3D grids with epsilon > 0"));
    }
    let coarse_conv = FreeSpaceConvolver::for_density(&KernelSpec::pure_manev(spec.c_manev, spec.epsilon), grid)?;
    let fine_conv = FreeSpaceConvolver::for_density(&KernelSpec::pure_manev(spec.c_manev, 0.5 * spec.epsilon), grid)?;
    let warning = coarse_conv.spacing_warning() || fine_conv.spacing_warning();
    let mut samples = Vec::with_capacity(densities.len());
    let mut sup = 0.0f64;
    for (i, rho) in densities.iter().enumerate() {
        let sampled = rho.sample(grid)?;
        let coarse = cz_ratio(&coarse_conv, &sampled, q)?;
        let fine = cz_ratio(&fine_conv, &sampled, q)?;
        sup = sup.max(coarse).max(fine);
        samples.push(Sample::symmetric(format!("density {i}"), fine, coarse));
    }
    let mut meta = Map::new();
    meta.insert("q".into(), json!(q));
    meta.insert("epsilon".into(), json!(spec.epsilon));
    meta.insert("empirical_constant".into(), json!(sup));
    meta.insert("spacing_warning".into(), json!(warning));
    Ok(InequalityReport::new("calderon-zygmund", tolerance, samples, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inequalities::family::{Blob, DensityFamily, Generator, PhaseBlob, VelocityProfile};
    use crate::phase_grid::PhaseGeometry;
    use approx::assert_relative_eq;

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn exponent_identity_and_endpoints() {
        let e = interpolation_exponents(r(3, 2), r(3, 2), r(5, 3), r(2, 1)).unwrap();
        assert_eq!((e.alpha, e.beta, e.sum), (r(5, 6), r(5, 6), r(5, 3)));
        assert_eq!(e.l1_exponent(), r(1, 3));
        let e = interpolation_exponents(r(1, 1), r(1, 1), r(5, 3), r(0, 1)).unwrap();
        assert_eq!(e.sum, r(0, 1));
        assert!(interpolation_exponents(r(3, 2), r(3, 2), r(5, 3), r(1, 1)).is_err());
        assert!(interpolation_exponents(r(2, 1), r(1, 1), r(5, 3), r(3, 2)).is_err());
    }

    #[test]
    fn exponent_sum_matches_closed_form() {
        // α + β = γ/(γ-1) · λ/3 whenever the constraint holds.
        for (p, q, lambda) in [(r(6, 5), r(3, 2), r(3, 2)), (r(5, 4), r(5, 4), r(6, 5))] {
            let g = r(5, 3);
            let e = interpolation_exponents(p, q, g, lambda).unwrap();
            assert_eq!(e.sum, g / (g - r(1, 1)) * lambda / r(3, 1));
        }
    }

    #[test]
    fn gaussian_density_interpolation_ratio() {
        let f = PhaseMixture::new(
            3,
            vec![PhaseBlob {
                blob: Blob {
                    mass: 1.0,
                    center: [0.0; 3],
                    profile: Profile::Gaussian { width: 1.0 },
                },
                drift: [0.0; 3],
                velocity: VelocityProfile::Maxwellian { temperature: 1.0 },
            }],
        )
        .unwrap();
        let rep = check_density_interpolation(&[&f], 0.0).unwrap();
        // Closed forms for a unit Gaussian in x and v.
        let p = 5.0 / 3.0;
        let lhs = ((2.0 * std::f64::consts::PI).powf(-1.5 * (p - 1.0)) * p.powf(-1.5)).powf(1.0 / p);
        let sup = (2.0 * std::f64::consts::PI).powi(-3);
        let rhs = (4.0 / 3.0 * std::f64::consts::PI * sup + 1.0) * 3f64.powf(0.6);
        assert_relative_eq!(rep.samples[0].lhs, lhs, max_relative = 1e-6);
        assert_relative_eq!(rep.samples[0].rhs, rhs, max_relative = 1e-12);
        assert!(rep.pass && rep.max_ratio < 1.0);
    }

    #[test]
    fn density_interpolation_under_amplitude_scaling() {
        let fam = DensityFamily::new(Generator::GaussianMixture, 3, 3, 2).generate().unwrap();
        for lambda in [0.1, 1.0, 10.0] {
            let scaled: Vec<PhaseMixture> = fam.iter().map(|f| f.scale(lambda).unwrap()).collect();
            let items: Vec<&dyn KineticMoments> = scaled.iter().map(|f| f as &dyn KineticMoments).collect();
            let rep = check_density_interpolation(&items, 0.0).unwrap();
            assert!(rep.pass, "lambda {lambda}: {}", rep.max_ratio);
            for (s, f) in rep.samples.iter().zip(&fam) {
                // Both sides are linear in λ apart from the ‖f‖_∞ term.
                let base = (unit_ball_volume(3) * lambda * f.sup_lower_bound() + 1.0)
                    * (lambda * f.velocity_second_moment()).powf(0.6);
                assert_relative_eq!(s.rhs, base, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn pointwise_split_for_unit_ball_velocities() {
        // f = 1 on |v| ≤ 1: ρ = 4π/3 and ∫|v|²f dv = 4π/5.
        let m2 = 4.0 * std::f64::consts::PI / 5.0;
        let radius = m2.powf(0.2);
        let rho = 4.0 * std::f64::consts::PI / 3.0;
        assert!(rho <= m2 / (radius * radius) + 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3));
    }

    #[test]
    fn density_interpolation_on_grids() {
        let geo = PhaseGeometry::new(1, 64, 64, 8.0, 6.0).unwrap();
        let g = crate::phase_grid::local_maxwellian(geo, |x| (-(x[0] * x[0])).exp()).unwrap();
        let rep = check_density_interpolation(&[&g], 0.0).unwrap();
        assert!(rep.pass);
        assert_eq!(rep.metadata["ball_constants"]["c_1"], json!(2.0));
    }

    #[test]
    fn manev_ratio_is_dilation_invariant() {
        let rho = SpatialMixture::gaussian(3, 1.0, 1.0).unwrap();
        let rep = check_interaction_bound(&[rho], &KernelSpec::pure_manev(1.0, 0.0), &[0.5, 2.0], 1e-6).unwrap();
        assert!(rep.pass, "{}", rep.max_ratio);
    }

    #[test]
    fn repulsive_interaction_is_nonpositive() {
        let fam = DensityFamily::new(Generator::GaussianMixture, 3, 2, 9).generate().unwrap();
        let rhos: Vec<SpatialMixture> = fam.iter().map(|f| f.density().clone()).collect();
        let spec = KernelSpec {
            family: KernelFamily::RepulsivePowerLaw,
            c_manev: 1.0,
            c_coulomb: 0.0,
            alpha: 1.0,
            epsilon: 0.0,
            dim: 3,
        };
        let rep = check_interaction_bound(&rhos, &spec, &[2.0], 1e-6).unwrap();
        assert!(rep.metadata["max_interaction"].as_f64().unwrap() <= 0.0);
        assert!(rep.pass);
    }

    #[test]
    fn combined_kernel_reports_each_term() {
        let rho = SpatialMixture::gaussian(3, 2.0, 0.7).unwrap();
        let rep = check_interaction_bound(&[rho], &KernelSpec::manev_combined(1.0, 0.5, 0.0), &[1.5], 1e-6).unwrap();
        assert_eq!(rep.samples.len(), 2);
        assert!(rep.pass);
        let c = &rep.metadata["empirical_constants"];
        assert!(c["manev"].as_f64().unwrap() > 0.0 && c["coulomb"].as_f64().unwrap() > 0.0);
    }

    #[test]
    fn non_gaussian_components_are_rejected() {
        let fam = DensityFamily::new(Generator::BumpSum, 3, 1, 1).generate().unwrap();
        let err = check_interaction_bound(&[fam[0].density().clone()], &KernelSpec::pure_manev(1.0, 0.0), &[2.0], 0.02);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn cz_endpoint_is_excluded() {
        let grid = GridDensity::centered(3, 8, 2.0);
        let rho = SpatialMixture::gaussian(3, 1.0, 1.0).unwrap();
        let spec = KernelSpec::pure_manev(1.0, 0.25);
        assert!(matches!(check_cz(&spec, &[rho.clone()], &grid, 1.0, 0.05), Err(Error::Domain(_))));
        assert!(check_cz(&spec, &[rho], &grid, 1.5, 0.05).is_ok());
    }

    #[test]
    fn lp_growth_rejects_kde_norms() {
        let mut r = DiagnosticsRecord::empty(0.0, 0, 1.0);
        r.lp_source = Some(LpSource::Kde);
        r.l2 = Some(1.0);
        assert!(matches!(check_lp_growth(&[r], 2.0, 1.0, 1, 1e-3), Err(Error::Domain(_))));
    }

    #[test]
    fn lp_growth_bound_values() {
        let mut a = DiagnosticsRecord::empty(0.0, 0, 1.0);
        a.lp_source = Some(LpSource::Grid);
        a.l2 = Some(2.0);
        a.l1 = Some(1.0);
        let mut b = a.clone();
        b.t = 1.0;
        b.l2 = Some(2.0 * 0.5f64.exp());
        let rep = check_lp_growth(&[a.clone(), b.clone()], 2.0, 1.0, 1, 1e-3).unwrap();
        assert_relative_eq!(rep.samples[1].rhs, 2.0 * 0.5f64.exp());
        assert!(rep.pass);
        b.l2 = Some(2.0 * 0.51f64.exp());
        assert!(!check_lp_growth(&[a.clone(), b.clone()], 2.0, 1.0, 1, 1e-3).unwrap().pass);
        // p = 1: the bound is mass conservation.
        assert!(check_lp_growth(&[a.clone(), b], 1.0, 1.0, 1, 0.0).unwrap().pass);
    }
}
