//! Numerical checks of functional inequalities.
//!
//! Each check produces an [`InequalityReport`] of per-sample left and right
//! sides. Checks with a known constant compare `lhs ≤ rhs`; checks whose
//! constant is only known to exist (the convolution and force-map bounds)
//! instead test the scale or regularization invariance of the ratio and
//! record the family supremum as an empirical constant. The checks that run
//! without external input are also available by name through
//! [`inequality_checks`].

mod checks;
pub mod family;
pub mod quadrature;

use std::fmt::Debug;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub use checks::{
    check_cz, check_density_interpolation, check_interaction_bound, check_lp_growth, interpolation_exponents,
    InterpolationExponents, KineticMoments,
};
pub use family::{
    Blob, DensityFamily, Generator, Mode, PhaseBlob, PhaseMixture, Profile, SpatialMixture, VelocityProfile,
};

use crate::error::{Error, Result};
use crate::kernels::{GridDensity, KernelSpec};
use crate::registry::{Options, Registry};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    /// Quantity compared against `1 + tolerance`.
    pub ratio: f64,
}

impl Sample {
    /// One-sided comparison, `ratio = lhs / rhs`.
    pub fn new(label: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let ratio = if rhs == 0.0 && lhs <= 0.0 { 0.0 } else { lhs / rhs };
        Self {
            label: label.into(),
            lhs,
            rhs,
            ratio,
        }
    }

    /// Two-sided comparison of two positive values, `ratio = max(a/b, b/a)`.
    pub fn symmetric(label: impl Into<String>, lhs: f64, rhs: f64) -> Self {
        let q = lhs / rhs;
        Self {
            label: label.into(),
            lhs,
            rhs,
            ratio: q.max(1.0 / q),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InequalityReport {
    pub name: String,
    pub tolerance: f64,
    pub samples: Vec<Sample>,
    pub max_ratio: f64,
    /// `max_ratio ≤ 1 + tolerance`, with every ratio finite.
    pub pass: bool,
    pub metadata: Map<String, Value>,
}

impl InequalityReport {
    pub fn new(name: impl Into<String>, tolerance: f64, samples: Vec<Sample>, metadata: Map<String, Value>) -> Self {
        let finite = samples.iter().all(|s| s.ratio.is_finite());
        let max_ratio = samples.iter().map(|s| s.ratio).fold(f64::NEG_INFINITY, f64::max);
        let pass = finite && !samples.is_empty() && max_ratio <= 1.0 + tolerance;
        Self {
            name: name.into(),
            tolerance,
            samples,
            max_ratio,
            pass,
            metadata,
        }
    }

    pub fn failures(&self) -> impl Iterator<Item = &Sample> {
        self.samples
            .iter()
            .filter(move |s| !(s.ratio.is_finite() && s.ratio <= 1.0 + self.tolerance))
    }
}

/// A self-contained check configured from named options.
pub trait InequalityCheck: Send + Sync + Debug {
    fn name(&self) -> &'static str;
    fn run(&self) -> Result<InequalityReport>;
}

fn parse<T: serde::de::DeserializeOwned>(options: &Options) -> Result<T> {
    serde_json::from_value(Value::Object(options.clone())).map_err(|e| Error::invalid(e.to_string()))
}

fn default_generators() -> Vec<Generator> {
    vec![Generator::GaussianMixture, Generator::BumpSum, Generator::RandomNonnegTrig]
}

/// Density interpolation over mixed random families.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DensityInterpolationCheck {
    pub count: usize,
    pub seed: u64,
    pub generators: Vec<Generator>,
    pub tolerance: f64,
}

impl Default for DensityInterpolationCheck {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 1,
            generators: default_generators(),
            tolerance: 0.0,
        }
    }
}

impl DensityInterpolationCheck {
    /// `count` densities split round-robin across the generators.
    pub fn densities(&self) -> Result<Vec<PhaseMixture>> {
        if self.generators.is_empty() {
            return Err(Error::invalid("at least one generator is required"));
        }
        let k = self.generators.len();
        let mut out = Vec::with_capacity(self.count);
        for (j, g) in self.generators.iter().enumerate() {
            let count = self.count / k + usize::from(j < self.count % k);
            out.extend(DensityFamily::new(*g, 3, count, self.seed.wrapping_add(j as u64)).generate()?);
        }
        Ok(out)
    }
}

impl InequalityCheck for DensityInterpolationCheck {
    fn name(&self) -> &'static str {
        "density-interpolation"
    }
    fn run(&self) -> Result<InequalityReport> {
        let fs = self.densities()?;
        let items: Vec<&dyn KineticMoments> = fs.iter().map(|f| f as &dyn KineticMoments).collect();
        check_density_interpolation(&items, self.tolerance)
    }
}

fn default_dilations() -> Vec<f64> {
    vec![0.5, std::f64::consts::FRAC_1_SQRT_2, std::f64::consts::SQRT_2, 2.0]
}

/// Dilation invariance of the interaction ratio on Gaussian mixtures.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InteractionBoundCheck {
    pub kernel: KernelSpec,
    pub count: usize,
    pub seed: u64,
    /// Dilation factors applied to each member (the member itself is the
    /// reference).
    pub dilations: Vec<f64>,
    pub tolerance: f64,
}

impl InteractionBoundCheck {
    pub fn three_dimensional() -> Self {
        Self {
            kernel: KernelSpec::pure_manev(1.0, 0.0),
            count: 6,
            seed: 3,
            dilations: default_dilations(),
            tolerance: 0.02,
        }
    }

    pub fn two_dimensional() -> Self {
        Self {
            kernel: KernelSpec {
                family: crate::KernelFamily::Manev2d,
                c_manev: 1.0,
                c_coulomb: 0.0,
                alpha: 1.0,
                epsilon: 0.0,
                dim: 2,
            },
            ..Self::three_dimensional()
        }
    }

    pub fn densities(&self) -> Result<Vec<SpatialMixture>> {
        Ok(DensityFamily::new(Generator::GaussianMixture, self.kernel.dim, self.count, self.seed)
            .generate()?
            .into_iter()
            .map(|f| f.density().clone())
            .collect())
    }
}

impl Default for InteractionBoundCheck {
    fn default() -> Self {
        Self::three_dimensional()
    }
}

impl InequalityCheck for InteractionBoundCheck {
    fn name(&self) -> &'static str {
        if self.kernel.dim == 2 {
            "interaction-bound-2d"
        } else {
            "interaction-bound"
        }
    }
    fn run(&self) -> Result<InequalityReport> {
        check_interaction_bound(&self.densities()?, &self.kernel, &self.dilations, self.tolerance)
    }
}

/// `ε`-halving stability of the Manev force-map ratio on 3D grids.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForceMapCheck {
    pub c_manev: f64,
    pub epsilon: f64,
    pub q: f64,
    pub count: usize,
    pub seed: u64,
    /// Nodes per axis of the sampling grid.
    pub n: usize,
    pub half_width: f64,
    pub width_range: [f64; 2],
    pub center_spread: f64,
    pub tolerance: f64,
}

impl Default for ForceMapCheck {
    fn default() -> Self {
        Self {
            c_manev: 1.0,
            epsilon: 0.005,
            q: 1.5,
            count: 4,
            seed: 5,
            n: 96,
            half_width: 2.4,
            width_range: [0.5, 0.7],
            center_spread: 0.3,
            tolerance: 0.05,
        }
    }
}

impl ForceMapCheck {
    pub fn densities(&self) -> Result<Vec<SpatialMixture>> {
        let mut fam = DensityFamily::new(Generator::GaussianMixture, 3, self.count, self.seed);
        fam.width_range = self.width_range;
        fam.center_spread = self.center_spread;
        Ok(fam.generate()?.into_iter().map(|f| f.density().clone()).collect())
    }

    pub fn grid(&self) -> GridDensity {
        GridDensity::centered(3, self.n, self.half_width)
    }
}

impl InequalityCheck for ForceMapCheck {
    fn name(&self) -> &'static str {
        "calderon-zygmund"
    }
    fn run(&self) -> Result<InequalityReport> {
        let spec = KernelSpec::pure_manev(self.c_manev, self.epsilon);
        check_cz(&spec, &self.densities()?, &self.grid(), self.q, self.tolerance)
    }
}

/// Exact interpolation exponents for rational inputs written as `"n/d"`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExponentCheck {
    pub p: String,
    pub q: String,
    pub gamma: String,
    pub lambda: String,
}

impl Default for ExponentCheck {
    fn default() -> Self {
        Self {
            p: "3/2".into(),
            q: "3/2".into(),
            gamma: "5/3".into(),
            lambda: "2".into(),
        }
    }
}

fn rational(s: &str) -> Result<Ratio<i64>> {
    s.trim()
        .parse::<Ratio<i64>>()
        .map_err(|e| Error::invalid(format!("`{s}` is not a rational number: {e}")))
}

impl InequalityCheck for ExponentCheck {
    fn name(&self) -> &'static str {
        "interpolation-exponents"
    }
    fn run(&self) -> Result<InequalityReport> {
        let gamma = rational(&self.gamma)?;
        let lambda = rational(&self.lambda)?;
        let e = interpolation_exponents(rational(&self.p)?, rational(&self.q)?, gamma, lambda)?;
        let closed = gamma / (gamma - Ratio::from_integer(1)) * lambda / Ratio::from_integer(3);
        let as_f64 = |r: Ratio<i64>| *r.numer() as f64 / *r.denom() as f64;
        let sample = Sample::symmetric("alpha + beta", as_f64(e.sum), as_f64(closed));
        let mut meta = Map::new();
        meta.insert("alpha".into(), json!(e.alpha.to_string()));
        meta.insert("beta".into(), json!(e.beta.to_string()));
        meta.insert("sum".into(), json!(e.sum.to_string()));
        meta.insert("l1_exponent".into(), json!(e.l1_exponent().to_string()));
        meta.insert("exact".into(), json!(e.sum == closed));
        Ok(InequalityReport::new(self.name(), 0.0, vec![sample], meta))
    }
}

/// Named checks; options are the fields of the corresponding check struct.
pub fn inequality_checks() -> Registry<dyn InequalityCheck> {
    let mut reg: Registry<dyn InequalityCheck> = Registry::new("inequality check");
    reg.register("density-interpolation", |o| Ok(Box::new(parse::<DensityInterpolationCheck>(o)?)))
        .register("interaction-bound", |o| {
            let mut base = serde_json::to_value(InteractionBoundCheck::three_dimensional())?;
            merge(&mut base, o);
            Ok(Box::new(serde_json::from_value::<InteractionBoundCheck>(base).map_err(|e| Error::invalid(e.to_string()))?))
        })
        .register("interaction-bound-2d", |o| {
            let mut base = serde_json::to_value(InteractionBoundCheck::two_dimensional())?;
            merge(&mut base, o);
            Ok(Box::new(serde_json::from_value::<InteractionBoundCheck>(base).map_err(|e| Error::invalid(e.to_string()))?))
        })
        .register("calderon-zygmund", |o| Ok(Box::new(parse::<ForceMapCheck>(o)?)))
        .register("interpolation-exponents", |o| Ok(Box::new(parse::<ExponentCheck>(o)?)));
    reg
}

fn merge(base: &mut Value, options: &Options) {
    if let Value::Object(map) = base {
        for (k, v) in options {
            map.insert(k.clone(), v.clone());
        }
    }
}
