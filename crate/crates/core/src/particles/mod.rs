//! Interacting Langevin particles for the regularized system.
//!
//! Each particle carries an equal share of the (cut-off) initial mass and
//! follows `dx = v dt`, `dv = F dt − σ v dt + √(2σ) dW`, where `F` is the
//! pairwise regularized force.

mod checkpoint;
mod kde;
mod run;
mod sde;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::kernels::{norm2, Point};
use crate::rng;

pub use checkpoint::{read_particles, write_particles, PARTICLE_MAGIC, PARTICLE_VERSION};
pub use kde::{kde_density, silverman_bandwidth, KdeEstimate};
pub use run::{core_density, run, CollapseEvent, CollapseGuards, CollapseReason, KdeSettings, ParticleSolver, RunOptions, RunOutcome, CORE_FRACTION};
pub use sde::{sde_schemes, EulerMaruyama, KickExactOu, SdeScheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialFamily {
    /// Isotropic Gaussian in position and in velocity.
    GaussianGaussian,
    /// Uniform in the ball of radius `position_scale`, Maxwellian in velocity.
    UniformBallMaxwellian,
    /// Weighted atoms listed in `table`.
    CustomTabulated,
}

/// One atom of a tabulated initial datum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabulatedSample {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialDataSpec {
    pub family: InitialFamily,
    /// Total mass `M` of the untruncated datum.
    pub mass: f64,
    /// Position scale `s` (standard deviation or ball radius).
    pub position_scale: f64,
    /// Velocity standard deviation `σ_v` per coordinate.
    pub velocity_scale: f64,
    /// Maximum speed `1/ε` kept by the cutoff; `None` keeps every velocity.
    #[serde(default)]
    pub velocity_cutoff: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub table: Option<Vec<TabulatedSample>>,
}

impl InitialDataSpec {
    pub fn gaussian(mass: f64, position_scale: f64, velocity_scale: f64) -> Self {
        Self {
            family: InitialFamily::GaussianGaussian,
            mass,
            position_scale,
            velocity_scale,
            velocity_cutoff: None,
            table: None,
        }
    }

    pub fn with_cutoff(mut self, cutoff: Option<f64>) -> Self {
        self.velocity_cutoff = cutoff;
        self
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !(self.mass.is_finite() && self.mass > 0.0) {
            return Err(Error::invalid(format!("mass must be positive, got {}", self.mass)));
        }
        if !(self.position_scale > 0.0 && self.velocity_scale > 0.0) {
            return Err(Error::invalid("position and velocity scales must be positive"));
        }
        if let Some(c) = self.velocity_cutoff {
            if !(c > 0.0) {
                return Err(Error::invalid(format!("velocity cutoff must be positive, got {c}")));
            }
        }
        if self.family == InitialFamily::CustomTabulated {
            let table = self
                .table
                .as_ref()
                .ok_or_else(|| Error::invalid("custom-tabulated data needs a `table`"))?;
            if table.is_empty() {
                return Err(Error::invalid("tabulated data is empty"));
            }
            for s in table {
                if s.x.len() != dim || s.v.len() != dim {
                    return Err(Error::invalid(format!("tabulated samples must have {dim} components")));
                }
                if !(s.weight.is_finite() && s.weight > 0.0) {
                    return Err(Error::invalid("tabulated weights must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Probability that a draw from the datum survives the velocity cutoff.
    pub fn acceptance(&self, dim: usize) -> Result<f64> {
        let Some(c) = self.velocity_cutoff else {
            return Ok(1.0);
        };
        match self.family {
            InitialFamily::GaussianGaussian | InitialFamily::UniformBallMaxwellian => {
                let chi = ChiSquared::new(dim as f64).map_err(|e| Error::invalid(e.to_string()))?;
                Ok(chi.cdf((c / self.velocity_scale).powi(2)))
            }
            InitialFamily::CustomTabulated => {
                let table = self.table.as_deref().unwrap_or_default();
                let total: f64 = table.iter().map(|s| s.weight).sum();
                let kept: f64 = table
                    .iter()
                    .filter(|s| s.v.iter().map(|v| v * v).sum::<f64>() <= c * c)
                    .map(|s| s.weight)
                    .sum();
                Ok(kept / total)
            }
        }
    }

    /// Mass of `f₀ 1{|v| ≤ cutoff}`; not renormalized back to `M`.
    pub fn truncated_mass(&self, dim: usize) -> Result<f64> {
        Ok(self.mass * self.acceptance(dim)?)
    }
}

/// Monte Carlo representation of `f` by equally weighted particles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleEnsemble {
    pub dim: usize,
    pub positions: Vec<Point>,
    pub velocities: Vec<Point>,
    pub weights: Vec<f64>,
    pub time: f64,
    /// Number of steps taken; addresses the next block of each random stream.
    pub step: u64,
    pub seed: u64,
}

impl ParticleEnsemble {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positions.len();
        if n == 0 {
            return Err(Error::invalid("ensemble must contain at least one particle"));
        }
        if self.velocities.len() != n || self.weights.len() != n {
            return Err(Error::invalid("positions, velocities and weights differ in length"));
        }
        if !(1..=3).contains(&self.dim) {
            return Err(Error::invalid(format!("dimension must be 1..=3, got {}", self.dim)));
        }
        if self.weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::invalid("particle weights must be positive"));
        }
        Ok(())
    }

    pub fn mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `(1/2) Σ w |v|²`.
    pub fn kinetic(&self) -> f64 {
        0.5 * self.velocities.iter().zip(&self.weights).map(|(v, w)| w * norm2(*v)).sum::<f64>()
    }

    /// `(1/2) Σ w |x|²`.
    pub fn x_moment(&self) -> f64 {
        0.5 * self.positions.iter().zip(&self.weights).map(|(x, w)| w * norm2(*x)).sum::<f64>()
    }

    pub fn momentum(&self) -> Point {
        let mut p = [0.0; 3];
        for (v, w) in self.velocities.iter().zip(&self.weights) {
            for a in 0..3 {
                p[a] += w * v[a];
            }
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.positions
            .iter()
            .chain(&self.velocities)
            .all(|p| p.iter().all(|c| c.is_finite()))
    }
}

fn gaussian_vector(rng: &mut impl rand::Rng, dim: usize, scale: f64) -> Point {
    use rand_distr::{Distribution, StandardNormal};
    let mut p = [0.0; 3];
    for c in p.iter_mut().take(dim) {
        let z: f64 = StandardNormal.sample(rng);
        *c = scale * z;
    }
    p
}

fn uniform_ball(rng: &mut impl rand::Rng, dim: usize, radius: f64) -> Point {
    let dir = gaussian_vector(rng, dim, 1.0);
    let norm = norm2(dir).sqrt();
    let u: f64 = rng.random();
    let r = radius * u.powf(1.0 / dim as f64);
    let mut p = [0.0; 3];
    for a in 0..dim {
        p[a] = r * dir[a] / norm;
    }
    p
}

/// Draws `n` particles from `f₀ 1{|v| ≤ cutoff}` by rejection.
pub fn sample_initial(spec: &InitialDataSpec, dim: usize, n: usize, seed: u64) -> Result<ParticleEnsemble> {
    if n == 0 {
        return Err(Error::invalid("particle count must be >= 1"));
    }
    if !(1..=3).contains(&dim) {
        return Err(Error::invalid(format!("dimension must be 1..=3, got {dim}")));
    }
    spec.validate(dim)?;
    let acceptance = spec.acceptance(dim)?;
    if acceptance < 1e-3 {
        return Err(Error::EnvelopeMisfit { rate: acceptance });
    }
    let cutoff2 = spec.velocity_cutoff.map_or(f64::INFINITY, |c| c * c);

    let table = spec.table.as_deref().unwrap_or_default();
    let cumulative: Vec<f64> = table
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s.weight;
            Some(*acc)
        })
        .collect();

    let draws: Vec<(Point, Point)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::init_stream(seed, i as u64);
            loop {
                let (x, v) = match spec.family {
                    InitialFamily::GaussianGaussian => (
                        gaussian_vector(&mut rng, dim, spec.position_scale),
                        gaussian_vector(&mut rng, dim, spec.velocity_scale),
                    ),
                    InitialFamily::UniformBallMaxwellian => (
                        uniform_ball(&mut rng, dim, spec.position_scale),
                        gaussian_vector(&mut rng, dim, spec.velocity_scale),
                    ),
                    InitialFamily::CustomTabulated => {
                        let total = *cumulative.last().unwrap();
                        let u: f64 = rand::Rng::random::<f64>(&mut rng) * total;
                        let k = cumulative.partition_point(|c| *c <= u).min(table.len() - 1);
                        let mut x = [0.0; 3];
                        let mut v = [0.0; 3];
                        x[..dim].copy_from_slice(&table[k].x);
                        v[..dim].copy_from_slice(&table[k].v);
                        (x, v)
                    }
                };
                if norm2(v) <= cutoff2 {
                    break (x, v);
                }
            }
        })
        .collect();

    let w = spec.truncated_mass(dim)? / n as f64;
    Ok(ParticleEnsemble {
        dim,
        positions: draws.iter().map(|d| d.0).collect(),
        velocities: draws.iter().map(|d| d.1).collect(),
        weights: vec![w; n],
        time: 0.0,
        step: 0,
        seed,
    })
}
