use rayon::prelude::*;
use statrs::function::erf::erfc;

use super::ParticleEnsemble;
use crate::error::{Error, Result};
use crate::kernels::GridDensity;

/// Number of particle chunks accumulated independently; fixed so the
/// summation order does not depend on the thread count.
const CHUNKS: usize = 16;

/// Kernel support in bandwidths.
const SUPPORT: f64 = 6.0;

#[derive(Clone, Debug)]
pub struct KdeEstimate {
    pub density: GridDensity,
    pub bandwidth: f64,
    /// Fraction of `Σ w` captured by the grid.
    pub captured: f64,
    /// Set when the grid holds less than 99% of the mass.
    pub coverage_warning: bool,
}

/// Silverman's rule `σ̂ (4 / ((d + 2) n))^{1/(d+4)}` with `σ̂` the mean
/// per-coordinate standard deviation of the positions.
pub fn silverman_bandwidth(ens: &ParticleEnsemble) -> f64 {
    let d = ens.dim;
    let n = ens.len() as f64;
    let mass = ens.mass();
    let mut sd = 0.0;
    for a in 0..d {
        let mean = ens.positions.iter().zip(&ens.weights).map(|(x, w)| w * x[a]).sum::<f64>() / mass;
        let var = ens
            .positions
            .iter()
            .zip(&ens.weights)
            .map(|(x, w)| w * (x[a] - mean).powi(2))
            .sum::<f64>()
            / mass;
        sd += var.sqrt();
    }
    sd /= d as f64;
    sd * (4.0 / ((d as f64 + 2.0) * n)).powf(1.0 / (d as f64 + 4.0))
}

fn normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Gaussian kernel density estimate of `ρ` on the nodes of `geometry`
/// (its values are ignored). Each node holds the kernel mass of its cell
/// divided by the cell volume, so the grid sum is exact up to truncation.
pub fn kde_density(ens: &ParticleEnsemble, geometry: &GridDensity, bandwidth: f64) -> Result<KdeEstimate> {
    if !(bandwidth.is_finite() && bandwidth > 0.0) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    if geometry.dim != ens.dim {
        return Err(Error::invalid("KDE grid dimension differs from the ensemble's"));
    }
    let dim = ens.dim;
    let shape = geometry.shape;
    let h = geometry.spacing;
    let origin = geometry.origin;
    let len: usize = shape[..dim].iter().product();
    let reach = (SUPPORT * bandwidth / h[..dim].iter().cloned().fold(f64::INFINITY, f64::min)).ceil() as i64 + 1;

    let chunk = ens.len().div_ceil(CHUNKS).max(1);
    let partials: Vec<Vec<f64>> = ens
        .positions
        .par_chunks(chunk)
        .zip(ens.weights.par_chunks(chunk))
        .map(|(xs, ws)| {
            let mut acc = vec![0.0; len];
            let mut axis_w: [Vec<(usize, f64)>; 3] = Default::default();
            for (x, w) in xs.iter().zip(ws) {
                for a in 0..dim {
                    axis_w[a].clear();
                    let centre = ((x[a] - origin[a]) / h[a]).round() as i64;
                    let lo = (centre - reach).max(0);
                    let hi = (centre + reach).min(shape[a] as i64 - 1);
                    for i in lo..=hi {
                        let node = origin[a] + i as f64 * h[a];
                        let p = normal_cdf((node + 0.5 * h[a] - x[a]) / bandwidth)
                            - normal_cdf((node - 0.5 * h[a] - x[a]) / bandwidth);
                        if p > 0.0 {
                            axis_w[a].push((i as usize, p));
                        }
                    }
                }
                for a in dim..3 {
                    axis_w[a].clear();
                    axis_w[a].push((0, 1.0));
                }
                for &(i, pi) in &axis_w[0] {
                    for &(j, pj) in &axis_w[1] {
                        for &(k, pk) in &axis_w[2] {
                            let flat = (i * shape[1] + j) * shape[2] + k;
                            acc[flat] += w * pi * pj * pk;
                        }
                    }
                }
            }
            acc
        })
        .collect();

    let cell = geometry.cell_volume();
    let mut values = vec![0.0; len];
    for part in &partials {
        for (v, p) in values.iter_mut().zip(part) {
            *v += p;
        }
    }
    let total: f64 = values.iter().sum();
    for v in &mut values {
        *v /= cell;
    }
    let mass = ens.mass();
    let captured = if mass > 0.0 { total / mass } else { 1.0 };
    let coverage_warning = captured < 0.99;
    if coverage_warning {
        log::warn!("KDE grid captures only {:.3}% of the particle mass", 100.0 * captured);
    }
    let mut density = geometry.clone();
    density.values = values;
    Ok(KdeEstimate {
        density,
        bandwidth,
        captured,
        coverage_warning,
    })
}
