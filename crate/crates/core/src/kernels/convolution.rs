//! Free-space convolution of grid densities with the regularized kernel.
//!
//! The kernel is sampled pointwise at node offsets and the density is
//! zero-padded to twice its extent along every axis, so the cyclic
//! convolution computed by the FFT equals the aperiodic sum over the grid.

use std::sync::Arc;

use num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::KernelSpec;
use crate::error::{Error, Result};

/// Nodal density samples on a uniform grid of dimension `dim`.
///
/// Values are stored row-major over the first `dim` axes; unused entries of
/// `shape`, `origin` and `spacing` are 1, 0 and 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridDensity {
    pub dim: usize,
    pub shape: [usize; 3],
    pub origin: [f64; 3],
    pub spacing: [f64; 3],
    pub values: Vec<f64>,
}

impl GridDensity {
    pub fn zeros(dim: usize, n: usize, origin: f64, spacing: f64) -> Self {
        let mut shape = [1; 3];
        let mut o = [0.0; 3];
        let mut h = [1.0; 3];
        for a in 0..dim {
            shape[a] = n;
            o[a] = origin;
            h[a] = spacing;
        }
        Self {
            dim,
            shape,
            origin: o,
            spacing: h,
            values: vec![0.0; n.pow(dim as u32)],
        }
    }

    /// A cubic cell-centred grid with `n` nodes per axis covering `[-half_width, half_width]^dim`.
    pub fn centered(dim: usize, n: usize, half_width: f64) -> Self {
        let h = 2.0 * half_width / n as f64;
        Self::zeros(dim, n, -half_width + 0.5 * h, h)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.dim) {
            return Err(Error::invalid(format!("grid dimension must be 1..=3, got {}", self.dim)));
        }
        let expected: usize = self.shape[..self.dim].iter().product();
        if self.values.len() != expected {
            return Err(Error::invalid(format!(
                "grid holds {} values but its shape needs {expected}",
                self.values.len()
            )));
        }
        if self.spacing[..self.dim].iter().any(|h| !(h.is_finite() && *h > 0.0)) {
            return Err(Error::invalid("grid spacing must be positive"));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("density values must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[..self.dim].iter().product()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell_volume()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Multi-index of flat position `flat`.
    pub fn index_of(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        let mut rem = flat;
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.shape[a];
            rem /= self.shape[a];
        }
        idx
    }

    /// Physical coordinates of node `flat`.
    pub fn node(&self, flat: usize) -> [f64; 3] {
        let idx = self.index_of(flat);
        let mut x = [0.0; 3];
        for a in 0..self.dim {
            x[a] = self.origin[a] + idx[a] as f64 * self.spacing[a];
        }
        x
    }

    /// `(Σ |ρ|^p h^d)^{1/p}`; `p = ∞` gives the maximum.
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm(&self.values, self.cell_volume(), p)
    }
}

pub(crate) fn lp_norm(values: &[f64], cell: f64, p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    if p == 1.0 {
        return values.iter().map(|v| v.abs()).sum::<f64>() * cell;
    }
    (values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * cell).powf(1.0 / p)
}

/// A force field sampled on grid nodes.
#[derive(Clone, Debug)]
pub struct FieldSample {
    /// One array per spatial axis, laid out like the source density.
    pub components: Vec<Vec<f64>>,
    /// Set when the grid spacing violates `h² ≤ ε`.
    pub spacing_warning: bool,
}

impl FieldSample {
    pub fn magnitude_max(&self) -> f64 {
        let n = self.components.first().map_or(0, |c| c.len());
        (0..n)
            .map(|i| self.components.iter().map(|c| c[i] * c[i]).sum::<f64>().sqrt())
            .fold(0.0, f64::max)
    }
}

/// Precomputed spectra of `K^ε` and `∇K^ε` for a fixed grid geometry.
pub struct FreeSpaceConvolver {
    dim: usize,
    shape: [usize; 3],
    spacing: [f64; 3],
    padded: [usize; 3],
    forward: Vec<Arc<dyn Fft<f64>>>,
    inverse: Vec<Arc<dyn Fft<f64>>>,
    potential_hat: Vec<Complex<f64>>,
    gradient_hat: Vec<Vec<Complex<f64>>>,
    spacing_warning: bool,
}

impl std::fmt::Debug for FreeSpaceConvolver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FreeSpaceConvolver")
            .field("dim", &self.dim)
            .field("shape", &self.shape)
            .field("spacing", &self.spacing)
            .finish()
    }
}

impl FreeSpaceConvolver {
    pub fn new(spec: &KernelSpec, shape: [usize; 3], spacing: [f64; 3]) -> Result<Self> {
        spec.validate()?;
        if spec.epsilon <= 0.0 {
            return Err(Error::domain("grid convolution requires epsilon > 0"));
        }
        let dim = spec.dim;
        let mut padded = [1usize; 3];
        for a in 0..dim {
            if shape[a] == 0 {
                return Err(Error::invalid("grid shape must be nonzero"));
            }
            padded[a] = 2 * shape[a];
        }
        let spacing_warning = spacing[..dim].iter().any(|h| h * h > spec.epsilon * (1.0 + 1e-12));
        if spacing_warning {
            log::warn!(
                "grid spacing {:?} violates h^2 <= epsilon = {}; kernel sampling is under-resolved",
                &spacing[..dim],
                spec.epsilon
            );
        }

        let mut planner = FftPlanner::new();
        let forward: Vec<_> = (0..dim).map(|a| planner.plan_fft_forward(padded[a])).collect();
        let inverse: Vec<_> = (0..dim).map(|a| planner.plan_fft_inverse(padded[a])).collect();

        let total: usize = padded[..dim].iter().product();
        let mut potential = vec![Complex::new(0.0, 0.0); total];
        let mut gradient = vec![vec![Complex::new(0.0, 0.0); total]; dim];
        for flat in 0..total {
            let mut rem = flat;
            let mut offset = [0.0; 3];
            let mut skip = false;
            for a in (0..dim).rev() {
                let m = rem % padded[a];
                rem /= padded[a];
                let n = shape[a] as isize;
                let m = m as isize;
                // Offsets ±n never reach an output node.
                if m == n {
                    skip = true;
                }
                let o = if m < n { m } else { m - 2 * n };
                offset[a] = o as f64 * spacing[a];
            }
            if skip {
                continue;
            }
            let r2 = offset[0] * offset[0] + offset[1] * offset[1] + offset[2] * offset[2];
            let (k, g) = spec.profile(spec.epsilon + r2);
            potential[flat].re = k;
            for a in 0..dim {
                gradient[a][flat].re = g * offset[a];
            }
        }
        let mut this = Self {
            dim,
            shape,
            spacing,
            padded,
            forward,
            inverse,
            potential_hat: Vec::new(),
            gradient_hat: Vec::new(),
            spacing_warning,
        };
        this.transform(&mut potential, true);
        for g in gradient.iter_mut() {
            this.transform(g, true);
        }
        this.potential_hat = potential;
        this.gradient_hat = gradient;
        Ok(this)
    }

    pub fn for_density(spec: &KernelSpec, rho: &GridDensity) -> Result<Self> {
        if spec.dim != rho.dim {
            return Err(Error::invalid(format!(
                "kernel dimension {} does not match grid dimension {}",
                spec.dim, rho.dim
            )));
        }
        Self::new(spec, rho.shape, rho.spacing)
    }

    pub fn spacing_warning(&self) -> bool {
        self.spacing_warning
    }

    fn check(&self, rho: &GridDensity) -> Result<()> {
        if rho.dim != self.dim || rho.shape != self.shape || rho.spacing != self.spacing {
            return Err(Error::invalid("density geometry does not match the convolver"));
        }
        rho.validate()
    }

    /// `(K^ε ⋆ ρ)` at the grid nodes.
    pub fn potential(&self, rho: &GridDensity) -> Result<Vec<f64>> {
        self.check(rho)?;
        let rho_hat = self.density_spectrum(&rho.values);
        let out = self.apply(&rho_hat, &self.potential_hat, rho.cell_volume());
        finite_or_err(out)
    }

    /// `(∇K^ε ⋆ ρ)` at the grid nodes.
    pub fn field(&self, rho: &GridDensity) -> Result<FieldSample> {
        self.check(rho)?;
        let rho_hat = self.density_spectrum(&rho.values);
        let cell = rho.cell_volume();
        let components = self
            .gradient_hat
            .iter()
            .map(|g| finite_or_err(self.apply(&rho_hat, g, cell)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FieldSample {
            components,
            spacing_warning: self.spacing_warning,
        })
    }

    /// `(1/2) ∬ K^ε(x−y) ρ(x) ρ(y)` by nodal quadrature.
    pub fn interaction_energy(&self, rho: &GridDensity) -> Result<f64> {
        let phi = self.potential(rho)?;
        Ok(0.5 * rho.cell_volume() * phi.iter().zip(&rho.values).map(|(p, r)| p * r).sum::<f64>())
    }

    fn density_spectrum(&self, values: &[f64]) -> Vec<Complex<f64>> {
        let total: usize = self.padded[..self.dim].iter().product();
        let mut buf = vec![Complex::new(0.0, 0.0); total];
        let n_in = values.len();
        for (flat, v) in values.iter().enumerate().take(n_in) {
            buf[self.padded_index(flat)].re = *v;
        }
        self.transform(&mut buf, true);
        buf
    }

    fn padded_index(&self, flat: usize) -> usize {
        let mut rem = flat;
        let mut idx = [0usize; 3];
        for a in (0..self.dim).rev() {
            idx[a] = rem % self.shape[a];
            rem /= self.shape[a];
        }
        let mut out = 0;
        for a in 0..self.dim {
            out = out * self.padded[a] + idx[a];
        }
        out
    }

    fn apply(&self, rho_hat: &[Complex<f64>], kernel_hat: &[Complex<f64>], cell: f64) -> Vec<f64> {
        let mut buf: Vec<Complex<f64>> = rho_hat.iter().zip(kernel_hat).map(|(a, b)| a * b).collect();
        self.transform(&mut buf, false);
        let norm = cell / buf.len() as f64;
        let n_out: usize = self.shape[..self.dim].iter().product();
        (0..n_out).map(|flat| buf[self.padded_index(flat)].re * norm).collect()
    }

    /// In-place multi-dimensional FFT over the padded array, axis by axis.
    fn transform(&self, data: &mut [Complex<f64>], forward: bool) {
        let plans = if forward { &self.forward } else { &self.inverse };
        for axis in 0..self.dim {
            let len = self.padded[axis];
            let stride: usize = self.padded[axis + 1..self.dim].iter().product();
            let plan = &plans[axis];
            if stride == 1 {
                plan.process(data);
                continue;
            }
            let mut line = vec![Complex::new(0.0, 0.0); len];
            let mut scratch = vec![Complex::new(0.0, 0.0); plan.get_inplace_scratch_len()];
            let block = len * stride;
            for outer in 0..data.len() / block {
                for inner in 0..stride {
                    let base = outer * block + inner;
                    for k in 0..len {
                        line[k] = data[base + k * stride];
                    }
                    plan.process_with_scratch(&mut line, &mut scratch);
                    for k in 0..len {
                        data[base + k * stride] = line[k];
                    }
                }
            }
        }
    }
}

fn finite_or_err(v: Vec<f64>) -> Result<Vec<f64>> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::domain("convolution produced non-finite values"))
    }
}

/// `∇K^ε ⋆ ρ` sampled on the grid of `rho`.
pub fn force_field(spec: &KernelSpec, rho: &GridDensity) -> Result<FieldSample> {
    FreeSpaceConvolver::for_density(spec, rho)?.field(rho)
}

/// `(1/2) ∬ K^ε ρ ρ` on the grid of `rho`.
pub fn interaction_energy_grid(spec: &KernelSpec, rho: &GridDensity) -> Result<f64> {
    FreeSpaceConvolver::for_density(spec, rho)?.interaction_energy(rho)
}
