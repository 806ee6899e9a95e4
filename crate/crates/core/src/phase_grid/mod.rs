//! Deterministic split solver on a truncated phase-space box for `d ∈ {1, 2}`.
//!
//! `f` lives on cell-centred nodes `−L + (i + ½) h` of the box
//! `[−L_x, L_x]^d × [−L_v, L_v]^d`, stored row-major over
//! `(x₁, …, x_d, v₁, …, v_d)`. Every substep acts on one-dimensional lines
//! of that array: x-transport along x-axes, force shifts and velocity
//! relaxation along v-axes.

mod advection;
mod checkpoint;
mod fokker_planck;
mod solver;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::GridDensity;
use crate::particles::{InitialDataSpec, InitialFamily};

pub use advection::{advection_schemes, Advection, CubicClipped, LinearShift};
pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use fokker_planck::{
    chang_cooper_generator, relaxation_schemes, ChangCooperExponential, ChangCooperImplicit, LineOperator,
    Tridiagonal, VelocityRelaxation,
};
pub use solver::{run_grid, GridRunOptions, GridRunOutcome, PhaseGridSolver};

/// Box geometry: `n_x` nodes per x-axis on `[−L_x, L_x]`, likewise in v.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseGeometry {
    pub dim: usize,
    pub nx: usize,
    pub nv: usize,
    pub lx: f64,
    pub lv: f64,
}

impl PhaseGeometry {
    pub fn new(dim: usize, nx: usize, nv: usize, lx: f64, lv: f64) -> Result<Self> {
        let g = Self { dim, nx, nv, lx, lv };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.dim) {
            return Err(Error::invalid(format!("phase grid dimension must be 1 or 2, got {}", self.dim)));
        }
        if self.nx < 4 || self.nv < 4 {
            return Err(Error::invalid("phase grid needs at least 4 nodes per axis"));
        }
        if !(self.lx.is_finite() && self.lx > 0.0 && self.lv.is_finite() && self.lv > 0.0) {
            return Err(Error::invalid("box half-widths must be positive"));
        }
        let len = (self.nx * self.nv).checked_pow(self.dim as u32);
        if len.is_none_or(|l| l > 1 << 28) {
            return Err(Error::invalid("phase grid is too large"));
        }
        Ok(())
    }

    pub fn hx(&self) -> f64 {
        2.0 * self.lx / self.nx as f64
    }

    pub fn hv(&self) -> f64 {
        2.0 * self.lv / self.nv as f64
    }

    pub fn x_node(&self, i: usize) -> f64 {
        -self.lx + (i as f64 + 0.5) * self.hx()
    }

    pub fn v_node(&self, j: usize) -> f64 {
        -self.lv + (j as f64 + 0.5) * self.hv()
    }

    pub fn v_nodes(&self) -> Vec<f64> {
        (0..self.nv).map(|j| self.v_node(j)).collect()
    }

    /// Extent of each of the `2d` axes.
    pub fn shape(&self) -> Vec<usize> {
        let mut s = vec![self.nx; self.dim];
        s.extend(std::iter::repeat_n(self.nv, self.dim));
        s
    }

    pub fn len(&self) -> usize {
        (self.nx * self.nv).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Number of spatial cells, `n_x^d`.
    pub fn x_len(&self) -> usize {
        self.nx.pow(self.dim as u32)
    }

    pub fn v_len(&self) -> usize {
        self.nv.pow(self.dim as u32)
    }

    pub fn x_cell(&self) -> f64 {
        self.hx().powi(self.dim as i32)
    }

    pub fn v_cell(&self) -> f64 {
        self.hv().powi(self.dim as i32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.x_cell() * self.v_cell()
    }

    /// Multi-index `(i₁, …, i_d, j₁, …, j_d)` of a flat position.
    pub fn decode(&self, flat: usize) -> [usize; 4] {
        let mut idx = [0; 4];
        let mut rem = flat;
        let axes = 2 * self.dim;
        for a in (0..axes).rev() {
            let n = if a < self.dim { self.nx } else { self.nv };
            idx[a] = rem % n;
            rem /= n;
        }
        idx
    }

    /// Position and velocity coordinates of a flat position.
    pub fn coords(&self, flat: usize) -> ([f64; 2], [f64; 2]) {
        let idx = self.decode(flat);
        let mut x = [0.0; 2];
        let mut v = [0.0; 2];
        for a in 0..self.dim {
            x[a] = self.x_node(idx[a]);
            v[a] = self.v_node(idx[self.dim + a]);
        }
        (x, v)
    }

    /// Spatial grid matching the x-part of the box.
    pub fn x_density(&self) -> GridDensity {
        GridDensity::centered(self.dim, self.nx, self.lx)
    }
}

/// Values of `f` on the phase-space box at time `time`.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseGrid {
    pub geometry: PhaseGeometry,
    pub values: Vec<f64>,
    pub time: f64,
    /// Mass that left through the x-boundaries so far.
    pub boundary_loss: f64,
}

impl PhaseGrid {
    pub fn zeros(geometry: PhaseGeometry) -> Result<Self> {
        geometry.validate()?;
        Ok(Self {
            values: vec![0.0; geometry.len()],
            geometry,
            time: 0.0,
            boundary_loss: 0.0,
        })
    }

    /// Samples `f(x, v)` at every node.
    pub fn from_fn(geometry: PhaseGeometry, f: impl Fn([f64; 2], [f64; 2]) -> f64 + Sync) -> Result<Self> {
        let mut g = Self::zeros(geometry)?;
        g.values.par_iter_mut().enumerate().for_each(|(i, val)| {
            let (x, v) = geometry.coords(i);
            *val = f(x, v);
        });
        g.validate()?;
        Ok(g)
    }

    /// Nodal samples of an initial datum, rescaled so the grid mass equals
    /// the analytic mass of the cut-off datum.
    pub fn from_initial(geometry: PhaseGeometry, spec: &InitialDataSpec) -> Result<Self> {
        let d = geometry.dim;
        spec.validate(d)?;
        let cut2 = spec.velocity_cutoff.map_or(f64::INFINITY, |c| c * c);
        let (s, sv) = (spec.position_scale, spec.velocity_scale);
        let mut g = match spec.family {
            InitialFamily::GaussianGaussian => Self::from_fn(geometry, |x, v| {
                let x2 = x[0] * x[0] + x[1] * x[1];
                let v2 = v[0] * v[0] + v[1] * v[1];
                if v2 > cut2 {
                    0.0
                } else {
                    (-0.5 * x2 / (s * s) - 0.5 * v2 / (sv * sv)).exp()
                }
            })?,
            InitialFamily::UniformBallMaxwellian => Self::from_fn(geometry, |x, v| {
                let x2 = x[0] * x[0] + x[1] * x[1];
                let v2 = v[0] * v[0] + v[1] * v[1];
                if v2 > cut2 || x2 > s * s {
                    0.0
                } else {
                    (-0.5 * v2 / (sv * sv)).exp()
                }
            })?,
            InitialFamily::CustomTabulated => {
                return Err(Error::invalid("custom-tabulated data is only supported by the particle solver"))
            }
        };
        let target = spec.truncated_mass(d)?;
        let mass = g.mass();
        if mass <= 0.0 {
            return Err(Error::invalid("initial datum has no mass on the grid"));
        }
        g.scale(target / mass);
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.values.len() != self.geometry.len() {
            return Err(Error::invalid("phase grid value count does not match its geometry"));
        }
        if self.values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("phase grid values must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn scale(&mut self, c: f64) {
        self.values.iter_mut().for_each(|v| *v *= c);
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.geometry.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    /// Fraction of the mass held by cells on the outer layer of the box.
    pub fn boundary_mass_fraction(&self) -> f64 {
        let g = &self.geometry;
        let total: f64 = self.values.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let edge: f64 = self
            .values
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                let idx = g.decode(*i);
                (0..2 * g.dim).any(|a| {
                    let n = if a < g.dim { g.nx } else { g.nv };
                    idx[a] == 0 || idx[a] == n - 1
                })
            })
            .map(|(_, v)| v)
            .sum();
        edge / total
    }

    /// Warns when more than `10⁻⁶` of the mass sits in boundary cells.
    pub fn check_containment(&self) -> bool {
        let frac = self.boundary_mass_fraction();
        if frac >= 1e-6 {
            log::warn!("boundary cells carry {frac:.3e} of the mass; the box may be too small");
            false
        } else {
            true
        }
    }

    /// Applies `op` to every line along `axis` and returns the sum of its
    /// results in a fixed order.
    pub fn map_lines<F>(&mut self, axis: usize, op: F) -> Result<f64>
    where
        F: Fn(usize, &mut [f64]) -> Result<f64> + Sync,
    {
        let shape = self.geometry.shape();
        map_lines(&mut self.values, &shape, axis, op)
    }

    /// Velocity moments `ρ = ∫ f dv` and `ρu = ∫ v f dv`.
    pub fn moments(&self) -> (GridDensity, Vec<Vec<f64>>) {
        let g = &self.geometry;
        let nvol = g.v_len();
        let hv = g.v_cell();
        let v_coords: Vec<[f64; 2]> = (0..nvol).map(|k| g.coords(k).1).collect();
        let mut rho = g.x_density();
        let mut mom = vec![vec![0.0; g.x_len()]; g.dim];
        for (ix, block) in self.values.chunks(nvol).enumerate() {
            let mut r = 0.0;
            let mut m = [0.0; 2];
            for (f, v) in block.iter().zip(&v_coords) {
                r += f;
                m[0] += f * v[0];
                m[1] += f * v[1];
            }
            rho.values[ix] = r * hv;
            for a in 0..g.dim {
                mom[a][ix] = m[a] * hv;
            }
        }
        (rho, mom)
    }

    /// Writes `x₁[,x₂],rho,j₁[,j₂]` rows for every spatial cell.
    pub fn write_moments_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let g = &self.geometry;
        let (rho, mom) = self.moments();
        let header = if g.dim == 1 { "x1,rho,j1" } else { "x1,x2,rho,j1,j2" };
        writeln!(out, "{header}")?;
        for i in 0..g.x_len() {
            let x = rho.node(i);
            let mut row: Vec<String> = x[..g.dim].iter().map(|c| c.to_string()).collect();
            row.push(rho.values[i].to_string());
            row.extend(mom.iter().map(|m| m[i].to_string()));
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

pub(crate) fn map_lines<F>(values: &mut [f64], shape: &[usize], axis: usize, op: F) -> Result<f64>
where
    F: Fn(usize, &mut [f64]) -> Result<f64> + Sync,
{
    let n = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let block = n * stride;
    let partial: Vec<Result<f64>> = values
        .par_chunks_mut(block)
        .enumerate()
        .map(|(outer, chunk)| {
            let mut line = vec![0.0; n];
            let mut acc = 0.0;
            for inner in 0..stride {
                for (j, l) in line.iter_mut().enumerate() {
                    *l = chunk[inner + j * stride];
                }
                acc += op(outer * block + inner, &mut line)?;
                for (j, l) in line.iter().enumerate() {
                    chunk[inner + j * stride] = *l;
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = 0.0;
    for p in partial {
        total += p?;
    }
    Ok(total)
}

/// Grid Maxwellian `M(x) (2π)^{-d/2} e^{−|v|²/2}` with each velocity block
/// normalized to `∑ f h_v^d = M(x)`.
pub fn local_maxwellian(geometry: PhaseGeometry, rho: impl Fn([f64; 2]) -> f64 + Sync) -> Result<PhaseGrid> {
    let mut g = PhaseGrid::from_fn(geometry, |x, v| rho(x) * (-0.5 * (v[0] * v[0] + v[1] * v[1])).exp())?;
    let nvol = geometry.v_len();
    let z: f64 = (0..nvol)
        .map(|k| {
            let v = geometry.coords(k).1;
            (-0.5 * (v[0] * v[0] + v[1] * v[1])).exp()
        })
        .sum::<f64>()
        * geometry.v_cell();
    g.scale(1.0 / z);
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn geom(dim: usize) -> PhaseGeometry {
        PhaseGeometry::new(dim, 16, 12, 4.0, 5.0).unwrap()
    }

    #[test]
    fn layout_round_trips() {
        let g = geom(2);
        assert_eq!(g.len(), 16 * 16 * 12 * 12);
        let flat = ((3 * 16 + 5) * 12 + 7) * 12 + 2;
        assert_eq!(g.decode(flat), [3, 5, 7, 2]);
        let (x, v) = g.coords(flat);
        assert_relative_eq!(x[0], -4.0 + 3.5 * 0.5);
        assert_relative_eq!(v[1], -5.0 + 2.5 * 5.0 / 6.0);
        assert!(PhaseGeometry::new(3, 8, 8, 1.0, 1.0).is_err());
        assert!(PhaseGeometry::new(1, 8, 8, 0.0, 1.0).is_err());
    }

    #[test]
    fn uniform_box_moments() {
        let g = PhaseGrid::from_fn(geom(1), |x, v| if x[0].abs() < 2.0 && v[0].abs() < 2.5 { 0.5 } else { 0.0 }).unwrap();
        let (rho, mom) = g.moments();
        assert_relative_eq!(rho.mass(), g.mass(), max_relative = 1e-12);
        assert_relative_eq!(g.mass(), 0.5 * 4.0 * 5.0, max_relative = 1e-12);
        for (i, r) in rho.values.iter().enumerate() {
            let x = rho.node(i)[0];
            assert_relative_eq!(*r, if x.abs() < 2.0 { 2.5 } else { 0.0 }, epsilon = 1e-12);
        }
        assert!(mom[0].iter().all(|m| m.abs() < 1e-12));
    }

    #[test]
    fn even_in_v_has_no_momentum_density() {
        let g = PhaseGrid::from_fn(geom(2), |x, v| {
            (-(x[0] * x[0] + x[1] * x[1])).exp() * (1.0 + 0.5 * (v[0] * v[1]).sin()) * (-(v[0] * v[0] + v[1] * v[1])).exp()
        })
        .unwrap();
        // v·f is odd under v → −v, and the node set is symmetric.
        let (_, mom) = g.moments();
        assert!(mom.iter().flatten().all(|m| m.abs() < 1e-14));
    }

    #[test]
    fn maxwellian_density_matches_gaussian() {
        let geometry = PhaseGeometry::new(1, 64, 64, 6.0, 6.0).unwrap();
        let g = local_maxwellian(geometry, |x| (-0.5 * x[0] * x[0]).exp() / (2.0 * std::f64::consts::PI).sqrt()).unwrap();
        let (rho, _) = g.moments();
        for (i, r) in rho.values.iter().enumerate() {
            let x = rho.node(i)[0];
            assert_relative_eq!(*r, (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-12);
        }
        assert_relative_eq!(g.mass(), 1.0, max_relative = 1e-8);
        assert!(g.check_containment());
    }

    #[test]
    fn initial_mass_is_truncated_mass() {
        let geometry = PhaseGeometry::new(1, 32, 64, 6.0, 6.0).unwrap();
        let spec = InitialDataSpec::gaussian(2.0, 1.0, 1.0).with_cutoff(Some(1.0));
        let g = PhaseGrid::from_initial(geometry, &spec).unwrap();
        assert_relative_eq!(g.mass(), spec.truncated_mass(1).unwrap(), max_relative = 1e-12);
        assert!(geometry.coords(0).1[0] < -1.0 && g.values[0] == 0.0);
    }

    #[test]
    fn moments_csv_has_one_row_per_cell() {
        let g = PhaseGrid::from_fn(geom(1), |_, _| 1.0).unwrap();
        let mut buf = Vec::new();
        g.write_moments_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 17);
        assert!(text.starts_with("x1,rho,j1\n"));
    }
}
