use serde::{Deserialize, Serialize};

use super::record::{DiagnosticsRecord, LpSource};
use crate::error::Result;
use crate::kernels::{FreeSpaceConvolver, KernelFamily, KernelSpec};
use crate::phase_grid::PhaseGrid;

/// Relative floor below which cells are skipped in `log f` and `1/f`.
const FLOOR: f64 = 1e-30;

/// `(Σ f^p h)^{1/p}` over the phase-space grid; `p = ∞` gives `max f`.
pub fn lp_norm(g: &PhaseGrid, p: f64) -> f64 {
    crate::kernels::convolution::lp_norm(&g.values, g.geometry.cell_volume(), p)
}

fn weighted_sum(g: &PhaseGrid, w: impl Fn([f64; 2], [f64; 2]) -> f64) -> f64 {
    let geo = &g.geometry;
    g.values
        .iter()
        .enumerate()
        .filter(|(_, f)| **f != 0.0)
        .map(|(i, f)| {
            let (x, v) = geo.coords(i);
            w(x, v) * f
        })
        .sum::<f64>()
        * geo.cell_volume()
}

/// `(1/2) ∬ |v|² f`.
pub fn kinetic(g: &PhaseGrid) -> f64 {
    0.5 * weighted_sum(g, |_, v| v[0] * v[0] + v[1] * v[1])
}

/// `(1/2) ∬ |x|² f`.
pub fn x_moment(g: &PhaseGrid) -> f64 {
    0.5 * weighted_sum(g, |x, _| x[0] * x[0] + x[1] * x[1])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySplit {
    /// `∬ f log f`.
    pub entropy: f64,
    /// `∬ f log₊ f`.
    pub plus: f64,
    /// `∬ f log₋ f`, nonnegative.
    pub minus: f64,
}

/// `∬ f log f` and its split by the sign of `log f`, with `0 log 0 = 0` and
/// cells below `10⁻³⁰ max f` skipped.
pub fn entropy_split(g: &PhaseGrid) -> EntropySplit {
    let floor = FLOOR * g.max();
    let (mut plus, mut minus) = (0.0, 0.0);
    for &f in &g.values {
        if f > floor && f > 0.0 {
            let l = f.ln();
            if l > 0.0 {
                plus += f * l;
            } else {
                minus -= f * l;
            }
        }
    }
    let h = g.geometry.cell_volume();
    EntropySplit {
        entropy: (plus - minus) * h,
        plus: plus * h,
        minus: minus * h,
    }
}

/// `∬ f log(f / M)` against the unit-temperature Maxwellian in `v` with the
/// same spatial density, i.e. entropy plus kinetic energy minus the
/// entropy of that local Maxwellian.
pub fn relative_entropy_to_maxwellian(g: &PhaseGrid) -> f64 {
    let geo = &g.geometry;
    let nvol = geo.v_len();
    let hv = geo.v_cell();
    let m: Vec<f64> = (0..nvol)
        .map(|k| {
            let v = geo.coords(k).1;
            (-0.5 * (v[0] * v[0] + v[1] * v[1])).exp()
        })
        .collect();
    let z: f64 = m.iter().sum::<f64>() * hv;
    let floor = FLOOR * g.max();
    let mut acc = 0.0;
    for block in g.values.chunks(nvol) {
        let rho: f64 = block.iter().sum::<f64>() * hv;
        if rho <= 0.0 {
            continue;
        }
        for (f, mk) in block.iter().zip(&m) {
            if *f > floor && *f > 0.0 {
                acc += f * (f * z / (rho * mk)).ln();
            }
        }
    }
    acc * geo.cell_volume()
}

/// `∬ |∇_v f + v f|² / f` with central differences in `v` (one-sided at the
/// box edges); cells below the floor contribute nothing.
pub fn dissipation(g: &PhaseGrid) -> f64 {
    let geo = &g.geometry;
    let d = geo.dim;
    let hv = geo.hv();
    let floor = FLOOR * g.max();
    let shape = geo.shape();
    let mut total = 0.0;
    for a in 0..d {
        let axis = d + a;
        let n = shape[axis];
        let stride: usize = shape[axis + 1..].iter().product();
        let block = n * stride;
        for (outer, chunk) in g.values.chunks(block).enumerate() {
            for inner in 0..stride {
                let at = |j: usize| chunk[inner + j * stride];
                for j in 0..n {
                    let f = at(j);
                    if !(f > floor && f > 0.0) {
                        continue;
                    }
                    let df = if j == 0 {
                        (at(1) - at(0)) / hv
                    } else if j == n - 1 {
                        (at(n - 1) - at(n - 2)) / hv
                    } else {
                        (at(j + 1) - at(j - 1)) / (2.0 * hv)
                    };
                    let v = geo.coords(outer * block + inner + j * stride).1[a];
                    let flux = df + v * f;
                    total += flux * flux / f;
                }
            }
        }
    }
    total * geo.cell_volume()
}

/// `(1/2) ∬ K^ε ρ ρ` for the spatial density of `g`.
pub fn interaction_grid(g: &PhaseGrid, convolver: &FreeSpaceConvolver) -> Result<f64> {
    let (rho, _) = g.moments();
    convolver.interaction_energy(&rho)
}

/// `kinetic + ∬ f log f − (1/2)∬ K^ε ρρ`. The interaction of a repulsive
/// kernel is negative, so the same formula adds its magnitude.
pub fn free_energy(g: &PhaseGrid, convolver: Option<&FreeSpaceConvolver>) -> Result<f64> {
    let u = match convolver {
        Some(c) => interaction_grid(g, c)?,
        None => 0.0,
    };
    Ok(kinetic(g) + entropy_split(g).entropy - u)
}

/// `∬|v|² f − α·U_h`, with `U_h` the interaction of the homogeneous kernel
/// term at the configured `ε` (the grid cannot evaluate `ε = 0`).
/// `interaction` is the full interaction energy, reused when the kernel is
/// its own homogeneous term.
pub fn virial_margin_grid(g: &PhaseGrid, spec: &KernelSpec, interaction: f64) -> Result<f64> {
    let two_kinetic = 2.0 * kinetic(g);
    if spec.is_zero() {
        return Ok(two_kinetic);
    }
    let (_, alpha) = spec.homogeneous_term();
    let uh = if spec.family == KernelFamily::ManevCombined {
        let hk = super::homogeneous_kernel(spec, spec.epsilon);
        let (rho, _) = g.moments();
        FreeSpaceConvolver::for_density(&hk, &rho)?.interaction_energy(&rho)?
    } else {
        interaction
    };
    Ok(two_kinetic - alpha * uh)
}

/// Both sides of `∬ f log₋ f ≤ (1/2)∬(|x|²+|v|²) f + (1/e)∬ e^{−(|x|²+|v|²)/4}`,
/// the last integral taken over the grid box.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NegativeEntropyBound {
    pub lhs: f64,
    pub rhs: f64,
}

impl NegativeEntropyBound {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

pub fn negative_entropy_bound(g: &PhaseGrid) -> NegativeEntropyBound {
    let geo = &g.geometry;
    let lhs = entropy_split(g).minus;
    let moments = kinetic(g) + x_moment(g);
    let gauss: f64 = (0..geo.len())
        .map(|i| {
            let (x, v) = geo.coords(i);
            (-(x[0] * x[0] + x[1] * x[1] + v[0] * v[0] + v[1] * v[1]) / 4.0).exp()
        })
        .sum::<f64>()
        * geo.cell_volume();
    NegativeEntropyBound {
        lhs,
        rhs: moments + gauss / std::f64::consts::E,
    }
}

/// Every grid functional for one time slice.
pub fn grid_record(
    g: &PhaseGrid,
    spec: &KernelSpec,
    convolver: Option<&FreeSpaceConvolver>,
    step: u64,
) -> Result<DiagnosticsRecord> {
    let mut r = DiagnosticsRecord::empty(g.time, step, g.mass());
    r.lp_source = Some(LpSource::Grid);
    r.l1 = Some(lp_norm(g, 1.0));
    r.l2 = Some(lp_norm(g, 2.0));
    r.l53 = Some(lp_norm(g, 5.0 / 3.0));
    r.linf = Some(lp_norm(g, f64::INFINITY));
    r.kinetic = kinetic(g);
    r.x_moment = x_moment(g);
    let (rho, _) = g.moments();
    let u = match convolver {
        Some(c) => c.interaction_energy(&rho)?,
        None => 0.0,
    };
    r.interaction = Some(u);
    let e = entropy_split(g);
    r.entropy = Some(e.entropy);
    r.entropy_plus = Some(e.plus);
    r.entropy_minus = Some(e.minus);
    r.free_energy = Some(r.kinetic + e.entropy - u);
    r.dissipation = Some(dissipation(g));
    r.virial_margin = Some(virial_margin_grid(g, spec, u)?);
    r.max_density = Some(rho.lp_norm(f64::INFINITY));
    r.boundary_loss = Some(g.boundary_loss);
    Ok(r)
}
