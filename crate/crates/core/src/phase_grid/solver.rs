use super::advection::Advection;
use super::fokker_planck::{LineOperator, VelocityRelaxation};
use super::{PhaseGeometry, PhaseGrid};
use crate::diagnostics::{grid_record, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::kernels::{FreeSpaceConvolver, KernelSpec};

/// Strang-split solver for `∂_t f + v·∇_x f + E·∇_v f = σ ∇_v·(∇_v f + v f)`
/// with `E = ∇K^ε ⋆ ρ`.
#[derive(Debug)]
pub struct PhaseGridSolver {
    pub geometry: PhaseGeometry,
    pub kernel: KernelSpec,
    pub sigma: f64,
    pub dt: f64,
    advection: Box<dyn Advection>,
    relaxation: &'static str,
    fp: Box<dyn LineOperator>,
    convolver: Option<FreeSpaceConvolver>,
}

impl PhaseGridSolver {
    pub fn new(
        geometry: PhaseGeometry,
        kernel: KernelSpec,
        sigma: f64,
        dt: f64,
        advection: Box<dyn Advection>,
        relaxation: Box<dyn VelocityRelaxation>,
    ) -> Result<Self> {
        geometry.validate()?;
        kernel.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        if dt * geometry.lv > geometry.lx {
            return Err(Error::Stability(format!(
                "transport displacement dt * L_v = {} exceeds L_x = {}",
                dt * geometry.lv,
                geometry.lx
            )));
        }
        let convolver = if kernel.is_zero() {
            None
        } else {
            if kernel.dim != geometry.dim {
                return Err(Error::invalid(format!(
                    "kernel dimension {} differs from grid dimension {}",
                    kernel.dim, geometry.dim
                )));
            }
            let mut shape = [1; 3];
            let mut spacing = [1.0; 3];
            for a in 0..geometry.dim {
                shape[a] = geometry.nx;
                spacing[a] = geometry.hx();
            }
            Some(FreeSpaceConvolver::new(&kernel, shape, spacing)?)
        };
        let fp = relaxation.operator(&geometry.v_nodes(), geometry.hv(), sigma * dt)?;
        Ok(Self {
            geometry,
            kernel,
            sigma,
            dt,
            advection,
            relaxation: relaxation.name(),
            fp,
            convolver,
        })
    }

    pub fn convolver(&self) -> Option<&FreeSpaceConvolver> {
        self.convolver.as_ref()
    }

    pub fn advection_name(&self) -> &'static str {
        self.advection.name()
    }

    pub fn relaxation_name(&self) -> &'static str {
        self.relaxation
    }

    fn check(&self, g: &PhaseGrid) -> Result<()> {
        if g.geometry != self.geometry {
            return Err(Error::invalid("grid geometry differs from the solver's"));
        }
        Ok(())
    }

    /// `∂_t f + v·∇_x f = 0` over `tau`; outflow is added to the boundary loss.
    pub fn transport(&self, g: &mut PhaseGrid, tau: f64) -> Result<()> {
        self.check(g)?;
        let geo = self.geometry;
        let hx = geo.hx();
        let mut lost = 0.0;
        for a in 0..geo.dim {
            lost += g.map_lines(a, |base, line| {
                let v = geo.coords(base).1[a];
                Ok(self.advection.shift(line, v * tau / hx))
            })?;
        }
        g.boundary_loss += lost * geo.cell_volume();
        Ok(())
    }

    /// `E = ∇K^ε ⋆ ρ` per axis on the spatial grid; empty for a zero kernel.
    pub fn field(&self, g: &PhaseGrid) -> Result<Vec<Vec<f64>>> {
        match &self.convolver {
            None => Ok(Vec::new()),
            Some(c) => {
                let (rho, _) = g.moments();
                Ok(c.field(&rho)?.components)
            }
        }
    }

    /// `∂_t f + E·∇_v f = 0` over `tau` for a fixed field.
    pub fn force(&self, g: &mut PhaseGrid, field: &[Vec<f64>], tau: f64) -> Result<()> {
        self.check(g)?;
        if field.is_empty() {
            return Ok(());
        }
        let geo = self.geometry;
        let emax = field.iter().flatten().fold(0.0f64, |m, e| m.max(e.abs()));
        if emax * self.dt > geo.lv {
            return Err(Error::Stability(format!(
                "velocity displacement dt * max|E| = {} exceeds L_v = {}",
                emax * self.dt,
                geo.lv
            )));
        }
        let hv = geo.hv();
        let nvol = geo.v_len();
        let mut lost = 0.0;
        for a in 0..geo.dim {
            let e = &field[a];
            lost += g.map_lines(geo.dim + a, |base, line| Ok(self.advection.shift(line, e[base / nvol] * tau / hv)))?;
        }
        g.boundary_loss += lost * geo.cell_volume();
        Ok(())
    }

    /// `∂_t f = σ ∇_v·(∇_v f + v f)` over the solver's `dt`.
    pub fn fokker_planck(&self, g: &mut PhaseGrid) -> Result<()> {
        self.check(g)?;
        if self.sigma == 0.0 {
            return Ok(());
        }
        for a in 0..self.geometry.dim {
            g.map_lines(self.geometry.dim + a, |_, line| {
                self.fp.apply(line)?;
                Ok(0.0)
            })?;
        }
        Ok(())
    }

    /// Transport `dt/2`, force `dt/2`, Fokker–Planck `dt`, force `dt/2`,
    /// transport `dt/2`. The field is computed once, after the first
    /// transport half-step; the force and relaxation substeps leave `ρ`
    /// unchanged, so both force half-steps see the same density.
    pub fn strang_step(&self, g: &mut PhaseGrid) -> Result<()> {
        let half = 0.5 * self.dt;
        self.transport(g, half)?;
        let field = self.field(g)?;
        self.force(g, &field, half)?;
        self.fokker_planck(g)?;
        self.force(g, &field, half)?;
        self.transport(g, half)?;
        g.time += self.dt;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct GridRunOptions {
    pub t_end: f64,
    pub cadence: f64,
}

#[derive(Clone, Debug)]
pub struct GridRunOutcome {
    pub grid: PhaseGrid,
    pub records: Vec<DiagnosticsRecord>,
}

/// Advances `grid` to `opts.t_end`, streaming a record and the state it
/// describes at step 0 and every `round(cadence / dt)` steps.
pub fn run_grid(
    solver: &PhaseGridSolver,
    mut grid: PhaseGrid,
    opts: &GridRunOptions,
    observer: &mut dyn FnMut(&DiagnosticsRecord, &PhaseGrid) -> Result<()>,
) -> Result<GridRunOutcome> {
    grid.validate()?;
    let span = opts.t_end - grid.time;
    if span < 0.0 || !span.is_finite() {
        return Err(Error::invalid(format!("t_end {} precedes the grid time {}", opts.t_end, grid.time)));
    }
    let mut records = Vec::new();
    if span == 0.0 {
        return Ok(GridRunOutcome { grid, records });
    }
    if !(opts.cadence > 0.0) {
        return Err(Error::invalid("cadence must be positive"));
    }
    grid.check_containment();
    let n_steps = ((span / solver.dt).round() as u64).max(1);
    let every = ((opts.cadence / solver.dt).round() as u64).max(1);
    let t0 = grid.time;
    // Grids carry no step counter; resumed runs count from `t0 / dt`.
    let step0 = (t0 / solver.dt).round() as u64;
    for k in 0..=n_steps {
        if k % every == 0 {
            let r = grid_record(&grid, &solver.kernel, solver.convolver(), step0 + k)?;
            observer(&r, &grid)?;
            records.push(r);
        }
        if k == n_steps {
            break;
        }
        solver.strang_step(&mut grid)?;
        grid.time = t0 + (k + 1) as f64 * solver.dt;
        if grid.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence { step: step0 + k + 1 });
        }
    }
    Ok(GridRunOutcome { grid, records })
}
