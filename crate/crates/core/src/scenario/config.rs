use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{force_evaluators, KernelSpec};
use crate::particles::{sde_schemes, CollapseGuards, InitialDataSpec, KdeSettings, ParticleSolver};
use crate::phase_grid::{advection_schemes, relaxation_schemes, PhaseGeometry, PhaseGridSolver};
use crate::registry::Options;

/// Version of the config, summary and CSV layouts written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

/// A complete experiment description. Unknown keys are rejected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub solver: SolverConfig,
    /// Its `dim` fixes the dimension of the run.
    pub kernel: KernelSpec,
    pub initial: InitialDataSpec,
    pub sigma: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Time between diagnostics records.
    pub cadence: f64,
    #[serde(default)]
    pub seed: u64,
    /// Run directory; the command line may override it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub guards: CollapseGuards,
    #[serde(default)]
    pub checks: CheckSettings,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SolverConfig {
    Particles(ParticleSettings),
    PhaseGrid(GridSettings),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleSettings {
    pub n_particles: usize,
    #[serde(default = "default_scheme")]
    pub scheme: String,
    #[serde(default)]
    pub scheme_options: Options,
    #[serde(default = "default_evaluator")]
    pub evaluator: String,
    #[serde(default)]
    pub evaluator_options: Options,
    /// KDE density norms in each record; off when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kde: Option<KdeSettings>,
    /// Compute the `ε = 0` virial margin in each record.
    #[serde(default = "yes")]
    pub virial: bool,
    #[serde(default = "default_stability_bound")]
    pub stability_bound: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSettings {
    pub nx: usize,
    pub nv: usize,
    pub lx: f64,
    pub lv: f64,
    #[serde(default = "default_advection")]
    pub advection: String,
    #[serde(default)]
    pub advection_options: Options,
    #[serde(default = "default_relaxation")]
    pub relaxation: String,
    #[serde(default)]
    pub relaxation_options: Options,
}

/// Tolerances of the invariant checks reported in the run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckSettings {
    /// Allowed relative increase of the free energy between records.
    #[serde(default = "default_free_energy_rtol")]
    pub free_energy_rtol: f64,
    /// Relative slack on the `L^p` growth bound.
    #[serde(default = "default_lp_tolerance")]
    pub lp_tolerance: f64,
    /// Relative tolerance on `mass + boundary_loss` for grid runs.
    #[serde(default = "default_mass_rtol")]
    pub mass_rtol: f64,
}

impl Default for CheckSettings {
    fn default() -> Self {
        Self {
            free_energy_rtol: default_free_energy_rtol(),
            lp_tolerance: default_lp_tolerance(),
            mass_rtol: default_mass_rtol(),
        }
    }
}

fn yes() -> bool {
    true
}

fn default_scheme() -> String {
    "kick-exact-ou".into()
}

fn default_evaluator() -> String {
    "direct".into()
}

fn default_stability_bound() -> f64 {
    0.5
}

fn default_advection() -> String {
    "cubic-clipped".into()
}

fn default_relaxation() -> String {
    "chang-cooper-exponential".into()
}

fn default_free_energy_rtol() -> f64 {
    1e-6
}

fn default_lp_tolerance() -> f64 {
    1e-3
}

fn default_mass_rtol() -> f64 {
    1e-9
}

/// The solver a config resolves to.
#[derive(Debug)]
pub enum Solver {
    Particles(ParticleSolver),
    Grid(PhaseGridSolver),
}

impl ScenarioConfig {
    /// Parses and validates a JSON config.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim
    }

    /// Checks every field without building solvers; errors are
    /// [`Error::Config`].
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} is not supported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        if !(self.cadence.is_finite() && self.cadence > 0.0) {
            return bad(format!("cadence must be positive, got {}", self.cadence));
        }
        if !(self.sigma.is_finite() && self.sigma >= 0.0) {
            return bad(format!("sigma must be >= 0, got {}", self.sigma));
        }
        let g = &self.guards;
        if !(g.min_separation >= 0.0 && g.energy_ratio > 0.0 && g.density_ratio.is_none_or(|r| r > 1.0)) {
            return bad("guards need min_separation >= 0, energy_ratio > 0 and density_ratio > 1".into());
        }
        let c = &self.checks;
        if ![c.free_energy_rtol, c.lp_tolerance, c.mass_rtol].iter().all(|t| *t >= 0.0) {
            return bad("check tolerances must be >= 0".into());
        }
        let config = |e: Error| Error::Config(e.to_string());
        self.kernel.validate().map_err(config)?;
        self.initial.validate(self.dim()).map_err(config)?;
        match &self.solver {
            SolverConfig::Particles(p) => {
                if p.n_particles == 0 {
                    return bad("n_particles must be positive".into());
                }
                if let Some(k) = &p.kde {
                    if k.n == 0 || !(k.half_width > 0.0) {
                        return bad("kde needs n > 0 and half_width > 0".into());
                    }
                }
            }
            SolverConfig::PhaseGrid(_) => {
                if self.dim() > 2 {
                    return bad(format!("phase grids support d = 1, 2, got {}", self.dim()));
                }
                self.geometry().map_err(config)?;
            }
        }
        self.solver_instance().map(|_| ()).map_err(|e| match e {
            Error::Config(_) => e,
            e => config(e),
        })
    }

    pub fn geometry(&self) -> Result<PhaseGeometry> {
        match &self.solver {
            SolverConfig::PhaseGrid(g) => PhaseGeometry::new(self.dim(), g.nx, g.nv, g.lx, g.lv),
            SolverConfig::Particles(_) => Err(Error::invalid("particle scenarios have no phase grid")),
        }
    }

    /// Resolves strategy names and builds the solver.
    pub fn solver_instance(&self) -> Result<Solver> {
        Ok(match &self.solver {
            SolverConfig::Particles(p) => Solver::Particles(
                ParticleSolver::new(
                    self.kernel,
                    self.sigma,
                    self.dt,
                    sde_schemes().create(&p.scheme, &p.scheme_options)?,
                    force_evaluators().create(&p.evaluator, &p.evaluator_options)?,
                )?
                .with_min_separation(self.guards.min_separation),
            ),
            SolverConfig::PhaseGrid(g) => Solver::Grid(PhaseGridSolver::new(
                self.geometry()?,
                self.kernel,
                self.sigma,
                self.dt,
                advection_schemes().create(&g.advection, &g.advection_options)?,
                relaxation_schemes().create(&g.relaxation, &g.relaxation_options)?,
            )?),
        })
    }
}
