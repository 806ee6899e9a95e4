use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, Solver, SolverConfig, SCHEMA_VERSION};
use crate::diagnostics::{negative_entropy_bound, write_csv, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::inequalities::check_lp_growth;
use crate::kernels::GridDensity;
use crate::particles::{
    kde_density, read_particles, run, sample_initial, silverman_bandwidth, write_particles, CollapseEvent,
    KdeSettings, ParticleEnsemble, RunOptions, PARTICLE_MAGIC,
};
use crate::phase_grid::{read_checkpoint, run_grid, write_checkpoint, GridRunOptions, PhaseGrid, CHECKPOINT_MAGIC};

pub const DIAGNOSTICS_NDJSON: &str = "diagnostics.ndjson";
pub const DIAGNOSTICS_CSV: &str = "diagnostics.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "final_state.bin";
pub const MOMENTS_CSV: &str = "moments.csv";

/// The evolving state of either solver.
#[derive(Clone, Debug, PartialEq)]
pub enum State {
    Particles(ParticleEnsemble),
    Grid(PhaseGrid),
}

impl State {
    /// Samples or discretizes the initial datum of `cfg`.
    pub fn initial(cfg: &ScenarioConfig) -> Result<Self> {
        Ok(match &cfg.solver {
            SolverConfig::Particles(p) => {
                State::Particles(sample_initial(&cfg.initial, cfg.dim(), p.n_particles, cfg.seed)?)
            }
            SolverConfig::PhaseGrid(_) => State::Grid(PhaseGrid::from_initial(cfg.geometry()?, &cfg.initial)?),
        })
    }

    pub fn time(&self) -> f64 {
        match self {
            State::Particles(e) => e.time,
            State::Grid(g) => g.time,
        }
    }

    /// Reads either checkpoint format, dispatching on the magic bytes.
    pub fn read(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        match bytes.get(..8) {
            Some(m) if m == PARTICLE_MAGIC => Ok(State::Particles(read_particles(bytes.as_slice())?)),
            Some(m) if m == CHECKPOINT_MAGIC => Ok(State::Grid(read_checkpoint(bytes.as_slice())?)),
            _ => Err(Error::Checkpoint(format!("{} is not a checkpoint", path.display()))),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        match self {
            State::Particles(e) => write_particles(&mut out, e)?,
            State::Grid(g) => write_checkpoint(&mut out, g)?,
        }
        out.flush()?;
        Ok(())
    }

    /// Position density: grid moments, or a KDE for particles.
    pub fn density(&self, kde: Option<&KdeSettings>) -> Result<GridDensity> {
        match self {
            State::Grid(g) => Ok(g.moments().0),
            State::Particles(e) => {
                let k = kde.ok_or_else(|| Error::domain("particle densities need `kde` settings"))?;
                let geometry = GridDensity::centered(e.dim, k.n, k.half_width);
                let bw = k.bandwidth.unwrap_or_else(|| silverman_bandwidth(e));
                Ok(kde_density(e, &geometry, bw)?.density)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Completed,
    Collapsed,
    Diverged,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

/// Outcome of one invariant check over the records of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InvariantCheck {
    pub name: String,
    pub status: CheckStatus,
    /// The check's own measure of its worst case (see `note`).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst: Option<f64>,
    pub failures: usize,
    pub note: String,
}

impl InvariantCheck {
    fn measured(name: &str, worst: f64, failures: usize, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: if failures == 0 && worst.is_finite() { CheckStatus::Pass } else { CheckStatus::Fail },
            worst: Some(worst),
            failures,
            note: note.into(),
        }
    }

    fn skipped(name: &str, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            status: CheckStatus::Skipped,
            worst: None,
            failures: 0,
            note: note.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub crate_version: String,
    pub status: RunStatus,
    /// The fully resolved config, defaults included.
    pub config: ScenarioConfig,
    /// Start time when resumed from a checkpoint.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resumed_from: Option<f64>,
    pub t_final: f64,
    pub steps: u64,
    pub records: usize,
    pub collapse: Option<CollapseEvent>,
    pub stability_warnings: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub checks: Vec<InvariantCheck>,
    /// No check failed.
    pub checks_pass: bool,
}

#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub summary: RunSummary,
    pub records: Vec<DiagnosticsRecord>,
    pub state: State,
}

/// Tracks the negative-entropy bound over every recorded grid state.
#[derive(Default)]
struct EntropyWatch {
    worst: f64,
    failures: usize,
    seen: usize,
}

impl EntropyWatch {
    fn observe(&mut self, g: &PhaseGrid) {
        let b = negative_entropy_bound(g);
        self.seen += 1;
        if !b.holds() {
            self.failures += 1;
        }
        self.worst = if self.seen == 1 { b.lhs - b.rhs } else { self.worst.max(b.lhs - b.rhs) };
    }
}

fn grid_checks(cfg: &ScenarioConfig, records: &[DiagnosticsRecord], watch: &EntropyWatch) -> Vec<InvariantCheck> {
    let c = &cfg.checks;
    let mut checks = Vec::new();
    let Some(first) = records.first() else {
        return checks;
    };

    let m0 = first.mass + first.boundary_loss.unwrap_or(0.0);
    let drift = |r: &DiagnosticsRecord| (r.mass + r.boundary_loss.unwrap_or(0.0) - m0).abs() / m0;
    let worst = records.iter().map(drift).fold(0.0, f64::max);
    let failures = records.iter().filter(|r| drift(r) > c.mass_rtol).count();
    checks.push(InvariantCheck::measured(
        "mass",
        worst,
        failures,
        format!("max |mass + boundary_loss - m0| / m0; tolerance {:e}", c.mass_rtol),
    ));

    if records.len() < 2 {
        checks.push(InvariantCheck::skipped("free-energy-monotone", "fewer than two records"));
    } else if cfg.sigma > 0.0 {
        let mut worst = f64::NEG_INFINITY;
        let mut failures = 0;
        for w in records.windows(2) {
            let (a, b) = (w[0].free_energy.unwrap_or(f64::NAN), w[1].free_energy.unwrap_or(f64::NAN));
            let rise = (b - a) / a.abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rise);
            if !(rise <= c.free_energy_rtol) {
                failures += 1;
            }
        }
        checks.push(InvariantCheck::measured(
            "free-energy-monotone",
            worst,
            failures,
            format!("max relative rise between records; tolerance {:e}", c.free_energy_rtol),
        ));
    } else {
        checks.push(InvariantCheck::skipped(
            "free-energy-monotone",
            "sigma = 0: the free energy is conserved up to discretization error",
        ));
    }

    let min_d = records.iter().map(|r| r.dissipation.unwrap_or(f64::NAN)).fold(f64::INFINITY, f64::min);
    let failures = records.iter().filter(|r| !(r.dissipation.unwrap_or(f64::NAN) >= 0.0)).count();
    checks.push(InvariantCheck::measured("dissipation-nonnegative", min_d, failures, "minimum dissipation"));

    for (label, p) in [("lp-growth-2", 2.0), ("lp-growth-inf", f64::INFINITY)] {
        checks.push(match check_lp_growth(records, p, cfg.sigma, cfg.dim(), c.lp_tolerance) {
            Ok(r) => InvariantCheck::measured(
                label,
                r.max_ratio,
                r.failures().count(),
                format!("max ||f(t)||_p / (||f0||_p e^(d sigma (1-1/p) t)); tolerance {:e}", c.lp_tolerance),
            ),
            Err(e) => InvariantCheck::skipped(label, e.to_string()),
        });
    }

    checks.push(InvariantCheck::measured(
        "negative-entropy",
        watch.worst,
        watch.failures,
        format!("max (lhs - rhs) over {} grid states", watch.seen),
    ));
    checks
}

fn particle_checks(records: &[DiagnosticsRecord]) -> Vec<InvariantCheck> {
    let Some(first) = records.first() else {
        return Vec::new();
    };
    let worst = records.iter().map(|r| (r.mass - first.mass).abs()).fold(0.0, f64::max);
    let failures = records.iter().filter(|r| r.mass != first.mass).count();
    vec![InvariantCheck::measured("mass", worst, failures, "max |mass - m0|; must be exactly zero")]
}

struct Sink {
    ndjson: Option<BufWriter<File>>,
    records: Vec<DiagnosticsRecord>,
}

impl Sink {
    fn push(&mut self, r: &DiagnosticsRecord) -> Result<()> {
        if let Some(out) = &mut self.ndjson {
            writeln!(out, "{}", r.to_json_line()?)?;
            // Flushed per record so an aborted run keeps its stream.
            out.flush()?;
        }
        self.records.push(r.clone());
        Ok(())
    }
}

fn write_records_csv(dir: &Path, records: &[DiagnosticsRecord]) -> Result<()> {
    let mut out = BufWriter::new(File::create(dir.join(DIAGNOSTICS_CSV))?);
    write_csv(&mut out, records)?;
    out.flush()?;
    Ok(())
}

pub(crate) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Runs `cfg` from its initial datum, or from `resume` when given, writing
/// the run directory `out` when given.
///
/// The directory receives `diagnostics.ndjson` (streamed), `diagnostics.csv`,
/// `final_state.bin`, `summary.json`, and for grids `moments.csv`. A config
/// error leaves no output. On divergence the stream and a summary with status
/// `diverged` are kept and the error is returned.
pub fn run_scenario(cfg: &ScenarioConfig, out: Option<&Path>, resume: Option<State>) -> Result<ScenarioRun> {
    cfg.validate()?;
    let solver = cfg.solver_instance()?;
    let resumed_from = resume.as_ref().map(State::time);
    let state = match resume {
        Some(s) => s,
        None => State::initial(cfg)?,
    };
    match (&solver, &state) {
        (Solver::Particles(_), State::Particles(e)) if e.dim == cfg.dim() => {}
        (Solver::Grid(s), State::Grid(g)) if g.geometry == s.geometry => {}
        _ => return Err(Error::Config("checkpoint does not match the config's solver or geometry".into())),
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
    }
    let mut sink = Sink {
        ndjson: out.map(|d| File::create(d.join(DIAGNOSTICS_NDJSON)).map(BufWriter::new)).transpose()?,
        records: Vec::new(),
    };
    let mut summary = RunSummary {
        schema_version: SCHEMA_VERSION,
        crate_version: env!("CARGO_PKG_VERSION").into(),
        status: RunStatus::Completed,
        config: cfg.clone(),
        resumed_from,
        t_final: state.time(),
        steps: 0,
        records: 0,
        collapse: None,
        stability_warnings: 0,
        error: None,
        checks: Vec::new(),
        checks_pass: true,
    };

    let result = match (&solver, state) {
        (Solver::Particles(s), State::Particles(ens)) => {
            let SolverConfig::Particles(p) = &cfg.solver else { unreachable!() };
            let opts = RunOptions {
                t_end: cfg.t_end,
                cadence: cfg.cadence,
                guards: cfg.guards,
                kde: p.kde.clone(),
                stability_bound: p.stability_bound,
                virial: p.virial,
            };
            run(s, ens, &opts, &mut |r| sink.push(r)).map(|o| {
                summary.collapse = o.collapse;
                summary.stability_warnings = o.stability_warnings;
                summary.steps = o.ensemble.step;
                summary.checks = particle_checks(&sink.records);
                State::Particles(o.ensemble)
            })
        }
        (Solver::Grid(s), State::Grid(grid)) => {
            let opts = GridRunOptions {
                t_end: cfg.t_end,
                cadence: cfg.cadence,
            };
            let mut watch = EntropyWatch::default();
            run_grid(s, grid, &opts, &mut |r, g| {
                watch.observe(g);
                sink.push(r)
            })
            .map(|o| {
                summary.steps = (o.grid.time / cfg.dt).round() as u64;
                summary.checks = grid_checks(cfg, &sink.records, &watch);
                State::Grid(o.grid)
            })
        }
        _ => unreachable!("matched above"),
    };
    summary.records = sink.records.len();
    summary.checks_pass = summary.checks.iter().all(|c| c.status != CheckStatus::Fail);

    let state = match result {
        Ok(state) => state,
        Err(e) => {
            if let (Error::Divergence { step }, Some(dir)) = (&e, out) {
                summary.status = RunStatus::Diverged;
                summary.steps = *step;
                summary.t_final = sink.records.last().map_or(f64::NAN, |r| r.t);
                summary.error = Some(e.to_string());
                write_records_csv(dir, &sink.records)?;
                write_json(&dir.join(SUMMARY_JSON), &summary)?;
            }
            return Err(e);
        }
    };
    summary.t_final = state.time();
    if summary.collapse.is_some() {
        summary.status = RunStatus::Collapsed;
    }
    if let Some(dir) = out {
        write_records_csv(dir, &sink.records)?;
        state.write(&dir.join(CHECKPOINT_FILE))?;
        if let State::Grid(g) = &state {
            let mut m = BufWriter::new(File::create(dir.join(MOMENTS_CSV))?);
            g.write_moments_csv(&mut m)?;
            m.flush()?;
        }
        write_json(&dir.join(SUMMARY_JSON), &summary)?;
    }
    Ok(ScenarioRun {
        summary,
        records: sink.records,
        state,
    })
}

/// Reads `summary.json` from a run directory.
pub fn read_summary(dir: &Path) -> Result<RunSummary> {
    let text = fs::read_to_string(dir.join(SUMMARY_JSON))?;
    Ok(serde_json::from_str(&text)?)
}
