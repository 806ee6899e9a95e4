use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ScenarioConfig, SolverConfig, SCHEMA_VERSION};
use super::run::{run_scenario, write_json, RunStatus, State};
use crate::diagnostics::virial_margin_particles;
use crate::error::{Error, Result};
use crate::kernels::{GridDensity, KernelFamily};
use crate::rng::derive_seed;

pub const SWEEP_JSON: &str = "sweep.json";
pub const SWEEP_CSV: &str = "sweep.csv";

/// Default threshold on `max_t KE(t)/KE(0)` below which a run counts as
/// bounded.
pub const BOUNDED_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonMember {
    pub epsilon: f64,
    pub status: RunStatus,
    pub t_final: f64,
    pub checks_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonSweepReport {
    pub schema_version: u32,
    pub seed: u64,
    pub epsilons: Vec<f64>,
    /// `‖ρ^(ε_k) − ρ^(ε_{k+1})‖_{L¹}`.
    pub l1_differences: Vec<f64>,
    /// `‖ρ^(ε_k) − ρ^(ε_{k+1})‖_{L^{3/2}}`.
    pub l32_differences: Vec<f64>,
    pub noise_floor: f64,
    /// The L¹ differences strictly decrease.
    pub strictly_decreasing: bool,
    /// Every member completed and each L¹ difference is below its
    /// predecessor or at the noise floor.
    pub pass: bool,
    pub members: Vec<EpsilonMember>,
}

fn member_dir(out: Option<&Path>, prefix: &str, k: usize) -> Option<PathBuf> {
    out.map(|d| d.join(format!("{prefix}-{k:02}")))
}

fn difference_norms(a: &GridDensity, b: &GridDensity) -> Result<(f64, f64)> {
    if a.shape != b.shape || a.spacing != b.spacing || a.origin != b.origin {
        return Err(Error::domain("member densities live on different grids"));
    }
    let h = a.cell_volume();
    let (mut l1, mut l32) = (0.0, 0.0);
    for (x, y) in a.values.iter().zip(&b.values) {
        let d = (x - y).abs();
        l1 += d;
        l32 += d * d.sqrt();
    }
    Ok((l1 * h, (l32 * h).powf(2.0 / 3.0)))
}

/// Runs `base` once per `ε` (same seed, velocity cutoff `1/ε`) and compares
/// the final position densities of neighbouring members.
///
/// `epsilons` must hold at least three strictly decreasing positive values.
/// Particle members need `kde` settings. Members run concurrently; each
/// writes its run directory under `out` when given.
pub fn sweep_epsilon(
    base: &ScenarioConfig,
    epsilons: &[f64],
    noise_floor: f64,
    out: Option<&Path>,
) -> Result<EpsilonSweepReport> {
    if epsilons.len() < 3 {
        return Err(Error::domain(format!("an epsilon sweep needs at least 3 values, got {}", epsilons.len())));
    }
    if !epsilons.iter().all(|e| e.is_finite() && *e > 0.0) || !epsilons.windows(2).all(|w| w[1] < w[0]) {
        return Err(Error::domain("epsilons must be positive and strictly decreasing"));
    }
    base.validate()?;
    let kde = match &base.solver {
        SolverConfig::Particles(p) => {
            Some(p.kde.clone().ok_or_else(|| Error::domain("particle epsilon sweeps need `kde` settings"))?)
        }
        SolverConfig::PhaseGrid(_) => None,
    };
    let runs = epsilons
        .par_iter()
        .enumerate()
        .map(|(k, &eps)| {
            let mut cfg = base.clone();
            cfg.kernel.epsilon = eps;
            cfg.initial.velocity_cutoff = Some(1.0 / eps);
            let run = run_scenario(&cfg, member_dir(out, "eps", k).as_deref(), None)?;
            let rho = run.state.density(kde.as_ref())?;
            Ok((run.summary, rho))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut l1 = Vec::new();
    let mut l32 = Vec::new();
    for w in runs.windows(2) {
        let (a, b) = difference_norms(&w[0].1, &w[1].1)?;
        l1.push(a);
        l32.push(b);
    }
    let members: Vec<EpsilonMember> = runs
        .iter()
        .zip(epsilons)
        .map(|((s, _), &epsilon)| EpsilonMember {
            epsilon,
            status: s.status,
            t_final: s.t_final,
            checks_pass: s.checks_pass,
        })
        .collect();
    let strictly_decreasing = l1.windows(2).all(|w| w[1] < w[0]);
    let cauchy = l1.windows(2).all(|w| w[1] < w[0] || w[1] <= noise_floor);
    let report = EpsilonSweepReport {
        schema_version: SCHEMA_VERSION,
        seed: base.seed,
        epsilons: epsilons.to_vec(),
        pass: cauchy && members.iter().all(|m| m.status == RunStatus::Completed),
        l1_differences: l1,
        l32_differences: l32,
        noise_floor,
        strictly_decreasing,
        members,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join(SWEEP_JSON), &report)?;
        let mut csv = BufWriter::new(File::create(dir.join(SWEEP_CSV))?);
        writeln!(csv, "epsilon,next_epsilon,l1_difference,l32_difference")?;
        for (k, w) in report.epsilons.windows(2).enumerate() {
            writeln!(csv, "{},{},{},{}", w[0], w[1], report.l1_differences[k], report.l32_differences[k])?;
        }
        csv.flush()?;
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MassOutcome {
    /// Reached `t_end` with `KE(t) < factor · KE(0)` throughout.
    Bounded,
    /// A collapse guard fired.
    Collapsed,
    Undecided,
}

impl MassOutcome {
    pub fn name(self) -> &'static str {
        match self {
            MassOutcome::Bounded => "bounded",
            MassOutcome::Collapsed => "collapsed",
            MassOutcome::Undecided => "undecided",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassPoint {
    pub mass: f64,
    pub seed: u64,
    /// Initial virial margin; negative is the blow-up hypothesis.
    pub virial_margin: Option<f64>,
    pub outcome: MassOutcome,
    pub collapse_time: Option<f64>,
    /// `max_t KE(t)/KE(0)`, the velocity second moment relative to its
    /// initial value.
    pub max_moment_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MassSweepReport {
    pub schema_version: u32,
    pub c_manev: f64,
    pub bounded_factor: f64,
    pub points: Vec<MassPoint>,
    /// Largest bounded mass and smallest collapsed mass, when every bounded
    /// mass lies below every collapsed one.
    pub transition: Option<[f64; 2]>,
    /// `C_M M^{1/3}` at the two ends of `transition`.
    pub transition_statistic: Option<[f64; 2]>,
}

/// Runs `base` once per mass and classifies each outcome.
///
/// Requires a Manev kernel (`pure-manev` or `manev-combined`). Member `k`
/// uses seed `derive_seed(base.seed, k)`. Members run concurrently.
pub fn sweep_mass(
    base: &ScenarioConfig,
    masses: &[f64],
    bounded_factor: f64,
    out: Option<&Path>,
) -> Result<MassSweepReport> {
    if !matches!(base.kernel.family, KernelFamily::PureManev | KernelFamily::ManevCombined) {
        return Err(Error::domain(format!(
            "mass sweeps need a Manev kernel, got {}",
            base.kernel.family.name()
        )));
    }
    if masses.is_empty() || !masses.iter().all(|m| m.is_finite() && *m > 0.0) {
        return Err(Error::domain("masses must be a non-empty list of positive values"));
    }
    if !(bounded_factor > 1.0) {
        return Err(Error::domain(format!("bounded factor must exceed 1, got {bounded_factor}")));
    }
    base.validate()?;
    let points = masses
        .par_iter()
        .enumerate()
        .map(|(k, &mass)| {
            let mut cfg = base.clone();
            cfg.initial.mass = mass;
            cfg.seed = derive_seed(base.seed, k as u64);
            let run = run_scenario(&cfg, member_dir(out, "mass", k).as_deref(), None)?;
            let first = run.records.first();
            let virial_margin = match first.and_then(|r| r.virial_margin) {
                Some(m) => Some(m),
                None => match State::initial(&cfg)? {
                    State::Particles(e) => virial_margin_particles(&cfg.kernel, &e, cfg.guards.min_separation).ok(),
                    State::Grid(_) => None,
                },
            };
            let k0 = first.map_or(f64::NAN, |r| r.kinetic);
            let max_moment_ratio = run.records.iter().map(|r| r.kinetic / k0).fold(f64::NEG_INFINITY, f64::max);
            let outcome = match run.summary.status {
                RunStatus::Collapsed => MassOutcome::Collapsed,
                RunStatus::Completed if max_moment_ratio < bounded_factor => MassOutcome::Bounded,
                _ => MassOutcome::Undecided,
            };
            Ok(MassPoint {
                mass,
                seed: cfg.seed,
                virial_margin,
                outcome,
                collapse_time: run.summary.collapse.as_ref().map(|c| c.t),
                max_moment_ratio,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let largest_bounded = points
        .iter()
        .filter(|p| p.outcome == MassOutcome::Bounded)
        .map(|p| p.mass)
        .fold(None, |a: Option<f64>, m| Some(a.map_or(m, |a| a.max(m))));
    let smallest_collapsed = points
        .iter()
        .filter(|p| p.outcome == MassOutcome::Collapsed)
        .map(|p| p.mass)
        .fold(None, |a: Option<f64>, m| Some(a.map_or(m, |a| a.min(m))));
    let transition = match (largest_bounded, smallest_collapsed) {
        (Some(b), Some(c)) if b < c => Some([b, c]),
        _ => None,
    };
    let c_manev = base.kernel.c_manev;
    let report = MassSweepReport {
        schema_version: SCHEMA_VERSION,
        c_manev,
        bounded_factor,
        transition_statistic: transition.map(|[b, c]| [c_manev * b.cbrt(), c_manev * c.cbrt()]),
        transition,
        points,
    };
    if let Some(dir) = out {
        fs::create_dir_all(dir)?;
        write_json(&dir.join(SWEEP_JSON), &report)?;
        let mut csv = BufWriter::new(File::create(dir.join(SWEEP_CSV))?);
        writeln!(csv, "mass,seed,virial_margin,outcome,collapse_time,max_moment_ratio")?;
        let opt = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
        for p in &report.points {
            writeln!(
                csv,
                "{},{},{},{},{},{}",
                p.mass,
                p.seed,
                opt(p.virial_margin),
                p.outcome.name(),
                opt(p.collapse_time),
                p.max_moment_ratio
            )?;
        }
        csv.flush()?;
    }
    Ok(report)
}
