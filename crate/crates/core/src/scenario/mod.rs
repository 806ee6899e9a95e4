//! Scenario configuration and orchestration.
//!
//! A [`ScenarioConfig`] fully describes one experiment. [`run_scenario`]
//! executes it and writes a run directory; [`sweep_epsilon`] and
//! [`sweep_mass`] run families of scenarios that differ in one parameter.

mod config;
mod run;
mod sweep;

pub use config::{
    CheckSettings, GridSettings, ParticleSettings, ScenarioConfig, Solver, SolverConfig, SCHEMA_VERSION,
};
pub use run::{
    read_summary, run_scenario, CheckStatus, InvariantCheck, RunStatus, RunSummary, ScenarioRun, State,
    CHECKPOINT_FILE, DIAGNOSTICS_CSV, DIAGNOSTICS_NDJSON, MOMENTS_CSV, SUMMARY_JSON,
};
pub use sweep::{
    sweep_epsilon, sweep_mass, EpsilonMember, EpsilonSweepReport, MassOutcome, MassPoint, MassSweepReport,
    BOUNDED_FACTOR, SWEEP_CSV, SWEEP_JSON,
};
