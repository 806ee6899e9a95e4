//! End-to-end acceptance criteria, one test per criterion.

use std::path::PathBuf;
use std::time::{Duration, Instant};

use serde_json::{json, Value};
use vmfp::diagnostics::{negative_entropy_bound, relative_entropy_to_maxwellian, DiagnosticsRecord};
use vmfp::inequalities::inequality_checks;
use vmfp::kernels::force_evaluators;
use vmfp::particles::{
    run, sample_initial, sde_schemes, CollapseEvent, InitialDataSpec, ParticleSolver, RunOptions, RunOutcome,
};
use vmfp::phase_grid::{advection_schemes, relaxation_schemes, PhaseGeometry, PhaseGrid, PhaseGridSolver};
use vmfp::scenario::{run_scenario, sweep_epsilon, CheckStatus, RunStatus, ScenarioConfig, ScenarioRun};
use vmfp::KernelSpec;

// Criterion 1.
const ENERGY_DRIFT_MAX: f64 = 5e-3;
const DRIFT_HALVING_RATIO: f64 = 2.0;
const DRIFT_HALVING_SLACK: f64 = 0.3;
// Criterion 2.
const LP_GROWTH_RTOL: f64 = 1e-3;
const LP_ROUNDING: f64 = 1e-12;
// Criterion 3.
const FREE_ENERGY_RTOL: f64 = 1e-6;
const RELAXATION_DECADES: f64 = 1e3;
// Criterion 5.
const BOUNDED_MOMENT_RATIO: f64 = 3.0;
const DICHOTOMY_HORIZON: f64 = 10.0;
const SEEDS: [u64; 3] = [1, 2, 3];
// Criterion 7.
const INTERACTION_DILATION_TOL: f64 = 0.02;
const CZ_HALVING_TOL: f64 = 0.05;
const SUITE_BUDGET: Duration = Duration::from_secs(300);
// Criterion 8.
const DIRECT_ORACLE_RTOL: f64 = 1e-12;

fn repo_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(v: Value) -> ScenarioConfig {
    ScenarioConfig::from_json(&v.to_string()).unwrap()
}

fn shipped_config(name: &str) -> ScenarioConfig {
    let text = std::fs::read_to_string(repo_root().join("configs").join(name)).unwrap();
    ScenarioConfig::from_json(&text).unwrap()
}

fn particle_solver(kernel: KernelSpec, dt: f64, evaluator: &str) -> ParticleSolver {
    ParticleSolver::new(
        kernel,
        0.0,
        dt,
        sde_schemes().create_default("kick-exact-ou").unwrap(),
        force_evaluators().create_default(evaluator).unwrap(),
    )
    .unwrap()
}

fn hamiltonian(r: &DiagnosticsRecord) -> f64 {
    r.kinetic - r.interaction.unwrap()
}

fn energy_run(dt: f64) -> RunOutcome {
    let ens = sample_initial(&InitialDataSpec::gaussian(1.0, 1.0, 1.0), 3, 4096, 1).unwrap();
    let mut opts = RunOptions::new(1.0, 1.0);
    opts.virial = false;
    run(&particle_solver(KernelSpec::pure_manev(1.0, 0.01), dt, "direct"), ens, &opts, &mut |_| Ok(())).unwrap()
}

#[test]
fn criterion_1_conservation() {
    let mut drifts = Vec::new();
    for dt in [1e-3, 5e-4] {
        let out = energy_run(dt);
        assert!(out.collapse.is_none(), "{:?}", out.collapse);
        let m0 = out.records[0].mass;
        assert!(out.records.iter().all(|r| r.mass == m0), "mass changed");
        assert_eq!(out.ensemble.mass(), m0);
        let h0 = hamiltonian(&out.records[0]);
        let h1 = hamiltonian(out.records.last().unwrap());
        let drift = (h1 - h0).abs() / h0.abs();
        assert!(drift <= ENERGY_DRIFT_MAX, "dt {dt}: relative energy drift {drift}");
        drifts.push(drift);
    }
    let ratio = drifts[0] / drifts[1];
    assert!(
        (ratio - DRIFT_HALVING_RATIO).abs() <= DRIFT_HALVING_SLACK,
        "drifts {drifts:?}, ratio {ratio}"
    );
}

fn lp_config(sigma: f64) -> ScenarioConfig {
    config(json!({
        "schema_version": 1,
        "solver": {"kind": "phase-grid", "nx": 128, "nv": 128, "lx": 12.0, "lv": 6.0, "advection": "linear"},
        "kernel": {"family": "power-law", "c_manev": 0.5, "alpha": 1.0, "epsilon": 0.1, "dim": 1},
        "initial": {"family": "gaussian-gaussian", "mass": 1.0, "position_scale": 1.0, "velocity_scale": 1.0},
        "sigma": sigma, "dt": 0.01, "t_end": 1.0, "cadence": 0.01
    }))
}

fn lp_runs() -> [ScenarioRun; 2] {
    [run_scenario(&lp_config(1.0), None, None).unwrap(), run_scenario(&lp_config(0.0), None, None).unwrap()]
}

fn free_energy_run() -> ScenarioRun {
    run_scenario(&shipped_config("sub_manev_grid.json"), None, None).unwrap()
}

#[test]
fn criterion_2_lp_maximum_principle() {
    let [diffusive, free] = lp_runs();
    assert!(diffusive.records.len() > 50);
    let r0 = &diffusive.records[0];
    for p in [2.0, f64::INFINITY] {
        let rate = if p.is_infinite() { 1.0 } else { 1.0 - 1.0 / p };
        for r in &diffusive.records {
            let bound = r0.lp(p).unwrap() * (rate * (r.t - r0.t)).exp() * (1.0 + LP_GROWTH_RTOL);
            assert!(r.lp(p).unwrap() <= bound, "p {p}, t {}: {} > {bound}", r.t, r.lp(p).unwrap());
        }
        for w in free.records.windows(2) {
            let (a, b) = (w[0].lp(p).unwrap(), w[1].lp(p).unwrap());
            assert!(b <= a * (1.0 + LP_ROUNDING), "sigma 0, p {p}: norm rose from {a} to {b} at t {}", w[1].t);
        }
    }
    for name in ["lp-growth-2", "lp-growth-inf"] {
        let c = diffusive.summary.checks.iter().find(|c| c.name == name).unwrap();
        assert_eq!(c.status, CheckStatus::Pass, "{c:?}");
    }
}

fn fp_only_solver() -> (PhaseGridSolver, PhaseGrid) {
    let geo = PhaseGeometry::new(1, 128, 128, 12.0, 6.0).unwrap();
    let solver = PhaseGridSolver::new(
        geo,
        KernelSpec::power_law(0.0, 1.0, 1.0, 1),
        1.0,
        0.05,
        advection_schemes().create_default("linear").unwrap(),
        relaxation_schemes().create_default("chang-cooper-exponential").unwrap(),
    )
    .unwrap();
    let mut g = PhaseGrid::from_fn(geo, |x, v| {
        (-x[0] * x[0] / 2.0).exp() * ((-(v[0] - 1.5).powi(2) / 0.5).exp() + (-(v[0] + 1.5).powi(2) / 0.5).exp())
    })
    .unwrap();
    let m = g.mass();
    g.scale(1.0 / m);
    (solver, g)
}

/// Relaxes to `t = 10/σ` with the Fokker–Planck substep alone, returning
/// every intermediate state.
fn fp_only_states() -> Vec<PhaseGrid> {
    let (solver, mut g) = fp_only_solver();
    let steps = (10.0 / 0.05_f64).round() as usize;
    let mut states = vec![g.clone()];
    for _ in 0..steps {
        solver.fokker_planck(&mut g).unwrap();
        states.push(g.clone());
    }
    states
}

#[test]
fn criterion_3_free_energy_dissipation() {
    let run = free_energy_run();
    assert_eq!(run.summary.status, RunStatus::Completed);
    let cfg = &run.summary.config;
    assert_eq!(cfg.cadence, cfg.dt);
    assert_eq!(cfg.kernel.alpha, 1.0);
    for w in run.records.windows(2) {
        let (a, b) = (w[0].free_energy.unwrap(), w[1].free_energy.unwrap());
        assert!(b - a <= FREE_ENERGY_RTOL * a.abs(), "free energy rose from {a} to {b} at t {}", w[1].t);
    }
    assert!(run.records.iter().all(|r| r.dissipation.unwrap() >= 0.0));

    let states = fp_only_states();
    let h0 = relative_entropy_to_maxwellian(&states[0]);
    let h1 = relative_entropy_to_maxwellian(states.last().unwrap());
    assert!(h0 > 0.0);
    assert!(h1.abs() * RELAXATION_DECADES <= h0, "relative entropy {h0} -> {h1}");
}

#[test]
fn criterion_4_negative_entropy_bound() {
    let mut checked = 0;
    let mut failures = Vec::new();
    let [a, b] = lp_runs();
    for run in [a, b, free_energy_run()] {
        let c = run.summary.checks.iter().find(|c| c.name == "negative-entropy").unwrap();
        assert_eq!(c.failures, 0, "{c:?}");
        assert_eq!(c.status, CheckStatus::Pass);
        checked += run.records.len();
    }
    for (k, g) in fp_only_states().iter().enumerate() {
        let b = negative_entropy_bound(g);
        if !b.holds() {
            failures.push((k, b));
        }
        checked += 1;
    }
    assert!(failures.is_empty(), "{failures:?}");
    assert_eq!(checked, 101 + 101 + 51 + 201);
}

fn dichotomy_run(mass: f64, dt: f64, cadence: f64, seed: u64) -> RunOutcome {
    let ens = sample_initial(&InitialDataSpec::gaussian(mass, 1.0, 1.0), 3, 4096, seed).unwrap();
    let mut opts = RunOptions::new(DICHOTOMY_HORIZON, cadence);
    opts.virial = true;
    run(&particle_solver(KernelSpec::pure_manev(1.0, 1e-3), dt, "direct"), ens, &opts, &mut |_| Ok(())).unwrap()
}

#[test]
fn criterion_5_virial_dichotomy() {
    let mut first_collapse: Option<CollapseEvent> = None;
    for seed in SEEDS {
        let small = dichotomy_run(1.0, 0.02, 0.1, seed);
        let margin = small.records[0].virial_margin.unwrap();
        assert!((margin - 2.5).abs() < 0.3, "seed {seed}: M=1 margin {margin}");
        assert!(small.collapse.is_none(), "seed {seed}: {:?}", small.collapse);
        let last = small.records.last().unwrap();
        assert!((last.t - DICHOTOMY_HORIZON).abs() < 1e-9);
        let k0 = small.records[0].kinetic;
        let worst = small.records.iter().map(|r| r.kinetic / k0).fold(0.0, f64::max);
        assert!(worst < BOUNDED_MOMENT_RATIO, "seed {seed}: second moment ratio {worst}");

        let big = dichotomy_run(12.0, 2e-3, 0.1, seed);
        assert!(big.records[0].virial_margin.unwrap() < 0.0);
        let event = big.collapse.clone().unwrap_or_else(|| panic!("seed {seed}: M=12 reached T without collapse"));
        assert!(event.t < DICHOTOMY_HORIZON);
        if seed == SEEDS[0] {
            first_collapse = Some(event);
        }
    }
    let again = dichotomy_run(12.0, 2e-3, 0.1, SEEDS[0]);
    assert_eq!(again.collapse, first_collapse);
}

#[test]
fn criterion_6_epsilon_convergence() {
    let base = shipped_config("eps_convergence.json");
    let report = sweep_epsilon(&base, &[0.2, 0.1, 0.05, 0.025], 0.0, None).unwrap();
    assert!(report.members.iter().all(|m| m.status == RunStatus::Completed));
    assert!(report.l1_differences.iter().all(|d| *d > 0.0));
    assert!(report.strictly_decreasing, "{:?}", report.l1_differences);
    assert!(report.pass);
}

#[test]
fn criterion_7_inequality_suite() {
    let start = Instant::now();
    let reg = inequality_checks();
    let run = |name: &str| reg.create_default(name).unwrap().run().unwrap();

    let density = run("density-interpolation");
    assert!(density.pass, "{:?}", density.failures().collect::<Vec<_>>());
    assert_eq!(density.samples.len(), 100);
    let c3 = density.metadata["ball_constants"]["c_3"].as_f64().unwrap();
    assert!((c3 - 4.0 * std::f64::consts::PI / 3.0).abs() < 1e-15);

    let exponents = run("interpolation-exponents");
    assert_eq!(exponents.metadata["alpha"], "5/6");
    assert_eq!(exponents.metadata["beta"], "5/6");
    assert_eq!(exponents.metadata["sum"], "5/3");
    assert!(exponents.pass);

    let interaction = run("interaction-bound");
    assert_eq!(interaction.tolerance, INTERACTION_DILATION_TOL);
    assert!(interaction.pass, "max ratio {}", interaction.max_ratio);

    let cz = run("calderon-zygmund");
    assert_eq!(cz.tolerance, CZ_HALVING_TOL);
    assert!(cz.pass, "max ratio {}", cz.max_ratio);

    assert!(start.elapsed() <= SUITE_BUDGET, "suite took {:?}", start.elapsed());
}

/// `Σ_{j≠i} w_j ∇K(x_i − x_j)` for `K = c/(ε + r²)`, written out pair by pair.
fn manev_oracle(c: f64, eps: f64, x: &[[f64; 3]], w: &[f64]) -> (Vec<[f64; 3]>, Vec<f64>) {
    let n = x.len();
    let mut forces = vec![[0.0; 3]; n];
    let mut potentials = vec![0.0; n];
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let d = [x[i][0] - x[j][0], x[i][1] - x[j][1], x[i][2] - x[j][2]];
            let s = eps + d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
            potentials[i] += w[j] * c / s;
            for a in 0..3 {
                forces[i][a] += w[j] * (-2.0 * c * d[a] / (s * s));
            }
        }
    }
    (forces, potentials)
}

fn rms_relative(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        for k in 0..3 {
            num += (x[k] - y[k]).powi(2);
            den += y[k] * y[k];
        }
    }
    (num / den).sqrt()
}

#[test]
fn criterion_8_force_evaluation() {
    let fixture: Value = serde_json::from_str(
        &std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tree_rms.json"))
            .unwrap(),
    )
    .unwrap();
    let kernel: KernelSpec = serde_json::from_value(fixture["kernel"].clone()).unwrap();
    let initial: InitialDataSpec = serde_json::from_value(fixture["initial"].clone()).unwrap();
    let n = fixture["n_particles"].as_u64().unwrap() as usize;
    assert_eq!(n, 4096);
    assert_eq!(fixture["theta"], 0.5);
    let bound = fixture["rms_bound"].as_f64().unwrap();
    let ens = sample_initial(&initial, 3, n, fixture["seed"].as_u64().unwrap()).unwrap();
    let evaluators = force_evaluators();
    let direct = evaluators.create_default("direct").unwrap();
    let tree = evaluators
        .create("tree", json!({"theta": 0.5}).as_object().unwrap())
        .unwrap();
    let d = direct.evaluate(&kernel, &ens.positions, &ens.weights, 0.0).unwrap();
    let t = tree.evaluate(&kernel, &ens.positions, &ens.weights, 0.0).unwrap();
    let rms = rms_relative(&t.forces, &d.forces);
    assert!(rms <= bound, "tree RMS relative error {rms} > {bound}");

    let small = sample_initial(&InitialDataSpec::gaussian(1.0, 1.0, 1.0), 3, 64, 9).unwrap();
    let (c, eps) = (1.0, 0.01);
    let field = direct
        .evaluate(&KernelSpec::pure_manev(c, eps), &small.positions, &small.weights, 0.0)
        .unwrap();
    let (forces, potentials) = manev_oracle(c, eps, &small.positions, &small.weights);
    for (i, (f, g)) in field.forces.iter().zip(&forces).enumerate() {
        let scale = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        for k in 0..3 {
            assert!((f[k] - g[k]).abs() <= DIRECT_ORACLE_RTOL * scale, "particle {i}: {f:?} vs {g:?}");
        }
    }
    for (p, q) in field.potentials.iter().zip(&potentials) {
        assert!((p - q).abs() <= DIRECT_ORACLE_RTOL * q.abs(), "{p} vs {q}");
    }
}
