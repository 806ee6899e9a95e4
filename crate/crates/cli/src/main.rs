use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde_json::Value;
use vmfp::inequalities::{inequality_checks, InequalityReport};
use vmfp::registry::Options;
use vmfp::scenario::{
    read_summary, run_scenario, sweep_epsilon, sweep_mass, CheckStatus, EpsilonSweepReport, MassSweepReport,
    RunSummary, ScenarioConfig, State, BOUNDED_FACTOR, SCHEMA_VERSION, SWEEP_JSON,
};
use vmfp::Error;

/// Environment variable naming the directory under which run directories
/// are created when `--out` is not given.
const OUTPUT_ROOT_ENV: &str = "VMFP_OUTPUT_ROOT";

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;
const EXIT_IO: u8 = 4;

#[derive(Parser, Debug)]
#[command(name = "vmfp", version, about = "Vlasov-Manev-Fokker-Planck numerical laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// Scenario config (JSON).
    config: PathBuf,
    /// Run directory; defaults to `$VMFP_OUTPUT_ROOT/<config output, name or file stem>`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one scenario and write its run directory.
    Simulate {
        #[command(flatten)]
        run: RunArgs,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Run the scenario for each epsilon and compare the final densities.
    SweepEpsilon {
        #[command(flatten)]
        run: RunArgs,
        /// Strictly decreasing regularization parameters (at least three).
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        eps: Vec<f64>,
        /// L1 differences at or below this count as converged.
        #[arg(long, default_value_t = 1e-10)]
        noise_floor: f64,
    },
    /// Run the scenario for each initial mass and classify the outcomes.
    SweepMass {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
        masses: Vec<f64>,
        /// Kinetic-energy growth factor below which a run counts as bounded.
        #[arg(long, default_value_t = BOUNDED_FACTOR)]
        bounded_factor: f64,
    },
    /// Run functional-inequality checks and print one JSON report per check.
    CheckInequalities {
        /// Checks to run; all when omitted.
        #[arg(long = "family")]
        families: Vec<String>,
        /// JSON object mapping check names to option objects, inline or as a
        /// file path.
        #[arg(long)]
        options: Option<String>,
        /// Also write `<check>.json` files into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a run or sweep directory.
    Report { dir: PathBuf },
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let Some(e) = err.chain().find_map(|c| c.downcast_ref::<Error>()) else {
        return if err.chain().any(|c| c.downcast_ref::<std::io::Error>().is_some()) {
            EXIT_IO
        } else {
            EXIT_CONFIG
        };
    };
    match e {
        Error::Io(_) | Error::Checkpoint(_) => EXIT_IO,
        Error::Divergence { .. }
        | Error::Stability(_)
        | Error::LinearSolve(_)
        | Error::SingularEvaluation
        | Error::SeparationGuard { .. }
        | Error::Quadrature(_) => EXIT_DIVERGENCE,
        _ => EXIT_CONFIG,
    }
}

fn load_config(args: &RunArgs) -> anyhow::Result<ScenarioConfig> {
    let text = fs::read_to_string(&args.config)
        .map_err(Error::Io)
        .with_context(|| format!("reading {}", args.config.display()))?;
    let mut cfg = ScenarioConfig::from_json(&text).with_context(|| format!("in {}", args.config.display()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn output_dir(args: &RunArgs, cfg: &ScenarioConfig) -> PathBuf {
    if let Some(out) = &args.out {
        return out.clone();
    }
    let leaf = cfg.output.clone().unwrap_or_else(|| {
        PathBuf::from(cfg.name.clone().unwrap_or_else(|| {
            args.config
                .file_stem()
                .map_or("run".into(), |s| s.to_string_lossy().into_owned())
        }))
    });
    let root = std::env::var_os(OUTPUT_ROOT_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from);
    root.join(leaf)
}

fn print_run(dir: &Path, s: &RunSummary) {
    println!("run directory: {}", dir.display());
    println!("status: {:?}  t_final: {}  steps: {}  records: {}", s.status, s.t_final, s.steps, s.records);
    if let Some(c) = &s.collapse {
        println!("collapse: {:?} at t = {} (step {})", c.reason, c.t, c.step);
    }
    if s.stability_warnings > 0 {
        println!("stability warnings: {}", s.stability_warnings);
    }
    for c in &s.checks {
        let worst = c.worst.map_or(String::new(), |w| format!("{w:.6e}"));
        println!("  {:<24} {:<8} {:>14}  {}", c.name, format!("{:?}", c.status), worst, c.note);
    }
}

fn simulate(run: &RunArgs, resume: Option<&Path>) -> anyhow::Result<u8> {
    let cfg = load_config(run)?;
    let state = resume
        .map(|p| State::read(p).with_context(|| format!("reading checkpoint {}", p.display())))
        .transpose()?;
    let dir = output_dir(run, &cfg);
    let result = run_scenario(&cfg, Some(&dir), state)?;
    print_run(&dir, &result.summary);
    Ok(0)
}

fn print_epsilon(r: &EpsilonSweepReport) {
    println!("epsilon sweep (seed {}):", r.seed);
    for (k, w) in r.epsilons.windows(2).enumerate() {
        println!(
            "  {:>10} -> {:<10}  L1 {:.6e}  L3/2 {:.6e}",
            w[0], w[1], r.l1_differences[k], r.l32_differences[k]
        );
    }
    println!("strictly decreasing: {}  pass: {}", r.strictly_decreasing, r.pass);
}

fn print_mass(r: &MassSweepReport) {
    println!("mass sweep (C_M = {}, bounded below {}x):", r.c_manev, r.bounded_factor);
    for p in &r.points {
        let margin = p.virial_margin.map_or("n/a".into(), |m| format!("{m:+.4}"));
        let t = p.collapse_time.map_or(String::new(), |t| format!(" at t = {t}"));
        println!(
            "  M = {:<8} margin {:<10} {}{}  (max KE ratio {:.3})",
            p.mass,
            margin,
            p.outcome.name(),
            t,
            p.max_moment_ratio
        );
    }
    match (r.transition, r.transition_statistic) {
        (Some([lo, hi]), Some([a, b])) => {
            println!("transition in ({lo}, {hi}]; C_M M^(1/3) in ({a:.4}, {b:.4}]")
        }
        _ => println!("no clean transition"),
    }
}

fn parse_options(spec: &str) -> anyhow::Result<serde_json::Map<String, Value>> {
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        fs::read_to_string(spec).map_err(Error::Io).with_context(|| format!("reading {spec}"))?
    };
    match serde_json::from_str::<Value>(&text).map_err(|e| Error::Config(e.to_string()))? {
        Value::Object(m) => Ok(m),
        _ => Err(Error::Config("--options must be a JSON object".into()).into()),
    }
}

fn check_inequalities(families: &[String], options: Option<&str>, out: Option<&Path>) -> anyhow::Result<u8> {
    let registry = inequality_checks();
    let all = options.map(parse_options).transpose()?.unwrap_or_default();
    let names: Vec<String> = if families.is_empty() {
        registry.names().map(String::from).collect()
    } else {
        families.to_vec()
    };
    for key in all.keys() {
        if !names.contains(key) {
            bail!(Error::Config(format!("options given for `{key}`, which is not being run")));
        }
    }
    let checks = names
        .iter()
        .map(|name| {
            let opts: Options = match all.get(name) {
                None => Options::new(),
                Some(Value::Object(m)) => m.clone(),
                Some(v) => return Err(Error::Config(format!("options for `{name}` must be an object, got {v}"))),
            };
            registry.create(name, &opts)
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(Error::Io)?;
    }
    let mut failed = false;
    let stdout = std::io::stdout();
    for check in checks {
        let report: InequalityReport = check.run().with_context(|| format!("check {}", check.name()))?;
        eprintln!(
            "{:<24} {}  max ratio {:.6}",
            report.name,
            if report.pass { "pass" } else { "FAIL" },
            report.max_ratio
        );
        failed |= !report.pass;
        writeln!(stdout.lock(), "{}", serde_json::to_string(&report)?)?;
        if let Some(dir) = out {
            let text = serde_json::to_string_pretty(&report)? + "\n";
            fs::write(dir.join(format!("{}.json", report.name)), text).map_err(Error::Io)?;
        }
    }
    Ok(if failed { EXIT_CHECK_FAILED } else { 0 })
}

fn report(dir: &Path) -> anyhow::Result<u8> {
    let sweep = dir.join(SWEEP_JSON);
    if sweep.is_file() {
        let value: Value = serde_json::from_str(&fs::read_to_string(&sweep).map_err(Error::Io)?)?;
        if value["schema_version"] != SCHEMA_VERSION {
            bail!(Error::Config(format!("{} has schema {}", sweep.display(), value["schema_version"])));
        }
        if value.get("epsilons").is_some() {
            print_epsilon(&serde_json::from_value(value)?);
        } else {
            print_mass(&serde_json::from_value(value)?);
        }
        return Ok(0);
    }
    let summary = read_summary(dir).with_context(|| format!("reading the summary in {}", dir.display()))?;
    if summary.schema_version != SCHEMA_VERSION {
        bail!(Error::Config(format!("run written with schema {}", summary.schema_version)));
    }
    print_run(dir, &summary);
    let failed = summary.checks.iter().any(|c| c.status == CheckStatus::Fail);
    Ok(if failed { EXIT_CHECK_FAILED } else { 0 })
}

fn dispatch(cli: Cli) -> anyhow::Result<u8> {
    match cli.command {
        Command::Simulate { run, resume } => simulate(&run, resume.as_deref()),
        Command::SweepEpsilon { run, eps, noise_floor } => {
            let cfg = load_config(&run)?;
            let dir = output_dir(&run, &cfg);
            let r = sweep_epsilon(&cfg, &eps, noise_floor, Some(&dir))?;
            println!("sweep directory: {}", dir.display());
            print_epsilon(&r);
            Ok(if r.pass { 0 } else { EXIT_CHECK_FAILED })
        }
        Command::SweepMass {
            run,
            masses,
            bounded_factor,
        } => {
            let cfg = load_config(&run)?;
            let dir = output_dir(&run, &cfg);
            let r = sweep_mass(&cfg, &masses, bounded_factor, Some(&dir))?;
            println!("sweep directory: {}", dir.display());
            print_mass(&r);
            Ok(0)
        }
        Command::CheckInequalities {
            families,
            options,
            out,
        } => check_inequalities(&families, options.as_deref(), out.as_deref()),
        Command::Report { dir } => report(&dir),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
