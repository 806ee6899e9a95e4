//! Byte-level regression against the run directories under
//! `tests/fixtures/runs`. Set `VMFP_BLESS=1` to regenerate them.

use std::fs;
use std::path::{Path, PathBuf};

use vmfp::scenario::{run_scenario, sweep_epsilon, sweep_mass, ScenarioConfig, BOUNDED_FACTOR};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures")
}

fn load(name: &str) -> ScenarioConfig {
    let text = fs::read_to_string(fixtures().join("configs").join(format!("{name}.json"))).unwrap();
    ScenarioConfig::from_json(&text).unwrap()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn compare(name: &str, produce: impl FnOnce(&Path)) {
    let fresh = tempfile::tempdir().unwrap();
    produce(fresh.path());
    let golden = fixtures().join("runs").join(name);
    if std::env::var_os("VMFP_BLESS").is_some() {
        let _ = fs::remove_dir_all(&golden);
        for rel in files(fresh.path()) {
            let dest = golden.join(&rel);
            fs::create_dir_all(dest.parent().unwrap()).unwrap();
            fs::copy(fresh.path().join(&rel), dest).unwrap();
        }
        return;
    }
    assert!(golden.is_dir(), "missing fixture {}; run with VMFP_BLESS=1", golden.display());
    assert_eq!(files(fresh.path()), files(&golden), "{name}: file sets differ");
    for rel in files(&golden) {
        let a = fs::read(fresh.path().join(&rel)).unwrap();
        let b = fs::read(golden.join(&rel)).unwrap();
        assert!(a == b, "{name}/{} differs from the golden copy", rel.display());
    }
}

#[test]
fn grid_run_matches_golden() {
    compare("grid-vmfp", |dir| {
        run_scenario(&load("grid_vmfp"), Some(dir), None).unwrap();
    });
}

#[test]
fn particle_run_matches_golden() {
    compare("particles-small", |dir| {
        run_scenario(&load("particles_small"), Some(dir), None).unwrap();
    });
}

#[test]
fn epsilon_sweep_matches_golden() {
    compare("eps-sweep", |dir| {
        sweep_epsilon(&load("eps_sweep"), &[0.2, 0.1, 0.05, 0.025], 1e-10, Some(dir)).unwrap();
    });
}

#[test]
fn mass_sweep_matches_golden() {
    compare("mass-sweep", |dir| {
        sweep_mass(&load("mass_sweep"), &[0.5, 2.0, 8.0, 12.0], BOUNDED_FACTOR, Some(dir)).unwrap();
    });
}
