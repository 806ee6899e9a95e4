use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::kde::{kde_density, silverman_bandwidth};
use super::sde::SdeScheme;
use super::ParticleEnsemble;
use crate::diagnostics::{self, DiagnosticsRecord, LpSource};
use crate::error::{Error, Result};
use crate::kernels::GridDensity;
use crate::kernels::{ForceEvaluator, KernelSpec, PairField};
use crate::rng;

/// Integrator state shared by every step of a particle run.
#[derive(Debug)]
pub struct ParticleSolver {
    pub kernel: KernelSpec,
    pub sigma: f64,
    pub dt: f64,
    pub scheme: Box<dyn SdeScheme>,
    pub evaluator: Box<dyn ForceEvaluator>,
    /// Minimum pair separation accepted when `ε = 0`.
    pub min_separation: f64,
}

impl ParticleSolver {
    pub fn new(
        kernel: KernelSpec,
        sigma: f64,
        dt: f64,
        scheme: Box<dyn SdeScheme>,
        evaluator: Box<dyn ForceEvaluator>,
    ) -> Result<Self> {
        kernel.validate()?;
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::invalid(format!("dt must be positive, got {dt}")));
        }
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(Error::invalid(format!("sigma must be >= 0, got {sigma}")));
        }
        Ok(Self {
            kernel,
            sigma,
            dt,
            scheme,
            evaluator,
            min_separation: 0.0,
        })
    }

    pub fn with_min_separation(mut self, guard: f64) -> Self {
        self.min_separation = guard;
        self
    }

    pub fn field(&self, ens: &ParticleEnsemble) -> Result<PairField> {
        if self.kernel.is_zero() {
            return Ok(PairField {
                forces: vec![[0.0; 3]; ens.len()],
                potentials: vec![0.0; ens.len()],
                min_separation: f64::INFINITY,
            });
        }
        self.evaluator
            .evaluate(&self.kernel, &ens.positions, &ens.weights, self.min_separation)
    }

    /// Advances `ens` by one step using the precomputed `field`.
    pub fn advance(&self, ens: &mut ParticleEnsemble, field: &PairField) -> Result<()> {
        let (dim, dt, sigma, seed, step) = (ens.dim, self.dt, self.sigma, ens.seed, ens.step);
        let scheme = &*self.scheme;
        ens.positions
            .par_iter_mut()
            .zip(ens.velocities.par_iter_mut())
            .zip(field.forces.par_iter())
            .enumerate()
            .for_each(|(i, ((x, v), f))| {
                let noise = if sigma > 0.0 {
                    rng::normals3(seed, i as u64, step)
                } else {
                    [0.0; 3]
                };
                scheme.advance(x, v, *f, noise, dim, dt, sigma);
            });
        ens.step += 1;
        ens.time += dt;
        if !ens.is_finite() {
            return Err(Error::Divergence { step: ens.step });
        }
        Ok(())
    }

    /// One full step: force evaluation followed by [`Self::advance`].
    pub fn step(&self, ens: &mut ParticleEnsemble) -> Result<()> {
        let field = self.field(ens)?;
        self.advance(ens, &field)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollapseGuards {
    /// `δ_min`: abort when two particles come closer than this.
    #[serde(default = "default_min_separation")]
    pub min_separation: f64,
    /// Abort when `|interaction| > energy_ratio · initial kinetic energy`.
    #[serde(default = "default_energy_ratio")]
    pub energy_ratio: f64,
    /// Abort when the core density (see [`core_density`]) exceeds this
    /// multiple of its initial value. Disabled when absent.
    #[serde(default = "default_density_ratio")]
    pub density_ratio: Option<f64>,
}

fn default_min_separation() -> f64 {
    1e-4
}

fn default_energy_ratio() -> f64 {
    1e3
}

fn default_density_ratio() -> Option<f64> {
    Some(100.0)
}

impl Default for CollapseGuards {
    fn default() -> Self {
        Self {
            min_separation: default_min_separation(),
            energy_ratio: default_energy_ratio(),
            density_ratio: default_density_ratio(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CollapseReason {
    MinSeparation,
    EnergyRatio,
    CoreDensity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseEvent {
    pub t: f64,
    pub step: u64,
    pub reason: CollapseReason,
    pub min_pair_dist: Option<f64>,
    pub interaction: Option<f64>,
    pub initial_kinetic: f64,
    /// Core density relative to its initial value.
    pub density_ratio: f64,
}

/// Fraction of the mass that defines the core in [`core_density`].
pub const CORE_FRACTION: f64 = 0.1;

/// Mean density of the smallest ball about the center of mass that holds
/// [`CORE_FRACTION`] of the mass.
pub fn core_density(ens: &ParticleEnsemble) -> f64 {
    let dim = ens.dim;
    let mass = ens.mass();
    let mut center = [0.0; 3];
    for (x, w) in ens.positions.iter().zip(&ens.weights) {
        for a in 0..dim {
            center[a] += w * x[a];
        }
    }
    for c in center.iter_mut() {
        *c /= mass;
    }
    let mut radii: Vec<(f64, f64)> = ens
        .positions
        .iter()
        .zip(&ens.weights)
        .map(|(x, w)| ((0..dim).map(|a| (x[a] - center[a]).powi(2)).sum::<f64>().sqrt(), *w))
        .collect();
    radii.sort_by(|a, b| a.0.total_cmp(&b.0));
    let target = CORE_FRACTION * mass;
    let mut enclosed = 0.0;
    let mut radius = 0.0;
    for (r, w) in radii {
        enclosed += w;
        radius = r;
        if enclosed >= target {
            break;
        }
    }
    let ball = match dim {
        1 => 2.0 * radius,
        2 => std::f64::consts::PI * radius * radius,
        _ => 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3),
    };
    if ball > 0.0 {
        enclosed / ball
    } else {
        f64::INFINITY
    }
}

/// Optional KDE-based density norms on a cubic grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KdeSettings {
    pub n: usize,
    pub half_width: f64,
    /// Silverman's rule when absent.
    #[serde(default)]
    pub bandwidth: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct RunOptions {
    pub t_end: f64,
    /// Time between records.
    pub cadence: f64,
    pub guards: CollapseGuards,
    pub kde: Option<KdeSettings>,
    /// Warn when `dt · max|F| / v_rms` exceeds this.
    pub stability_bound: f64,
    /// Skip the `ε = 0` virial double sum (quadratic in `N`).
    pub virial: bool,
}

impl RunOptions {
    pub fn new(t_end: f64, cadence: f64) -> Self {
        Self {
            t_end,
            cadence,
            guards: CollapseGuards::default(),
            kde: None,
            stability_bound: 0.5,
            virial: true,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub ensemble: ParticleEnsemble,
    pub records: Vec<DiagnosticsRecord>,
    pub collapse: Option<CollapseEvent>,
    pub stability_warnings: u64,
}

fn record(
    solver: &ParticleSolver,
    ens: &ParticleEnsemble,
    field: Option<&PairField>,
    opts: &RunOptions,
) -> Result<DiagnosticsRecord> {
    let mut r = DiagnosticsRecord::empty(ens.time, ens.step, ens.mass());
    r.kinetic = ens.kinetic();
    r.x_moment = ens.x_moment();
    if let Some(f) = field {
        r.interaction = Some(f.interaction_energy(&ens.weights));
        if f.min_separation.is_finite() {
            r.min_pair_dist = Some(f.min_separation);
        }
    }
    if opts.virial {
        r.virial_margin = match diagnostics::virial_margin_particles(&solver.kernel, ens, opts.guards.min_separation) {
            Ok(m) => Some(m),
            Err(Error::SeparationGuard { .. } | Error::SingularEvaluation) => None,
            Err(e) => return Err(e),
        };
    }
    if let Some(k) = &opts.kde {
        let geometry = GridDensity::centered(ens.dim, k.n, k.half_width);
        let bw = k.bandwidth.unwrap_or_else(|| silverman_bandwidth(ens));
        let est = kde_density(ens, &geometry, bw)?;
        let rho = &est.density;
        r.lp_source = Some(LpSource::Kde);
        r.l1 = Some(rho.lp_norm(1.0));
        r.l2 = Some(rho.lp_norm(2.0));
        r.l53 = Some(rho.lp_norm(5.0 / 3.0));
        r.linf = Some(rho.lp_norm(f64::INFINITY));
        r.max_density = r.linf;
    }
    Ok(r)
}

/// Runs `ens` to `opts.t_end`, streaming each record to `observer` as soon
/// as it is produced so that output written before an error survives.
///
/// Records are taken at step 0 and every `round(cadence / dt)` steps, plus
/// one at a collapse event.
pub fn run(
    solver: &ParticleSolver,
    mut ens: ParticleEnsemble,
    opts: &RunOptions,
    observer: &mut dyn FnMut(&DiagnosticsRecord) -> Result<()>,
) -> Result<RunOutcome> {
    ens.validate()?;
    let span = opts.t_end - ens.time;
    if span < 0.0 || !span.is_finite() {
        return Err(Error::invalid(format!("t_end {} precedes the ensemble time {}", opts.t_end, ens.time)));
    }
    let mut out = RunOutcome {
        ensemble: ens.clone(),
        records: Vec::new(),
        collapse: None,
        stability_warnings: 0,
    };
    if span == 0.0 {
        return Ok(out);
    }
    if !(opts.cadence > 0.0) {
        return Err(Error::invalid("cadence must be positive"));
    }
    let n_steps = ((span / solver.dt).round() as u64).max(1);
    let every = ((opts.cadence / solver.dt).round() as u64).max(1);
    let t0 = ens.time;
    let step0 = ens.step;
    let kinetic0 = ens.kinetic();
    let core0 = core_density(&ens);

    let mut emit = |r: DiagnosticsRecord, out: &mut RunOutcome| -> Result<()> {
        observer(&r)?;
        out.records.push(r);
        Ok(())
    };

    let mut k = 0u64;
    loop {
        let field = match solver.field(&ens) {
            Ok(f) => Some(f),
            Err(Error::SeparationGuard { .. }) => None,
            Err(e) => return Err(e),
        };
        let collapse = match &field {
            None => Some(CollapseReason::MinSeparation),
            Some(f) if f.min_separation < opts.guards.min_separation => Some(CollapseReason::MinSeparation),
            Some(f) if kinetic0 > 0.0 && f.interaction_energy(&ens.weights).abs() > opts.guards.energy_ratio * kinetic0 => {
                Some(CollapseReason::EnergyRatio)
            }
            _ => match opts.guards.density_ratio {
                Some(ratio) if core_density(&ens) > ratio * core0 => Some(CollapseReason::CoreDensity),
                _ => None,
            },
        };
        if let Some(reason) = collapse {
            let r = record(solver, &ens, field.as_ref(), opts)?;
            let event = CollapseEvent {
                t: ens.time,
                step: ens.step,
                reason,
                min_pair_dist: r.min_pair_dist,
                interaction: r.interaction,
                initial_kinetic: kinetic0,
                density_ratio: core_density(&ens) / core0,
            };
            log::info!("collapse ({reason:?}) at t = {}", ens.time);
            emit(r, &mut out)?;
            out.collapse = Some(event);
            break;
        }
        let field = field.expect("checked above");
        if k % every == 0 {
            emit(record(solver, &ens, Some(&field), opts)?, &mut out)?;
        }
        if k == n_steps {
            break;
        }
        let v_rms = (2.0 * ens.kinetic() / (ens.mass() * ens.dim as f64)).sqrt();
        if v_rms > 0.0 && solver.dt * field.max_force() / v_rms > opts.stability_bound {
            if out.stability_warnings == 0 {
                log::warn!(
                    "dt * max|F| / v_rms = {:.3e} exceeds {} at step {}",
                    solver.dt * field.max_force() / v_rms,
                    opts.stability_bound,
                    ens.step
                );
            }
            out.stability_warnings += 1;
        }
        solver.advance(&mut ens, &field)?;
        k += 1;
        // Avoid drift in the time stamp from repeated addition.
        ens.time = t0 + k as f64 * solver.dt;
        debug_assert_eq!(ens.step, step0 + k);
    }
    out.ensemble = ens;
    Ok(out)
}
