//! Functionals monitored along a run, for either representation.
//!
//! Grid functionals use cell-centred midpoint quadrature with the cell
//! volume `h_x^d h_v^d`. Entropy and dissipation exist only for the grid;
//! particle records leave them `None`.

mod grid;
mod record;

pub use grid::{
    dissipation, entropy_split, free_energy, grid_record, interaction_grid, kinetic, lp_norm, negative_entropy_bound,
    relative_entropy_to_maxwellian, virial_margin_grid, x_moment, EntropySplit, NegativeEntropyBound,
};
pub use record::{csv_header, read_ndjson, write_csv, write_ndjson, DiagnosticsRecord, LpSource, CSV_COLUMNS};

use crate::error::Result;
use crate::kernels::{ForceEvaluator, KernelFamily, KernelSpec};
use crate::particles::ParticleEnsemble;

/// The kernel `coef·(ε + |x|²)^{−α/2}` formed by the homogeneous term that
/// enters the virial identity, with the given `ε`.
pub fn homogeneous_kernel(spec: &KernelSpec, epsilon: f64) -> KernelSpec {
    let mut k = match spec.family {
        KernelFamily::ManevCombined => KernelSpec::pure_manev(spec.c_manev, epsilon),
        _ => spec.clone(),
    };
    k.epsilon = epsilon;
    k
}

/// `Σ w|v|² − (α/2)·Σ_{i≠j} w_i w_j K_h(x_i − x_j)` with the homogeneous
/// term `K_h` evaluated at `ε = 0`. For the Manev term (`α = 2`) this is
/// `∬|v|²f − C_M ∬|x−y|^{−2} ρρ`; a negative value is the blow-up
/// hypothesis.
///
/// Pairs closer than `guard` give [`crate::Error::SeparationGuard`].
pub fn virial_margin_particles(spec: &KernelSpec, ens: &ParticleEnsemble, guard: f64) -> Result<f64> {
    let two_kinetic = 2.0 * ens.kinetic();
    if spec.is_zero() {
        return Ok(two_kinetic);
    }
    let (_, alpha) = spec.homogeneous_term();
    let hk = homogeneous_kernel(spec, 0.0);
    let field = crate::kernels::DirectSum.evaluate(&hk, &ens.positions, &ens.weights, guard)?;
    Ok(two_kinetic - alpha * field.interaction_energy(&ens.weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::particles::{sample_initial, InitialDataSpec};
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_virial_margin() {
        // 3Mσ_v² − C_M M²/(2s²) = 3 − 0.5.
        let ens = sample_initial(&InitialDataSpec::gaussian(1.0, 1.0, 1.0), 3, 4000, 21).unwrap();
        let m = virial_margin_particles(&KernelSpec::pure_manev(1.0, 0.01), &ens, 1e-9).unwrap();
        assert!((m - 2.5).abs() < 0.15, "{m}");
        let zero = virial_margin_particles(&KernelSpec::pure_manev(0.0, 0.0), &ens, 1e-9).unwrap();
        assert_relative_eq!(zero, 2.0 * ens.kinetic());
        // Translation of positions leaves the interaction part unchanged.
        let mut moved = ens.clone();
        moved.positions.iter_mut().for_each(|x| x[0] += 3.0);
        let m2 = virial_margin_particles(&KernelSpec::pure_manev(1.0, 0.01), &moved, 1e-9).unwrap();
        assert_relative_eq!(m, m2, max_relative = 1e-10);
    }

    #[test]
    fn virial_margin_sign_flips_past_six() {
        let k = KernelSpec::pure_manev(1.0, 0.0);
        let small = sample_initial(&InitialDataSpec::gaussian(4.0, 1.0, 1.0), 3, 3000, 2).unwrap();
        let large = sample_initial(&InitialDataSpec::gaussian(8.0, 1.0, 1.0), 3, 3000, 2).unwrap();
        assert!(virial_margin_particles(&k, &small, 1e-9).unwrap() > 0.0);
        assert!(virial_margin_particles(&k, &large, 1e-9).unwrap() < 0.0);
    }

    #[test]
    fn coincident_particles_are_an_error() {
        let mut ens = sample_initial(&InitialDataSpec::gaussian(1.0, 1.0, 1.0), 3, 3, 2).unwrap();
        ens.positions[1] = ens.positions[0];
        assert!(virial_margin_particles(&KernelSpec::pure_manev(1.0, 0.1), &ens, 1e-6).is_err());
    }
}
