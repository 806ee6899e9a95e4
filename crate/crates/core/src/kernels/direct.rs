use rayon::prelude::*;

use super::{check_inputs, check_separation, dispatch, ForceEvaluator, KernelSpec, PairField, Point, Radial, RadialVisitor};
use crate::error::Result;

/// Exact `O(N²)` summation, parallel over targets.
///
/// Each target accumulates its sources in a fixed order, so results do not
/// depend on the thread count. Pairwise antisymmetry holds to rounding.
#[derive(Clone, Copy, Debug, Default)]
pub struct DirectSum;

impl ForceEvaluator for DirectSum {
    fn name(&self) -> &'static str {
        "direct"
    }

    fn evaluate(
        &self,
        spec: &KernelSpec,
        positions: &[Point],
        weights: &[f64],
        min_separation: f64,
    ) -> Result<PairField> {
        check_inputs(positions, weights)?;
        let field = dispatch(
            spec,
            PairSum {
                epsilon: spec.epsilon,
                positions,
                weights,
            },
        );
        check_separation(spec, field.min_separation, min_separation)?;
        Ok(field)
    }
}

pub fn pairwise_force_direct(spec: &KernelSpec, positions: &[Point], weights: &[f64]) -> Result<Vec<Point>> {
    Ok(DirectSum.evaluate(spec, positions, weights, 0.0)?.forces)
}

/// `(1/2) Σ_{i≠j} w_i w_j K^ε(x_i − x_j)`.
pub fn interaction_energy_direct(spec: &KernelSpec, positions: &[Point], weights: &[f64]) -> Result<f64> {
    Ok(DirectSum
        .evaluate(spec, positions, weights, 0.0)?
        .interaction_energy(weights))
}

const LANES: usize = 4;

struct PairSum<'a> {
    epsilon: f64,
    positions: &'a [Point],
    weights: &'a [f64],
}

/// Sums `w_j (∇K, K)(x − x_j)` over the given sources in four fixed lanes
/// (combined in a fixed order), so the loop vectorizes without changing the
/// result. Returns `[F_x, F_y, F_z, Φ, min r²]`.
#[inline(always)]
fn accumulate<P: Radial>(profile: P, epsilon: f64, x: Point, xs: &[f64], ys: &[f64], zs: &[f64], w: &[f64]) -> [f64; 5] {
    let mut acc = [[0.0f64; LANES]; 4];
    let mut min = [f64::INFINITY; LANES];
    macro_rules! pair {
        ($l:expr, $xj:expr, $yj:expr, $zj:expr, $wj:expr) => {{
            let dx = x[0] - $xj;
            let dy = x[1] - $yj;
            let dz = x[2] - $zj;
            let r2 = dx * dx + dy * dy + dz * dz;
            let (k, g) = profile.eval(epsilon + r2);
            acc[0][$l] += $wj * g * dx;
            acc[1][$l] += $wj * g * dy;
            acc[2][$l] += $wj * g * dz;
            acc[3][$l] += $wj * k;
            min[$l] = min[$l].min(r2);
        }};
    }
    let full = xs.len() - xs.len() % LANES;
    for (((cx, cy), cz), cw) in xs[..full]
        .chunks_exact(LANES)
        .zip(ys[..full].chunks_exact(LANES))
        .zip(zs[..full].chunks_exact(LANES))
        .zip(w[..full].chunks_exact(LANES))
    {
        for l in 0..LANES {
            pair!(l, cx[l], cy[l], cz[l], cw[l]);
        }
    }
    for j in full..xs.len() {
        pair!(j - full, xs[j], ys[j], zs[j], w[j]);
    }
    let fold = |a: [f64; LANES]| (a[0] + a[1]) + (a[2] + a[3]);
    [
        fold(acc[0]),
        fold(acc[1]),
        fold(acc[2]),
        fold(acc[3]),
        min.iter().fold(f64::INFINITY, |m, r| m.min(*r)),
    ]
}

impl RadialVisitor for PairSum<'_> {
    type Output = PairField;

    fn visit<P: Radial>(self, profile: P) -> PairField {
        let n = self.positions.len();
        let xs: Vec<f64> = self.positions.iter().map(|p| p[0]).collect();
        let ys: Vec<f64> = self.positions.iter().map(|p| p[1]).collect();
        let zs: Vec<f64> = self.positions.iter().map(|p| p[2]).collect();
        let w = self.weights;
        let eps = self.epsilon;

        // Sources before and after the target are summed separately so the
        // self pair is never evaluated.
        let per_target: Vec<[f64; 5]> = (0..n)
            .into_par_iter()
            .map(|i| {
                let x = self.positions[i];
                let lo = accumulate(profile, eps, x, &xs[..i], &ys[..i], &zs[..i], &w[..i]);
                let hi = accumulate(profile, eps, x, &xs[i + 1..], &ys[i + 1..], &zs[i + 1..], &w[i + 1..]);
                [lo[0] + hi[0], lo[1] + hi[1], lo[2] + hi[2], lo[3] + hi[3], lo[4].min(hi[4])]
            })
            .collect();

        PairField {
            forces: per_target.iter().map(|t| [t[0], t[1], t[2]]).collect(),
            potentials: per_target.iter().map(|t| t[3]).collect(),
            min_separation: per_target.iter().fold(f64::INFINITY, |m, t| m.min(t[4])).sqrt(),
        }
    }
}
