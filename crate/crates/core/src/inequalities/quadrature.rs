//! Quadrature rules used by the inequality checks.

use rayon::prelude::*;
use statrs::function::gamma::gamma;

use crate::error::{Error, Result};

/// Composite Simpson rule with `n` (rounded up to even) intervals.
pub fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let n = n + n % 2;
    let h = (b - a) / n as f64;
    let inner: f64 = (1..n)
        .map(|i| if i % 2 == 1 { 4.0 } else { 2.0 } * f(a + i as f64 * h))
        .sum();
    (f(a) + f(b) + inner) * h / 3.0
}

fn midpoint(dim: usize, lo: [f64; 3], hi: [f64; 3], n: usize, f: &(dyn Fn([f64; 3]) -> f64 + Sync)) -> f64 {
    let mut h = [1.0; 3];
    let mut counts = [1usize; 3];
    for a in 0..dim {
        h[a] = (hi[a] - lo[a]) / n as f64;
        counts[a] = n;
    }
    let node = |a: usize, i: usize| if a < dim { lo[a] + (i as f64 + 0.5) * h[a] } else { 0.0 };
    // One slab per first-axis index, summed in index order.
    let slabs: Vec<f64> = (0..counts[0])
        .into_par_iter()
        .map(|i| {
            let mut s = 0.0;
            for j in 0..counts[1] {
                for k in 0..counts[2] {
                    s += f([node(0, i), node(1, j), node(2, k)]);
                }
            }
            s
        })
        .collect();
    slabs.iter().sum::<f64>() * h[..dim].iter().product::<f64>()
}

/// Integrates `f` over the box `[lo, hi]` (first `dim` axes) with the
/// midpoint rule, doubling the resolution until successive estimates agree
/// to `rtol`.
pub fn integrate_box(
    dim: usize,
    lo: [f64; 3],
    hi: [f64; 3],
    f: &(dyn Fn([f64; 3]) -> f64 + Sync),
    rtol: f64,
) -> Result<f64> {
    let max_n = match dim {
        1 => 1 << 16,
        2 => 2048,
        _ => 256,
    };
    let mut n = 16;
    let mut prev = midpoint(dim, lo, hi, n, f);
    while n < max_n {
        n *= 2;
        let next = midpoint(dim, lo, hi, n, f);
        if (next - prev).abs() <= rtol * next.abs() || next == 0.0 {
            return Ok(next);
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "box integral did not reach relative tolerance {rtol:e} with {max_n} nodes per axis"
    )))
}

/// `E[(ε + |Z|²)^{-a}]` for `Z ~ N(μ, var·I_dim)` with `|μ|² = mu2`, via
/// `s^{-a} = Γ(a)^{-1} ∫ t^{a-1} e^{-ts} dt` and the Gaussian transform
/// `E[e^{-t|Z|²}] = (1+2t var)^{-dim/2} exp(-t|μ|²/(1+2t var))`.
/// The `t` integral is taken on a logarithmic grid with the trapezoid rule.
pub fn gaussian_power_mean(a: f64, dim: usize, epsilon: f64, var: f64, mu2: f64) -> Result<f64> {
    let half_d = 0.5 * dim as f64;
    if !(a > 0.0) {
        return Err(Error::domain(format!("power must be positive, got {a}")));
    }
    if epsilon == 0.0 && a >= half_d {
        return Err(Error::domain(format!(
            "|x|^{{-{}}} is not locally integrable in dimension {dim}",
            2.0 * a
        )));
    }
    if !(var > 0.0 || epsilon > 0.0) {
        return Err(Error::domain("a point mass needs epsilon > 0"));
    }
    let scale = (var + mu2 + epsilon).max(1e-300);
    let center = -scale.ln();
    let lower = center - 45.0 / a;
    let upper = if epsilon > 0.0 {
        (60.0 / epsilon).ln().min(center + 45.0 / (half_d - a).max(1e-3))
    } else {
        center + 45.0 / (half_d - a)
    };
    let integrand = |u: f64| {
        let t = u.exp();
        let q = 1.0 + 2.0 * t * var;
        (a * u - t * epsilon - half_d * q.ln() - t * mu2 / q).exp()
    };
    let trapezoid = |h: f64| {
        let n = ((upper - lower) / h).ceil() as usize;
        let h = (upper - lower) / n as f64;
        let inner: f64 = (1..n).map(|i| integrand(lower + i as f64 * h)).sum();
        (inner + 0.5 * (integrand(lower) + integrand(upper))) * h
    };
    let mut h = 0.2;
    let mut prev = trapezoid(h);
    for _ in 0..6 {
        h *= 0.5;
        let next = trapezoid(h);
        if (next - prev).abs() <= 1e-12 * next.abs() {
            return Ok(next / gamma(a));
        }
        prev = next;
    }
    Err(Error::Quadrature(format!(
        "transform integral for power {a} did not converge (last change {:e})",
        (prev - trapezoid(2.0 * h)).abs()
    )))
}
