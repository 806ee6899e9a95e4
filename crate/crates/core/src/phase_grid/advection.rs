use crate::registry::{check_option_keys, Registry};

/// Constant-shift semi-Lagrangian update of one grid line.
pub trait Advection: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Moves the content of `line` by `shift` cells toward higher indices
    /// with zero inflow, and returns the sum of values that left the line.
    fn shift(&self, line: &mut [f64], shift: f64) -> f64;
}

/// Two-point (linear) interpolation. A convex combination, hence positive,
/// monotone and nonincreasing in every `L^p` norm.
#[derive(Clone, Copy, Debug, Default)]
pub struct LinearShift;

impl Advection for LinearShift {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn shift(&self, line: &mut [f64], shift: f64) -> f64 {
        if shift == 0.0 {
            return 0.0;
        }
        let n = line.len() as i64;
        let m = shift.floor();
        let t = shift - m;
        let m = m as i64;
        let mut out = vec![0.0; line.len()];
        let mut lost = 0.0;
        for (i, &f) in line.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            let j = i as i64 + m;
            for (k, w) in [(j, 1.0 - t), (j + 1, t)] {
                if (0..n).contains(&k) {
                    out[k as usize] += w * f;
                } else {
                    lost += w * f;
                }
            }
        }
        line.copy_from_slice(&out);
        lost
    }
}

/// Four-point Lagrange interpolation, with negative values clipped to zero
/// and the deficit taken from the nearest positive neighbours.
#[derive(Clone, Copy, Debug, Default)]
pub struct CubicClipped;

impl CubicClipped {
    /// Weights of nodes `−1, 0, 1, 2` for evaluation at `τ ∈ [0, 1]`.
    fn weights(tau: f64) -> [f64; 4] {
        let t = tau;
        [
            -t * (t - 1.0) * (t - 2.0) / 6.0,
            (t + 1.0) * (t - 1.0) * (t - 2.0) / 2.0,
            -(t + 1.0) * t * (t - 2.0) / 2.0,
            (t + 1.0) * t * (t - 1.0) / 6.0,
        ]
    }
}

impl Advection for CubicClipped {
    fn name(&self) -> &'static str {
        "cubic-clipped"
    }

    fn shift(&self, line: &mut [f64], shift: f64) -> f64 {
        if shift == 0.0 {
            return 0.0;
        }
        let n = line.len() as i64;
        // new[j] = old(j − shift); with j − shift = (j − m − 1) + τ.
        let m = shift.floor();
        let tau = 1.0 - (shift - m);
        let m = m as i64;
        let w = Self::weights(tau);
        let mut out = vec![0.0; line.len()];
        let mut lost = 0.0;
        for (i, &f) in line.iter().enumerate() {
            if f == 0.0 {
                continue;
            }
            // old[i] sits at offset k ∈ {−1, 0, 1, 2} of target j = i + m + 1 − k.
            for (slot, wk) in w.iter().enumerate() {
                let k = slot as i64 - 1;
                let j = i as i64 + m + 1 - k;
                if (0..n).contains(&j) {
                    out[j as usize] += wk * f;
                } else {
                    lost += wk * f;
                }
            }
        }
        lost += clip_negative(&mut out);
        line.copy_from_slice(&out);
        lost
    }
}

/// Zeroes negative entries, removing the same amount from the positive
/// entries within two cells. Returns the deficit that could not be covered
/// (as a negative loss, since it adds mass).
fn clip_negative(out: &mut [f64]) -> f64 {
    let n = out.len();
    let mut uncovered = 0.0;
    for j in 0..n {
        if out[j] >= 0.0 {
            continue;
        }
        let mut deficit = -out[j];
        out[j] = 0.0;
        for radius in 1..=2usize {
            let lo = j.saturating_sub(radius);
            let hi = (j + radius).min(n - 1);
            let avail: f64 = (lo..=hi).filter(|&k| k != j).map(|k| out[k].max(0.0)).sum();
            if avail <= 0.0 {
                continue;
            }
            let take = deficit.min(avail);
            let frac = take / avail;
            for k in lo..=hi {
                if k != j && out[k] > 0.0 {
                    out[k] -= frac * out[k];
                }
            }
            deficit -= take;
            if deficit <= 0.0 {
                break;
            }
        }
        uncovered += deficit;
    }
    -uncovered
}

/// Built-in schemes: `linear` and `cubic-clipped`.
pub fn advection_schemes() -> Registry<dyn Advection> {
    let mut reg: Registry<dyn Advection> = Registry::new("advection scheme");
    reg.register("linear", |o| {
        check_option_keys(o, &[])?;
        Ok(Box::new(LinearShift))
    });
    reg.register("cubic-clipped", |o| {
        check_option_keys(o, &[])?;
        Ok(Box::new(CubicClipped))
    });
    reg
}
