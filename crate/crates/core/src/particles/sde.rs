use crate::kernels::Point;
use crate::registry::{check_option_keys, Registry};

/// One-particle update rule for `dx = v dt`, `dv = F dt − σ v dt + √(2σ) dW`.
pub trait SdeScheme: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Advances a single particle by `dt` given the force at the current
    /// position and standard normal `noise` (ignored when `sigma = 0`).
    fn advance(&self, x: &mut Point, v: &mut Point, force: Point, noise: Point, dim: usize, dt: f64, sigma: f64);
}

/// `v ← v + F dt − σ v dt + √(2σ dt) ξ`, then `x ← x + v dt`.
#[derive(Clone, Copy, Debug, Default)]
pub struct EulerMaruyama;

impl SdeScheme for EulerMaruyama {
    fn name(&self) -> &'static str {
        "euler-maruyama"
    }

    fn advance(&self, x: &mut Point, v: &mut Point, force: Point, noise: Point, dim: usize, dt: f64, sigma: f64) {
        let amp = (2.0 * sigma * dt).sqrt();
        for a in 0..dim {
            v[a] += force[a] * dt - sigma * v[a] * dt + amp * noise[a];
            x[a] += v[a] * dt;
        }
    }
}

/// Force kick, exact Ornstein–Uhlenbeck velocity update, then drift.
#[derive(Clone, Copy, Debug, Default)]
pub struct KickExactOu;

impl SdeScheme for KickExactOu {
    fn name(&self) -> &'static str {
        "kick-exact-ou"
    }

    fn advance(&self, x: &mut Point, v: &mut Point, force: Point, noise: Point, dim: usize, dt: f64, sigma: f64) {
        let decay = (-sigma * dt).exp();
        let amp = (-(-2.0 * sigma * dt).exp_m1()).sqrt();
        for a in 0..dim {
            v[a] += force[a] * dt;
            if sigma > 0.0 {
                v[a] = decay * v[a] + amp * noise[a];
            }
            x[a] += v[a] * dt;
        }
    }
}

/// Built-in schemes: `kick-exact-ou` (default) and `euler-maruyama`.
pub fn sde_schemes() -> Registry<dyn SdeScheme> {
    let mut reg: Registry<dyn SdeScheme> = Registry::new("SDE scheme");
    reg.register("kick-exact-ou", |o| {
        check_option_keys(o, &[])?;
        Ok(Box::new(KickExactOu))
    });
    reg.register("euler-maruyama", |o| {
        check_option_keys(o, &[])?;
        Ok(Box::new(EulerMaruyama))
    });
    reg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ballistic_without_friction() {
        for scheme in [&EulerMaruyama as &dyn SdeScheme, &KickExactOu] {
            let mut x = [1.0, 2.0, 3.0];
            let mut v = [0.5, -1.0, 0.25];
            for _ in 0..10 {
                scheme.advance(&mut x, &mut v, [0.0; 3], [9.0; 3], 3, 0.1, 0.0);
            }
            assert_eq!(v, [0.5, -1.0, 0.25]);
            for (a, (x0, v0)) in [(1.0, 0.5), (2.0, -1.0), (3.0, 0.25)].iter().enumerate() {
                assert!((x[a] - (x0 + v0 * 1.0)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn exact_ou_is_exact_for_mean() {
        let mut x = [0.0; 3];
        let mut v = [2.0, 0.0, 0.0];
        KickExactOu.advance(&mut x, &mut v, [0.0; 3], [0.0; 3], 1, 0.3, 1.5);
        assert!((v[0] - 2.0 * (-0.45f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn registry_resolves_names() {
        let reg = sde_schemes();
        assert_eq!(reg.create_default("kick-exact-ou").unwrap().name(), "kick-exact-ou");
        assert_eq!(reg.create_default("euler-maruyama").unwrap().name(), "euler-maruyama");
        assert!(reg.create_default("rk4").is_err());
    }
}
