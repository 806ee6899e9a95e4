use crate::error::{Error, Result};
use crate::registry::{check_option_keys, Registry};

/// Bands of a tridiagonal matrix; `lower[j]` multiplies `x[j−1]` in row `j`
/// and `upper[j]` multiplies `x[j+1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tridiagonal {
    pub lower: Vec<f64>,
    pub diag: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Tridiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|j| {
                let mut y = self.diag[j] * x[j];
                if j > 0 {
                    y += self.lower[j] * x[j - 1];
                }
                if j + 1 < n {
                    y += self.upper[j] * x[j + 1];
                }
                y
            })
            .collect()
    }

    /// Thomas algorithm; in place.
    pub fn solve(&self, rhs: &mut [f64]) -> Result<()> {
        let n = self.len();
        let mut c = vec![0.0; n];
        let mut beta = self.diag[0];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::LinearSolve("zero pivot in row 0".into()));
        }
        rhs[0] /= beta;
        for j in 1..n {
            c[j - 1] = self.upper[j - 1] / beta;
            beta = self.diag[j] - self.lower[j] * c[j - 1];
            if beta == 0.0 || !beta.is_finite() {
                return Err(Error::LinearSolve(format!("zero pivot in row {j}")));
            }
            rhs[j] = (rhs[j] - self.lower[j] * rhs[j - 1]) / beta;
        }
        for j in (0..n - 1).rev() {
            rhs[j] -= c[j] * rhs[j + 1];
        }
        Ok(())
    }
}

/// `B(z) = z / (e^z − 1)`, the Chang–Cooper weight.
fn bernoulli(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 - 0.5 * z
    } else {
        z / z.exp_m1()
    }
}

/// Chang–Cooper discretization of `∂_v(∂_v f + v f)` on nodes with spacing
/// `h` and zero flux through both ends.
///
/// The flux across `j + ½` is `(B(w) f_j − B(−w) f_{j+1}) / h` with
/// `w = h v_{j+½}`, so `e^{−v²/2}` sampled at the nodes is an exact null
/// vector and every column sums to zero.
pub fn chang_cooper_generator(nodes: &[f64], h: f64) -> Tridiagonal {
    let n = nodes.len();
    let k = 1.0 / (h * h);
    let mut a = Tridiagonal {
        lower: vec![0.0; n],
        diag: vec![0.0; n],
        upper: vec![0.0; n],
    };
    for j in 0..n - 1 {
        let w = h * 0.5 * (nodes[j] + nodes[j + 1]);
        let bp = bernoulli(w);
        let bm = bernoulli(-w);
        // Flux J = (bp f_j − bm f_{j+1}) / h leaves j and enters j + 1.
        a.diag[j] -= k * bp;
        a.upper[j] += k * bm;
        a.lower[j + 1] += k * bp;
        a.diag[j + 1] -= k * bm;
    }
    a
}

/// Linear map applied to each velocity line.
pub trait LineOperator: Send + Sync + std::fmt::Debug {
    fn apply(&self, line: &mut [f64]) -> Result<()>;
}

/// Velocity relaxation `σ ∂_v(∂_v f + v f)` over a time `dt`, one axis at a time.
pub trait VelocityRelaxation: Send + Sync + std::fmt::Debug {
    fn name(&self) -> &'static str;

    /// Prepares the line operator advancing by `sigma_dt = σ·dt`.
    fn operator(&self, nodes: &[f64], h: f64, sigma_dt: f64) -> Result<Box<dyn LineOperator>>;
}

#[derive(Debug)]
struct Identity;

impl LineOperator for Identity {
    fn apply(&self, _: &mut [f64]) -> Result<()> {
        Ok(())
    }
}

#[derive(Debug)]
struct ImplicitSolve(Tridiagonal);

impl LineOperator for ImplicitSolve {
    fn apply(&self, line: &mut [f64]) -> Result<()> {
        self.0.solve(line)
    }
}

/// Row-major dense matrix.
#[derive(Debug)]
struct Dense {
    n: usize,
    a: Vec<f64>,
}

impl LineOperator for Dense {
    fn apply(&self, line: &mut [f64]) -> Result<()> {
        let out: Vec<f64> = self
            .a
            .chunks(self.n)
            .map(|row| row.iter().zip(line.iter()).map(|(a, x)| a * x).sum())
            .collect();
        line.copy_from_slice(&out);
        Ok(())
    }
}

/// Backward Euler step of the Chang–Cooper operator, `(I − σ dt A) f' = f`.
/// An M-matrix solve: positive, mass conserving, Maxwellian fixed point;
/// first order in time.
#[derive(Clone, Copy, Debug, Default)]
pub struct ChangCooperImplicit;

impl VelocityRelaxation for ChangCooperImplicit {
    fn name(&self) -> &'static str {
        "chang-cooper-implicit"
    }

    fn operator(&self, nodes: &[f64], h: f64, sigma_dt: f64) -> Result<Box<dyn LineOperator>> {
        if sigma_dt == 0.0 {
            return Ok(Box::new(Identity));
        }
        let mut m = chang_cooper_generator(nodes, h);
        for j in 0..m.len() {
            m.lower[j] *= -sigma_dt;
            m.upper[j] *= -sigma_dt;
            m.diag[j] = 1.0 - sigma_dt * m.diag[j];
        }
        Ok(Box::new(ImplicitSolve(m)))
    }
}

/// Exact propagator `exp(σ dt A)` of the Chang–Cooper operator.
///
/// Built by uniformization: with `λ ≥ max |A_jj|`, `P = I + A/λ` is
/// nonnegative and `exp(A) = e^{−λ} Σ λ^k P^k / k!`; the series is summed
/// after scaling `A` by `2^{−s}` and the result squared `s` times. Every
/// term is nonnegative, so the propagator is too. Same fixed point and mass
/// balance as the implicit scheme, but exact in time.
#[derive(Clone, Copy, Debug, Default)]
pub struct ChangCooperExponential;

impl ChangCooperExponential {
    fn propagator(a: &Tridiagonal, t: f64) -> Vec<f64> {
        let n = a.len();
        let lambda = a.diag.iter().fold(0.0f64, |m, d| m.max(-d)) * t;
        let mut squarings = 0;
        let mut scale = t;
        let mut lam = lambda;
        while lam > 0.5 {
            lam *= 0.5;
            scale *= 0.5;
            squarings += 1;
        }
        if lam == 0.0 {
            let mut id = vec![0.0; n * n];
            (0..n).for_each(|j| id[j * n + j] = 1.0);
            return id;
        }
        // P = I + scale A / lam, tridiagonal and nonnegative.
        let c = scale / lam;
        let p = Tridiagonal {
            lower: a.lower.iter().map(|x| c * x).collect(),
            diag: a.diag.iter().map(|x| 1.0 + c * x).collect(),
            upper: a.upper.iter().map(|x| c * x).collect(),
        };
        // Columns of Σ_k e^{−lam} lam^k / k! P^k.
        let mut e = vec![0.0; n * n];
        for col in 0..n {
            let mut term = vec![0.0; n];
            term[col] = 1.0;
            let mut coef = (-lam).exp();
            let mut k = 0;
            loop {
                for r in 0..n {
                    e[r * n + col] += coef * term[r];
                }
                k += 1;
                coef *= lam / k as f64;
                if coef < 1e-20 {
                    break;
                }
                term = p.mul_vec(&term);
            }
        }
        for _ in 0..squarings {
            e = square(&e, n);
        }
        e
    }
}

fn square(a: &[f64], n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        for k in 0..n {
            let aik = a[i * n + k];
            if aik == 0.0 {
                continue;
            }
            let row = &a[k * n..(k + 1) * n];
            let dst = &mut out[i * n..(i + 1) * n];
            for (d, b) in dst.iter_mut().zip(row) {
                *d += aik * b;
            }
        }
    }
    out
}

impl VelocityRelaxation for ChangCooperExponential {
    fn name(&self) -> &'static str {
        "chang-cooper-exponential"
    }

    fn operator(&self, nodes: &[f64], h: f64, sigma_dt: f64) -> Result<Box<dyn LineOperator>> {
        if sigma_dt == 0.0 {
            return Ok(Box::new(Identity));
        }
        let a = chang_cooper_generator(nodes, h);
        let e = Self::propagator(&a, sigma_dt);
        if e.iter().any(|x| !x.is_finite()) {
            return Err(Error::LinearSolve("non-finite propagator entry".into()));
        }
        Ok(Box::new(Dense { n: nodes.len(), a: e }))
    }
}

/// Built-in schemes: `chang-cooper-exponential` (default) and
/// `chang-cooper-implicit`.
pub fn relaxation_schemes() -> Registry<dyn VelocityRelaxation> {
    let mut reg: Registry<dyn VelocityRelaxation> = Registry::new("Fokker-Planck scheme");
    reg.register("chang-cooper-exponential", |o| {
        check_option_keys(o, &[])?;
        Ok(Box::new(ChangCooperExponential))
    });
    reg.register("chang-cooper-implicit", |o| {
        check_option_keys(o, &[])?;
        Ok(Box::new(ChangCooperImplicit))
    });
    reg
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn nodes(n: usize, l: f64) -> (Vec<f64>, f64) {
        let h = 2.0 * l / n as f64;
        ((0..n).map(|j| -l + (j as f64 + 0.5) * h).collect(), h)
    }

    fn schemes() -> Vec<Box<dyn VelocityRelaxation>> {
        let reg = relaxation_schemes();
        reg.names().map(|n| reg.create_default(n).unwrap()).collect()
    }

    #[test]
    fn bernoulli_is_smooth_at_zero() {
        assert_relative_eq!(bernoulli(1e-9), bernoulli(2e-8), epsilon = 1e-8);
        assert_relative_eq!(bernoulli(1.0), 1.0 / (std::f64::consts::E - 1.0));
        assert_relative_eq!(bernoulli(-1.0) - bernoulli(1.0), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn generator_columns_sum_to_zero_and_maxwellian_is_null() {
        let (v, h) = nodes(40, 6.0);
        let a = chang_cooper_generator(&v, h);
        let n = v.len();
        for j in 0..n {
            let mut col = a.diag[j];
            if j > 0 {
                col += a.upper[j - 1];
            }
            if j + 1 < n {
                col += a.lower[j + 1];
            }
            assert!(col.abs() < 1e-12 * a.diag[j].abs());
        }
        let m: Vec<f64> = v.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let am = a.mul_vec(&m);
        assert!(am.iter().all(|x| x.abs() < 1e-13), "{am:?}");
    }

    #[test]
    fn zero_sigma_is_identity() {
        let (v, h) = nodes(16, 4.0);
        for s in schemes() {
            let op = s.operator(&v, h, 0.0).unwrap();
            let mut line: Vec<f64> = (0..16).map(|j| j as f64).collect();
            let before = line.clone();
            op.apply(&mut line).unwrap();
            assert_eq!(line, before);
        }
    }

    #[test]
    fn maxwellian_is_a_fixed_point() {
        let (v, h) = nodes(64, 6.0);
        let m: Vec<f64> = v.iter().map(|x| (-0.5 * x * x).exp()).collect();
        for s in schemes() {
            for sdt in [0.01, 0.3, 5.0] {
                let op = s.operator(&v, h, sdt).unwrap();
                let mut line = m.clone();
                op.apply(&mut line).unwrap();
                for (a, b) in line.iter().zip(&m) {
                    assert!((a - b).abs() <= 1e-12 * b.max(1e-300) + 1e-15, "{} {a} {b}", s.name());
                }
            }
        }
    }

    #[test]
    fn exponential_composes() {
        let (v, h) = nodes(32, 5.0);
        let whole = ChangCooperExponential.operator(&v, h, 0.4).unwrap();
        let half = ChangCooperExponential.operator(&v, h, 0.2).unwrap();
        let mut a: Vec<f64> = v.iter().map(|x| (-(x - 1.0).powi(2)).exp()).collect();
        let mut b = a.clone();
        whole.apply(&mut a).unwrap();
        half.apply(&mut b).unwrap();
        half.apply(&mut b).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, epsilon = 1e-13);
        }
    }

    #[test]
    fn thomas_matches_product() {
        let t = Tridiagonal {
            lower: vec![0.0, 1.0, -0.5, 0.2],
            diag: vec![4.0, 3.0, 5.0, 2.0],
            upper: vec![1.0, 0.3, 0.1, 0.0],
        };
        let x = vec![1.0, -2.0, 0.5, 3.0];
        let mut b = t.mul_vec(&x);
        t.solve(&mut b).unwrap();
        for (a, e) in b.iter().zip(&x) {
            assert_relative_eq!(a, e, epsilon = 1e-14);
        }
        let singular = Tridiagonal { lower: vec![0.0], diag: vec![0.0], upper: vec![0.0] };
        assert!(matches!(singular.solve(&mut [1.0]), Err(Error::LinearSolve(_))));
    }

    proptest! {
        #[test]
        fn positive_mass_conserving_and_entropy_decreasing(
            vals in proptest::collection::vec(0.0f64..1.0, 24),
            sdt in 0.001f64..2.0,
        ) {
            let (v, h) = nodes(24, 5.0);
            let m: Vec<f64> = v.iter().map(|x| (-0.5 * x * x).exp()).collect();
            let rel = |f: &[f64]| -> f64 {
                f.iter().zip(&m).filter(|(a, _)| **a > 0.0).map(|(a, b)| a * (a / b).ln()).sum()
            };
            for s in schemes() {
                let op = s.operator(&v, h, sdt).unwrap();
                let mut line = vals.clone();
                op.apply(&mut line).unwrap();
                prop_assert!(line.iter().all(|f| *f >= 0.0));
                let m0: f64 = vals.iter().sum();
                let m1: f64 = line.iter().sum();
                prop_assert!((m0 - m1).abs() <= 1e-12 * m0.max(1.0));
                prop_assert!(rel(&line) <= rel(&vals) + 1e-12);
            }
        }
    }
}
