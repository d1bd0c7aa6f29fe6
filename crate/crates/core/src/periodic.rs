//! Periodic matrix/vector functions of the fast phase, periodic cubic splines
//! and composite Simpson quadrature.
//!
//! Everything here is immutable after construction and safe to evaluate from
//! multiple threads.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

/// Default finite-difference step for derivatives supplied implicitly.
const FD_STEP_FRACTION: f64 = 1.0 / 8192.0;

type MatClosure = Arc<dyn Fn(f64) -> DMatrix<f64> + Send + Sync>;
type VecClosure = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// A T-periodic matrix-valued function of the fast phase, with derivative.
#[derive(Clone)]
pub struct PeriodicMatrixFn {
    dim: usize,
    period: f64,
    eval: MatClosure,
    deriv: MatClosure,
}

impl PeriodicMatrixFn {
    pub fn new<F, G>(dim: usize, period: f64, eval: F, deriv: G) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
        G: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            period,
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
        }
    }

    /// Derivative taken by 4th-order centered differences of `eval`.
    pub fn from_eval<F>(dim: usize, period: f64, eval: F) -> Self
    where
        F: Fn(f64) -> DMatrix<f64> + Send + Sync + 'static,
    {
        let eval: MatClosure = Arc::new(eval);
        let e = eval.clone();
        let h = period * FD_STEP_FRACTION;
        let deriv = move |theta: f64| {
            ((e)(theta - 2.0 * h) - (e)(theta - h) * 8.0 + (e)(theta + h) * 8.0
                - (e)(theta + 2.0 * h))
                / (12.0 * h)
        };
        Self {
            dim,
            period,
            eval,
            deriv: Arc::new(deriv),
        }
    }

    pub fn constant(m: DMatrix<f64>, period: f64) -> Self {
        let dim = m.nrows();
        let z = DMatrix::zeros(dim, dim);
        Self::new(dim, period, move |_| m.clone(), move |_| z.clone())
    }

    /// 1x1 matrix function from scalar closures.
    pub fn scalar<F, G>(period: f64, f: F, df: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self::new(
            1,
            period,
            move |t| DMatrix::from_element(1, 1, f(t)),
            move |t| DMatrix::from_element(1, 1, df(t)),
        )
    }

    /// Block-diagonal assembly of two periodic matrix functions with equal period.
    pub fn block_diag(a: &PeriodicMatrixFn, b: &PeriodicMatrixFn) -> Self {
        assert_eq!(a.period, b.period, "block_diag needs a common period");
        let (na, nb) = (a.dim, b.dim);
        let (ea, eb) = (a.eval.clone(), b.eval.clone());
        let (da, db) = (a.deriv.clone(), b.deriv.clone());
        let assemble = move |ma: DMatrix<f64>, mb: DMatrix<f64>| {
            let mut out = DMatrix::zeros(na + nb, na + nb);
            out.view_mut((0, 0), (na, na)).copy_from(&ma);
            out.view_mut((na, na), (nb, nb)).copy_from(&mb);
            out
        };
        let asm = assemble.clone();
        Self::new(
            na + nb,
            a.period,
            move |t| assemble(ea(t), eb(t)),
            move |t| asm(da(t), db(t)),
        )
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eval(&self, theta: f64) -> DMatrix<f64> {
        (self.eval)(theta)
    }

    pub fn eval_derivative(&self, theta: f64) -> DMatrix<f64> {
        (self.deriv)(theta)
    }
}

/// A T-periodic vector-valued function of the fast phase, with derivative.
#[derive(Clone)]
pub struct PeriodicVectorFn {
    dim: usize,
    period: f64,
    eval: VecClosure,
    deriv: VecClosure,
}

impl PeriodicVectorFn {
    pub fn new<F, G>(dim: usize, period: f64, eval: F, deriv: G) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
        G: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        Self {
            dim,
            period,
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
        }
    }

    pub fn from_eval<F>(dim: usize, period: f64, eval: F) -> Self
    where
        F: Fn(f64) -> DVector<f64> + Send + Sync + 'static,
    {
        let eval: VecClosure = Arc::new(eval);
        let e = eval.clone();
        let h = period * FD_STEP_FRACTION;
        let deriv = move |theta: f64| {
            ((e)(theta - 2.0 * h) - (e)(theta - h) * 8.0 + (e)(theta + h) * 8.0
                - (e)(theta + 2.0 * h))
                / (12.0 * h)
        };
        Self {
            dim,
            period,
            eval,
            deriv: Arc::new(deriv),
        }
    }

    pub fn constant(v: DVector<f64>, period: f64) -> Self {
        let dim = v.len();
        let z = DVector::zeros(dim);
        Self::new(dim, period, move |_| v.clone(), move |_| z.clone())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn eval(&self, theta: f64) -> DVector<f64> {
        (self.eval)(theta)
    }

    pub fn eval_derivative(&self, theta: f64) -> DVector<f64> {
        (self.deriv)(theta)
    }
}

/// Uniform periodic cubic spline for vector-valued samples over one period.
///
/// Built from `n` samples at `theta_j = j*period/n`; evaluation wraps the
/// argument into `[0, period)`.
#[derive(Clone, Debug)]
pub struct PeriodicSpline {
    period: f64,
    values: Vec<DVector<f64>>,
    /// second derivatives at the nodes, same layout as `values`
    moments: Vec<DVector<f64>>,
    h: f64,
}

impl PeriodicSpline {
    pub fn from_samples(period: f64, values: Vec<DVector<f64>>) -> Self {
        let n = values.len();
        assert!(n >= 3, "periodic spline needs at least 3 samples");
        let dim = values[0].len();
        let h = period / n as f64;

        // Periodic cubic spline moments: cyclic tridiagonal system
        //   (h/6) m_{j-1} + (2h/3) m_j + (h/6) m_{j+1} = (v_{j+1} - 2 v_j + v_{j-1})/h
        // solved per component via Sherman-Morrison on the Thomas algorithm.
        let mut moments = vec![DVector::zeros(dim); n];
        let a = h / 6.0;
        let b = 2.0 * h / 3.0;
        for c in 0..dim {
            let rhs: Vec<f64> = (0..n)
                .map(|j| {
                    let prev = values[(j + n - 1) % n][c];
                    let next = values[(j + 1) % n][c];
                    (next - 2.0 * values[j][c] + prev) / h
                })
                .collect();
            let m = solve_cyclic_tridiagonal(a, b, a, &rhs);
            for j in 0..n {
                moments[j][c] = m[j];
            }
        }
        Self {
            period,
            values,
            moments,
            h,
        }
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn n_samples(&self) -> usize {
        self.values.len()
    }

    pub fn node_values(&self) -> &[DVector<f64>] {
        &self.values
    }

    fn locate(&self, theta: f64) -> (usize, usize, f64) {
        let n = self.values.len();
        let mut t = theta % self.period;
        if t < 0.0 {
            t += self.period;
        }
        let mut j = (t / self.h).floor() as usize;
        if j >= n {
            j = n - 1;
        }
        (j, (j + 1) % n, t - j as f64 * self.h)
    }

    pub fn eval(&self, theta: f64) -> DVector<f64> {
        let (j, j1, d) = self.locate(theta);
        let h = self.h;
        let (v0, v1) = (&self.values[j], &self.values[j1]);
        let (m0, m1) = (&self.moments[j], &self.moments[j1]);
        let u = h - d;
        m0 * (u * u * u / (6.0 * h))
            + m1 * (d * d * d / (6.0 * h))
            + (v0 / h - m0 * (h / 6.0)) * u
            + (v1 / h - m1 * (h / 6.0)) * d
    }

    pub fn eval_derivative(&self, theta: f64) -> DVector<f64> {
        let (j, j1, d) = self.locate(theta);
        let h = self.h;
        let (v0, v1) = (&self.values[j], &self.values[j1]);
        let (m0, m1) = (&self.moments[j], &self.moments[j1]);
        let u = h - d;
        m0 * (-u * u / (2.0 * h)) + m1 * (d * d / (2.0 * h)) + (v1 - v0) / h
            - (m1 - m0) * (h / 6.0)
    }

    /// Integral of one cell `[theta_j, theta_j + d]`, `0 <= d <= h`, exact for
    /// the spline.
    fn cell_integral(&self, j: usize, d: f64) -> DVector<f64> {
        let n = self.values.len();
        let j1 = (j + 1) % n;
        let h = self.h;
        let (v0, v1) = (&self.values[j], &self.values[j1]);
        let (m0, m1) = (&self.moments[j], &self.moments[j1]);
        let u = h - d;
        // antiderivative of the cubic pieces evaluated between u = h and u = h - d
        let h4 = h * h * h * h;
        m0 * ((h4 - u * u * u * u) / (24.0 * h))
            + m1 * (d * d * d * d / (24.0 * h))
            + (v0 / h - m0 * (h / 6.0)) * ((h * h - u * u) / 2.0)
            + (v1 / h - m1 * (h / 6.0)) * (d * d / 2.0)
    }

    /// Exact node prefix integrals: element `j` is `int_0^{theta_j}` for
    /// `j = 0..=n` (the last entry is the full-period integral).
    pub fn prefix_integrals(&self) -> Vec<DVector<f64>> {
        let n = self.values.len();
        let mut out = Vec::with_capacity(n + 1);
        out.push(DVector::zeros(self.dim()));
        for j in 0..n {
            let next = &out[j] + self.cell_integral(j, self.h);
            out.push(next);
        }
        out
    }

    /// `int_0^theta` of the spline, exact for the piecewise cubic; `theta`
    /// may exceed one period.
    pub fn integrate_to(&self, theta: f64) -> DVector<f64> {
        let n = self.values.len();
        let dim = self.dim();
        let full: DVector<f64> = (0..n).map(|j| self.cell_integral(j, self.h)).fold(
            DVector::zeros(dim),
            |acc, v| acc + v,
        );
        let periods = (theta / self.period).floor();
        let mut rest = theta - periods * self.period;
        if rest < 0.0 {
            rest += self.period;
        }
        let mut acc = &full * periods;
        let mut j = 0usize;
        while rest > 0.0 && j < n {
            let d = rest.min(self.h);
            acc += self.cell_integral(j, d);
            rest -= d;
            j += 1;
        }
        acc
    }

    /// View the spline as a [`PeriodicVectorFn`].
    pub fn as_vector_fn(&self) -> PeriodicVectorFn {
        let s1 = self.clone();
        let s2 = self.clone();
        PeriodicVectorFn::new(
            self.dim(),
            self.period,
            move |t| s1.eval(t),
            move |t| s2.eval_derivative(t),
        )
    }
}

/// Solves the cyclic tridiagonal system with constant bands (sub, diag, sup).
fn solve_cyclic_tridiagonal(sub: f64, diag: f64, sup: f64, rhs: &[f64]) -> Vec<f64> {
    let n = rhs.len();
    // Sherman-Morrison: split off the corner entries.
    let gamma = -diag;
    let mut d = vec![diag; n];
    d[0] = diag - gamma;
    d[n - 1] = diag - sub * sup / gamma;

    let solve = |d: &[f64], rhs: &[f64]| -> Vec<f64> {
        let mut c = vec![0.0; n];
        let mut x = vec![0.0; n];
        c[0] = sup / d[0];
        x[0] = rhs[0] / d[0];
        for i in 1..n {
            let m = d[i] - sub * c[i - 1];
            c[i] = sup / m;
            x[i] = (rhs[i] - sub * x[i - 1]) / m;
        }
        for i in (0..n - 1).rev() {
            x[i] -= c[i] * x[i + 1];
        }
        x
    };

    let y = solve(&d, rhs);
    let mut u = vec![0.0; n];
    u[0] = gamma;
    u[n - 1] = sub;
    let z = solve(&d, &u);
    // v^T y with v = (1, 0, ..., 0, sup/gamma)
    let vy = y[0] + sup / gamma * y[n - 1];
    let vz = z[0] + sup / gamma * z[n - 1];
    let factor = vy / (1.0 + vz);
    (0..n).map(|i| y[i] - factor * z[i]).collect()
}

/// Composite Simpson rule with an even number of panels.
#[derive(Clone, Copy, Debug)]
pub struct QuadratureRule {
    panels: usize,
}

impl QuadratureRule {
    pub fn new(panels: usize) -> Result<Self> {
        if panels == 0 || panels % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "Simpson rule needs an even positive panel count, got {panels}"
            )));
        }
        Ok(Self { panels })
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn integrate<F>(&self, f: F, a: f64, b: f64) -> Result<f64>
    where
        F: Fn(f64) -> f64,
    {
        let v = self.integrate_vec(|t| DVector::from_element(1, f(t)), a, b)?;
        Ok(v[0])
    }

    pub fn integrate_vec<F>(&self, f: F, a: f64, b: f64) -> Result<DVector<f64>>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        if b < a {
            return Err(Error::InvalidInput(format!(
                "integration bounds reversed: [{a}, {b}]"
            )));
        }
        let n = self.panels;
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for j in 1..n {
            let w = if j % 2 == 1 { 4.0 } else { 2.0 };
            acc += f(a + j as f64 * h) * w;
        }
        let out = acc * (h / 3.0);
        if out.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(
                "non-finite integrand values in Simpson rule".into(),
            ));
        }
        Ok(out)
    }
}

pub fn simpson_integrate<F>(f: F, a: f64, b: f64, rule: &QuadratureRule) -> Result<DVector<f64>>
where
    F: Fn(f64) -> DVector<f64>,
{
    rule.integrate_vec(f, a, b)
}
