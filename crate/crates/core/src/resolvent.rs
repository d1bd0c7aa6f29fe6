//! Resolvent of a periodic linear system, its monodromy, decay estimation and
//! the periodic Green solver used by every manifold-coefficient formula.

use crate::error::{Error, Result};
use crate::periodic::{PeriodicMatrixFn, PeriodicSpline};
use nalgebra::{DMatrix, DVector};

/// Default phase discretization: period / 1024.
pub const DEFAULT_GRID_INTERVALS: usize = 1024;
/// Condition-number threshold above which `Id - R(T,0)` counts as singular.
pub const MONODROMY_COND_LIMIT: f64 = 1e12;

/// Cached resolvent `R(theta, s)` of `dR/dtheta = B(theta) R`, `R(s,s) = Id`.
///
/// One-step and half-step propagators are cached on a uniform grid; arbitrary
/// arguments are handled with partial RK4 steps from the nearest node, and
/// spans beyond one period through powers of the monodromy `R(T,0)`.
pub struct ResolventCache {
    generator: PeriodicMatrixFn,
    dim: usize,
    period: f64,
    h: f64,
    /// step[j] = R(theta_{j+1}, theta_j)
    steps: Vec<DMatrix<f64>>,
    /// half[j] = R(theta_{j+1}, theta_j + h/2)
    halves: Vec<DMatrix<f64>>,
    /// from_zero[j] = R(theta_j, 0), j = 0..=n
    from_zero: Vec<DMatrix<f64>>,
    monodromy: DMatrix<f64>,
    spectral_radius: f64,
    decay_rate_estimate: f64,
    decay_constant_estimate: f64,
}

/// One RK4 step of the matrix ODE `dR/dt = B(t) R` from `t0` over `h`.
fn rk4_matrix_step(gen: &PeriodicMatrixFn, t0: f64, h: f64, r: &DMatrix<f64>) -> DMatrix<f64> {
    let k1 = gen.eval(t0) * r;
    let k2 = gen.eval(t0 + 0.5 * h) * (r + &k1 * (0.5 * h));
    let k3 = gen.eval(t0 + 0.5 * h) * (r + &k2 * (0.5 * h));
    let k4 = gen.eval(t0 + h) * (r + &k3 * h);
    r + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Propagator over `[a, b]` computed with `nsub` RK4 substeps.
fn propagate(gen: &PeriodicMatrixFn, a: f64, b: f64, nsub: usize) -> DMatrix<f64> {
    let dim = gen.dim();
    let mut r = DMatrix::identity(dim, dim);
    if (b - a).abs() == 0.0 {
        return r;
    }
    let h = (b - a) / nsub as f64;
    for k in 0..nsub {
        r = rk4_matrix_step(gen, a + k as f64 * h, h, &r);
    }
    r
}

impl ResolventCache {
    pub fn new(generator: PeriodicMatrixFn) -> Result<Self> {
        Self::with_grid(generator, DEFAULT_GRID_INTERVALS)
    }

    pub fn with_grid(generator: PeriodicMatrixFn, intervals: usize) -> Result<Self> {
        if intervals < 2 || intervals % 2 != 0 {
            return Err(Error::InvalidInput(format!(
                "resolvent grid needs an even interval count >= 2, got {intervals}"
            )));
        }
        let dim = generator.dim();
        let period = generator.period();
        let h = period / intervals as f64;

        let mut steps = Vec::with_capacity(intervals);
        let mut halves = Vec::with_capacity(intervals);
        let mut from_zero = Vec::with_capacity(intervals + 1);
        from_zero.push(DMatrix::identity(dim, dim));
        for j in 0..intervals {
            let a = j as f64 * h;
            let first = propagate(&generator, a, a + 0.5 * h, 1);
            let second = propagate(&generator, a + 0.5 * h, a + h, 1);
            let full = &second * &first;
            if full.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite { t: a });
            }
            from_zero.push(&full * &from_zero[j]);
            steps.push(full);
            halves.push(second);
        }
        let monodromy = from_zero[intervals].clone();
        let spectral_radius = monodromy
            .complex_eigenvalues()
            .iter()
            .map(|l| l.norm())
            .fold(0.0, f64::max);
        if spectral_radius >= 1.0 {
            return Err(Error::ExpandingMonodromy {
                rho: spectral_radius,
            });
        }

        let mut cache = Self {
            generator,
            dim,
            period,
            h,
            steps,
            halves,
            from_zero,
            monodromy,
            spectral_radius,
            decay_rate_estimate: 0.0,
            decay_constant_estimate: 0.0,
        };
        let (c, mu) = cache.estimate_decay(3.0 * period)?;
        cache.decay_rate_estimate = mu;
        cache.decay_constant_estimate = c;
        Ok(cache)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn grid_step(&self) -> f64 {
        self.h
    }

    pub fn monodromy(&self) -> &DMatrix<f64> {
        &self.monodromy
    }

    pub fn spectral_radius(&self) -> f64 {
        self.spectral_radius
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay_rate_estimate
    }

    pub fn decay_constant(&self) -> f64 {
        self.decay_constant_estimate
    }

    pub fn generator(&self) -> &PeriodicMatrixFn {
        &self.generator
    }

    /// `R(theta, s)` within one period, `0 <= s <= theta <= T`.
    fn within_period(&self, theta: f64, s: f64) -> DMatrix<f64> {
        let n = self.steps.len();
        let js = ((s / self.h).ceil() as usize).min(n);
        let jt = ((theta / self.h).floor() as usize).min(n);
        if jt < js || (jt == js && theta - s < self.h) {
            // both arguments inside one cell (or straddling a single node)
            return propagate(&self.generator, s, theta, 2);
        }
        let mut r = propagate(&self.generator, s, js as f64 * self.h, 2);
        for j in js..jt {
            r = &self.steps[j] * r;
        }
        let tail = propagate(&self.generator, jt as f64 * self.h, theta, 2);
        &tail * r
    }

    /// `R(theta, s)` for arbitrary real arguments.
    ///
    /// Forward spans use cached products and monodromy powers; backward spans
    /// (`theta < s`) invert the forward propagator.
    pub fn resolvent(&self, theta: f64, s: f64) -> Result<DMatrix<f64>> {
        if theta < s {
            let fwd = self.resolvent(s, theta)?;
            return fwd
                .lu()
                .try_inverse()
                .ok_or_else(|| Error::SpectralHypothesis("backward resolvent singular".into()));
        }
        let t = self.period;
        // shift both arguments so that s lands in [0, T)
        let n = (s / t).floor();
        let mut s0 = s - n * t;
        let mut th0 = theta - n * t;
        if s0 >= t {
            // rounding pushed s0 onto the right endpoint
            s0 -= t;
            th0 -= t;
        }
        s0 = s0.max(0.0);
        th0 = th0.max(s0);
        let k = ((th0 / t).floor() as i64).max(0);
        let frac = (th0 - k as f64 * t).clamp(0.0, t);
        let r = if k == 0 {
            self.within_period(th0, s0)
        } else {
            let mut acc = self.within_period(t, s0);
            for _ in 0..(k - 1) {
                acc = &self.monodromy * acc;
            }
            self.within_period(frac, 0.0) * acc
        };
        if r.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite { t: theta });
        }
        Ok(r)
    }

    /// Least-squares fit of `log ||R(t,0)||` against `t` over `[0, horizon]`.
    ///
    /// Returns `(C, mu)` for the model `||R(t,0)|| ~ C exp(-mu t)`.
    pub fn estimate_decay(&self, horizon: f64) -> Result<(f64, f64)> {
        if horizon <= 0.0 {
            return Err(Error::InvalidInput("decay horizon must be positive".into()));
        }
        let samples = 400usize;
        let mut ts = Vec::with_capacity(samples);
        let mut logs = Vec::with_capacity(samples);
        for i in 1..=samples {
            let t = horizon * i as f64 / samples as f64;
            let r = self.resolvent(t, 0.0)?;
            let nrm = r.norm();
            if !(nrm.is_finite() && nrm > 0.0) {
                return Err(Error::InvalidInput(format!(
                    "resolvent norm {nrm} not usable at t = {t}"
                )));
            }
            ts.push(t);
            logs.push(nrm.ln());
        }
        let (slope, intercept) = linear_fit(&ts, &logs);
        Ok((intercept.exp(), -slope))
    }

    /// Unique T-periodic solution of `u' = B(theta) u + forcing(theta)`.
    ///
    /// `u(0) = (Id - R(T,0))^{-1} \int_0^T R(T,phi) forcing(phi) dphi`, then a
    /// forward recurrence over the cached grid with per-interval Simpson.
    pub fn periodic_green_solve<F>(&self, forcing: F) -> Result<PeriodicSpline>
    where
        F: Fn(f64) -> DVector<f64>,
    {
        let n = self.steps.len();
        let dim = self.dim;
        let id = DMatrix::<f64>::identity(dim, dim);
        let a = &id - &self.monodromy;
        let svd = a.clone().svd(false, false);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if cond > MONODROMY_COND_LIMIT {
            return Err(Error::SingularMonodromy { cond });
        }

        let fn_nodes: Vec<DVector<f64>> = (0..=n).map(|j| forcing(j as f64 * self.h)).collect();
        let fn_mids: Vec<DVector<f64>> =
            (0..n).map(|j| forcing((j as f64 + 0.5) * self.h)).collect();
        for v in fn_nodes.iter().chain(fn_mids.iter()) {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidInput("non-finite forcing".into()));
            }
        }

        // weights w_j = R(T, theta_j), accumulated backwards
        let mut w = vec![DMatrix::identity(dim, dim); n + 1];
        for j in (0..n).rev() {
            w[j] = &w[j + 1] * &self.steps[j];
        }
        let mut integral = DVector::zeros(dim);
        for j in 0..n {
            let wm = &w[j + 1] * &self.halves[j];
            integral += (&w[j] * &fn_nodes[j] + wm * &fn_mids[j] * 4.0 + &w[j + 1] * &fn_nodes[j + 1])
                * (self.h / 6.0);
        }
        let u0 = a
            .lu()
            .solve(&integral)
            .ok_or(Error::SingularMonodromy { cond })?;

        let mut nodes = Vec::with_capacity(n);
        nodes.push(u0.clone());
        let mut u = u0;
        for j in 0..n - 1 {
            let local = (&self.steps[j] * &fn_nodes[j]
                + &self.halves[j] * &fn_mids[j] * 4.0
                + &fn_nodes[j + 1])
                * (self.h / 6.0);
            u = &self.steps[j] * u + local;
            nodes.push(u.clone());
        }
        Ok(PeriodicSpline::from_samples(self.period, nodes))
    }
}

/// Ordinary least squares for `y ~ slope * x + intercept`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let sx: f64 = x.iter().sum();
    let sy: f64 = y.iter().sum();
    let sxx: f64 = x.iter().map(|v| v * v).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    (slope, intercept)
}
