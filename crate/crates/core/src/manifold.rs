//! The fast-time periodic center manifold: epsilon-expansion coefficients in
//! closed integral form, the defining-equation residual, a numerical
//! fixed-point oracle for the manifold operator, and shadowing initial data.

use crate::error::{Error, Result};
use crate::periodic::{PeriodicMatrixFn, PeriodicSpline};
use crate::reduction::ReducedVectorFields;
use crate::resolvent::ResolventCache;
use nalgebra::{DMatrix, DVector, Vector2};

/// One monomial `x_p^i x_q^j` with a periodic vector coefficient.
pub struct MonomialCoeff {
    pub powers: (u32, u32),
    pub coeff: PeriodicSpline,
}

fn mono_eval(powers: (u32, u32), x: &Vector2<f64>) -> f64 {
    x[0].powi(powers.0 as i32) * x[1].powi(powers.1 as i32)
}

fn mono_grad(powers: (u32, u32), x: &Vector2<f64>) -> Vector2<f64> {
    let (i, j) = powers;
    let dp = if i == 0 {
        0.0
    } else {
        i as f64 * x[0].powi(i as i32 - 1) * x[1].powi(j as i32)
    };
    let dq = if j == 0 {
        0.0
    } else {
        j as f64 * x[0].powi(i as i32) * x[1].powi(j as i32 - 1)
    };
    Vector2::new(dp, dq)
}

/// Coefficient functions of the epsilon-expansion of the center manifold.
///
/// The zeroth-order term vanishes identically (the only periodic solution of
/// the order-1/eps equation), so the expansion starts at `eps h1`.
pub struct ManifoldExpansion {
    order: usize,
    zdim: usize,
    h1: Vec<MonomialCoeff>,
    h2: Vec<MonomialCoeff>,
}

impl ManifoldExpansion {
    /// The order-0 truncation: `h~ = 0` (populations follow the equilibrium
    /// profile exactly).
    pub fn order0(zdim: usize) -> Self {
        Self {
            order: 0,
            zdim,
            h1: Vec::new(),
            h2: Vec::new(),
        }
    }

    /// Truncation `h~ = eps h1 (+ eps^2 h2)` at the requested order.
    pub fn truncated(
        fields: &ReducedVectorFields,
        cache: &ResolventCache,
        order: usize,
    ) -> Result<Self> {
        let zdim = fields.z_dim();
        match order {
            0 => Ok(Self::order0(zdim)),
            1 => Ok(Self {
                order: 1,
                zdim,
                h1: compute_h1(fields, cache)?,
                h2: Vec::new(),
            }),
            2 => {
                let h1 = compute_h1(fields, cache)?;
                let h2 = compute_h2(fields, &h1, cache)?;
                Ok(Self {
                    order: 2,
                    zdim,
                    h1,
                    h2,
                })
            }
            other => Err(Error::InvalidInput(format!(
                "manifold truncation order must be 0, 1 or 2, got {other}"
            ))),
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn z_dim(&self) -> usize {
        self.zdim
    }

    pub fn h1_monomials(&self) -> &[MonomialCoeff] {
        &self.h1
    }

    pub fn h2_monomials(&self) -> &[MonomialCoeff] {
        &self.h2
    }

    pub fn h1(&self, x: &Vector2<f64>, theta: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.zdim);
        for m in &self.h1 {
            out += m.coeff.eval(theta) * mono_eval(m.powers, x);
        }
        out
    }

    pub fn h2(&self, x: &Vector2<f64>, theta: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.zdim);
        for m in &self.h2 {
            out += m.coeff.eval(theta) * mono_eval(m.powers, x);
        }
        out
    }

    /// The truncation `h~(X, theta) = eps h1 + eps^2 h2` up to this order.
    pub fn h_tilde(&self, x: &Vector2<f64>, theta: f64, eps: f64) -> DVector<f64> {
        match self.order {
            0 => DVector::zeros(self.zdim),
            1 => self.h1(x, theta) * eps,
            _ => self.h1(x, theta) * eps + self.h2(x, theta) * (eps * eps),
        }
    }

    /// `d(h~)/dX`, a zdim x 2 matrix, from the monomial structure.
    pub fn dx_h_tilde(&self, x: &Vector2<f64>, theta: f64, eps: f64) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.zdim, 2);
        let mut add = |mons: &[MonomialCoeff], scale: f64| {
            for m in mons {
                let g = mono_grad(m.powers, x);
                let c = m.coeff.eval(theta) * scale;
                for r in 0..self.zdim {
                    out[(r, 0)] += c[r] * g[0];
                    out[(r, 1)] += c[r] * g[1];
                }
            }
        };
        if self.order >= 1 {
            add(&self.h1, eps);
        }
        if self.order >= 2 {
            add(&self.h2, eps * eps);
        }
        out
    }

    /// `d(h~)/dtheta` from the spline derivatives.
    pub fn dtheta_h_tilde(&self, x: &Vector2<f64>, theta: f64, eps: f64) -> DVector<f64> {
        let mut out = DVector::zeros(self.zdim);
        if self.order >= 1 {
            for m in &self.h1 {
                out += m.coeff.eval_derivative(theta) * (eps * mono_eval(m.powers, x));
            }
        }
        if self.order >= 2 {
            for m in &self.h2 {
                out += m.coeff.eval_derivative(theta) * (eps * eps * mono_eval(m.powers, x));
            }
        }
        out
    }
}

/// First-order coefficient functions: for each monomial of `G(X, 0, theta)`
/// the unique periodic solution of `dc/dtheta = B(theta) c + Gamma(theta)`.
///
/// `G(X,0,.)` is linear in `x_p`, `x_q` plus one bilinear term, so three
/// Green solves determine `h1` exactly.
pub fn compute_h1(
    fields: &ReducedVectorFields,
    cache: &ResolventCache,
) -> Result<Vec<MonomialCoeff>> {
    let zdim = fields.z_dim();
    let zero = DVector::zeros(zdim);
    let e_p = Vector2::new(1.0, 0.0);
    let e_q = Vector2::new(0.0, 1.0);
    let e_pq = Vector2::new(1.0, 1.0);

    let g_p = |theta: f64| fields.g(&e_p, &zero, theta);
    let g_q = |theta: f64| fields.g(&e_q, &zero, theta);
    let c_p = cache.periodic_green_solve(&g_p)?;
    let c_q = cache.periodic_green_solve(&g_q)?;
    let c_pq =
        cache.periodic_green_solve(|theta| fields.g(&e_pq, &zero, theta) - g_p(theta) - g_q(theta))?;

    Ok(vec![
        MonomialCoeff {
            powers: (1, 0),
            coeff: c_p,
        },
        MonomialCoeff {
            powers: (0, 1),
            coeff: c_q,
        },
        MonomialCoeff {
            powers: (1, 1),
            coeff: c_pq,
        },
    ])
}

/// Monomials spanning the second-order forcing, and the evaluation points
/// used to separate them (a well-conditioned 7x7 Vandermonde).
pub const H2_MONOMIALS: [(u32, u32); 7] = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2)];
const H2_POINTS: [(f64, f64); 7] = [
    (1.0, 0.0),
    (0.0, 1.0),
    (2.0, 0.0),
    (1.0, 1.0),
    (0.0, 2.0),
    (2.0, 1.0),
    (1.0, 2.0),
];

/// Second-order coefficients: periodic solves against the forcing
/// `RHS(X, theta) = dG/dZ(X,0,theta) h1(X,theta) - dh1/dX(X,theta) F(X,0,theta)`,
/// separated into monomials by interpolation at fixed points.
pub fn compute_h2(
    fields: &ReducedVectorFields,
    h1: &[MonomialCoeff],
    cache: &ResolventCache,
) -> Result<Vec<MonomialCoeff>> {
    let zdim = fields.z_dim();
    let zero = DVector::zeros(zdim);

    let h1_at = |x: &Vector2<f64>, theta: f64| {
        let mut out = DVector::zeros(zdim);
        for m in h1 {
            out += m.coeff.eval(theta) * mono_eval(m.powers, x);
        }
        out
    };
    let dx_h1_at = |x: &Vector2<f64>, theta: f64| {
        let mut out = DMatrix::<f64>::zeros(zdim, 2);
        for m in h1 {
            let g = mono_grad(m.powers, x);
            let c = m.coeff.eval(theta);
            for r in 0..zdim {
                out[(r, 0)] += c[r] * g[0];
                out[(r, 1)] += c[r] * g[1];
            }
        }
        out
    };

    let rhs = |x: &Vector2<f64>, theta: f64| -> DVector<f64> {
        let dzg = fields.dg_dz(x, &zero, theta);
        let f0 = fields.f(x, &zero, theta);
        let dxh = dx_h1_at(x, theta);
        dzg * h1_at(x, theta) - dxh * DVector::from_vec(vec![f0[0], f0[1]])
    };

    // solve per evaluation point, then change basis to monomial coefficients
    let mut solutions = Vec::with_capacity(H2_POINTS.len());
    for &(xp, xq) in &H2_POINTS {
        let x = Vector2::new(xp, xq);
        solutions.push(cache.periodic_green_solve(|theta| rhs(&x, theta))?);
    }

    let k = H2_MONOMIALS.len();
    let vander = DMatrix::from_fn(k, k, |r, c| {
        let (xp, xq) = H2_POINTS[r];
        mono_eval(H2_MONOMIALS[c], &Vector2::new(xp, xq))
    });
    let vinv = vander
        .lu()
        .try_inverse()
        .expect("interpolation points are unisolvent");

    let n_nodes = solutions[0].n_samples();
    let period = solutions[0].period();
    let mut out = Vec::with_capacity(k);
    for (m, &powers) in H2_MONOMIALS.iter().enumerate() {
        let nodes: Vec<DVector<f64>> = (0..n_nodes)
            .map(|j| {
                let mut v = DVector::zeros(zdim);
                for (s, sol) in solutions.iter().enumerate() {
                    v += &sol.node_values()[j] * vinv[(m, s)];
                }
                v
            })
            .collect();
        out.push(MonomialCoeff {
            powers,
            coeff: PeriodicSpline::from_samples(period, nodes),
        });
    }
    Ok(out)
}

/// Norm of the defect of the manifold PDE at `(X, theta)`:
/// `(1/eps)(d_theta h~ - B h~) - G(X, h~, theta) + d_X h~ . F(X, h~, theta)`.
pub fn pde_residual(
    manifold: &ManifoldExpansion,
    fields: &ReducedVectorFields,
    b: &PeriodicMatrixFn,
    eps: f64,
    x: &Vector2<f64>,
    theta: f64,
) -> f64 {
    let h = manifold.h_tilde(x, theta, eps);
    let dth = manifold.dtheta_h_tilde(x, theta, eps);
    let lhs = (dth - b.eval(theta) * &h) / eps;
    let f = fields.f(x, &h, theta);
    let g = fields.g(x, &h, theta);
    let dxh = manifold.dx_h_tilde(x, theta, eps);
    let rhs = g - dxh * DVector::from_vec(vec![f[0], f[1]]);
    (lhs - rhs).norm()
}

/// Outcome of the fixed-point iteration for the manifold operator.
pub struct OracleOutcome {
    /// converged manifold value at the queried point
    pub value: DVector<f64>,
    /// sup-distance between successive iterates
    pub iterate_distances: Vec<f64>,
    pub iterations: usize,
}

/// Truncation horizon making the resolvent weight fall below `1e-12`.
pub fn oracle_truncation(decay_rate: f64, period: f64) -> f64 {
    ((1e12f64).ln() / decay_rate).max(period)
}

/// Numerical fixed-point iteration of the manifold operator on a truncated
/// domain.
///
/// The operator maps a candidate `h` to
/// `(T h)(X0, theta0) = eps * int_{-U}^{0} R(theta0, theta0+u) G(X_h(eps u), h(X_h, theta0+u), theta0+u) du`
/// where `X_h` solves the reduced equation backwards with `h` plugged in.
/// `h` is represented on a box-times-phase grid with cubic interpolation.
pub fn fixed_point_oracle(
    fields: &ReducedVectorFields,
    b: &PeriodicMatrixFn,
    eps: f64,
    x0: Vector2<f64>,
    theta0: f64,
    truncation: f64,
    iterations: usize,
) -> Result<OracleOutcome> {
    let zdim = fields.z_dim();
    let period = b.period();

    // graded u-grid: fine cells where the resolvent weight is large, four
    // times coarser in the exponentially damped tail; cell counts kept even
    // so consecutive cell pairs form Simpson panels
    let du_fine = 0.04;
    let fine_span = truncation.min(2.56);
    let n_fine = (((fine_span / du_fine).ceil() as usize) + 1) & !1usize;
    let du_tail = 4.0 * du_fine;
    let tail_span = (truncation - n_fine as f64 * du_fine).max(0.0);
    let n_tail = if tail_span > 0.0 {
        (((tail_span / du_tail).ceil() as usize) + 1) & !1usize
    } else {
        0
    };
    let mut widths = vec![du_fine; n_fine.max(4)];
    widths.extend(std::iter::repeat(du_tail).take(n_tail));
    let ncells = widths.len();

    // size the X-box from the h = 0 backward sweep
    let mut xmin = Vector2::new(x0[0], x0[1]);
    let mut xmax = xmin;
    {
        let mut x = x0;
        let mut u = 0.0;
        let zv = DVector::zeros(zdim);
        for &w in &widths {
            let fval = |uu: f64, xx: &Vector2<f64>| fields.f(xx, &zv, theta0 + uu) * eps;
            let k1 = fval(u, &x);
            let k2 = fval(u - 0.5 * w, &(x - k1 * (0.5 * w)));
            let k3 = fval(u - 0.5 * w, &(x - k2 * (0.5 * w)));
            let k4 = fval(u - w, &(x - k3 * w));
            x -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (w / 6.0);
            u -= w;
            xmin = xmin.inf(&x);
            xmax = xmax.sup(&x);
        }
    }
    let margin = 0.35;
    let lo = xmin - Vector2::new(margin, margin);
    let hi = xmax + Vector2::new(margin, margin);

    let nx = 11usize;
    let ntheta = 24usize;
    let grid = OracleGrid::new(lo, hi, nx, ntheta, period, zdim);
    let mut h_current = grid.zero_values();

    // per phase row: resolvent weights R(theta_g, theta_g + u_k) at the cell
    // boundaries (two RK4 substeps per cell), and frame data at boundaries
    // and midpoints, shared by every X node of the row
    struct Row {
        weights: Vec<DMatrix<f64>>,
        frames: Vec<crate::reduction::FrameData>,
    }
    let rows: Vec<Row> = (0..ntheta)
        .map(|it| {
            let tg = theta0_of(it, ntheta, period);
            let mut weights = Vec::with_capacity(ncells + 1);
            let mut acc = DMatrix::<f64>::identity(zdim, zdim);
            weights.push(acc.clone());
            let mut frames = Vec::with_capacity(2 * ncells + 1);
            frames.push(fields.frame_at(tg));
            let mut u = 0.0;
            for &w in &widths {
                let a = tg + u;
                let half = propagate_b(b, a - 0.5 * w, a, zdim);
                let step = half * propagate_b(b, a - w, a - 0.5 * w, zdim);
                acc *= step;
                weights.push(acc.clone());
                frames.push(fields.frame_at(a - 0.5 * w));
                frames.push(fields.frame_at(a - w));
                u -= w;
            }
            Row { weights, frames }
        })
        .collect();

    let mut distances = Vec::new();
    let mut done = 0usize;
    for it_n in 0..iterations {
        let mut h_next = grid.zero_values();
        let mut sup_change: f64 = 0.0;
        for (it, row) in rows.iter().enumerate() {
            let tg = theta0_of(it, ntheta, period);
            for ix in 0..nx {
                for iy in 0..nx {
                    let xg = grid.node(ix, iy);
                    let v = apply_operator(
                        fields, eps, &xg, tg, &widths, &row.weights, &row.frames, &grid,
                        &h_current,
                    );
                    let idx = grid.index(ix, iy, it);
                    sup_change = sup_change.max((&v - &h_current[idx]).norm());
                    h_next[idx] = v;
                }
            }
        }
        h_current = h_next;
        distances.push(sup_change);
        done = it_n + 1;
        if sup_change < 1e-10 {
            break;
        }
        if it_n >= 2 && distances[it_n] > distances[it_n - 1] && distances[it_n - 1] > distances[it_n - 2]
        {
            return Err(Error::NonContraction {
                factor: distances[it_n] / distances[it_n - 1],
            });
        }
    }

    let value = grid.interp(&h_current, &x0, theta0);
    Ok(OracleOutcome {
        value,
        iterate_distances: distances,
        iterations: done,
    })
}

fn theta0_of(it: usize, ntheta: usize, period: f64) -> f64 {
    it as f64 * period / ntheta as f64
}

fn propagate_b(b: &PeriodicMatrixFn, from: f64, to: f64, dim: usize) -> DMatrix<f64> {
    let h = to - from;
    let r = DMatrix::<f64>::identity(dim, dim);
    let k1 = b.eval(from) * &r;
    let k2 = b.eval(from + 0.5 * h) * (&r + &k1 * (0.5 * h));
    let k3 = b.eval(from + 0.5 * h) * (&r + &k2 * (0.5 * h));
    let k4 = b.eval(to) * (&r + &k3 * h);
    r + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

#[allow(clippy::too_many_arguments)]
fn apply_operator(
    fields: &ReducedVectorFields,
    eps: f64,
    x0: &Vector2<f64>,
    theta0: f64,
    widths: &[f64],
    weights: &[DMatrix<f64>],
    frames: &[crate::reduction::FrameData],
    grid: &OracleGrid,
    h_values: &[DVector<f64>],
) -> DVector<f64> {
    let zdim = grid.zdim;
    let mut x = *x0;
    let mut u = 0.0f64;
    let mut integral = DVector::zeros(zdim);

    // frames[2k] sits at the k-th cell boundary, frames[2k+1] at its midpoint
    let gval = |x: &Vector2<f64>, th: f64, fi: usize| {
        let h = grid.interp(h_values, x, th);
        fields.g_at(&frames[fi], x, &h)
    };
    let fval = |x: &Vector2<f64>, th: f64, fi: usize| {
        let h = grid.interp(h_values, x, th);
        fields.f_at(&frames[fi], x, &h) * eps
    };

    // consecutive equal-width cell pairs form Simpson panels
    let mut boundary_vals: Vec<DVector<f64>> = Vec::with_capacity(widths.len() + 1);
    boundary_vals.push(&weights[0] * gval(&x, theta0, 0));
    for (k, &w) in widths.iter().enumerate() {
        // backward RK4 step of dX/du = eps F(X, h(X, theta0+u), theta0+u)
        let k1 = fval(&x, theta0 + u, 2 * k);
        let k2 = fval(&(x - k1 * (0.5 * w)), theta0 + u - 0.5 * w, 2 * k + 1);
        let k3 = fval(&(x - k2 * (0.5 * w)), theta0 + u - 0.5 * w, 2 * k + 1);
        let k4 = fval(&(x - k3 * w), theta0 + u - w, 2 * k + 2);
        x -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (w / 6.0);
        u -= w;
        boundary_vals.push(&weights[k + 1] * gval(&x, theta0 + u, 2 * k + 2));
    }
    let mut k = 0;
    while k + 1 < widths.len() {
        debug_assert_eq!(widths[k], widths[k + 1], "cells pair up within a segment");
        let w = widths[k];
        integral.axpy(w / 3.0, &boundary_vals[k], 1.0);
        integral.axpy(4.0 * w / 3.0, &boundary_vals[k + 1], 1.0);
        integral.axpy(w / 3.0, &boundary_vals[k + 2], 1.0);
        k += 2;
    }
    integral * eps
}

/// Values of a candidate manifold on a box-times-phase grid with cubic
/// (Catmull-Rom) interpolation, periodic in the phase.
struct OracleGrid {
    lo: Vector2<f64>,
    dx: f64,
    dy: f64,
    nx: usize,
    ntheta: usize,
    period: f64,
    zdim: usize,
}

impl OracleGrid {
    fn new(lo: Vector2<f64>, hi: Vector2<f64>, nx: usize, ntheta: usize, period: f64, zdim: usize) -> Self {
        Self {
            lo,
            dx: (hi[0] - lo[0]) / (nx - 1) as f64,
            dy: (hi[1] - lo[1]) / (nx - 1) as f64,
            nx,
            ntheta,
            period,
            zdim,
        }
    }

    fn zero_values(&self) -> Vec<DVector<f64>> {
        vec![DVector::zeros(self.zdim); self.nx * self.nx * self.ntheta]
    }

    fn index(&self, ix: usize, iy: usize, it: usize) -> usize {
        (it * self.nx + iy) * self.nx + ix
    }

    fn node(&self, ix: usize, iy: usize) -> Vector2<f64> {
        Vector2::new(
            self.lo[0] + ix as f64 * self.dx,
            self.lo[1] + iy as f64 * self.dy,
        )
    }

    fn interp(&self, values: &[DVector<f64>], x: &Vector2<f64>, theta: f64) -> DVector<f64> {
        // fractional coordinates, clamped to the box
        let fx = ((x[0] - self.lo[0]) / self.dx).clamp(0.0, (self.nx - 1) as f64);
        let fy = ((x[1] - self.lo[1]) / self.dy).clamp(0.0, (self.nx - 1) as f64);
        let mut ft = (theta % self.period) / self.period * self.ntheta as f64;
        if ft < 0.0 {
            ft += self.ntheta as f64;
        }

        let (jx, tx) = split_frac(fx, self.nx);
        let (jy, ty) = split_frac(fy, self.nx);
        let jt = ft.floor() as usize % self.ntheta;
        let tt = ft - ft.floor();

        let clamp = |i: isize| -> usize { i.clamp(0, (self.nx - 1) as isize) as usize };
        let mut out = DVector::zeros(self.zdim);
        let wt = catmull_weights(tt);
        let wx = catmull_weights(tx);
        let wy = catmull_weights(ty);
        for (dt, &wtv) in wt.iter().enumerate() {
            let it = (jt + self.ntheta + dt - 1) % self.ntheta;
            for (dy, &wyv) in wy.iter().enumerate() {
                let iy = clamp(jy as isize + dy as isize - 1);
                for (dx, &wxv) in wx.iter().enumerate() {
                    let ix = clamp(jx as isize + dx as isize - 1);
                    let w = wtv * wyv * wxv;
                    if w != 0.0 {
                        out.axpy(w, &values[self.index(ix, iy, it)], 1.0);
                    }
                }
            }
        }
        out
    }
}

fn split_frac(f: f64, n: usize) -> (usize, f64) {
    let j = (f.floor() as usize).min(n - 2);
    (j, f - j as f64)
}

fn catmull_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        -0.5 * t3 + t2 - 0.5 * t,
        1.5 * t3 - 2.5 * t2 + 1.0,
        -1.5 * t3 + 2.0 * t2 + 0.5 * t,
        0.5 * t3 - 0.5 * t2,
    ]
}

/// Altered initial data for the shadowing construction.
#[derive(Clone, Debug)]
pub struct ShadowInit {
    pub t_star: f64,
    pub x_star: Vector2<f64>,
    pub x0_eps: Vector2<f64>,
}

/// Integrates the reduced field backward from `(t_star, X_star)` to `t = 0`,
/// yielding the altered initial data whose forward trajectory passes through
/// `X_star` at `t_star`.
pub fn shadow_initial_data(
    fields: &ReducedVectorFields,
    manifold: &ManifoldExpansion,
    eps: f64,
    x_star: Vector2<f64>,
    t_star: f64,
    theta0: f64,
    dt: f64,
) -> Result<ShadowInit> {
    let mut x = x_star;
    let mut t = t_star;
    let alpha = fields.domain_radius;
    let field = |t: f64, x: &Vector2<f64>| {
        let theta = theta0 + t / eps;
        let z = manifold.h_tilde(x, theta, eps);
        fields.f(x, &z, theta)
    };
    while t > 0.0 {
        let h = dt.min(t);
        let k1 = field(t, &x);
        let k2 = field(t - 0.5 * h, &(x - k1 * (0.5 * h)));
        let k3 = field(t - 0.5 * h, &(x - k2 * (0.5 * h)));
        let k4 = field(t - h, &(x - k3 * h));
        x -= (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        t -= h;
        if !x.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        if x.norm() > alpha {
            return Err(Error::DomainViolation {
                t,
                alpha,
                norm: x.norm(),
            });
        }
    }
    Ok(ShadowInit {
        t_star,
        x_star,
        x0_eps: x,
    })
}
