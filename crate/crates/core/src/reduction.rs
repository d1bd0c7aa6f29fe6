//! Slow-fast decomposition: coordinate changes between (p,q), the
//! (x, y)-split along the equilibrium branches, the projected coordinates and
//! the manifold-adapted z-frame; the stiff-term remover and the assembled
//! right-hand sides F, G of the reduced system.

use crate::error::Result;
use crate::model::{EquilibriumBranch, FullModel, LvParams};
use crate::periodic::{PeriodicMatrixFn, PeriodicSpline};
use crate::resolvent::ResolventCache;
use crate::PERIOD;
use nalgebra::{DMatrix, DVector, Vector2};
use std::sync::Arc;

/// All coordinate frames of one state at one phase.
#[derive(Clone, Debug)]
pub struct SlowFastFrame {
    /// total populations `x_p = 1.p`, `x_q = 1.q`
    pub x_p: f64,
    pub x_q: f64,
    /// zero-sum remainders `y = p - x p_eq(theta)`
    pub y_p: DVector<f64>,
    pub y_q: DVector<f64>,
    /// projected remainders `y~ = J1 y`
    pub yt_p: DVector<f64>,
    pub yt_q: DVector<f64>,
}

/// Stiff-term remover: `h0(x, theta) = -x I(theta)` per species, with
/// `I` the periodic solution of `dI/dtheta = K~ I + d(p~_eq)/dtheta`.
pub struct StiffRemover {
    pub i_p: PeriodicSpline,
    pub i_q: PeriodicSpline,
}

/// Equilibrium and remover values at one phase.
pub struct FrameData {
    pub p_eq: DVector<f64>,
    pub q_eq: DVector<f64>,
    pub i_p: DVector<f64>,
    pub i_q: DVector<f64>,
}

/// Builds one species' half of the remover.
///
/// Delegates to the periodic Green solver with forcing `-d(p~_eq)/dtheta`;
/// the returned `I` satisfies `u = -I` for that solve.
pub fn build_stiff_remover_half<F>(cache: &ResolventCache, branch_tilde_deriv: F) -> Result<PeriodicSpline>
where
    F: Fn(f64) -> DVector<f64>,
{
    let u = cache.periodic_green_solve(|theta| -branch_tilde_deriv(theta))?;
    let nodes: Vec<DVector<f64>> = u.node_values().iter().map(|v| -v).collect();
    Ok(PeriodicSpline::from_samples(u.period(), nodes))
}

/// The reduced system data: equilibria, removers, projections and the
/// Lotka-Volterra parameters, with evaluators for F, G and their Jacobians.
pub struct ReducedVectorFields {
    pub params: LvParams,
    branch: EquilibriumBranch,
    i_p: Arc<PeriodicSpline>,
    i_q: Arc<PeriodicSpline>,
    j1: DMatrix<f64>,
    j2: DMatrix<f64>,
    ktil_p: PeriodicMatrixFn,
    ktil_q: PeriodicMatrixFn,
    /// runtime domain radius; trajectories outside are reported, not clamped
    pub domain_radius: f64,
    n: usize,
}

impl ReducedVectorFields {
    pub fn new(
        params: LvParams,
        branch: EquilibriumBranch,
        i_p: PeriodicSpline,
        i_q: PeriodicSpline,
        ktil_p: PeriodicMatrixFn,
        ktil_q: PeriodicMatrixFn,
        domain_radius: f64,
    ) -> Result<Self> {
        let n = params.n_sites();
        let (j1, j2) = crate::model::projections(n)?;
        Ok(Self {
            params,
            branch,
            i_p: Arc::new(i_p),
            i_q: Arc::new(i_q),
            j1,
            j2,
            ktil_p,
            ktil_q,
            domain_radius,
            n,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n
    }

    /// Dimension of the contracted block, `2(N-1)`.
    pub fn z_dim(&self) -> usize {
        2 * (self.n - 1)
    }

    pub fn branch(&self) -> &EquilibriumBranch {
        &self.branch
    }

    pub fn remover_p(&self) -> &PeriodicSpline {
        &self.i_p
    }

    pub fn remover_q(&self) -> &PeriodicSpline {
        &self.i_q
    }

    pub fn j1(&self) -> &DMatrix<f64> {
        &self.j1
    }

    pub fn j2(&self) -> &DMatrix<f64> {
        &self.j2
    }

    pub fn ktil_p(&self) -> &PeriodicMatrixFn {
        &self.ktil_p
    }

    pub fn ktil_q(&self) -> &PeriodicMatrixFn {
        &self.ktil_q
    }

    /// Block-diagonal contracted generator `B = diag(K~_p, K~_q)`.
    pub fn b_matrix(&self) -> PeriodicMatrixFn {
        PeriodicMatrixFn::block_diag(&self.ktil_p, &self.ktil_q)
    }

    /// Phase-dependent data of one evaluation point, reusable across many
    /// states at the same phase.
    pub fn frame_at(&self, theta: f64) -> FrameData {
        FrameData {
            p_eq: self.branch.p.eval(theta),
            q_eq: self.branch.q.eval(theta),
            i_p: self.i_p.eval(theta),
            i_q: self.i_q.eval(theta),
        }
    }

    /// Reconstructs per-site populations from `(X, Z)` at phase `theta`.
    ///
    /// `p = x_p p_eq + J2 (z_p - x_p I_p)` and likewise for `q`.
    pub fn populations(&self, x: &Vector2<f64>, z: &DVector<f64>, theta: f64) -> (DVector<f64>, DVector<f64>) {
        self.populations_at(&self.frame_at(theta), x, z)
    }

    pub fn populations_at(
        &self,
        fr: &FrameData,
        x: &Vector2<f64>,
        z: &DVector<f64>,
    ) -> (DVector<f64>, DVector<f64>) {
        let m = self.n - 1;
        let ytp = z.rows(0, m) - &fr.i_p * x[0];
        let ytq = z.rows(m, m) - &fr.i_q * x[1];
        let p = &fr.p_eq * x[0] + &self.j2 * ytp;
        let q = &fr.q_eq * x[1] + &self.j2 * ytq;
        (p, q)
    }

    /// Slow field `F(X, Z, theta) = (1.f, 1.g)` after the full composition.
    pub fn f(&self, x: &Vector2<f64>, z: &DVector<f64>, theta: f64) -> Vector2<f64> {
        self.f_at(&self.frame_at(theta), x, z)
    }

    pub fn f_at(&self, fr: &FrameData, x: &Vector2<f64>, z: &DVector<f64>) -> Vector2<f64> {
        let (p, q) = self.populations_at(fr, x, z);
        let (fv, gv) = crate::model::lv_rhs(&self.params, &p, &q);
        Vector2::new(fv.sum(), gv.sum())
    }

    /// Contracted field `G(X, Z, theta)`, free of any 1/eps prefactor.
    ///
    /// `G_p = J1 (f - (1.f) p_eq) + (1.f) I_p` and likewise for `q`.
    pub fn g(&self, x: &Vector2<f64>, z: &DVector<f64>, theta: f64) -> DVector<f64> {
        self.g_at(&self.frame_at(theta), x, z)
    }

    pub fn g_at(&self, fr: &FrameData, x: &Vector2<f64>, z: &DVector<f64>) -> DVector<f64> {
        let m = self.n - 1;
        let (p, q) = self.populations_at(fr, x, z);
        let (fv, gv) = crate::model::lv_rhs(&self.params, &p, &q);
        let fsum = fv.sum();
        let gsum = gv.sum();
        let gp = &self.j1 * (fv - &fr.p_eq * fsum) + &fr.i_p * fsum;
        let gq = &self.j1 * (gv - &fr.q_eq * gsum) + &fr.i_q * gsum;
        let mut out = DVector::zeros(2 * m);
        out.rows_mut(0, m).copy_from(&gp);
        out.rows_mut(m, m).copy_from(&gq);
        out
    }

    /// Jacobians of the per-site fields with respect to (p, q), diagonal.
    fn lv_jacobian(&self, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>) {
        let pr = &self.params;
        let dfdp = DVector::from_fn(self.n, |i, _| pr.a_p[i] - pr.b_p[i] * q[i]);
        let dfdq = DVector::from_fn(self.n, |i, _| -pr.b_p[i] * p[i]);
        let dgdp = DVector::from_fn(self.n, |i, _| pr.b_q[i] * q[i]);
        let dgdq = DVector::from_fn(self.n, |i, _| -pr.a_q[i] + pr.b_q[i] * p[i]);
        (dfdp, dfdq, dgdp, dgdq)
    }

    /// dP/d(x_p) = p_eq - J2 I_p (the effective per-unit-mass profile).
    fn profile_p(&self, theta: f64) -> DVector<f64> {
        self.branch.p.eval(theta) - &self.j2 * self.i_p.eval(theta)
    }

    fn profile_q(&self, theta: f64) -> DVector<f64> {
        self.branch.q.eval(theta) - &self.j2 * self.i_q.eval(theta)
    }

    /// `dF/dX`, a 2x2 matrix.
    pub fn df_dx(&self, x: &Vector2<f64>, z: &DVector<f64>, theta: f64) -> DMatrix<f64> {
        let (p, q) = self.populations(x, z, theta);
        let (dfdp, dfdq, dgdp, dgdq) = self.lv_jacobian(&p, &q);
        let wp = self.profile_p(theta);
        let wq = self.profile_q(theta);
        let mut m = DMatrix::zeros(2, 2);
        m[(0, 0)] = dfdp.dot(&wp);
        m[(0, 1)] = dfdq.dot(&wq);
        m[(1, 0)] = dgdp.dot(&wp);
        m[(1, 1)] = dgdq.dot(&wq);
        m
    }

    /// `dF/dZ`, a 2 x 2(N-1) matrix.
    pub fn df_dz(&self, x: &Vector2<f64>, z: &DVector<f64>, theta: f64) -> DMatrix<f64> {
        let m = self.n - 1;
        let (p, q) = self.populations(x, z, theta);
        let (dfdp, dfdq, dgdp, dgdq) = self.lv_jacobian(&p, &q);
        let mut out = DMatrix::zeros(2, 2 * m);
        // dP/dz_p = J2, dQ/dz_q = J2
        let fp = dfdp.transpose() * &self.j2;
        let fq = dfdq.transpose() * &self.j2;
        let gp = dgdp.transpose() * &self.j2;
        let gq = dgdq.transpose() * &self.j2;
        out.view_mut((0, 0), (1, m)).copy_from(&fp);
        out.view_mut((0, m), (1, m)).copy_from(&fq);
        out.view_mut((1, 0), (1, m)).copy_from(&gp);
        out.view_mut((1, m), (1, m)).copy_from(&gq);
        out
    }

    /// `dG/dX`, a 2(N-1) x 2 matrix.
    pub fn dg_dx(&self, x: &Vector2<f64>, z: &DVector<f64>, theta: f64) -> DMatrix<f64> {
        let m = self.n - 1;
        let (p, q) = self.populations(x, z, theta);
        let (dfdp, dfdq, dgdp, dgdq) = self.lv_jacobian(&p, &q);
        let wp = self.profile_p(theta);
        let wq = self.profile_q(theta);
        let peq = self.branch.p.eval(theta);
        let qeq = self.branch.q.eval(theta);
        let ip = self.i_p.eval(theta);
        let iq = self.i_q.eval(theta);

        // d f / d x_p = dfdp .* wp (componentwise), etc.
        let df_dxp = dfdp.component_mul(&wp);
        let df_dxq = dfdq.component_mul(&wq);
        let dg_dxp = dgdp.component_mul(&wp);
        let dg_dxq = dgdq.component_mul(&wq);

        let proj_p = |v: &DVector<f64>| {
            let s = v.sum();
            &self.j1 * (v - &peq * s) + &ip * s
        };
        let proj_q = |v: &DVector<f64>| {
            let s = v.sum();
            &self.j1 * (v - &qeq * s) + &iq * s
        };

        let mut out = DMatrix::zeros(2 * m, 2);
        out.view_mut((0, 0), (m, 1)).copy_from(&proj_p(&df_dxp));
        out.view_mut((0, 1), (m, 1)).copy_from(&proj_p(&df_dxq));
        out.view_mut((m, 0), (m, 1)).copy_from(&proj_q(&dg_dxp));
        out.view_mut((m, 1), (m, 1)).copy_from(&proj_q(&dg_dxq));
        out
    }

    /// `dG/dZ`, a 2(N-1) x 2(N-1) matrix.
    pub fn dg_dz(&self, x: &Vector2<f64>, z: &DVector<f64>, theta: f64) -> DMatrix<f64> {
        let m = self.n - 1;
        let (p, q) = self.populations(x, z, theta);
        let (dfdp, dfdq, dgdp, dgdq) = self.lv_jacobian(&p, &q);
        let peq = self.branch.p.eval(theta);
        let qeq = self.branch.q.eval(theta);
        let ip = self.i_p.eval(theta);
        let iq = self.i_q.eval(theta);

        // d f / d z_p = diag(dfdp) J2 etc.; then the same projection chain.
        let proj_p = |jac: DMatrix<f64>| {
            let ones = DVector::from_element(self.n, 1.0);
            let col = ones.transpose() * &jac; // 1 x m
            &self.j1 * (&jac - &peq * &col) + &ip * col
        };
        let proj_q = |jac: DMatrix<f64>| {
            let ones = DVector::from_element(self.n, 1.0);
            let col = ones.transpose() * &jac;
            &self.j1 * (&jac - &qeq * &col) + &iq * col
        };

        let dfz_p = DMatrix::from_fn(self.n, m, |i, j| dfdp[i] * self.j2[(i, j)]);
        let dfz_q = DMatrix::from_fn(self.n, m, |i, j| dfdq[i] * self.j2[(i, j)]);
        let dgz_p = DMatrix::from_fn(self.n, m, |i, j| dgdp[i] * self.j2[(i, j)]);
        let dgz_q = DMatrix::from_fn(self.n, m, |i, j| dgdq[i] * self.j2[(i, j)]);

        let mut out = DMatrix::zeros(2 * m, 2 * m);
        out.view_mut((0, 0), (m, m)).copy_from(&proj_p(dfz_p));
        out.view_mut((0, m), (m, m)).copy_from(&proj_p(dfz_q));
        out.view_mut((m, 0), (m, m)).copy_from(&proj_q(dgz_p));
        out.view_mut((m, m), (m, m)).copy_from(&proj_q(dgz_q));
        out
    }
}

/// Builds the reduced fields from a full model: projections, projected
/// transport, equilibrium branch and stiff removers.
pub fn assemble_reduced(model: &FullModel, domain_radius: f64) -> Result<ReducedVectorFields> {
    let n = model.n_sites();
    let branch = model.branch()?;
    let (j1, j2) = crate::model::projections(n)?;

    let project = |k: &PeriodicMatrixFn| -> PeriodicMatrixFn {
        let (j1e, j2e) = (j1.clone(), j2.clone());
        let (j1d, j2d) = (j1.clone(), j2.clone());
        let ke = k.clone();
        let kd = k.clone();
        PeriodicMatrixFn::new(
            n - 1,
            PERIOD,
            move |t| &j1e * ke.eval(t) * &j2e,
            move |t| &j1d * kd.eval_derivative(t) * &j2d,
        )
    };
    let ktil_p = project(&model.k_p);
    let ktil_q = project(&model.k_q);

    let cache_p = ResolventCache::new(ktil_p.clone())?;
    let cache_q = ResolventCache::new(ktil_q.clone())?;
    let bp = branch.p.clone();
    let bq = branch.q.clone();
    let j1p = j1.clone();
    let j1q = j1.clone();
    let i_p = build_stiff_remover_half(&cache_p, move |t| &j1p * bp.eval_derivative(t))?;
    let i_q = build_stiff_remover_half(&cache_q, move |t| &j1q * bq.eval_derivative(t))?;

    ReducedVectorFields::new(model.params.clone(), branch, i_p, i_q, ktil_p, ktil_q, domain_radius)
}

/// Splits per-site populations into the slow-fast frame.
pub fn to_slow_fast(
    p: &DVector<f64>,
    q: &DVector<f64>,
    theta: f64,
    branch: &EquilibriumBranch,
) -> SlowFastFrame {
    let n = p.len();
    let (j1, _) = crate::model::projections(n).expect("N >= 2");
    let x_p = p.sum();
    let x_q = q.sum();
    let y_p = p - branch.p.eval(theta) * x_p;
    let y_q = q - branch.q.eval(theta) * x_q;
    let yt_p = &j1 * &y_p;
    let yt_q = &j1 * &y_q;
    SlowFastFrame {
        x_p,
        x_q,
        y_p,
        y_q,
        yt_p,
        yt_q,
    }
}

/// Inverse of [`to_slow_fast`] from the projected coordinates.
pub fn from_slow_fast(frame: &SlowFastFrame, theta: f64, branch: &EquilibriumBranch) -> (DVector<f64>, DVector<f64>) {
    let n = frame.y_p.len();
    let (_, j2) = crate::model::projections(n).expect("N >= 2");
    let p = branch.p.eval(theta) * frame.x_p + &j2 * &frame.yt_p;
    let q = branch.q.eval(theta) * frame.x_q + &j2 * &frame.yt_q;
    (p, q)
}

/// Manifold-adapted coordinates `z = y~ + x I(theta)` of one frame.
pub fn z_coordinates(frame: &SlowFastFrame, theta: f64, remover: &StiffRemover) -> DVector<f64> {
    let m = frame.yt_p.len();
    let mut z = DVector::zeros(2 * m);
    z.rows_mut(0, m)
        .copy_from(&(&frame.yt_p + remover.i_p.eval(theta) * frame.x_p));
    z.rows_mut(m, m)
        .copy_from(&(&frame.yt_q + remover.i_q.eval(theta) * frame.x_q));
    z
}

/// True iff every sample of the trajectory stays inside the alpha-ball in
/// both the slow and the contracted variables.
pub fn domain_monitor(states: &[(Vector2<f64>, DVector<f64>)], alpha: f64) -> bool {
    states
        .iter()
        .all(|(x, z)| x.norm() <= alpha && z.norm() <= alpha)
}
