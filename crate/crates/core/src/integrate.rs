//! Time integration: the stiff reference solver (implicit Euler with Newton),
//! RK4 for the reduced and averaged systems, and trajectory capture.

use crate::averaging::AveragedField;
use crate::error::{Error, Result};
use crate::manifold::ManifoldExpansion;
use crate::model::FullModel;
use crate::reduction::ReducedVectorFields;
use nalgebra::{DMatrix, DVector, Vector2};

/// Coordinate frame of a captured trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Frame {
    Pq,
    SlowFast,
    Reduced,
    Averaged,
}

impl Frame {
    pub fn name(&self) -> &'static str {
        match self {
            Frame::Pq => "pq",
            Frame::SlowFast => "slowfast",
            Frame::Reduced => "reduced",
            Frame::Averaged => "averaged",
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrajectoryMeta {
    pub eps: f64,
    pub dt: f64,
    pub method: &'static str,
}

/// Time-stamped states from one integration, in one coordinate frame.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub frame: Frame,
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    /// Column labels matching the state layout of this frame.
    pub fn column_names(&self, n_sites: usize) -> Vec<String> {
        let m = n_sites.saturating_sub(1);
        match self.frame {
            Frame::Pq => (1..=n_sites)
                .map(|i| format!("p{i}"))
                .chain((1..=n_sites).map(|i| format!("q{i}")))
                .collect(),
            Frame::SlowFast | Frame::Reduced => {
                let mut cols = vec!["x_p".to_string(), "x_q".to_string()];
                cols.extend((1..=m).map(|i| format!("z_p{i}")));
                cols.extend((1..=m).map(|i| format!("z_q{i}")));
                cols
            }
            Frame::Averaged => vec!["x_p".to_string(), "x_q".to_string()],
        }
    }

    /// Linear interpolation of the state at time `t` (for error studies).
    pub fn sample(&self, t: f64) -> DVector<f64> {
        let ts = &self.times;
        match ts.binary_search_by(|x| x.partial_cmp(&t).unwrap()) {
            Ok(i) => self.states[i].clone(),
            Err(0) => self.states[0].clone(),
            Err(i) if i >= ts.len() => self.states[ts.len() - 1].clone(),
            Err(i) => {
                let (t0, t1) = (ts[i - 1], ts[i]);
                let w = (t - t0) / (t1 - t0);
                &self.states[i - 1] * (1.0 - w) + &self.states[i] * w
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    ImplicitEuler,
    Rk4,
}

#[derive(Clone, Copy, Debug)]
pub struct IntegratorConfig {
    pub method: Method,
    pub dt: f64,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    pub capture_stride: usize,
}

impl IntegratorConfig {
    pub fn implicit_euler(dt: f64) -> Self {
        Self {
            method: Method::ImplicitEuler,
            dt,
            newton_tol: 1e-12,
            newton_max_iter: 20,
            capture_stride: 1,
        }
    }

    pub fn rk4(dt: f64) -> Self {
        Self {
            method: Method::Rk4,
            dt,
            newton_tol: 1e-12,
            newton_max_iter: 20,
            capture_stride: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.capture_stride = stride.max(1);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.newton_tol > 0.0) {
            return Err(Error::InvalidInput("newton_tol must be positive".into()));
        }
        Ok(())
    }
}

/// Integrates the full stiff system with implicit Euler + Newton.
///
/// Each step solves `v - u - dt rhs(t_{n+1}, v) = 0` with the analytic
/// Jacobian (transport block over eps plus the diagonal interaction part).
pub fn integrate_full(
    model: &FullModel,
    p0: &DVector<f64>,
    q0: &DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    if cfg.method != Method::ImplicitEuler {
        return Err(Error::InvalidInput(
            "the stiff reference integrator is implicit Euler".into(),
        ));
    }
    let n = model.n_sites();
    let dim = 2 * n;
    let steps = (t_end / cfg.dt).round() as usize;
    let eps = model.eps;
    let pr = &model.params;

    let mut u = DVector::zeros(dim);
    u.rows_mut(0, n).copy_from(p0);
    u.rows_mut(n, n).copy_from(q0);

    let mut times = Vec::with_capacity(steps / cfg.capture_stride + 2);
    let mut states = Vec::with_capacity(steps / cfg.capture_stride + 2);
    times.push(0.0);
    states.push(u.clone());

    let id = DMatrix::<f64>::identity(dim, dim);
    for k in 0..steps {
        let t1 = (k + 1) as f64 * cfg.dt;
        let theta = t1 / eps;
        let kp = model.k_p.eval(theta);
        let kq = model.k_q.eval(theta);
        let mut v = u.clone();
        let mut converged = false;
        let mut residual = f64::INFINITY;
        for _ in 0..cfg.newton_max_iter {
            let p = v.rows(0, n).clone_owned();
            let q = v.rows(n, n).clone_owned();
            let (f, g) = crate::model::lv_rhs(pr, &p, &q);
            let mut rhs = DVector::zeros(dim);
            rhs.rows_mut(0, n).copy_from(&(&kp * &p / eps + f));
            rhs.rows_mut(n, n).copy_from(&(&kq * &q / eps + g));
            let res = &v - &u - rhs * cfg.dt;
            residual = res.amax();
            if !residual.is_finite() {
                return Err(Error::NonFinite { t: t1 });
            }
            if residual < cfg.newton_tol {
                converged = true;
                break;
            }
            let mut jac = DMatrix::zeros(dim, dim);
            jac.view_mut((0, 0), (n, n)).copy_from(&(&kp / eps));
            jac.view_mut((n, n), (n, n)).copy_from(&(&kq / eps));
            for i in 0..n {
                jac[(i, i)] += pr.a_p[i] - pr.b_p[i] * q[i];
                jac[(i, n + i)] += -pr.b_p[i] * p[i];
                jac[(n + i, i)] += pr.b_q[i] * q[i];
                jac[(n + i, n + i)] += -pr.a_q[i] + pr.b_q[i] * p[i];
            }
            let a = &id - jac * cfg.dt;
            let delta = a.lu().solve(&(-res)).ok_or(Error::NewtonDivergence {
                step: k,
                t: t1,
                residual,
                iters: cfg.newton_max_iter,
            })?;
            v += delta;
        }
        if !converged {
            return Err(Error::NewtonDivergence {
                step: k,
                t: t1,
                residual,
                iters: cfg.newton_max_iter,
            });
        }
        u = v;
        if (k + 1) % cfg.capture_stride == 0 || k + 1 == steps {
            times.push(t1);
            states.push(u.clone());
        }
    }
    Ok(Trajectory {
        frame: Frame::Pq,
        times,
        states,
        meta: TrajectoryMeta {
            eps,
            dt: cfg.dt,
            method: "implicit_euler",
        },
    })
}

/// One RK4 step for a generic field.
fn rk4_step<F>(field: &F, t: f64, dt: f64, y: &DVector<f64>) -> DVector<f64>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    let k1 = field(t, y);
    let k2 = field(t + 0.5 * dt, &(y + &k1 * (0.5 * dt)));
    let k3 = field(t + 0.5 * dt, &(y + &k2 * (0.5 * dt)));
    let k4 = field(t + dt, &(y + &k3 * dt));
    y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)
}

fn rk4_capture<F>(
    field: F,
    y0: DVector<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<(Vec<f64>, Vec<DVector<f64>>)>
where
    F: Fn(f64, &DVector<f64>) -> DVector<f64>,
{
    cfg.validate()?;
    let steps = (t_end / cfg.dt).round() as usize;
    let mut y = y0;
    let mut times = vec![0.0];
    let mut states = vec![y.clone()];
    for k in 0..steps {
        let t = k as f64 * cfg.dt;
        y = rk4_step(&field, t, cfg.dt, &y);
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t: t + cfg.dt });
        }
        if (k + 1) % cfg.capture_stride == 0 || k + 1 == steps {
            times.push(t + cfg.dt);
            states.push(y.clone());
        }
    }
    Ok((times, states))
}

/// Integrates the reduced slow equation `dX/dt = F(X, h~(X, theta), theta)`
/// with RK4 and captures `(X, Z = h~(X, theta))`.
pub fn integrate_reduced(
    fields: &ReducedVectorFields,
    manifold: &ManifoldExpansion,
    eps: f64,
    x0: Vector2<f64>,
    theta0: f64,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if cfg.method != Method::Rk4 {
        return Err(Error::InvalidInput("the reduced integrator is RK4".into()));
    }
    let zdim = fields.z_dim();
    let field = |t: f64, y: &DVector<f64>| {
        let x = Vector2::new(y[0], y[1]);
        let theta = theta0 + t / eps;
        let z = manifold.h_tilde(&x, theta, eps);
        let f = fields.f(&x, &z, theta);
        DVector::from_vec(vec![f[0], f[1]])
    };
    let (times, xs) = rk4_capture(field, DVector::from_vec(vec![x0[0], x0[1]]), t_end, cfg)?;

    let alpha = fields.domain_radius;
    let mut states = Vec::with_capacity(xs.len());
    for (t, xy) in times.iter().zip(&xs) {
        let x = Vector2::new(xy[0], xy[1]);
        let theta = theta0 + t / eps;
        let z = manifold.h_tilde(&x, theta, eps);
        if x.norm() > alpha || z.norm() > alpha {
            return Err(Error::DomainViolation {
                t: *t,
                alpha,
                norm: x.norm().max(z.norm()),
            });
        }
        let mut s = DVector::zeros(2 + zdim);
        s[0] = x[0];
        s[1] = x[1];
        s.rows_mut(2, zdim).copy_from(&z);
        states.push(s);
    }
    Ok(Trajectory {
        frame: Frame::Reduced,
        times,
        states,
        meta: TrajectoryMeta {
            eps,
            dt: cfg.dt,
            method: "rk4",
        },
    })
}

/// Integrates the autonomous averaged system `dX/dt = F0(X) (+ eps F1(X))`.
pub fn integrate_averaged(
    avg: &AveragedField,
    eps: f64,
    x0: Vector2<f64>,
    t_end: f64,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    if cfg.method != Method::Rk4 {
        return Err(Error::InvalidInput("the averaged integrator is RK4".into()));
    }
    let field = |_t: f64, y: &DVector<f64>| {
        let x = Vector2::new(y[0], y[1]);
        let v = avg.eval(&x, eps);
        DVector::from_vec(vec![v[0], v[1]])
    };
    let (times, states) = rk4_capture(field, DVector::from_vec(vec![x0[0], x0[1]]), t_end, cfg)?;
    Ok(Trajectory {
        frame: Frame::Averaged,
        times,
        states,
        meta: TrajectoryMeta {
            eps,
            dt: cfg.dt,
            method: "rk4",
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FullModel, LvParams, MigrationRates, RateFn};
    use crate::modelfile::{paper_n2_model, paper_n2_params};

    #[test]
    fn pure_transport_conserves_mass() {
        // f = g = 0 (zero LV rates): 1^T p stays constant over 10^4 steps
        let rates = crate::modelfile::paper_n2_rates().unwrap();
        let params = LvParams::new(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]).unwrap();
        let model = FullModel::new(rates, params, 0.1).unwrap();
        let p0 = DVector::from_vec(vec![0.3, 0.7]);
        let q0 = DVector::from_vec(vec![0.5, 0.5]);
        let cfg = IntegratorConfig::implicit_euler(1e-3).with_stride(100);
        let traj = integrate_full(&model, &p0, &q0, 10.0, &cfg).unwrap();
        for s in &traj.states {
            let mass_p: f64 = s.rows(0, 2).sum();
            let mass_q: f64 = s.rows(2, 2).sum();
            assert!((mass_p - 1.0).abs() <= 1e-10, "mass drift {mass_p}");
            assert!((mass_q - 1.0).abs() <= 1e-10);
        }
    }

    #[test]
    fn implicit_euler_first_order_richardson() {
        let model = paper_n2_model(0.1).unwrap();
        let p0 = DVector::from_vec(vec![0.1, 0.2]);
        let q0 = DVector::from_vec(vec![0.3, 0.4]);
        let t_end = 0.5;
        let run = |dt: f64| {
            let cfg = IntegratorConfig::implicit_euler(dt).with_stride(usize::MAX / 2);
            integrate_full(&model, &p0, &q0, t_end, &cfg)
                .unwrap()
                .states
                .last()
                .unwrap()
                .clone()
        };
        let dt = model.eps.powi(3);
        let (u1, u2, u4) = (run(dt), run(dt / 2.0), run(dt / 4.0));
        let ratio = (&u1 - &u2).norm() / (&u2 - &u4).norm();
        assert!(
            (ratio - 2.0).abs() < 0.4,
            "Richardson ratio {ratio}, expected ~2 for order 1"
        );
    }

    #[test]
    fn no_migration_reduces_to_sitewise_lv() {
        // eps = 1, K = 0: each site is a plain Lotka-Volterra system with
        // first integral V_i = bq p - aq ln p + bp q - ap ln q
        let mut rates = MigrationRates::new(2).unwrap();
        rates.set_p(1, 0, RateFn::Const(0.0)).unwrap();
        rates.set_q(1, 0, RateFn::Const(0.0)).unwrap();
        let params = paper_n2_params().unwrap();
        // zero transport violates the Perron hypotheses on purpose, so the
        // model is assembled by hand rather than through FullModel::new
        let (kp, kq) = crate::model::build_transport(&rates).unwrap();
        let model = FullModel {
            rates,
            params: params.clone(),
            k_p: kp,
            k_q: kq,
            eps: 1.0,
            spectral_gap_beta: 0.0,
        };
        let p0 = DVector::from_vec(vec![1.0, 1.2]);
        let q0 = DVector::from_vec(vec![0.8, 1.1]);
        let dt = 1e-3;
        let cfg = IntegratorConfig::implicit_euler(dt).with_stride(50);
        let traj = integrate_full(&model, &p0, &q0, 5.0, &cfg).unwrap();
        let invariant = |p: f64, q: f64, i: usize| {
            params.b_q[i] * p - params.a_q[i] * p.ln() + params.b_p[i] * q - params.a_p[i] * q.ln()
        };
        let v0 = invariant(p0[0], q0[0], 0);
        let mut worst: f64 = 0.0;
        for s in &traj.states {
            worst = worst.max((invariant(s[0], s[2], 0) - v0).abs());
        }
        assert!(worst < 50.0 * dt, "LV invariant drift {worst}");
    }

    #[test]
    fn reduced_system_is_equivalent_to_the_stiff_one() {
        // integrate the original system and the transformed (X, Z) system
        // independently; mapped through the frame changes they must agree up
        // to integrator error
        use crate::reduction::{assemble_reduced, to_slow_fast, z_coordinates, StiffRemover};
        use nalgebra::Vector2;

        let eps = 0.1;
        let model = paper_n2_model(eps).unwrap();
        let fields = assemble_reduced(&model, 10.0).unwrap();
        let p0 = DVector::from_vec(vec![0.1, 0.2]);
        let q0 = DVector::from_vec(vec![0.3, 0.4]);
        let t_end = 0.5;

        let cfg = IntegratorConfig::implicit_euler(1e-5).with_stride(5000);
        let reference = integrate_full(&model, &p0, &q0, t_end, &cfg).unwrap();

        let branch = fields.branch();
        let remover = StiffRemover {
            i_p: fields.remover_p().clone(),
            i_q: fields.remover_q().clone(),
        };
        let frame0 = to_slow_fast(&p0, &q0, 0.0, branch);
        let z0 = z_coordinates(&frame0, 0.0, &remover);
        let b = fields.b_matrix();

        // RK4 on the transformed system (X, Z)
        let field = |t: f64, y: &DVector<f64>| {
            let x = Vector2::new(y[0], y[1]);
            let z = y.rows(2, 2).clone_owned();
            let theta = t / eps;
            let fx = fields.f(&x, &z, theta);
            let dz = b.eval(theta) * &z / eps + fields.g(&x, &z, theta);
            DVector::from_vec(vec![fx[0], fx[1], dz[0], dz[1]])
        };
        let dt = 1e-3;
        let mut y = DVector::from_vec(vec![frame0.x_p, frame0.x_q, z0[0], z0[1]]);
        let steps = (t_end / dt).round() as usize;
        let mut transformed = vec![(0.0, y.clone())];
        for k in 0..steps {
            y = rk4_step(&field, k as f64 * dt, dt, &y);
            transformed.push(((k + 1) as f64 * dt, y.clone()));
        }

        let mut worst: f64 = 0.0;
        for (t, s) in reference.times.iter().zip(&reference.states).skip(1) {
            let p = s.rows(0, 2).clone_owned();
            let q = s.rows(2, 2).clone_owned();
            let theta = t / eps;
            let fr = to_slow_fast(&p, &q, theta, branch);
            let z = z_coordinates(&fr, theta, &remover);
            let idx = (t / dt).round() as usize;
            let tr = &transformed[idx].1;
            worst = worst
                .max((fr.x_p - tr[0]).abs())
                .max((fr.x_q - tr[1]).abs())
                .max((z[0] - tr[2]).abs())
                .max((z[1] - tr[3]).abs());
        }
        assert!(worst <= 5e-4, "frame-equivalence defect {worst}");
    }

    #[test]
    fn contracted_field_stays_bounded_as_eps_shrinks() {
        // the remover strips the 1/eps forcing: max ||G|| along the
        // trajectory varies by < 10% over an eps sweep, while the removed
        // term x * d(p~_eq)/dt / eps grows like 1/eps
        use crate::reduction::{assemble_reduced, to_slow_fast, z_coordinates, StiffRemover};
        use nalgebra::Vector2;

        let fields = assemble_reduced(&paper_n2_model(0.1).unwrap(), 10.0).unwrap();
        let remover = StiffRemover {
            i_p: fields.remover_p().clone(),
            i_q: fields.remover_q().clone(),
        };
        let p0 = DVector::from_vec(vec![0.1, 0.2]);
        let q0 = DVector::from_vec(vec![0.3, 0.4]);
        let mut maxima = Vec::new();
        for &eps in &[0.1, 0.05, 0.01] {
            let model = paper_n2_model(eps).unwrap();
            let dt = (eps.powi(3)).max(1e-6);
            let t_end = 0.3;
            let cfg = IntegratorConfig::implicit_euler(dt)
                .with_stride(((t_end / dt) as usize / 300).max(1));
            let traj = integrate_full(&model, &p0, &q0, t_end, &cfg).unwrap();
            let mut gmax: f64 = 0.0;
            let mut stiff_term: f64 = 0.0;
            for (t, s) in traj.times.iter().zip(&traj.states) {
                let theta = t / eps;
                let p = s.rows(0, 2).clone_owned();
                let q = s.rows(2, 2).clone_owned();
                let fr = to_slow_fast(&p, &q, theta, fields.branch());
                let z = z_coordinates(&fr, theta, &remover);
                let x = Vector2::new(fr.x_p, fr.x_q);
                gmax = gmax.max(fields.g(&x, &z, theta).norm());
                let dptil = fields.j1() * fields.branch().p.eval_derivative(theta);
                stiff_term = stiff_term.max((dptil * fr.x_p / eps).norm());
            }
            maxima.push(gmax);
            assert!(
                stiff_term > 10.0 * gmax,
                "eps = {eps}: removed term {stiff_term} should dwarf ||G|| = {gmax}"
            );
        }
        let lo = maxima.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = maxima.iter().cloned().fold(0.0f64, f64::max);
        assert!(
            (hi - lo) / hi < 0.1,
            "max ||G|| varies too much across eps: {maxima:?}"
        );
    }

    #[test]
    fn non_finite_initial_data_is_reported() {
        let model = paper_n2_model(0.1).unwrap();
        let p0 = DVector::from_vec(vec![1e200, 0.2]);
        let q0 = DVector::from_vec(vec![0.3, 0.4]);
        let cfg = IntegratorConfig::implicit_euler(0.5);
        assert!(integrate_full(&model, &p0, &q0, 1.0, &cfg).is_err());
    }
}
