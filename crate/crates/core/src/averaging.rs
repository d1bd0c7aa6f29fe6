//! Averaging of the reduced slow equation over the fast phase: the order-0
//! mean field, the order-1 correction with its Lie-bracket term, the averaged
//! Lotka-Volterra coefficient family and the sigma stability indicator.

use crate::error::{Error, Result};
use crate::manifold::{compute_h1, MonomialCoeff};
use crate::model::{EquilibriumBranch, EquilibriumHalf, FullModel};
use crate::periodic::{PeriodicMatrixFn, PeriodicSpline, PeriodicVectorFn, QuadratureRule};
use crate::reduction::{assemble_reduced, build_stiff_remover_half, ReducedVectorFields};
use crate::resolvent::ResolventCache;
use crate::PERIOD;
use nalgebra::{DMatrix, DVector, Matrix2, Vector2};

/// A polynomial map `X -> R^2` stored as monomial/coefficient pairs.
#[derive(Clone, Debug)]
pub struct PolyField2 {
    pub terms: Vec<((u32, u32), Vector2<f64>)>,
}

impl PolyField2 {
    pub fn eval(&self, x: &Vector2<f64>) -> Vector2<f64> {
        let mut out = Vector2::zeros();
        for &((i, j), c) in &self.terms {
            out += c * (x[0].powi(i as i32) * x[1].powi(j as i32));
        }
        out
    }

    /// Coefficient of one monomial (zero if absent).
    pub fn coeff(&self, powers: (u32, u32)) -> Vector2<f64> {
        self.terms
            .iter()
            .find(|(p, _)| *p == powers)
            .map(|(_, c)| *c)
            .unwrap_or_else(Vector2::zeros)
    }

    /// The Lotka-Volterra form `(A x_p - B x_p x_q, -C x_q + D x_p x_q)`.
    pub fn lv_form(&self) -> (f64, f64, f64, f64) {
        let lin_p = self.coeff((1, 0));
        let lin_q = self.coeff((0, 1));
        let cross = self.coeff((1, 1));
        (lin_p[0], -cross[0], -lin_q[1], cross[1])
    }
}

/// The averaged slow field `F0 (+ eps F1)`.
pub struct AveragedField {
    pub f0: PolyField2,
    pub f1: Option<PolyField2>,
}

impl AveragedField {
    pub fn order(&self) -> usize {
        if self.f1.is_some() {
            1
        } else {
            0
        }
    }

    pub fn eval(&self, x: &Vector2<f64>, eps: f64) -> Vector2<f64> {
        let mut v = self.f0.eval(x);
        if let Some(f1) = &self.f1 {
            v += f1.eval(x) * eps;
        }
        v
    }

}

/// Period-average of the order-0 slow field `F(X, 0, theta)`.
///
/// For the Lotka-Volterra structure the result has exactly the monomials
/// `x_p`, `x_q`, `x_p x_q`; they are separated by evaluation at basis points.
pub fn average_f0(fields: &ReducedVectorFields, rule: &QuadratureRule) -> Result<PolyField2> {
    let zero = DVector::zeros(fields.z_dim());
    let mean = |x: Vector2<f64>| -> Result<Vector2<f64>> {
        let v = rule.integrate_vec(
            |theta| {
                let f = fields.f(&x, &zero, theta);
                DVector::from_vec(vec![f[0], f[1]])
            },
            0.0,
            PERIOD,
        )? / PERIOD;
        Ok(Vector2::new(v[0], v[1]))
    };
    let mp = mean(Vector2::new(1.0, 0.0))?;
    let mq = mean(Vector2::new(0.0, 1.0))?;
    let mpq = mean(Vector2::new(1.0, 1.0))? - mp - mq;
    Ok(PolyField2 {
        terms: vec![((1, 0), mp), ((0, 1), mq), ((1, 1), mpq)],
    })
}

/// Phase-dependent Lotka-Volterra coefficients of `F(X, 0, theta)`:
/// `F = (A(theta) x_p - B(theta) x_p x_q, -C(theta) x_q + D(theta) x_p x_q)`.
pub struct SlowFieldCoefficients {
    pub a: PeriodicSpline,
    pub b: PeriodicSpline,
    pub c: PeriodicSpline,
    pub d: PeriodicSpline,
}

pub fn slow_field_coefficients(fields: &ReducedVectorFields, nodes: usize) -> SlowFieldCoefficients {
    let zero = DVector::zeros(fields.z_dim());
    let ep = Vector2::new(1.0, 0.0);
    let eq = Vector2::new(0.0, 1.0);
    let epq = Vector2::new(1.0, 1.0);
    let mut a = Vec::with_capacity(nodes);
    let mut b = Vec::with_capacity(nodes);
    let mut c = Vec::with_capacity(nodes);
    let mut d = Vec::with_capacity(nodes);
    for j in 0..nodes {
        let t = PERIOD * j as f64 / nodes as f64;
        let fp = fields.f(&ep, &zero, t);
        let fq = fields.f(&eq, &zero, t);
        let fpq = fields.f(&epq, &zero, t);
        a.push(DVector::from_element(1, fp[0]));
        b.push(DVector::from_element(1, -(fpq[0] - fp[0] - fq[0])));
        c.push(DVector::from_element(1, -fq[1]));
        d.push(DVector::from_element(1, fpq[1] - fp[1] - fq[1]));
    }
    SlowFieldCoefficients {
        a: PeriodicSpline::from_samples(PERIOD, a),
        b: PeriodicSpline::from_samples(PERIOD, b),
        c: PeriodicSpline::from_samples(PERIOD, c),
        d: PeriodicSpline::from_samples(PERIOD, d),
    }
}

const F1_MONOMIALS: [(u32, u32); 7] = [(1, 0), (0, 1), (2, 0), (1, 1), (0, 2), (2, 1), (1, 2)];
const F1_POINTS: [(f64, f64); 7] = [
    (1.0, 0.0),
    (0.0, 1.0),
    (2.0, 0.0),
    (1.0, 1.0),
    (0.0, 2.0),
    (2.0, 1.0),
    (1.0, 2.0),
];

/// `int_0^T int_0^theta [F0(X, s), F0(X, theta)] ds dtheta` with the Lie
/// bracket `[u, v] = (d_X u) v - (d_X v) u`, evaluated through node-exact
/// prefix integrals of the coefficient splines and one outer Simpson pass.
pub fn lie_double_integral(co: &SlowFieldCoefficients, x: &Vector2<f64>) -> Vector2<f64> {
    let nodes = co.a.n_samples();
    let pa = co.a.prefix_integrals();
    let pb = co.b.prefix_integrals();
    let pc = co.c.prefix_integrals();
    let pd = co.d.prefix_integrals();
    let h = PERIOD / nodes as f64;
    let f0_at = |j: usize| {
        let (a, b, c, d) = (
            co.a.node_values()[j % nodes][0],
            co.b.node_values()[j % nodes][0],
            co.c.node_values()[j % nodes][0],
            co.d.node_values()[j % nodes][0],
        );
        Vector2::new(a * x[0] - b * x[0] * x[1], -c * x[1] + d * x[0] * x[1])
    };
    let jac_at = |j: usize| {
        let (a, b, c, d) = (
            co.a.node_values()[j % nodes][0],
            co.b.node_values()[j % nodes][0],
            co.c.node_values()[j % nodes][0],
            co.d.node_values()[j % nodes][0],
        );
        Matrix2::new(a - b * x[1], -b * x[0], d * x[1], -c + d * x[0])
    };
    let cum_f0 = |j: usize| {
        let (a, b, c, d) = (pa[j][0], pb[j][0], pc[j][0], pd[j][0]);
        Vector2::new(a * x[0] - b * x[0] * x[1], -c * x[1] + d * x[0] * x[1])
    };
    let cum_jac = |j: usize| {
        let (a, b, c, d) = (pa[j][0], pb[j][0], pc[j][0], pd[j][0]);
        Matrix2::new(a - b * x[1], -b * x[0], d * x[1], -c + d * x[0])
    };
    // integrand g(theta) = (int_0^theta J ds) F0(theta) - J(theta) (int_0^theta F0 ds)
    let g_at = |j: usize| cum_jac(j) * f0_at(j) - jac_at(j) * cum_f0(j);
    let mut acc = Vector2::zeros();
    for j in 0..nodes {
        let w = if j == 0 { 1.0 } else if j % 2 == 1 { 4.0 } else { 2.0 };
        acc += g_at(j) * w;
    }
    acc += g_at(nodes); // theta = T endpoint (prefix index `nodes`)
    acc * (h / 3.0)
}

/// First-order averaged correction
/// `F1~(X) = <dF/dZ(X,0,.) h1(X,.)> - (1/2T) int_0^T int_0^theta [F0(X,s), F0(X,theta)] ds dtheta`
/// with the Lie bracket `[u, v] = (d_X u) v - (d_X v) u`.
pub fn average_f1(
    fields: &ReducedVectorFields,
    h1: &[MonomialCoeff],
    rule: &QuadratureRule,
) -> Result<PolyField2> {
    let zero = DVector::zeros(fields.z_dim());
    let h1_at = |x: &Vector2<f64>, theta: f64| {
        let mut out = DVector::zeros(fields.z_dim());
        for m in h1 {
            out += m.coeff.eval(theta) * (x[0].powi(m.powers.0 as i32) * x[1].powi(m.powers.1 as i32));
        }
        out
    };

    // the coefficient splines drive the bracket's cumulative integrals
    let co = slow_field_coefficients(fields, 2048);

    let value_at = |x: Vector2<f64>| -> Result<Vector2<f64>> {
        // phase-mean of dF/dZ . h1
        let mean = rule.integrate_vec(
            |theta| {
                let v = fields.df_dz(&x, &zero, theta) * h1_at(&x, theta);
                DVector::from_vec(vec![v[0], v[1]])
            },
            0.0,
            PERIOD,
        )? / PERIOD;
        let double = lie_double_integral(&co, &x);
        Ok(Vector2::new(mean[0], mean[1]) - double / (2.0 * PERIOD))
    };

    // separate into monomials by interpolation
    let k = F1_MONOMIALS.len();
    let vander = DMatrix::from_fn(k, k, |r, c| {
        let (xp, xq) = F1_POINTS[r];
        let (i, j) = F1_MONOMIALS[c];
        xp.powi(i as i32) * xq.powi(j as i32)
    });
    let mut rhs = DMatrix::zeros(k, 2);
    for (r, &(xp, xq)) in F1_POINTS.iter().enumerate() {
        let v = value_at(Vector2::new(xp, xq))?;
        rhs[(r, 0)] = v[0];
        rhs[(r, 1)] = v[1];
    }
    let sol = vander
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput("monomial interpolation singular".into()))?;
    Ok(PolyField2 {
        terms: F1_MONOMIALS
            .iter()
            .enumerate()
            .map(|(m, &p)| (p, Vector2::new(sol[(m, 0)], sol[(m, 1)])))
            .collect(),
    })
}

/// Sitewise averaged coefficients of the order-0/order-1 reduced systems.
///
/// All entries are N-vectors of period means of products of the equilibrium
/// profiles `w = p_eq + h0` with the manifold coefficient functions mapped to
/// the full site space.
pub struct AveragedLvCoefficients {
    pub alpha_p0: DVector<f64>,
    pub alpha_q0: DVector<f64>,
    pub alpha_p1: DVector<f64>,
    pub alpha_q1: DVector<f64>,
    pub beta_p0: DVector<f64>,
    pub beta_q0: DVector<f64>,
    pub beta_p1: DVector<f64>,
    pub beta_q1: DVector<f64>,
    pub beta_p2: DVector<f64>,
    pub beta_q2: DVector<f64>,
    pub beta_p3: DVector<f64>,
    pub beta_q3: DVector<f64>,
    pub beta_p4: DVector<f64>,
    pub beta_q4: DVector<f64>,
}

/// Inputs for the coefficient quadratures, independent of how the manifold
/// data were obtained.
pub struct CoefficientData<'a> {
    pub branch: &'a EquilibriumBranch,
    pub i_p: &'a PeriodicSpline,
    pub i_q: &'a PeriodicSpline,
    /// site-space manifold coefficient functions of `x_p` / `x_q`
    pub h1_lin_p: Box<dyn Fn(f64) -> DVector<f64> + 'a>,
    pub h1_lin_q: Box<dyn Fn(f64) -> DVector<f64> + 'a>,
    /// site-space coefficient functions of `x_p x_q` (with the sign of the
    /// reduced expansion `h1 = h_p1 x_p - h_p2 x_p x_q`)
    pub h2_cross_p: Box<dyn Fn(f64) -> DVector<f64> + 'a>,
    pub h2_cross_q: Box<dyn Fn(f64) -> DVector<f64> + 'a>,
}

/// Quadrature of the proposition-style coefficient integrands.
pub fn averaged_lv_coefficients(
    data: &CoefficientData,
    n_sites: usize,
    rule: &QuadratureRule,
) -> Result<AveragedLvCoefficients> {
    let (_, j2) = crate::model::projections(n_sites)?;
    let wp = |t: f64| data.branch.p.eval(t) - &j2 * data.i_p.eval(t);
    let wq = |t: f64| data.branch.q.eval(t) - &j2 * data.i_q.eval(t);

    let mean = |f: &dyn Fn(f64) -> DVector<f64>| -> Result<DVector<f64>> {
        Ok(rule.integrate_vec(f, 0.0, PERIOD)? / PERIOD)
    };

    Ok(AveragedLvCoefficients {
        alpha_p0: mean(&|t| wp(t))?,
        alpha_q0: mean(&|t| wq(t))?,
        alpha_p1: mean(&|t| wp(t).component_mul(&wq(t)))?,
        alpha_q1: mean(&|t| wp(t).component_mul(&wq(t)))?,
        beta_p0: mean(&|t| (data.h1_lin_p)(t))?,
        beta_q0: mean(&|t| (data.h1_lin_q)(t))?,
        beta_p1: mean(&|t| {
            (data.h1_lin_p)(t).component_mul(&wq(t)) + (data.h1_lin_q)(t).component_mul(&wp(t))
        })?,
        beta_q1: mean(&|t| {
            (data.h1_lin_q)(t).component_mul(&wp(t)) + (data.h1_lin_p)(t).component_mul(&wq(t))
        })?,
        beta_p2: mean(&|t| (data.h2_cross_p)(t))?,
        beta_q2: mean(&|t| (data.h2_cross_q)(t))?,
        beta_p3: mean(&|t| (data.h2_cross_p)(t).component_mul(&wq(t)))?,
        beta_q3: mean(&|t| (data.h2_cross_q)(t).component_mul(&wp(t)))?,
        beta_p4: mean(&|t| (data.h2_cross_q)(t).component_mul(&wp(t)))?,
        beta_q4: mean(&|t| (data.h2_cross_p)(t).component_mul(&wq(t)))?,
    })
}

/// Stability report of the averaged order-1 system.
#[derive(Clone, Debug)]
pub struct StabilityReport {
    pub sigma: f64,
    pub sigma_naive: f64,
    pub eps: f64,
    pub grid_size: usize,
    pub description: String,
}

impl StabilityReport {
    pub fn verdict(&self) -> &'static str {
        if self.sigma < 0.0 {
            "stable"
        } else {
            "unstable"
        }
    }

    pub fn verdict_naive(&self) -> &'static str {
        if self.sigma_naive < 0.0 {
            "stable"
        } else {
            "unstable"
        }
    }
}

/// `sigma = eps (sum_i b_p_i <h_q2 (p_eq + h_p0)>_i + sum_i b_q_i <h_p2 (q_eq + h_q0)>_i)`.
pub fn sigma_indicator(
    coeffs: &AveragedLvCoefficients,
    b_p: &DVector<f64>,
    b_q: &DVector<f64>,
    eps: f64,
) -> Result<f64> {
    if b_p.len() != 2 {
        return Err(Error::InvalidInput(
            "the sigma criterion is stated for two sites".into(),
        ));
    }
    Ok(eps * (b_p.dot(&coeffs.beta_p4) + b_q.dot(&coeffs.beta_q4)))
}

/// Data for a sigma computation with a prescribed (possibly synthetic)
/// equilibrium branch: the projected transport generators, the branches and
/// the predation rates. Growth/death rates do not enter sigma.
pub struct SigmaInput {
    pub ktil_p: PeriodicMatrixFn,
    pub ktil_q: PeriodicMatrixFn,
    pub p_eq: PeriodicVectorFn,
    pub q_eq: PeriodicVectorFn,
    pub b_p: DVector<f64>,
    pub b_q: DVector<f64>,
    pub eps: f64,
}

/// Runs the reduction pipeline pieces needed by sigma on prescribed data:
/// stiff removers, the predation part of the first-order manifold
/// coefficients, then the coefficient quadratures.
pub fn sigma_from_input(input: &SigmaInput, rule: &QuadratureRule) -> Result<f64> {
    let n = input.p_eq.dim();
    let (j1, j2) = crate::model::projections(n)?;
    let cache_p = ResolventCache::new(input.ktil_p.clone())?;
    let cache_q = ResolventCache::new(input.ktil_q.clone())?;

    let (j1p, peq) = (j1.clone(), input.p_eq.clone());
    let i_p = build_stiff_remover_half(&cache_p, move |t| &j1p * peq.eval_derivative(t))?;
    let (j1q, qeq) = (j1.clone(), input.q_eq.clone());
    let i_q = build_stiff_remover_half(&cache_q, move |t| &j1q * qeq.eval_derivative(t))?;

    let wp = |t: f64| input.p_eq.eval(t) - &j2 * i_p.eval(t);
    let wq = |t: f64| input.q_eq.eval(t) - &j2 * i_q.eval(t);

    // x_p x_q coefficients of the contracted field G(X, 0, theta)
    let gamma_p = |t: f64| {
        let prod = input.b_p.component_mul(&wp(t)).component_mul(&wq(t));
        let total = prod.sum();
        &j1 * (-prod + input.p_eq.eval(t) * total) - i_p.eval(t) * total
    };
    let gamma_q = |t: f64| {
        let prod = input.b_q.component_mul(&wp(t)).component_mul(&wq(t));
        let total = prod.sum();
        &j1 * (prod - input.q_eq.eval(t) * total) + i_q.eval(t) * total
    };
    let c_p = cache_p.periodic_green_solve(gamma_p)?;
    let c_q = cache_q.periodic_green_solve(gamma_q)?;

    let branch = EquilibriumBranch {
        p: EquilibriumHalf::synthetic(input.p_eq.clone()),
        q: EquilibriumHalf::synthetic(input.q_eq.clone()),
    };
    let j2a = j2.clone();
    let j2b = j2.clone();
    let data = CoefficientData {
        branch: &branch,
        i_p: &i_p,
        i_q: &i_q,
        h1_lin_p: Box::new(|_| DVector::zeros(n)),
        h1_lin_q: Box::new(|_| DVector::zeros(n)),
        // h1 cross-coefficient with the expansion sign h1 = ... - h2 x_p x_q
        h2_cross_p: Box::new(move |t| -(&j2a * c_p.eval(t))),
        h2_cross_q: Box::new(move |t| -(&j2b * c_q.eval(t))),
    };
    let coeffs = averaged_lv_coefficients(&data, n, rule)?;
    sigma_indicator(&coeffs, &input.b_p, &input.b_q, input.eps)
}

/// Sigma with every periodic datum replaced by its period mean before any
/// reduction (the naive route).
pub fn sigma_naive_from_input(input: &SigmaInput, rule: &QuadratureRule) -> Result<f64> {
    let mean_vec = |f: &PeriodicVectorFn| -> Result<DVector<f64>> {
        Ok(rule.integrate_vec(|t| f.eval(t), 0.0, PERIOD)? / PERIOD)
    };
    let mean_mat = |f: &PeriodicMatrixFn| -> Result<DMatrix<f64>> {
        let dim = f.dim();
        let v = rule.integrate_vec(
            |t| DVector::from_column_slice(f.eval(t).as_slice()),
            0.0,
            PERIOD,
        )? / PERIOD;
        Ok(DMatrix::from_column_slice(dim, dim, v.as_slice()))
    };
    let averaged = SigmaInput {
        ktil_p: PeriodicMatrixFn::constant(mean_mat(&input.ktil_p)?, PERIOD),
        ktil_q: PeriodicMatrixFn::constant(mean_mat(&input.ktil_q)?, PERIOD),
        p_eq: PeriodicVectorFn::constant(mean_vec(&input.p_eq)?, PERIOD),
        q_eq: PeriodicVectorFn::constant(mean_vec(&input.q_eq)?, PERIOD),
        b_p: input.b_p.clone(),
        b_q: input.b_q.clone(),
        eps: input.eps,
    };
    sigma_from_input(&averaged, rule)
}

/// The synthetic stability-study data: scalar contracted generators `-1`,
/// `p_eq = (1 - a(theta), a(theta))` with `a = a0 + a1 cos + am1 sin`,
/// constant `q_eq = (1 - b, b)`.
pub struct SyntheticSigmaParams {
    pub a0: f64,
    pub a1: f64,
    pub am1: f64,
    pub b: f64,
    pub b_p: [f64; 2],
    pub b_q: [f64; 2],
    pub eps: f64,
}

impl SyntheticSigmaParams {
    /// The published parameter choice.
    pub fn paper() -> Self {
        Self {
            a0: 6.0,
            a1: 3.0,
            am1: 2.5,
            b: 0.06,
            b_p: [0.2, 0.1],
            b_q: [0.5, 0.3],
            eps: 0.1,
        }
    }

    pub fn input(&self) -> SigmaInput {
        let (a0, a1, am1) = (self.a0, self.a1, self.am1);
        let b = self.b;
        SigmaInput {
            ktil_p: PeriodicMatrixFn::constant(DMatrix::from_element(1, 1, -1.0), PERIOD),
            ktil_q: PeriodicMatrixFn::constant(DMatrix::from_element(1, 1, -1.0), PERIOD),
            p_eq: PeriodicVectorFn::new(
                2,
                PERIOD,
                move |t| {
                    let a = a0 + a1 * t.cos() + am1 * t.sin();
                    DVector::from_vec(vec![1.0 - a, a])
                },
                move |t| {
                    let da = -a1 * t.sin() + am1 * t.cos();
                    DVector::from_vec(vec![-da, da])
                },
            ),
            q_eq: PeriodicVectorFn::constant(DVector::from_vec(vec![1.0 - b, b]), PERIOD),
            b_p: DVector::from_vec(self.b_p.to_vec()),
            b_q: DVector::from_vec(self.b_q.to_vec()),
            eps: self.eps,
        }
    }
}

/// Full stability report for prescribed data.
pub fn stability_report(input: &SigmaInput, rule: &QuadratureRule, description: &str) -> Result<StabilityReport> {
    Ok(StabilityReport {
        sigma: sigma_from_input(input, rule)?,
        sigma_naive: sigma_naive_from_input(input, rule)?,
        eps: input.eps,
        grid_size: rule.panels(),
        description: description.to_string(),
    })
}

/// Sigma pipeline for a full model (branch and manifold computed from the
/// transport matrices).
pub fn stability_report_for_model(model: &FullModel, rule: &QuadratureRule) -> Result<StabilityReport> {
    let fields = assemble_reduced(model, f64::INFINITY)?;
    let input = sigma_input_from_fields(&fields, model.eps);
    stability_report(&input, rule, "model")
}

fn sigma_input_from_fields(fields: &ReducedVectorFields, eps: f64) -> SigmaInput {
    SigmaInput {
        ktil_p: fields.ktil_p().clone(),
        ktil_q: fields.ktil_q().clone(),
        p_eq: fields.branch().p.as_vector_fn().clone(),
        q_eq: fields.branch().q.as_vector_fn().clone(),
        b_p: fields.params.b_p.clone(),
        b_q: fields.params.b_q.clone(),
        eps,
    }
}

/// Coefficient data taken from a reduced model plus its first-order manifold.
pub fn coefficient_data_from_reduction<'a>(
    fields: &'a ReducedVectorFields,
    h1: &'a [MonomialCoeff],
) -> CoefficientData<'a> {
    let j2 = fields.j2().clone();
    let m = fields.n_sites() - 1;
    let pick = move |powers: (u32, u32), block: usize, t: f64, j2: &DMatrix<f64>| {
        for mc in h1 {
            if mc.powers == powers {
                let v = mc.coeff.eval(t);
                return j2 * v.rows(block * m, m);
            }
        }
        DVector::zeros(j2.nrows())
    };
    let j2a = j2.clone();
    let j2b = j2.clone();
    let j2c = j2.clone();
    let j2d = j2;
    CoefficientData {
        branch: fields.branch(),
        i_p: fields.remover_p(),
        i_q: fields.remover_q(),
        h1_lin_p: Box::new(move |t| pick((1, 0), 0, t, &j2a)),
        h1_lin_q: Box::new(move |t| pick((0, 1), 1, t, &j2b)),
        h2_cross_p: Box::new(move |t| -pick((1, 1), 0, t, &j2c)),
        h2_cross_q: Box::new(move |t| -pick((1, 1), 1, t, &j2d)),
    }
}

/// Averaged field builder for a reduced model.
pub fn averaged_field(
    fields: &ReducedVectorFields,
    cache: &ResolventCache,
    order: usize,
    rule: &QuadratureRule,
) -> Result<AveragedField> {
    let f0 = average_f0(fields, rule)?;
    let f1 = match order {
        0 => None,
        1 => {
            let h1 = compute_h1(fields, cache)?;
            Some(average_f1(fields, &h1, rule)?)
        }
        other => {
            return Err(Error::InvalidInput(format!(
                "averaging order must be 0 or 1, got {other}"
            )))
        }
    };
    Ok(AveragedField { f0, f1 })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LvParams;
    use crate::modelfile::{paper_n2_model, paper_n2_rates};
    use crate::reduction::assemble_reduced;

    fn two_site_fields() -> ReducedVectorFields {
        let model = paper_n2_model(0.1).unwrap();
        assemble_reduced(&model, 10.0).unwrap()
    }

    #[test]
    fn f0_of_zero_interaction_vanishes() {
        let rates = paper_n2_rates().unwrap();
        let params = LvParams::new(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]).unwrap();
        let model = crate::model::FullModel::new(rates, params, 0.1).unwrap();
        let fields = assemble_reduced(&model, 10.0).unwrap();
        let rule = QuadratureRule::new(256).unwrap();
        let f0 = average_f0(&fields, &rule).unwrap();
        assert!(f0.eval(&Vector2::new(0.7, 0.9)).norm() < 1e-14);
    }

    #[test]
    fn f0_matches_alpha_integrals() {
        // A = <sum a_p w_p>, B = <sum b_p w_p w_q>, C = <sum a_q w_q>,
        // D = <sum b_q w_p w_q> from the coefficient quadratures
        let fields = two_site_fields();
        let rule = QuadratureRule::new(1024).unwrap();
        let f0 = average_f0(&fields, &rule).unwrap();
        let (a, b, c, d) = f0.lv_form();

        let h1 = vec![];
        let data = coefficient_data_from_reduction(&fields, &h1);
        let co = averaged_lv_coefficients(&data, 2, &rule).unwrap();
        let a2 = fields.params.a_p.dot(&co.alpha_p0);
        let b2 = fields.params.b_p.dot(&co.alpha_p1);
        let c2 = fields.params.a_q.dot(&co.alpha_q0);
        let d2 = fields.params.b_q.dot(&co.alpha_q1);
        assert!((a - a2).abs() < 1e-10, "{a} vs {a2}");
        assert!((b - b2).abs() < 1e-10);
        assert!((c - c2).abs() < 1e-10);
        assert!((d - d2).abs() < 1e-10);
    }

    #[test]
    fn constant_equilibria_alpha_values() {
        // p_eq = q_eq = (1/2, 1/2) constant, no removers:
        // alpha0 = 1/2 per site, alpha1 = 1/4 per site
        let half = DVector::from_element(2, 0.5);
        let branch = EquilibriumBranch {
            p: EquilibriumHalf::synthetic(PeriodicVectorFn::constant(half.clone(), PERIOD)),
            q: EquilibriumHalf::synthetic(PeriodicVectorFn::constant(half, PERIOD)),
        };
        let zero_spline = PeriodicSpline::from_samples(
            PERIOD,
            vec![DVector::zeros(1); 8],
        );
        let data = CoefficientData {
            branch: &branch,
            i_p: &zero_spline,
            i_q: &zero_spline,
            h1_lin_p: Box::new(|_| DVector::zeros(2)),
            h1_lin_q: Box::new(|_| DVector::zeros(2)),
            h2_cross_p: Box::new(|_| DVector::zeros(2)),
            h2_cross_q: Box::new(|_| DVector::zeros(2)),
        };
        let rule = QuadratureRule::new(64).unwrap();
        let co = averaged_lv_coefficients(&data, 2, &rule).unwrap();
        assert!((co.alpha_p0 - DVector::from_element(2, 0.5)).norm() < 1e-12);
        assert!((co.alpha_p1 - DVector::from_element(2, 0.25)).norm() < 1e-12);
        assert!(co.beta_p3.norm() < 1e-15);
        assert!(co.beta_p4.norm() < 1e-15);
    }

    #[test]
    fn bracket_antisymmetry() {
        // [u, v] = -[v, u] for the analytic Jacobian bracket
        let fields = two_site_fields();
        let co = slow_field_coefficients(&fields, 256);
        let x = Vector2::new(0.6, 0.8);
        let f0 = |t: f64| {
            let (a, b, c, d) = (co.a.eval(t)[0], co.b.eval(t)[0], co.c.eval(t)[0], co.d.eval(t)[0]);
            Vector2::new(a * x[0] - b * x[0] * x[1], -c * x[1] + d * x[0] * x[1])
        };
        let jac = |t: f64| {
            let (a, b, c, d) = (co.a.eval(t)[0], co.b.eval(t)[0], co.c.eval(t)[0], co.d.eval(t)[0]);
            Matrix2::new(a - b * x[1], -b * x[0], d * x[1], -c + d * x[0])
        };
        for &(s, t) in &[(0.3, 1.9), (2.0, 5.5)] {
            let fwd = jac(s) * f0(t) - jac(t) * f0(s);
            let bwd = jac(t) * f0(s) - jac(s) * f0(t);
            assert!((fwd + bwd).norm() == 0.0);
        }
    }

    #[test]
    fn f1_of_zero_interaction_vanishes() {
        let rates = paper_n2_rates().unwrap();
        let params = LvParams::new(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2]).unwrap();
        let model = crate::model::FullModel::new(rates, params, 0.1).unwrap();
        let fields = assemble_reduced(&model, 10.0).unwrap();
        let cache = ResolventCache::new(fields.b_matrix()).unwrap();
        let h1 = compute_h1(&fields, &cache).unwrap();
        let rule = QuadratureRule::new(256).unwrap();
        let f1 = average_f1(&fields, &h1, &rule).unwrap();
        assert!(f1.eval(&Vector2::new(0.8, 0.7)).norm() < 1e-13);
    }

    #[test]
    fn theta_independent_field_averages_to_itself() {
        // constant transport: K~ constant, equilibria constant, removers zero;
        // F(X,0,theta) is theta-independent and F0~ must equal it; the
        // Lie-bracket term of F1~ vanishes
        let mut rates = crate::model::MigrationRates::new(2).unwrap();
        rates.set_p(1, 0, crate::model::RateFn::Const(2.0)).unwrap();
        rates.set_p(0, 1, crate::model::RateFn::Const(1.0)).unwrap();
        rates.set_q(1, 0, crate::model::RateFn::Const(1.5)).unwrap();
        rates.set_q(0, 1, crate::model::RateFn::Const(2.5)).unwrap();
        let params = crate::modelfile::paper_n2_params().unwrap();
        let model = crate::model::FullModel::new(rates, params, 0.1).unwrap();
        let fields = assemble_reduced(&model, 10.0).unwrap();
        let rule = QuadratureRule::new(512).unwrap();
        let f0 = average_f0(&fields, &rule).unwrap();
        let zero = DVector::zeros(2);
        for &(xp, xq) in &[(0.5, 0.5), (0.9, 0.3)] {
            let x = Vector2::new(xp, xq);
            let direct = fields.f(&x, &zero, 0.37);
            assert!((f0.eval(&x) - Vector2::new(direct[0], direct[1])).norm() < 1e-11);
        }
        // bracket term: compute F1~ and subtract the dZF.h1 mean; the
        // difference is the bracket part, which must vanish here
        let cache = ResolventCache::new(fields.b_matrix()).unwrap();
        let h1 = compute_h1(&fields, &cache).unwrap();
        let f1 = average_f1(&fields, &h1, &rule).unwrap();
        let x = Vector2::new(0.7, 0.6);
        let mean_dzfh1 = rule
            .integrate_vec(
                |t| {
                    let v = fields.df_dz(&x, &zero, t)
                        * h1.iter().fold(DVector::zeros(2), |acc, m| {
                            acc + m.coeff.eval(t)
                                * (x[0].powi(m.powers.0 as i32) * x[1].powi(m.powers.1 as i32))
                        });
                    DVector::from_vec(vec![v[0], v[1]])
                },
                0.0,
                PERIOD,
            )
            .unwrap()
            / PERIOD;
        let bracket_part = f1.eval(&x) - Vector2::new(mean_dzfh1[0], mean_dzfh1[1]);
        assert!(bracket_part.norm() < 1e-10, "bracket part {bracket_part}");
    }

    /// Trig polynomial `a0 + sum_j (a_j cos j theta + b_j sin j theta)`.
    #[derive(Clone)]
    struct TrigPoly {
        a0: f64,
        harm: Vec<(f64, f64)>,
    }

    impl TrigPoly {
        fn eval(&self, t: f64) -> f64 {
            let mut v = self.a0;
            for (j, &(a, b)) in self.harm.iter().enumerate() {
                let w = (j + 1) as f64;
                v += a * (w * t).cos() + b * (w * t).sin();
            }
            v
        }

        fn combine(&self, s1: f64, other: &TrigPoly, s2: f64) -> TrigPoly {
            let n = self.harm.len().max(other.harm.len());
            let get = |p: &TrigPoly, j: usize| p.harm.get(j).copied().unwrap_or((0.0, 0.0));
            TrigPoly {
                a0: s1 * self.a0 + s2 * other.a0,
                harm: (0..n)
                    .map(|j| {
                        let (a1, b1) = get(self, j);
                        let (a2, b2) = get(other, j);
                        (s1 * a1 + s2 * a2, s1 * b1 + s2 * b2)
                    })
                    .collect(),
            }
        }

        /// complex coefficient of `e^{i k theta}`
        fn chat(&self, k: i64) -> nalgebra::Complex<f64> {
            use nalgebra::Complex;
            if k == 0 {
                return Complex::new(self.a0, 0.0);
            }
            let j = (k.unsigned_abs() as usize) - 1;
            let (a, b) = self.harm.get(j).copied().unwrap_or((0.0, 0.0));
            if k > 0 {
                Complex::new(a / 2.0, -b / 2.0)
            } else {
                Complex::new(a / 2.0, b / 2.0)
            }
        }

        fn max_harmonic(&self) -> i64 {
            self.harm.len() as i64
        }
    }

    /// `D(u, v) = int_0^T v(theta) (int_0^theta u(s) ds) dtheta` from the
    /// Fourier coefficients, exact for trig polynomials.
    fn fourier_nested(u: &TrigPoly, v: &TrigPoly) -> f64 {
        use nalgebra::Complex;
        let t = PERIOD;
        let kmax = u.max_harmonic().max(v.max_harmonic());
        // int_0^T theta v dtheta = v0 T^2/2 + sum_{m != 0} vm T/(i m)
        let mut theta_v = Complex::new(v.chat(0).re * t * t / 2.0, 0.0);
        for m in 1..=kmax {
            for s in [m, -m] {
                theta_v += v.chat(s) * t / Complex::new(0.0, s as f64);
            }
        }
        let mut total = u.chat(0) * theta_v;
        for k in 1..=kmax {
            for s in [k, -k] {
                let uk = u.chat(s);
                total += uk / Complex::new(0.0, s as f64) * t * (v.chat(-s) - v.chat(0));
            }
        }
        total.re
    }

    #[test]
    fn lie_double_integral_matches_fourier_evaluation() {
        // synthetic coefficient functions with at most 8 harmonics
        let a = TrigPoly {
            a0: 0.35,
            harm: vec![(0.2, 0.0), (0.0, -0.11)],
        };
        let b = TrigPoly {
            a0: 0.07,
            harm: vec![(0.0, 0.05), (0.0, 0.0), (0.02, 0.0)],
        };
        let c = TrigPoly {
            a0: 0.15,
            harm: vec![(-0.04, 0.03)],
        };
        let d = TrigPoly {
            a0: 0.19,
            harm: vec![(0.0, 0.0), (0.0, 0.03), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.0, 0.0), (0.01, 0.0)],
        };
        let nodes = 2048usize;
        let sample = |p: &TrigPoly| {
            PeriodicSpline::from_samples(
                PERIOD,
                (0..nodes)
                    .map(|j| DVector::from_element(1, p.eval(PERIOD * j as f64 / nodes as f64)))
                    .collect(),
            )
        };
        let co = SlowFieldCoefficients {
            a: sample(&a),
            b: sample(&b),
            c: sample(&c),
            d: sample(&d),
        };
        for &(xp, xq) in &[(0.6, 0.8), (1.2, 0.4)] {
            let x = Vector2::new(xp, xq);
            let got = lie_double_integral(&co, &x);
            // J entries and F0 components as trig polynomials
            let zero = TrigPoly { a0: 0.0, harm: vec![] };
            let j11 = a.combine(1.0, &b, -xq);
            let j12 = b.combine(-xp, &zero, 0.0);
            let j21 = d.combine(xq, &zero, 0.0);
            let j22 = c.combine(-1.0, &d, xp);
            let f1 = a.combine(xp, &b, -xp * xq);
            let f2 = c.combine(-xq, &d, xp * xq);
            let want_p = fourier_nested(&j11, &f1) - fourier_nested(&f1, &j11)
                + fourier_nested(&j12, &f2)
                - fourier_nested(&f2, &j12);
            let want_q = fourier_nested(&j21, &f1) - fourier_nested(&f1, &j21)
                + fourier_nested(&j22, &f2)
                - fourier_nested(&f2, &j22);
            assert!(
                (got[0] - want_p).abs() <= 1e-8 && (got[1] - want_q).abs() <= 1e-8,
                "X = ({xp},{xq}): iterated ({}, {}) vs fourier ({want_p}, {want_q})",
                got[0],
                got[1]
            );
        }
    }

    #[test]
    fn sigma_zero_for_zero_predation() {
        let mut p = SyntheticSigmaParams::paper();
        p.b_p = [0.0, 0.0];
        p.b_q = [0.0, 0.0];
        let rule = QuadratureRule::new(512).unwrap();
        let s = sigma_from_input(&p.input(), &rule).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn sigma_equals_naive_for_constant_data() {
        let mut p = SyntheticSigmaParams::paper();
        p.a1 = 0.0;
        p.am1 = 0.0;
        let rule = QuadratureRule::new(512).unwrap();
        let input = p.input();
        let s = sigma_from_input(&input, &rule).unwrap();
        let sn = sigma_naive_from_input(&input, &rule).unwrap();
        assert!(
            (s - sn).abs() < 1e-10,
            "constant data: sigma {s} vs naive {sn}"
        );
    }

    #[test]
    fn sigma_grid_stability() {
        let p = SyntheticSigmaParams::paper();
        let input = p.input();
        let coarse = sigma_from_input(&input, &QuadratureRule::new(512).unwrap()).unwrap();
        let fine = sigma_from_input(&input, &QuadratureRule::new(2048).unwrap()).unwrap();
        assert!(
            (coarse - fine).abs() < 1e-6,
            "grid sensitivity {coarse} vs {fine}"
        );
    }
}
