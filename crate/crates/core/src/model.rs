//! The full stiff model: transport matrices built from transfer rates,
//! Lotka-Volterra interaction terms, periodic Perron equilibria, spectral
//! verification and the zero-sum-subspace projections.

use crate::error::{Error, Result};
use crate::periodic::{PeriodicMatrixFn, PeriodicVectorFn};
use crate::PERIOD;
use nalgebra::{DMatrix, DVector};
use std::collections::BTreeMap;
use std::sync::Arc;

/// Residual tolerance for the Perron kernel vector.
pub const TOL_NULL: f64 = 1e-10;
/// Grid used by spectral verification and branch derivatives.
pub const SPECTRAL_SAMPLES: usize = 1024;

/// A named T-periodic transfer-rate expression.
#[derive(Clone, Debug, PartialEq)]
pub enum RateFn {
    Const(f64),
    /// `amp * cos(theta) + offset`
    CosOffset { amp: f64, offset: f64 },
    /// `amp * sin(theta) + offset`
    SinOffset { amp: f64, offset: f64 },
    /// Uniform samples over `[0, T)`, interpolated periodically.
    Tabulated(Vec<f64>),
}

impl RateFn {
    pub fn eval(&self, theta: f64) -> f64 {
        match self {
            RateFn::Const(c) => *c,
            RateFn::CosOffset { amp, offset } => amp * theta.cos() + offset,
            RateFn::SinOffset { amp, offset } => amp * theta.sin() + offset,
            RateFn::Tabulated(v) => {
                let n = v.len();
                let mut t = theta % PERIOD;
                if t < 0.0 {
                    t += PERIOD;
                }
                let x = t / PERIOD * n as f64;
                let j = (x.floor() as usize) % n;
                let frac = x - x.floor();
                // local cubic (Catmull-Rom) through the four surrounding samples
                let vm = v[(j + n - 1) % n];
                let v0 = v[j];
                let v1 = v[(j + 1) % n];
                let v2 = v[(j + 2) % n];
                let a = 2.0 * v0;
                let b = v1 - vm;
                let c = 2.0 * vm - 5.0 * v0 + 4.0 * v1 - v2;
                let d = -vm + 3.0 * v0 - 3.0 * v1 + v2;
                0.5 * (a + b * frac + c * frac * frac + d * frac * frac * frac)
            }
        }
    }

    pub fn eval_derivative(&self, theta: f64) -> f64 {
        match self {
            RateFn::Const(_) => 0.0,
            RateFn::CosOffset { amp, .. } => -amp * theta.sin(),
            RateFn::SinOffset { amp, .. } => amp * theta.cos(),
            RateFn::Tabulated(_) => {
                let h = PERIOD / 8192.0;
                (self.eval(theta - 2.0 * h) - 8.0 * self.eval(theta - h)
                    + 8.0 * self.eval(theta + h)
                    - self.eval(theta + 2.0 * h))
                    / (12.0 * h)
            }
        }
    }

    /// Period mean, exact for the named built-ins.
    pub fn mean(&self) -> f64 {
        match self {
            RateFn::Const(c) => *c,
            RateFn::CosOffset { offset, .. } | RateFn::SinOffset { offset, .. } => *offset,
            RateFn::Tabulated(v) => v.iter().sum::<f64>() / v.len() as f64,
        }
    }
}

/// Transfer proportions from site `from` to site `to` for both species.
#[derive(Clone, Debug)]
pub struct MigrationRates {
    n_sites: usize,
    sigma_p: BTreeMap<(usize, usize), RateFn>,
    sigma_q: BTreeMap<(usize, usize), RateFn>,
}

impl MigrationRates {
    pub fn new(n_sites: usize) -> Result<Self> {
        if n_sites < 2 {
            return Err(Error::InvalidModel(format!(
                "need at least 2 sites, got {n_sites}"
            )));
        }
        Ok(Self {
            n_sites,
            sigma_p: BTreeMap::new(),
            sigma_q: BTreeMap::new(),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    /// Sets `sigma^p_{to,from}`; zero-based indices, `to != from`.
    pub fn set_p(&mut self, to: usize, from: usize, rate: RateFn) -> Result<()> {
        self.check_pair(to, from)?;
        self.sigma_p.insert((to, from), rate);
        Ok(())
    }

    pub fn set_q(&mut self, to: usize, from: usize, rate: RateFn) -> Result<()> {
        self.check_pair(to, from)?;
        self.sigma_q.insert((to, from), rate);
        Ok(())
    }

    fn check_pair(&self, to: usize, from: usize) -> Result<()> {
        if to == from {
            return Err(Error::InvalidModel(format!(
                "transfer rate must be off-diagonal, got ({to},{from})"
            )));
        }
        if to >= self.n_sites || from >= self.n_sites {
            return Err(Error::InvalidModel(format!(
                "site index out of range in ({to},{from})"
            )));
        }
        Ok(())
    }

    pub fn rate_p(&self, to: usize, from: usize) -> Option<&RateFn> {
        self.sigma_p.get(&(to, from))
    }

    pub fn rate_q(&self, to: usize, from: usize) -> Option<&RateFn> {
        self.sigma_q.get(&(to, from))
    }

    /// Checks nonnegativity of every rate on a sample grid.
    pub fn validate(&self) -> Result<()> {
        for (species, map) in [('p', &self.sigma_p), ('q', &self.sigma_q)] {
            for (&(to, from), rate) in map {
                for j in 0..SPECTRAL_SAMPLES {
                    let theta = PERIOD * j as f64 / SPECTRAL_SAMPLES as f64;
                    let v = rate.eval(theta);
                    if v < 0.0 {
                        return Err(Error::NegativeRate {
                            species,
                            to: to + 1,
                            from: from + 1,
                            value: v,
                            theta,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Rates with every entry replaced by its period mean.
    pub fn averaged(&self) -> MigrationRates {
        let mut out = MigrationRates::new(self.n_sites).expect("n_sites already validated");
        for (&k, r) in &self.sigma_p {
            out.sigma_p.insert(k, RateFn::Const(r.mean()));
        }
        for (&k, r) in &self.sigma_q {
            out.sigma_q.insert(k, RateFn::Const(r.mean()));
        }
        out
    }
}

/// Per-site Lotka-Volterra rates.
#[derive(Clone, Debug)]
pub struct LvParams {
    pub a_p: DVector<f64>,
    pub b_p: DVector<f64>,
    pub a_q: DVector<f64>,
    pub b_q: DVector<f64>,
}

impl LvParams {
    pub fn new(a_p: Vec<f64>, b_p: Vec<f64>, a_q: Vec<f64>, b_q: Vec<f64>) -> Result<Self> {
        let n = a_p.len();
        if [&b_p, &a_q, &b_q].iter().any(|v| v.len() != n) {
            return Err(Error::InvalidModel(
                "Lotka-Volterra parameter vectors must share one length".into(),
            ));
        }
        if a_p
            .iter()
            .chain(&b_p)
            .chain(&a_q)
            .chain(&b_q)
            .any(|&x| x < 0.0 || !x.is_finite())
        {
            return Err(Error::InvalidModel(
                "Lotka-Volterra rates must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            a_p: DVector::from_vec(a_p),
            b_p: DVector::from_vec(b_p),
            a_q: DVector::from_vec(a_q),
            b_q: DVector::from_vec(b_q),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.a_p.len()
    }
}

/// `f_i = a_p_i p_i - b_p_i p_i q_i`, `g_i = -a_q_i q_i + b_q_i p_i q_i`.
pub fn lv_rhs(params: &LvParams, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let f = DVector::from_fn(p.len(), |i, _| {
        params.a_p[i] * p[i] - params.b_p[i] * p[i] * q[i]
    });
    let g = DVector::from_fn(q.len(), |i, _| {
        -params.a_q[i] * q[i] + params.b_q[i] * p[i] * q[i]
    });
    (f, g)
}

/// Builds the transport matrices: off-diagonal `sigma` entries, diagonal =
/// negative column sums, so that `1^T K = 0` identically.
pub fn build_transport(rates: &MigrationRates) -> Result<(PeriodicMatrixFn, PeriodicMatrixFn)> {
    rates.validate()?;
    let n = rates.n_sites();
    let build = |map: BTreeMap<(usize, usize), RateFn>| {
        let map = Arc::new(map);
        let m = map.clone();
        let eval = move |theta: f64| {
            let mut k = DMatrix::zeros(n, n);
            for (&(to, from), rate) in m.iter() {
                let v = rate.eval(theta);
                k[(to, from)] += v;
                k[(from, from)] -= v;
            }
            k
        };
        let deriv = move |theta: f64| {
            let mut k = DMatrix::zeros(n, n);
            for (&(to, from), rate) in map.iter() {
                let v = rate.eval_derivative(theta);
                k[(to, from)] += v;
                k[(from, from)] -= v;
            }
            k
        };
        PeriodicMatrixFn::new(n, PERIOD, eval, deriv)
    };
    Ok((
        build(rates.sigma_p.clone()),
        build(rates.sigma_q.clone()),
    ))
}

/// Checks Perron structure on a sample grid: 0 is a simple eigenvalue and all
/// other eigenvalues have strictly negative real part. Returns the gap
/// `beta = min_theta |max Re(nonzero spectrum)| / 2`.
pub fn verify_spectrum(k: &PeriodicMatrixFn, samples: usize) -> Result<f64> {
    let mut worst_re = f64::NEG_INFINITY;
    for j in 0..samples {
        let theta = PERIOD * j as f64 / samples as f64;
        let m = k.eval(theta);
        let scale = m.norm().max(1.0);
        let mut eigs: Vec<_> = m.complex_eigenvalues().iter().cloned().collect();
        eigs.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
        if eigs[0].norm() > TOL_NULL * scale {
            return Err(Error::SpectralHypothesis(format!(
                "no zero eigenvalue at theta = {theta} (closest has modulus {:.3e})",
                eigs[0].norm()
            )));
        }
        if eigs.len() > 1 && eigs[1].norm() <= TOL_NULL * scale {
            return Err(Error::SpectralHypothesis(format!(
                "zero eigenvalue not simple at theta = {theta}"
            )));
        }
        for l in &eigs[1..] {
            if l.re >= 0.0 {
                return Err(Error::SpectralHypothesis(format!(
                    "nonzero eigenvalue {l} with nonnegative real part at theta = {theta}"
                )));
            }
            worst_re = worst_re.max(l.re);
        }
    }
    Ok(-worst_re / 2.0)
}

/// One species' periodic migration equilibrium: the positive, sum-one kernel
/// vector of `K(theta)`, with its phase derivative.
#[derive(Clone)]
pub struct EquilibriumHalf {
    val: PeriodicVectorFn,
    der: PeriodicVectorFn,
}

impl EquilibriumHalf {
    pub fn eval(&self, theta: f64) -> DVector<f64> {
        self.val.eval(theta)
    }

    pub fn eval_derivative(&self, theta: f64) -> DVector<f64> {
        self.der.eval(theta)
    }

    pub fn as_vector_fn(&self) -> &PeriodicVectorFn {
        &self.val
    }

    /// Wraps a prescribed branch (used by synthetic stability studies, where
    /// positivity is deliberately not enforced).
    pub fn synthetic(fun: PeriodicVectorFn) -> Self {
        let der = fun.clone();
        Self {
            val: fun.clone(),
            der: PeriodicVectorFn::new(fun.dim(), fun.period(), move |t| der.eval_derivative(t), {
                let d2 = fun;
                move |t| {
                    let h = PERIOD / 8192.0;
                    (d2.eval_derivative(t - 2.0 * h) - d2.eval_derivative(t - h) * 8.0
                        + d2.eval_derivative(t + h) * 8.0
                        - d2.eval_derivative(t + 2.0 * h))
                        / (12.0 * h)
                }
            }),
        }
    }
}

/// Kernel vector of `K(theta)` normalized to unit coordinate sum.
fn perron_vector(k: &PeriodicMatrixFn, theta: f64) -> Result<DVector<f64>> {
    let m = k.eval(theta);
    let n = m.nrows();
    let scale = m.norm().max(1.0);
    let svd = m.svd(false, true);
    let s = &svd.singular_values;
    let smin = s[n - 1];
    if smin > TOL_NULL * scale {
        return Err(Error::SpectralHypothesis(format!(
            "kernel empty at theta = {theta} (sigma_min = {smin:.3e})"
        )));
    }
    if n > 1 && s[n - 2] <= TOL_NULL * scale {
        return Err(Error::SpectralHypothesis(format!(
            "kernel dimension > 1 at theta = {theta}"
        )));
    }
    let vt = svd.v_t.expect("v_t requested");
    let v = vt.row(n - 1).transpose();
    let sum: f64 = v.iter().sum();
    if sum.abs() < 1e-14 {
        return Err(Error::SpectralHypothesis(format!(
            "kernel vector orthogonal to 1 at theta = {theta}"
        )));
    }
    let v = v / sum;
    if v.iter().any(|&x| x <= 0.0) {
        return Err(Error::SpectralHypothesis(format!(
            "kernel vector has a nonpositive entry at theta = {theta}; Perron structure violated"
        )));
    }
    Ok(v)
}

/// Computes the smooth equilibrium branch of one transport matrix.
///
/// The kernel vector of `K(theta)` (unique under the positivity and sum-one
/// normalization) is sampled on a dense grid and interpolated by a periodic
/// cubic spline; the derivative uses 4th-order centered differences of the
/// node values.
pub fn equilibrium_branch(k: &PeriodicMatrixFn, samples: usize) -> Result<EquilibriumHalf> {
    verify_spectrum(k, samples.min(128))?;
    let samples = samples.max(64);
    let h = PERIOD / samples as f64;
    let mut nodes = Vec::with_capacity(samples);
    for j in 0..samples {
        nodes.push(perron_vector(k, j as f64 * h)?);
    }
    let der: Vec<DVector<f64>> = (0..samples)
        .map(|j| {
            let v = |o: isize| &nodes[((j as isize + o).rem_euclid(samples as isize)) as usize];
            (v(-2) - v(-1) * 8.0 + v(1) * 8.0 - v(2)) / (12.0 * h)
        })
        .collect();
    let val = crate::periodic::PeriodicSpline::from_samples(PERIOD, nodes);
    let der = crate::periodic::PeriodicSpline::from_samples(PERIOD, der);
    Ok(EquilibriumHalf {
        val: val.as_vector_fn(),
        der: der.as_vector_fn(),
    })
}

/// Both species' equilibrium branches.
#[derive(Clone)]
pub struct EquilibriumBranch {
    pub p: EquilibriumHalf,
    pub q: EquilibriumHalf,
}

/// The zero-sum-subspace projections.
///
/// `J1` is the (N-1)xN matrix `[Id | 0]`; `J2` is the Nx(N-1) matrix with
/// identity on top of a row of -1, so that `J2 J1 y = y` on `1^T y = 0` and
/// `K~ = J1 K J2` carries the nonzero spectrum of `K`.
pub fn projections(n: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    if n < 2 {
        return Err(Error::InvalidModel(format!(
            "projections need N >= 2, got {n}"
        )));
    }
    let mut j1 = DMatrix::zeros(n - 1, n);
    let mut j2 = DMatrix::zeros(n, n - 1);
    for i in 0..n - 1 {
        j1[(i, i)] = 1.0;
        j2[(i, i)] = 1.0;
    }
    for j in 0..n - 1 {
        j2[(n - 1, j)] = -1.0;
    }
    Ok((j1, j2))
}

/// The complete stiff model of the coupled transport + interaction system.
pub struct FullModel {
    pub rates: MigrationRates,
    pub params: LvParams,
    pub k_p: PeriodicMatrixFn,
    pub k_q: PeriodicMatrixFn,
    pub eps: f64,
    pub spectral_gap_beta: f64,
}

impl FullModel {
    pub fn new(rates: MigrationRates, params: LvParams, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::InvalidModel(format!("eps must be positive, got {eps}")));
        }
        if params.n_sites() != rates.n_sites() {
            return Err(Error::InvalidModel(format!(
                "rates have {} sites but LV parameters have {}",
                rates.n_sites(),
                params.n_sites()
            )));
        }
        let (k_p, k_q) = build_transport(&rates)?;
        let beta_p = verify_spectrum(&k_p, SPECTRAL_SAMPLES)?;
        let beta_q = verify_spectrum(&k_q, SPECTRAL_SAMPLES)?;
        Ok(Self {
            rates,
            params,
            k_p,
            k_q,
            eps,
            spectral_gap_beta: beta_p.min(beta_q),
        })
    }

    pub fn n_sites(&self) -> usize {
        self.params.n_sites()
    }

    /// Equilibrium branches of both transport matrices.
    pub fn branch(&self) -> Result<EquilibriumBranch> {
        Ok(EquilibriumBranch {
            p: equilibrium_branch(&self.k_p, SPECTRAL_SAMPLES)?,
            q: equilibrium_branch(&self.k_q, SPECTRAL_SAMPLES)?,
        })
    }

    /// Full right-hand side of the stiff system at time `t`.
    pub fn rhs(&self, t: f64, p: &DVector<f64>, q: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let theta = t / self.eps;
        let (f, g) = lv_rhs(&self.params, p, q);
        (
            self.k_p.eval(theta) * p / self.eps + f,
            self.k_q.eval(theta) * q / self.eps + g,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::modelfile::paper_n2_rates;

    #[test]
    fn transport_matches_two_site_example() {
        let rates = paper_n2_rates().unwrap();
        let (kp, kq) = build_transport(&rates).unwrap();
        let kp0 = kp.eval(0.0);
        assert_eq!(kp0, DMatrix::from_row_slice(2, 2, &[-3.0, 2.0, 3.0, -2.0]));
        let kq0 = kq.eval(0.0);
        assert_eq!(kq0, DMatrix::from_row_slice(2, 2, &[-2.0, 3.0, 2.0, -3.0]));
    }

    #[test]
    fn transport_columns_sum_to_zero() {
        let rates = paper_n2_rates().unwrap();
        let (kp, _) = build_transport(&rates).unwrap();
        for j in 0..64 {
            let theta = PERIOD * j as f64 / 64.0;
            let m = kp.eval(theta);
            for c in 0..2 {
                let s: f64 = m.column(c).iter().sum();
                assert_eq!(s, 0.0, "column sum exactly zero by construction");
            }
        }
    }

    #[test]
    fn spectrum_of_two_site_transport() {
        // nonzero eigenvalue is -(cos + sin + 4); min |.| of it over theta is
        // 4 - sqrt(2), so beta = (4 - sqrt(2))/2
        let rates = paper_n2_rates().unwrap();
        let (kp, kq) = build_transport(&rates).unwrap();
        let beta_p = verify_spectrum(&kp, 512).unwrap();
        let beta_q = verify_spectrum(&kq, 512).unwrap();
        let expected = (4.0 - 2.0_f64.sqrt()) / 2.0;
        assert!((beta_p - expected).abs() < 1e-3, "beta_p = {beta_p}");
        assert!((beta_q - expected).abs() < 1e-3, "beta_q = {beta_q}");
    }

    #[test]
    fn zero_transport_is_degenerate() {
        let mut rates = MigrationRates::new(2).unwrap();
        rates.set_p(0, 1, RateFn::Const(0.0)).unwrap();
        rates.set_p(1, 0, RateFn::Const(0.0)).unwrap();
        let (kp, _) = build_transport(&rates).unwrap();
        assert!(matches!(
            verify_spectrum(&kp, 16),
            Err(Error::SpectralHypothesis(_))
        ));
    }

    #[test]
    fn equilibrium_branch_two_site() {
        let rates = paper_n2_rates().unwrap();
        let (kp, _) = build_transport(&rates).unwrap();
        let branch = equilibrium_branch(&kp, 1024).unwrap();
        let v0 = branch.eval(0.0);
        assert!((v0[0] - 0.4).abs() < 1e-12, "p_eq(0) = {v0}");
        assert!((v0[1] - 0.6).abs() < 1e-12);
        // closed form over theta
        for &t in &[0.5f64, 1.7, 3.3, 5.9] {
            let d = t.cos() + t.sin() + 4.0;
            let exact = DVector::from_vec(vec![(t.sin() + 2.0) / d, (t.cos() + 2.0) / d]);
            assert!((branch.eval(t) - &exact).norm() < 1e-11, "theta = {t}");
        }
    }

    #[test]
    fn equilibrium_residual_and_derivative() {
        let rates = paper_n2_rates().unwrap();
        let (kp, _) = build_transport(&rates).unwrap();
        let branch = equilibrium_branch(&kp, 1024).unwrap();
        for j in 0..64 {
            let t = PERIOD * j as f64 / 64.0;
            let res = kp.eval(t) * branch.eval(t);
            assert!(res.norm() <= 1e-10, "residual {} at {t}", res.norm());
        }
        // derivative vs closed form d/dt[(sin+2)/(cos+sin+4)]
        for &t in &[0.3f64, 2.0, 4.8] {
            let (s, c) = (t.sin(), t.cos());
            let d = c + s + 4.0;
            let exact = (c * d - (s + 2.0) * (c - s)) / (d * d);
            let got = branch.eval_derivative(t)[0];
            assert!((got - exact).abs() < 1e-8, "dp_eq at {t}: {got} vs {exact}");
        }
    }

    #[test]
    fn lv_rhs_paper_values() {
        let params = LvParams::new(
            vec![0.4, 0.3],
            vec![0.2, 0.1],
            vec![0.1, 0.2],
            vec![0.5, 0.3],
        )
        .unwrap();
        let one = DVector::from_element(2, 1.0);
        let (f, g) = lv_rhs(&params, &one, &one);
        assert!((f - DVector::from_vec(vec![0.2, 0.2])).norm() < 1e-15);
        assert!((g - DVector::from_vec(vec![0.4, 0.1])).norm() < 1e-15);

        let zero = DVector::zeros(2);
        let (f0, g0) = lv_rhs(&params, &zero, &zero);
        assert_eq!(f0.norm(), 0.0);
        assert_eq!(g0.norm(), 0.0);
    }

    #[test]
    fn lv_rhs_no_interaction_decouples() {
        let params = LvParams::new(vec![0.4, 0.3], vec![0.0; 2], vec![0.1, 0.2], vec![0.0; 2]).unwrap();
        let p = DVector::from_vec(vec![2.0, 3.0]);
        let q = DVector::from_vec(vec![1.0, 5.0]);
        let (f, g) = lv_rhs(&params, &p, &q);
        assert!((f - DVector::from_vec(vec![0.8, 0.9])).norm() < 1e-15);
        assert!((g - DVector::from_vec(vec![-0.1, -1.0])).norm() < 1e-15);
    }

    #[test]
    fn projections_two_site() {
        let (j1, j2) = projections(2).unwrap();
        assert_eq!(j1, DMatrix::from_row_slice(1, 2, &[1.0, 0.0]));
        assert_eq!(j2, DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        let y = DVector::from_vec(vec![0.5, -0.5]);
        assert_eq!(&j2 * (&j1 * &y), y);
    }

    #[test]
    fn projected_transport_is_scalar_closed_form() {
        let rates = paper_n2_rates().unwrap();
        let (kp, _) = build_transport(&rates).unwrap();
        let (j1, j2) = projections(2).unwrap();
        for &t in &[0.0f64, 1.0, 2.5, 5.0] {
            let ktil = &j1 * kp.eval(t) * &j2;
            let exact = -(t.cos() + t.sin() + 4.0);
            assert!((ktil[(0, 0)] - exact).abs() < 1e-14);
        }
    }

    #[test]
    fn spectral_equivalence_of_projection() {
        let rates = paper_n2_rates().unwrap();
        let (kp, _) = build_transport(&rates).unwrap();
        let (j1, j2) = projections(2).unwrap();
        for j in 0..32 {
            let t = PERIOD * j as f64 / 32.0;
            let full = kp.eval(t);
            let mut eigs: Vec<_> = full.complex_eigenvalues().iter().cloned().collect();
            eigs.sort_by(|a, b| a.norm().partial_cmp(&b.norm()).unwrap());
            let ktil = &j1 * full * &j2;
            let proj_eig = ktil.complex_eigenvalues()[0];
            assert!((proj_eig - eigs[1]).norm() < 1e-10);
        }
    }

    #[test]
    fn negative_rate_rejected() {
        let mut rates = MigrationRates::new(2).unwrap();
        rates.set_p(0, 1, RateFn::CosOffset { amp: 2.0, offset: 1.0 }).unwrap();
        rates.set_p(1, 0, RateFn::Const(1.0)).unwrap();
        assert!(matches!(
            rates.validate(),
            Err(Error::NegativeRate { .. })
        ));
    }
}
