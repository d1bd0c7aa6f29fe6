//! Experiment orchestration: presets, pipeline runs, error studies, slope
//! fits, sigma reports and plot-ready CSV emission.

use crate::averaging::{averaged_field, stability_report, StabilityReport, SyntheticSigmaParams};
use crate::error::{Error, Result};
use crate::integrate::{
    integrate_averaged, integrate_full, integrate_reduced, IntegratorConfig, Trajectory,
};
use crate::manifold::{fixed_point_oracle, oracle_truncation, ManifoldExpansion};
use crate::model::FullModel;
use crate::modelfile::{self, PRESET_PAPER_N2, PRESET_PAPER_SIGMA};
use crate::periodic::QuadratureRule;
use crate::reduction::{assemble_reduced, to_slow_fast, z_coordinates, StiffRemover};
use crate::resolvent::ResolventCache;
use crate::PERIOD;
use nalgebra::{DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// Fixed seed for the oracle sampling points; keeps every run byte-identical.
const ORACLE_SEED: u64 = 0x5eed_0001;

/// Which pipeline an experiment runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExperimentKind {
    DirectRun,
    ManifoldTables,
    ReducedRun,
    AveragedRun,
    TransientDecay,
    SlopeStudy,
    SigmaReport,
    OracleCheck,
}

impl ExperimentKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "direct_run" => Self::DirectRun,
            "manifold_tables" => Self::ManifoldTables,
            "reduced_run" => Self::ReducedRun,
            "averaged_run" => Self::AveragedRun,
            "transient_decay" => Self::TransientDecay,
            "slope_study" => Self::SlopeStudy,
            "sigma_report" => Self::SigmaReport,
            "oracle_check" => Self::OracleCheck,
            other => {
                return Err(Error::InvalidInput(format!(
                    "unknown experiment kind '{other}'"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::DirectRun => "direct_run",
            Self::ManifoldTables => "manifold_tables",
            Self::ReducedRun => "reduced_run",
            Self::AveragedRun => "averaged_run",
            Self::TransientDecay => "transient_decay",
            Self::SlopeStudy => "slope_study",
            Self::SigmaReport => "sigma_report",
            Self::OracleCheck => "oracle_check",
        }
    }
}

/// Where the model comes from.
#[derive(Clone, Debug)]
pub enum ModelSource {
    Preset(String),
    File(PathBuf),
}

/// A fully described experiment.
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub source: ModelSource,
    pub kind: ExperimentKind,
    pub eps_list: Vec<f64>,
    pub t_end: Option<f64>,
    pub out_dir: PathBuf,
    /// manifold truncation order used by reduced runs (0, 1 or 2)
    pub manifold_order: usize,
}

impl ExperimentSpec {
    pub fn new(source: ModelSource, kind: ExperimentKind, out_dir: PathBuf) -> Self {
        Self {
            source,
            kind,
            eps_list: Vec::new(),
            t_end: None,
            out_dir,
            manifold_order: default_manifold_order(kind),
        }
    }

    fn validate(&self) -> Result<()> {
        for &e in &self.eps_list {
            if !(e > 0.0 && e < 1.0) {
                return Err(Error::InvalidInput(format!(
                    "eps values must lie in (0, 1), got {e}"
                )));
            }
        }
        Ok(())
    }
}

fn default_manifold_order(kind: ExperimentKind) -> usize {
    match kind {
        // the paper's error-vs-eps protocol truncates the manifold at its
        // leading term (z = 0 in the adapted frame)
        ExperimentKind::SlopeStudy | ExperimentKind::TransientDecay => 0,
        _ => 1,
    }
}

/// Parses the line-based experiment description (`key = value`).
pub fn parse_experiment_spec(text: &str, out_default: &Path) -> Result<ExperimentSpec> {
    let mut source = None;
    let mut kind = None;
    let mut eps_list = Vec::new();
    let mut t_end = None;
    let mut out_dir = out_default.to_path_buf();
    let mut order = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
            line: idx + 1,
            msg: format!("expected 'key = value', got '{line}'"),
        })?;
        let (k, v) = (k.trim(), v.trim());
        let err = |msg: String| Error::Parse {
            line: idx + 1,
            msg,
        };
        match k {
            "preset" => source = Some(ModelSource::Preset(v.to_string())),
            "model" => source = Some(ModelSource::File(PathBuf::from(v))),
            "kind" => kind = Some(ExperimentKind::parse(v)?),
            "eps" => {
                eps_list = v
                    .split_whitespace()
                    .map(str::parse::<f64>)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| err(format!("bad eps list: {e}")))?;
            }
            "t_end" => {
                t_end = Some(v.parse::<f64>().map_err(|e| err(format!("bad t_end: {e}")))?)
            }
            "out" => out_dir = PathBuf::from(v),
            "order" => {
                order = Some(
                    v.parse::<usize>()
                        .map_err(|e| err(format!("bad order: {e}")))?,
                )
            }
            other => return Err(err(format!("unknown key '{other}'"))),
        }
    }
    let kind = kind.ok_or_else(|| Error::InvalidInput("missing experiment kind".into()))?;
    let mut spec = ExperimentSpec::new(
        source.ok_or_else(|| Error::InvalidInput("missing preset/model".into()))?,
        kind,
        out_dir,
    );
    spec.eps_list = eps_list;
    spec.t_end = t_end;
    if let Some(o) = order {
        spec.manifold_order = o;
    }
    Ok(spec)
}

/// Least-squares fit of `ln e` against `ln eps`.
#[derive(Clone, Copy, Debug)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

pub fn fit_slope(points: &[(f64, f64)]) -> Result<SlopeFit> {
    if points.len() < 2 {
        return Err(Error::InvalidInput(
            "slope fit needs at least two points".into(),
        ));
    }
    if points.iter().any(|&(x, y)| !(x > 0.0) || !(y > 0.0)) {
        return Err(Error::InvalidInput(
            "slope fit needs positive abscissae and errors".into(),
        ));
    }
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let (slope, intercept) = crate::resolvent::linear_fit(&xs, &ys);
    let n = xs.len() as f64;
    let mean_x = xs.iter().sum::<f64>() / n;
    let ss_res: f64 = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| (y - slope * x - intercept).powi(2))
        .sum();
    let ss_x: f64 = xs.iter().map(|&x| (x - mean_x).powi(2)).sum();
    let stderr = if points.len() > 2 && ss_x > 0.0 {
        (ss_res / (n - 2.0) / ss_x).sqrt()
    } else {
        0.0
    };
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
    })
}

#[derive(Clone, Debug)]
pub struct SlopeStudyResult {
    pub eps: Vec<f64>,
    pub err_p: Vec<f64>,
    pub err_q: Vec<f64>,
    pub fit_p: SlopeFit,
    pub fit_q: SlopeFit,
}

#[derive(Clone, Debug)]
pub struct TransientResult {
    pub eps: f64,
    pub fitted_rate: f64,
    pub plateau: f64,
    pub mu_hat: f64,
    pub series: Vec<(f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct OracleCheckResult {
    pub eps: Vec<f64>,
    pub mean_diff: Vec<f64>,
    pub fit: SlopeFit,
    pub contraction: Vec<f64>,
}

/// Everything the experiments need, assembled once per model.
pub struct Pipeline {
    pub model: FullModel,
    pub fields: crate::reduction::ReducedVectorFields,
    pub cache: ResolventCache,
}

/// Default domain radius: generous multiple of the populations in play.
pub const DEFAULT_DOMAIN_RADIUS: f64 = 10.0;

impl Pipeline {
    pub fn new(model: FullModel) -> Result<Self> {
        let fields = assemble_reduced(&model, DEFAULT_DOMAIN_RADIUS)?;
        let cache = ResolventCache::new(fields.b_matrix())?;
        Ok(Self {
            model,
            fields,
            cache,
        })
    }

    pub fn manifold(&self, order: usize) -> Result<ManifoldExpansion> {
        ManifoldExpansion::truncated(&self.fields, &self.cache, order)
    }

    pub fn with_eps(&self, eps: f64) -> Result<FullModel> {
        FullModel::new(self.model.rates.clone(), self.model.params.clone(), eps)
    }

    pub fn remover(&self) -> StiffRemover {
        StiffRemover {
            i_p: self.fields.remover_p().clone(),
            i_q: self.fields.remover_q().clone(),
        }
    }
}

/// The default initial data of the two-site example.
pub fn default_initial_data(n: usize) -> (DVector<f64>, DVector<f64>) {
    if n == 2 {
        (
            DVector::from_vec(vec![0.1, 0.2]),
            DVector::from_vec(vec![0.3, 0.4]),
        )
    } else {
        (
            DVector::from_element(n, 0.15),
            DVector::from_element(n, 0.35),
        )
    }
}

/// Reference step refinement for error studies: dt = eps^3 / 4 keeps the
/// reference's own first-order error well under the measured model error.
const REFERENCE_REFINEMENT: f64 = 0.25;

/// Convergence study of the truncated-manifold reconstruction against the
/// stiff reference, on-manifold initial data, max error over `[0, 10 eps]`.
pub fn run_slope_study(
    pipe: &Pipeline,
    eps_list: &[f64],
    order: usize,
) -> Result<SlopeStudyResult> {
    if eps_list.len() < 2 {
        return Err(Error::InvalidInput(
            "slope study needs at least two eps values".into(),
        ));
    }
    let manifold = pipe.manifold(order)?;
    let (p0d, q0d) = default_initial_data(pipe.model.n_sites());
    let x0 = Vector2::new(p0d.sum(), q0d.sum());
    let mut err_p = Vec::new();
    let mut err_q = Vec::new();
    for &eps in eps_list {
        let model = pipe.with_eps(eps)?;
        // initial data on the leading-order manifold: z(0) = h~(X0, 0)
        let z0 = manifold.h_tilde(&x0, 0.0, eps);
        let (p0, q0) = pipe.fields.populations(&x0, &z0, 0.0);
        let t_end = 10.0 * eps;
        let dt_ref = eps.powi(3) * REFERENCE_REFINEMENT;
        let stride = ((t_end / dt_ref) as usize / 800).max(1);
        let cfg = IntegratorConfig::implicit_euler(dt_ref).with_stride(stride);
        let reference = integrate_full(&model, &p0, &q0, t_end, &cfg)?;

        let cfg_red = IntegratorConfig::rk4(eps / 200.0);
        let reduced = integrate_reduced(&pipe.fields, &manifold, eps, x0, 0.0, t_end, &cfg_red)?;

        let (mut ep, mut eq) = (0.0f64, 0.0f64);
        for (t, s) in reference.times.iter().zip(&reference.states) {
            let red = reduced.sample(*t);
            let x = Vector2::new(red[0], red[1]);
            let theta = t / eps;
            let z = manifold.h_tilde(&x, theta, eps);
            let (ph, qh) = pipe.fields.populations(&x, &z, theta);
            let n = pipe.model.n_sites();
            for i in 0..n {
                ep = ep.max((ph[i] - s[i]).abs());
                eq = eq.max((qh[i] - s[n + i]).abs());
            }
        }
        err_p.push(ep);
        err_q.push(eq);
    }
    let pts_p: Vec<(f64, f64)> = eps_list.iter().cloned().zip(err_p.iter().cloned()).collect();
    let pts_q: Vec<(f64, f64)> = eps_list.iter().cloned().zip(err_q.iter().cloned()).collect();
    Ok(SlopeStudyResult {
        eps: eps_list.to_vec(),
        err_p,
        err_q,
        fit_p: fit_slope(&pts_p)?,
        fit_q: fit_slope(&pts_q)?,
    })
}

/// Off-manifold transient: fits the decay rate of `||Z - h~(X, theta)||`
/// against `t / eps` and measures the plateau level.
pub fn run_transient_decay(
    pipe: &Pipeline,
    eps: f64,
    order: usize,
) -> Result<TransientResult> {
    let manifold = pipe.manifold(order)?;
    let model = pipe.with_eps(eps)?;
    let (p0, q0) = default_initial_data(pipe.model.n_sites());
    let t_end = 3.0 * eps;
    let dt = eps.powi(3);
    let stride = ((t_end / dt) as usize / 1500).max(1);
    let cfg = IntegratorConfig::implicit_euler(dt).with_stride(stride);
    let traj = integrate_full(&model, &p0, &q0, t_end, &cfg)?;

    let branch = pipe.fields.branch();
    let remover = pipe.remover();
    let mut series = Vec::with_capacity(traj.times.len());
    let n = pipe.model.n_sites();
    for (t, s) in traj.times.iter().zip(&traj.states) {
        let theta = t / eps;
        let p = s.rows(0, n).clone_owned();
        let q = s.rows(n, n).clone_owned();
        let frame = to_slow_fast(&p, &q, theta, branch);
        let z = z_coordinates(&frame, theta, &remover);
        let x = Vector2::new(frame.x_p, frame.x_q);
        let dev = (&z - manifold.h_tilde(&x, theta, eps)).norm();
        series.push((t / eps, dev));
    }

    let tail_start = series.len() * 4 / 5;
    let mut tail: Vec<f64> = series[tail_start..].iter().map(|p| p.1).collect();
    tail.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let plateau = tail[tail.len() / 2];

    let fit_pts: Vec<(f64, f64)> = series
        .iter()
        .filter(|&&(_, d)| d > 5.0 * plateau)
        .map(|&(tau, d)| (tau, d))
        .collect();
    if fit_pts.len() < 8 {
        return Err(Error::InvalidInput(format!(
            "transient window too short for a rate fit ({} points above the plateau)",
            fit_pts.len()
        )));
    }
    let xs: Vec<f64> = fit_pts.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = fit_pts.iter().map(|p| p.1.ln()).collect();
    let (slope, _) = crate::resolvent::linear_fit(&xs, &ys);

    Ok(TransientResult {
        eps,
        fitted_rate: -slope,
        plateau,
        mu_hat: pipe.cache.decay_rate(),
        series,
    })
}

/// Compares the fixed-point oracle with the first-order manifold at seeded
/// sample points, per epsilon.
pub fn run_oracle_check(pipe: &Pipeline, eps_list: &[f64], n_points: usize) -> Result<OracleCheckResult> {
    let manifold = pipe.manifold(1)?;
    let b = pipe.fields.b_matrix();
    let trunc = oracle_truncation(pipe.cache.decay_rate(), PERIOD);
    let mut rng = ChaCha8Rng::seed_from_u64(ORACLE_SEED);
    let points: Vec<(Vector2<f64>, f64)> = (0..n_points)
        .map(|_| {
            (
                Vector2::new(rng.gen_range(0.25..0.75), rng.gen_range(0.25..0.75)),
                rng.gen_range(0.0..PERIOD),
            )
        })
        .collect();

    let mut mean_diff = Vec::new();
    let mut contraction = Vec::new();
    for &eps in eps_list {
        let mut acc = 0.0;
        for &(x0, theta0) in &points {
            let out = fixed_point_oracle(&pipe.fields, &b, eps, x0, theta0, trunc, 14)?;
            let diff = (&out.value - manifold.h_tilde(&x0, theta0, eps)).norm();
            acc += diff;
            if out.iterate_distances.len() >= 2 && out.iterate_distances[0] > 0.0 {
                contraction.push(out.iterate_distances[1] / out.iterate_distances[0]);
            }
        }
        mean_diff.push(acc / points.len() as f64);
    }
    let pts: Vec<(f64, f64)> = eps_list.iter().cloned().zip(mean_diff.iter().cloned()).collect();
    Ok(OracleCheckResult {
        eps: eps_list.to_vec(),
        mean_diff,
        fit: fit_slope(&pts)?,
        contraction,
    })
}

// ---------------------------------------------------------------------------
// CSV / report emission
// ---------------------------------------------------------------------------

/// Fixed 17-significant-digit formatting shared by every emitted number.
pub fn fmt_g17(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_csv(path: &Path, header: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "{}", header.join(","));
    for row in rows {
        let cols: Vec<String> = row.iter().map(|&v| fmt_g17(v)).collect();
        let _ = writeln!(s, "{}", cols.join(","));
    }
    std::fs::write(path, s)?;
    Ok(())
}

fn trajectory_rows(traj: &Trajectory) -> Vec<Vec<f64>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(t, s)| {
            let mut row = vec![*t];
            row.extend(s.iter());
            row
        })
        .collect()
}

pub fn write_trajectory_csv(path: &Path, traj: &Trajectory, n_sites: usize) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(traj.column_names(n_sites));
    write_csv(path, &header, &trajectory_rows(traj))
}

/// Outcome of one experiment: the files written plus a human-readable summary.
pub struct ExperimentOutcome {
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Runs one experiment end-to-end and writes its outputs.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    spec.validate()?;
    std::fs::create_dir_all(&spec.out_dir)?;

    if spec.kind == ExperimentKind::SigmaReport {
        return run_sigma_report(spec);
    }

    let model = match &spec.source {
        ModelSource::Preset(name) if name == PRESET_PAPER_N2 => modelfile::paper_n2_model(
            spec.eps_list.first().copied().unwrap_or(0.1),
        )?,
        ModelSource::Preset(name) => return Err(Error::UnknownPreset(name.clone())),
        ModelSource::File(path) => modelfile::load_model_file(path)?,
    };
    let eps0 = spec.eps_list.first().copied().unwrap_or(model.eps);
    let pipe = Pipeline::new(model)?;
    let mut files = Vec::new();
    let mut summary = String::new();

    match spec.kind {
        ExperimentKind::DirectRun => {
            let (p0, q0) = default_initial_data(pipe.model.n_sites());
            let model = pipe.with_eps(eps0)?;
            let t_end = spec.t_end.unwrap_or(10.0);
            let dt = eps0.powi(3);
            let stride = ((t_end / dt) as usize / 4000).max(1);
            let cfg = IntegratorConfig::implicit_euler(dt).with_stride(stride);
            let traj = integrate_full(&model, &p0, &q0, t_end, &cfg)?;
            let path = spec.out_dir.join(format!("direct_eps{eps0}.csv"));
            write_trajectory_csv(&path, &traj, pipe.model.n_sites())?;
            let _ = writeln!(
                summary,
                "direct run: eps = {eps0}, dt = {dt:.3e}, {} captured states",
                traj.times.len()
            );
            files.push(path);
        }
        ExperimentKind::ManifoldTables => {
            files.extend(write_manifold_tables(&pipe, &spec.out_dir)?);
            let _ = writeln!(summary, "manifold coefficient tables written");
        }
        ExperimentKind::ReducedRun => {
            let manifold = pipe.manifold(spec.manifold_order)?;
            let (p0d, q0d) = default_initial_data(pipe.model.n_sites());
            let x0 = Vector2::new(p0d.sum(), q0d.sum());
            let t_end = spec.t_end.unwrap_or(10.0);
            let cfg = IntegratorConfig::rk4(eps0 / 100.0).with_stride(10);
            let traj = integrate_reduced(&pipe.fields, &manifold, eps0, x0, 0.0, t_end, &cfg)?;
            let path = spec.out_dir.join(format!("reduced_eps{eps0}.csv"));
            write_trajectory_csv(&path, &traj, pipe.model.n_sites())?;
            files.push(path);
            // reconstructed populations
            let n = pipe.model.n_sites();
            let mut rows = Vec::new();
            for (t, s) in traj.times.iter().zip(&traj.states) {
                let x = Vector2::new(s[0], s[1]);
                let theta = t / eps0;
                let z = s.rows(2, 2 * (n - 1)).clone_owned();
                let (p, q) = pipe.fields.populations(&x, &z, theta);
                let mut row = vec![*t];
                row.extend(p.iter());
                row.extend(q.iter());
                rows.push(row);
            }
            let mut header = vec!["t".to_string()];
            header.extend((1..=n).map(|i| format!("p{i}")));
            header.extend((1..=n).map(|i| format!("q{i}")));
            let path = spec.out_dir.join(format!("reduced_pq_eps{eps0}.csv"));
            write_csv(&path, &header, &rows)?;
            files.push(path);
            let _ = writeln!(
                summary,
                "reduced run: eps = {eps0}, manifold order {}",
                spec.manifold_order
            );
        }
        ExperimentKind::AveragedRun => {
            let rule = QuadratureRule::new(1024)?;
            let avg = averaged_field(
                &pipe.fields,
                &pipe.cache,
                spec.manifold_order.min(1),
                &rule,
            )?;
            let (p0d, q0d) = default_initial_data(pipe.model.n_sites());
            let x0 = Vector2::new(p0d.sum(), q0d.sum());
            let t_end = spec.t_end.unwrap_or(10.0);
            let cfg = IntegratorConfig::rk4(0.01);
            let traj = integrate_averaged(&avg, eps0, x0, t_end, &cfg)?;
            let path = spec.out_dir.join(format!("averaged_eps{eps0}.csv"));
            write_trajectory_csv(&path, &traj, pipe.model.n_sites())?;
            files.push(path);
            let (a, b, c, d) = avg.f0.lv_form();
            let _ = writeln!(
                summary,
                "averaged run: order {}, LV form A={a:.6} B={b:.6} C={c:.6} D={d:.6}",
                avg.order()
            );
        }
        ExperimentKind::TransientDecay => {
            let eps_list = if spec.eps_list.is_empty() {
                vec![0.1, 0.01]
            } else {
                spec.eps_list.clone()
            };
            for &eps in &eps_list {
                let res = run_transient_decay(&pipe, eps, spec.manifold_order)?;
                let rows: Vec<Vec<f64>> = res
                    .series
                    .iter()
                    .map(|&(tau, d)| vec![tau * eps, tau, d, d.max(1e-300).ln()])
                    .collect();
                let path = spec.out_dir.join(format!("transient_eps{eps}.csv"));
                write_csv(
                    &path,
                    &[
                        "t".into(),
                        "t_over_eps".into(),
                        "deviation".into(),
                        "log_deviation".into(),
                    ],
                    &rows,
                )?;
                files.push(path);
                let _ = writeln!(
                    summary,
                    "transient eps = {eps}: fitted rate {:.4} (mu_hat {:.4}), plateau {:.4e}",
                    res.fitted_rate, res.mu_hat, res.plateau
                );
            }
        }
        ExperimentKind::SlopeStudy => {
            let eps_list = if spec.eps_list.is_empty() {
                vec![0.2, 0.1, 0.05, 0.025]
            } else {
                spec.eps_list.clone()
            };
            let res = run_slope_study(&pipe, &eps_list, spec.manifold_order)?;
            let rows: Vec<Vec<f64>> = res
                .eps
                .iter()
                .zip(res.err_p.iter().zip(&res.err_q))
                .map(|(&e, (&ep, &eq))| vec![e, ep, eq])
                .collect();
            let path = spec.out_dir.join("slope_study.csv");
            write_csv(&path, &["eps".into(), "err_p".into(), "err_q".into()], &rows)?;
            files.push(path);
            let _ = writeln!(
                summary,
                "slope study (manifold order {}): slope_p = {:.4} +/- {:.4}, slope_q = {:.4} +/- {:.4}",
                spec.manifold_order,
                res.fit_p.slope,
                res.fit_p.stderr,
                res.fit_q.slope,
                res.fit_q.stderr
            );
        }
        ExperimentKind::OracleCheck => {
            let eps_list = if spec.eps_list.is_empty() {
                vec![0.1, 0.05, 0.025]
            } else {
                spec.eps_list.clone()
            };
            let res = run_oracle_check(&pipe, &eps_list, 5)?;
            let rows: Vec<Vec<f64>> = res
                .eps
                .iter()
                .zip(&res.mean_diff)
                .map(|(&e, &d)| vec![e, d])
                .collect();
            let path = spec.out_dir.join("oracle_check.csv");
            write_csv(&path, &["eps".into(), "mean_abs_diff".into()], &rows)?;
            files.push(path);
            let worst_contraction = res.contraction.iter().cloned().fold(0.0, f64::max);
            let _ = writeln!(
                summary,
                "oracle check: |T-fixed-point - eps h1| log-log slope {:.4} (contraction <= {:.3})",
                res.fit.slope, worst_contraction
            );
        }
        ExperimentKind::SigmaReport => unreachable!(),
    }

    Ok(ExperimentOutcome { files, summary })
}

fn run_sigma_report(spec: &ExperimentSpec) -> Result<ExperimentOutcome> {
    let rule = QuadratureRule::new(1024)?;
    let report: StabilityReport = match &spec.source {
        ModelSource::Preset(name) if name == PRESET_PAPER_SIGMA => {
            let params = SyntheticSigmaParams::paper();
            stability_report(&params.input(), &rule, PRESET_PAPER_SIGMA)?
        }
        ModelSource::Preset(name) if name == PRESET_PAPER_N2 => {
            let model = modelfile::paper_n2_model(spec.eps_list.first().copied().unwrap_or(0.1))?;
            crate::averaging::stability_report_for_model(&model, &rule)?
        }
        ModelSource::Preset(name) => return Err(Error::UnknownPreset(name.clone())),
        ModelSource::File(path) => {
            let model = modelfile::load_model_file(path)?;
            crate::averaging::stability_report_for_model(&model, &rule)?
        }
    };
    let text = format_sigma_report(&report);
    let path = spec.out_dir.join("sigma_report.txt");
    std::fs::write(&path, &text)?;
    Ok(ExperimentOutcome {
        files: vec![path],
        summary: text,
    })
}

pub fn format_sigma_report(r: &StabilityReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "sigma stability report [{}]", r.description);
    let _ = writeln!(s, "eps        = {}", fmt_g17(r.eps));
    let _ = writeln!(s, "grid size  = {}", r.grid_size);
    let _ = writeln!(s, "sigma       = {}  -> {}", fmt_g17(r.sigma), r.verdict());
    let _ = writeln!(
        s,
        "sigma_naive = {}  -> {}",
        fmt_g17(r.sigma_naive),
        r.verdict_naive()
    );
    s
}

/// Manifold coefficient tables in the full site space (CSV columns per site).
fn write_manifold_tables(pipe: &Pipeline, out: &Path) -> Result<Vec<PathBuf>> {
    let manifold = pipe.manifold(1)?;
    let n = pipe.model.n_sites();
    let m = n - 1;
    let (_, j2) = crate::model::projections(n)?;
    let nodes = 256usize;

    // h0 coefficient of x (site space): -J2 I
    let mut rows0 = Vec::with_capacity(nodes + 1);
    for j in 0..=nodes {
        let t = PERIOD * j as f64 / nodes as f64;
        let h0p = -(&j2 * pipe.fields.remover_p().eval(t));
        let h0q = -(&j2 * pipe.fields.remover_q().eval(t));
        let mut row = vec![t];
        row.extend(h0p.iter());
        row.extend(h0q.iter());
        rows0.push(row);
    }
    let mut header0 = vec!["theta".to_string()];
    header0.extend((1..=n).map(|i| format!("h0_p{i}")));
    header0.extend((1..=n).map(|i| format!("h0_q{i}")));
    let path0 = out.join("manifold_h0.csv");
    write_csv(&path0, &header0, &rows0)?;

    // first-order coefficients in the proposition layout:
    // h1 = (h_p1 x_p - h_p2 x_p x_q ; h_q1 x_q - h_q2 x_p x_q), site space
    let pick = |powers: (u32, u32), block: usize, t: f64| -> DVector<f64> {
        for mc in manifold.h1_monomials() {
            if mc.powers == powers {
                return &j2 * mc.coeff.eval(t).rows(block * m, m).clone_owned();
            }
        }
        DVector::zeros(n)
    };
    let mut rows1 = Vec::with_capacity(nodes + 1);
    for j in 0..=nodes {
        let t = PERIOD * j as f64 / nodes as f64;
        let hp1 = pick((1, 0), 0, t);
        let hq1 = pick((0, 1), 1, t);
        let hp2 = -pick((1, 1), 0, t);
        let hq2 = -pick((1, 1), 1, t);
        let mut row = vec![t];
        row.extend(hp1.iter());
        row.extend(hq1.iter());
        row.extend(hp2.iter());
        row.extend(hq2.iter());
        rows1.push(row);
    }
    let mut header1 = vec!["theta".to_string()];
    header1.extend((1..=n).map(|i| format!("h_p1_{i}")));
    header1.extend((1..=n).map(|i| format!("h_q1_{i}")));
    header1.extend((1..=n).map(|i| format!("h_p2_{i}")));
    header1.extend((1..=n).map(|i| format!("h_q2_{i}")));
    let path1 = out.join("manifold_h1.csv");
    write_csv(&path1, &header1, &rows1)?;
    Ok(vec![path0, path1])
}

/// Quick structural checks used by the `verify` command: each returns a name
/// and pass/fail with detail.
pub fn run_verify() -> Vec<(String, bool, String)> {
    let mut out = Vec::new();
    let mut push = |name: &str, res: std::result::Result<String, String>| match res {
        Ok(detail) => out.push((name.to_string(), true, detail)),
        Err(detail) => out.push((name.to_string(), false, detail)),
    };

    push("transport column sums", {
        (|| {
            let model = modelfile::paper_n2_model(0.1).map_err(|e| e.to_string())?;
            for j in 0..64 {
                let t = PERIOD * j as f64 / 64.0;
                let k = model.k_p.eval(t);
                for c in 0..2 {
                    let s: f64 = k.column(c).iter().sum();
                    if s != 0.0 {
                        return Err(format!("column sum {s} at theta {t}"));
                    }
                }
            }
            Ok("1^T K = 0 exactly".into())
        })()
    });

    push("mass conservation under pure transport", {
        (|| {
            let rates = modelfile::paper_n2_rates().map_err(|e| e.to_string())?;
            let params = crate::model::LvParams::new(vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.0; 2])
                .map_err(|e| e.to_string())?;
            let model = FullModel::new(rates, params, 0.1).map_err(|e| e.to_string())?;
            let p0 = DVector::from_vec(vec![0.3, 0.7]);
            let q0 = DVector::from_vec(vec![0.5, 0.5]);
            let cfg = IntegratorConfig::implicit_euler(1e-3).with_stride(500);
            let traj = integrate_full(&model, &p0, &q0, 10.0, &cfg).map_err(|e| e.to_string())?;
            let drift = traj
                .states
                .iter()
                .map(|s| ((s[0] + s[1]) - 1.0).abs().max(((s[2] + s[3]) - 1.0).abs()))
                .fold(0.0, f64::max);
            if drift <= 1e-10 {
                Ok(format!("drift {drift:.2e} over 10^4 steps"))
            } else {
                Err(format!("drift {drift:.2e} exceeds 1e-10"))
            }
        })()
    });

    push("resolvent cocycle law", {
        (|| {
            let model = modelfile::paper_n2_model(0.1).map_err(|e| e.to_string())?;
            let fields = assemble_reduced(&model, 10.0).map_err(|e| e.to_string())?;
            let cache = ResolventCache::new(fields.b_matrix()).map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut worst: f64 = 0.0;
            for _ in 0..30 {
                let mut v = [
                    rng.gen_range(0.0..PERIOD),
                    rng.gen_range(0.0..PERIOD),
                    rng.gen_range(0.0..PERIOD),
                ];
                v.sort_by(|a, b| a.partial_cmp(b).unwrap());
                let direct = cache.resolvent(v[2], v[0]).map_err(|e| e.to_string())?;
                let split = cache.resolvent(v[2], v[1]).map_err(|e| e.to_string())?
                    * cache.resolvent(v[1], v[0]).map_err(|e| e.to_string())?;
                worst = worst.max((direct - split).norm());
            }
            if worst <= 1e-8 {
                Ok(format!("worst defect {worst:.2e}"))
            } else {
                Err(format!("cocycle defect {worst:.2e} exceeds 1e-8"))
            }
        })()
    });

    push("periodic Green residual", {
        (|| {
            let model = modelfile::paper_n2_model(0.1).map_err(|e| e.to_string())?;
            let fields = assemble_reduced(&model, 10.0).map_err(|e| e.to_string())?;
            let cache = ResolventCache::new(fields.ktil_p().clone()).map_err(|e| e.to_string())?;
            let f = |t: f64| DVector::from_element(1, (2.0 * t).sin() + 0.3);
            let u = cache.periodic_green_solve(f).map_err(|e| e.to_string())?;
            let h = 1e-3;
            let mut worst: f64 = 0.0;
            for j in 0..64 {
                let t = PERIOD * j as f64 / 64.0;
                let du = (u.eval(t - 2.0 * h) - u.eval(t - h) * 8.0 + u.eval(t + h) * 8.0
                    - u.eval(t + 2.0 * h))
                    / (12.0 * h);
                let res = &du - fields.ktil_p().eval(t) * u.eval(t) - f(t);
                worst = worst.max(res.norm());
            }
            if worst <= 1e-8 {
                Ok(format!("worst residual {worst:.2e}"))
            } else {
                Err(format!("green residual {worst:.2e} exceeds 1e-8"))
            }
        })()
    });

    push("frame round trip", {
        (|| {
            let model = modelfile::paper_n2_model(0.1).map_err(|e| e.to_string())?;
            let branch = model.branch().map_err(|e| e.to_string())?;
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            let mut worst: f64 = 0.0;
            for _ in 0..200 {
                let p = DVector::from_vec(vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
                let q = DVector::from_vec(vec![rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)]);
                let theta = rng.gen_range(0.0..PERIOD);
                let f = to_slow_fast(&p, &q, theta, &branch);
                let (p2, q2) = crate::reduction::from_slow_fast(&f, theta, &branch);
                worst = worst.max((p2 - &p).norm().max((q2 - &q).norm()));
            }
            if worst <= 1e-12 {
                Ok(format!("worst round-trip error {worst:.2e}"))
            } else {
                Err(format!("round-trip error {worst:.2e} exceeds 1e-12"))
            }
        })()
    });

    push("manifold leading order vanishes", {
        (|| {
            let m = ManifoldExpansion::order0(2);
            let x = Vector2::new(0.4, 0.9);
            if m.h_tilde(&x, 1.3, 0.1).norm() == 0.0 {
                Ok("order-0 truncation identically zero".into())
            } else {
                Err("nonzero order-0 truncation".into())
            }
        })()
    });

    out
}
