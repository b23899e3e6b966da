//! The batch commands. Every command evaluates its rows in parallel and
//! emits them in input order.

use anyhow::{anyhow, bail, Result};
use hamilton_potential::potential::{expand_divergence_lagrangian, DEFAULT_EXPANSION_STEP};
use hamilton_potential::{
    fisher_rao_metric, kl_divergence, levi_civita_first, principal_function, recover,
    recover_expmap, self_dual_potential, shoot, skewness_tensor, BuiltinModel, DiagonalSteps, ManifoldModel,
    Model, ParametricDensity, PotentialEvaluation, QuadratureConfig, RecoveredGeometry, RecoveryOptions,
    RecoveryReport, ShootOptions, Tensor3,
};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::Value;

use crate::config::Settings;
use crate::output::{components, indexed, Cell, Table};

/// Worst outcome of a run; the discriminant is the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Ok = 0,
    ToleranceFailure = 1,
    ComputationError = 2,
}

pub enum Output {
    Table(Table),
    Json(Value),
}

pub struct Report {
    pub output: Output,
    pub status: Status,
}

fn shoot_options(s: &Settings) -> ShootOptions {
    ShootOptions::default().with_tol(s.tol).with_steps(s.steps)
}

fn coords(q: &DVector<f64>) -> Vec<Cell> {
    q.iter().map(|&x| Cell::Num(x)).collect()
}

fn ok() -> Cell {
    Cell::Text("ok".into())
}

/// Evaluates `f` on every item in parallel. Failures become `error: ..`
/// rows under `--keep-going` and abort the run otherwise.
fn rows<T: Sync>(
    s: &Settings,
    items: &[T],
    width: usize,
    key: impl Fn(&T) -> Vec<Cell> + Sync,
    f: impl Fn(&T) -> Result<Vec<Cell>> + Sync,
) -> Result<(Vec<Vec<Cell>>, Status)> {
    let results: Vec<Result<Vec<Cell>>> = items.par_iter().map(&f).collect();
    let mut status = Status::Ok;
    let mut out = Vec::with_capacity(items.len());
    for (item, r) in items.iter().zip(results) {
        let mut row = key(item);
        match r {
            Ok(cells) => {
                row.extend(cells);
                row.push(ok());
            }
            Err(e) if s.keep_going => {
                status = Status::ComputationError;
                row.extend(std::iter::repeat_n(Cell::Empty, width));
                row.push(Cell::Text(format!("error: {e:#}")));
            }
            Err(e) => return Err(e),
        }
        out.push(row);
    }
    Ok((out, status))
}

fn evaluate_potential(s: &Settings, a: &DVector<f64>, b: &DVector<f64>) -> Result<PotentialEvaluation> {
    let lagrangian = s.model.lagrangian(s.alpha);
    Ok(principal_function(&*lagrangian, a, b, &shoot_options(s))?)
}

fn potential_table(s: &Settings, pairs: &[(DVector<f64>, DVector<f64>)]) -> Result<Report> {
    let n = s.model.dim();
    let mut columns = indexed("q_in", n);
    columns.extend(indexed("q_fin", n));
    columns.extend(["S", "residual", "quadrature_error", "iterations", "status"].map(String::from));
    let (body, status) = rows(
        s,
        pairs,
        4,
        |(a, b)| [coords(a), coords(b)].concat(),
        |(a, b)| {
            let e = evaluate_potential(s, a, b)?;
            Ok(vec![
                Cell::Num(e.value),
                Cell::Num(e.shooting.residual),
                e.quadrature_error.into(),
                Cell::Int(e.shooting.iterations as u64),
            ])
        },
    )?;
    Ok(Report {
        output: Output::Table(Table { columns, rows: body }),
        status,
    })
}

/// `S(q_in, q_fin)` for each requested pair.
pub fn potential(s: &Settings) -> Result<Report> {
    let pairs = s.pairs()?;
    if pairs.is_empty() {
        bail!("no point pairs given (use --point in/fin or --grid)");
    }
    potential_table(s, &pairs)
}

/// `S(from, q)` for every requested point `q`.
pub fn scan(s: &Settings) -> Result<Report> {
    let from = s.from.clone().ok_or_else(|| anyhow!("scan needs --from"))?;
    let pairs: Vec<_> = s.single_points()?.into_iter().map(|q| (from.clone(), q)).collect();
    if pairs.is_empty() {
        bail!("no end points given (use --point or --grid)");
    }
    potential_table(s, &pairs)
}

fn manifold(s: &Settings) -> Result<&ManifoldModel> {
    s.model
        .manifold()
        .ok_or_else(|| anyhow!("{} is a raw Lagrangian without (g, T); this command needs a statistical model", s.model_name))
}

fn recovery_options(s: &Settings) -> RecoveryOptions {
    let mut opts = RecoveryOptions::default();
    opts.steps = s.fd_step.map(DiagonalSteps::uniform);
    opts.shoot = opts.shoot.with_steps(s.steps);
    opts
}

fn recover_one(s: &Settings, m: &ManifoldModel, q: &DVector<f64>) -> Result<RecoveredGeometry> {
    let opts = recovery_options(s);
    Ok(if s.expmap {
        recover_expmap(m, q, &opts)?
    } else {
        recover(m, s.alpha, q, &opts)?
    })
}

fn tensor_cells(t: Option<&Tensor3>, n: usize) -> Vec<Cell> {
    match t {
        Some(t) => t.as_slice().iter().map(|&x| Cell::Num(x)).collect(),
        None => vec![Cell::Empty; n * n * n],
    }
}

/// Recovered `g`, `Γ`, `T` and both third-derivative tensors per point.
pub fn recover_cmd(s: &Settings) -> Result<Report> {
    let m = manifold(s)?;
    let points = s.single_points()?;
    if points.is_empty() {
        bail!("no points given (use --point or --grid)");
    }
    let n = m.dim();
    let results: Vec<Result<RecoveryReport>> = points
        .par_iter()
        .map(|q| Ok(RecoveryReport::new(&recover_one(s, m, q)?, Some(m))?))
        .collect();
    let mut status = Status::Ok;
    let mut reports = Vec::new();
    for (q, r) in points.iter().zip(results) {
        match r {
            Ok(rep) => reports.push(Ok(rep)),
            Err(e) if s.keep_going => {
                status = Status::ComputationError;
                reports.push(Err((q.clone(), format!("{e:#}"))));
            }
            Err(e) => return Err(e),
        }
    }
    let output = match s.format {
        crate::output::Format::Json => Output::Json(Value::Array(
            reports
                .iter()
                .map(|r| match r {
                    Ok(rep) => serde_json::to_value(rep).expect("report serializes"),
                    Err((q, msg)) => serde_json::json!({ "point": q.as_slice(), "error": msg }),
                })
                .collect(),
        )),
        crate::output::Format::Csv => {
            let mut columns = indexed("q", n);
            columns.push("alpha".into());
            columns.extend(components("g", n, 2));
            columns.extend(components("gamma", n, 3));
            columns.extend(components("T", n, 3));
            columns.extend(components("fin_fin_in", n, 3));
            columns.extend(components("in_in_fin", n, 3));
            columns.extend(["err_metric", "err_gamma", "err_skewness", "err_fin_fin_in", "status"].map(String::from));
            let mut table = Table::new(columns);
            let width = 1 + n * n + 4 * n * n * n + 4;
            for r in &reports {
                let row = match r {
                    Ok(rep) => {
                        let rec = report_tensors(rep, n);
                        let errs = rep.errors_vs_model.as_ref();
                        let mut row = coords(&DVector::from_column_slice(&rep.point));
                        row.push(match rep.kind {
                            hamilton_potential::PotentialKind::Principal { alpha } => Cell::Num(alpha),
                            hamilton_potential::PotentialKind::ExpMap => Cell::Empty,
                        });
                        row.extend(rec.metric.iter().map(|&x| Cell::Num(x)));
                        row.extend(tensor_cells(rec.gamma.as_ref(), n));
                        row.extend(tensor_cells(rec.skewness.as_ref(), n));
                        row.extend(tensor_cells(Some(&rec.fin_fin_in), n));
                        row.extend(tensor_cells(Some(&rec.in_in_fin), n));
                        row.push(errs.map(|e| e.metric).into());
                        row.push(errs.and_then(|e| e.gamma_first).into());
                        row.push(errs.and_then(|e| e.skewness).into());
                        row.push(errs.map(|e| e.third_fin_fin_in).into());
                        row.push(ok());
                        row
                    }
                    Err((q, msg)) => {
                        let mut row = coords(q);
                        row.extend(std::iter::repeat_n(Cell::Empty, width));
                        row.push(Cell::Text(format!("error: {msg}")));
                        row
                    }
                };
                table.push(row);
            }
            Output::Table(table)
        }
    };
    Ok(Report { output, status })
}

struct ReportTensors {
    metric: Vec<f64>,
    gamma: Option<Tensor3>,
    skewness: Option<Tensor3>,
    fin_fin_in: Tensor3,
    in_in_fin: Tensor3,
}

fn from_nested(n: usize, t: &[Vec<Vec<f64>>]) -> Tensor3 {
    Tensor3::from_fn(n, |j, k, l| t[j][k][l])
}

fn report_tensors(rep: &RecoveryReport, n: usize) -> ReportTensors {
    ReportTensors {
        metric: rep.metric.iter().flatten().copied().collect(),
        gamma: rep.gamma_first.as_deref().map(|t| from_nested(n, t)),
        skewness: rep.skewness.as_deref().map(|t| from_nested(n, t)),
        fin_fin_in: from_nested(n, &rep.third_fin_fin_in),
        in_in_fin: from_nested(n, &rep.third_in_in_fin),
    }
}

fn density(s: &Settings) -> Result<ParametricDensity> {
    s.builtin
        .density()
        .ok_or_else(|| anyhow!("{} has no parametric density; fisher and kl need exponential1d", s.model_name))
}

/// Fisher-Rao metric and skewness tensor by quadrature.
pub fn fisher(s: &Settings) -> Result<Report> {
    let d = density(s)?;
    let points = s.single_points()?;
    if points.is_empty() {
        bail!("no points given (use --point or --grid)");
    }
    let n = d.dim();
    let quad = QuadratureConfig::default();
    let mut columns = indexed("xi", n);
    columns.extend(components("g", n, 2));
    columns.extend(components("T", n, 3));
    columns.push("status".into());
    let (body, status) = rows(s, &points, n * n + n * n * n, coords, |xi| {
        let g = fisher_rao_metric(&d, xi, &quad)?;
        let t = skewness_tensor(&d, xi, &quad)?;
        let mut cells: Vec<Cell> = g.transpose().iter().map(|&x| Cell::Num(x)).collect();
        cells.extend(t.as_slice().iter().map(|&x| Cell::Num(x)));
        Ok(cells)
    })?;
    Ok(Report {
        output: Output::Table(Table { columns, rows: body }),
        status,
    })
}

/// Kullback-Leibler divergence by quadrature.
pub fn kl(s: &Settings) -> Result<Report> {
    let d = density(s)?;
    let pairs = s.pairs()?;
    if pairs.is_empty() {
        bail!("no point pairs given (use --point in/fin or --grid)");
    }
    let n = d.dim();
    let quad = QuadratureConfig::default();
    let mut columns = indexed("xi_in", n);
    columns.extend(indexed("xi_fin", n));
    columns.extend(["kl", "status"].map(String::from));
    let (body, status) = rows(
        s,
        &pairs,
        1,
        |(a, b)| [coords(a), coords(b)].concat(),
        |(a, b)| Ok(vec![Cell::Num(kl_divergence(&d, a, b, &quad)?)]),
    )?;
    Ok(Report {
        output: Output::Table(Table { columns, rows: body }),
        status,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckResult {
    pub name: String,
    pub error: Option<f64>,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointReport {
    pub point: Vec<f64>,
    pub checks: Vec<CheckResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub model: String,
    pub alpha: f64,
    pub points: Vec<PointReport>,
    pub pass: bool,
}

type GroupEval<'a> = Box<dyn Fn() -> hamilton_potential::Result<Vec<f64>> + Send + Sync + 'a>;

/// Checks sharing one computation: `(name, tolerance)` per returned error.
struct CheckGroup<'a> {
    checks: Vec<(String, f64)>,
    eval: GroupEval<'a>,
}

impl<'a> CheckGroup<'a> {
    fn one(name: &str, tol: f64, eval: impl Fn() -> hamilton_potential::Result<f64> + Send + Sync + 'a) -> Self {
        Self {
            checks: vec![(name.into(), tol)],
            eval: Box::new(move || eval().map(|e| vec![e])),
        }
    }

    fn many(checks: &[(&str, f64)], eval: impl Fn() -> hamilton_potential::Result<Vec<f64>> + Send + Sync + 'a) -> Self {
        Self {
            checks: checks.iter().map(|(n, t)| (n.to_string(), *t)).collect(),
            eval: Box::new(eval),
        }
    }

    fn run(&self) -> Vec<CheckResult> {
        match (self.eval)() {
            Ok(errors) => self
                .checks
                .iter()
                .zip(errors)
                .map(|((name, tol), err)| CheckResult {
                    name: name.clone(),
                    error: Some(err),
                    tolerance: *tol,
                    pass: err <= *tol,
                    message: None,
                })
                .collect(),
            Err(e) => self
                .checks
                .iter()
                .map(|(name, tol)| CheckResult {
                    name: name.clone(),
                    error: None,
                    tolerance: *tol,
                    pass: false,
                    message: Some(e.to_string()),
                })
                .collect(),
        }
    }
}

fn default_point(model: BuiltinModel) -> Vec<f64> {
    match model {
        BuiltinModel::Exponential1D => vec![1.0],
        BuiltinModel::ExponentialLogChart | BuiltinModel::KlFreeParticle => vec![0.0],
        BuiltinModel::EuclideanCubicR3 => vec![0.3, -0.7, 1.1],
        BuiltinModel::SpherePullback | BuiltinModel::SphereRound => vec![1.2, 2.0],
    }
}

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

/// `dx³ + dy³ + dz³` pulled back to the sphere chart, written out by hand.
fn sphere_skewness(theta: f64, phi: f64) -> Tensor3 {
    let (st, ct) = theta.sin_cos();
    let (sp, cp) = phi.sin_cos();
    let ttt = ct.powi(3) * (cp.powi(3) + sp.powi(3)) - st.powi(3);
    let ttp = ct * ct * st * sp * cp * (sp - cp);
    let tpp = st * st * ct * sp * cp * (sp + cp);
    let ppp = st.powi(3) * (cp.powi(3) - sp.powi(3));
    Tensor3::from_fn(2, |j, k, l| [ttt, ttp, tpp, ppp][j + k + l])
}

fn momentum_defect(m: &Model, alpha: f64, a: &DVector<f64>, b: &DVector<f64>, steps: usize) -> hamilton_potential::Result<f64> {
    let lag = m.lagrangian(alpha);
    let opts = ShootOptions::default().with_tol(1e-12).with_steps(steps);
    let s = |x: &DVector<f64>, y: &DVector<f64>| principal_function(&*lag, x, y, &opts).map(|e| e.value);
    let sol = shoot(&*lag, a, b, &opts)?;
    let p_in = lag.momentum(sol.trajectory.first())?;
    let p_fin = lag.momentum(sol.trajectory.last())?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for j in 0..a.len() {
        let mut e = DVector::zeros(a.len());
        e[j] = h;
        let d_fin = (s(a, &(b + &e))? - s(a, &(b - &e))?) / (2.0 * h);
        let d_in = (s(&(a + &e), b)? - s(&(a - &e), b)?) / (2.0 * h);
        worst = worst.max((d_fin - p_fin[j]).abs()).max((d_in + p_in[j]).abs());
    }
    Ok(worst)
}

fn verify_groups<'a>(s: &'a Settings, q: &'a DVector<f64>) -> Vec<CheckGroup<'a>> {
    let alpha = s.alpha;
    let opts = shoot_options(s);
    let mut groups = Vec::new();
    let model = &s.model;
    let value = move |a: DVector<f64>, b: DVector<f64>| {
        principal_function(&*model.lagrangian(alpha), &a, &b, &opts).map(|e| e.value)
    };

    groups.push(CheckGroup::one("diagonal", 1e-12, move || value(q.clone(), q.clone()).map(f64::abs)));
    let step = DVector::from_element(q.len(), 0.1);
    groups.push(CheckGroup::one("momentum_identities", 1e-4, move || {
        momentum_defect(model, alpha, q, &(q + &step), s.steps)
    }));

    if let Some(m) = model.manifold() {
        let mut names = vec![("recover.metric", 1e-4), ("recover.gamma_first", 5e-3)];
        if alpha != 0.0 {
            names.push(("recover.skewness", 5e-3));
        }
        groups.push(CheckGroup::many(&names, move || {
            let r = recover(m, alpha, q, &RecoveryOptions::default())?;
            let g = m.metric(q)?;
            let gamma = levi_civita_first(m, q)?.first_kind;
            let mut errs = vec![
                (&r.metric - g).amax(),
                r.gamma_first.as_ref().map_or(f64::INFINITY, |x| x.max_abs_diff(&gamma)),
            ];
            if alpha != 0.0 {
                errs.push(r.skewness()?.max_abs_diff(&m.skewness(q)?));
            }
            Ok(errs)
        }));
    }

    match s.builtin {
        BuiltinModel::Exponential1D => {
            let x = q[0];
            groups.push(CheckGroup::one("oracle.closed_form", 1e-6, move || {
                let mut worst: f64 = 0.0;
                for l in [0.5, -0.3] {
                    let sv = value(v(&[x]), v(&[x * f64::exp(l)]))?;
                    worst = worst.max((sv - (l * l / 2.0 - alpha / 3.0 * l * l * l)).abs());
                }
                Ok(worst)
            }));
            if let Some(d) = s.builtin.density() {
                groups.push(CheckGroup::many(&[("fisher.metric", 1e-8), ("fisher.skewness", 1e-7)], move || {
                    let quad = QuadratureConfig::default();
                    let g = fisher_rao_metric(&d, q, &quad)?[(0, 0)];
                    let t = skewness_tensor(&d, q, &quad)?[(0, 0, 0)];
                    Ok(vec![(g - 1.0 / (x * x)).abs(), (t + 2.0 / x.powi(3)).abs()])
                }));
            }
        }
        BuiltinModel::ExponentialLogChart => {
            let y = q[0];
            groups.push(CheckGroup::one("oracle.closed_form", 1e-6, move || {
                let mut worst: f64 = 0.0;
                for d in [0.5, -0.3] {
                    let sv = value(v(&[y]), v(&[y + d]))?;
                    worst = worst.max((sv - (d * d / 2.0 - alpha / 3.0 * d * d * d)).abs());
                }
                Ok(worst)
            }));
        }
        BuiltinModel::KlFreeParticle => {
            let y = q[0];
            let d = 0.7;
            groups.push(CheckGroup::many(&[("oracle.kl_closed_form", 1e-8), ("oracle.kl_quadrature", 1e-7)], move || {
                let sv = value(v(&[y]), v(&[y + d]))?;
                let density = hamilton_potential::exponential_density();
                let k = kl_divergence(&density, &v(&[y.exp()]), &v(&[(y + d).exp()]), &QuadratureConfig::default())?;
                Ok(vec![(sv - (d.exp() - d - 1.0)).abs(), (sv - k).abs()])
            }));
            groups.push(CheckGroup::many(
                &[("expansion.gradient", 1e-5), ("expansion.metric", 1e-5), ("expansion.third", 1e-5)],
                move || {
                    let raw = BuiltinModel::KlFreeParticle.raw()?;
                    let e = expand_divergence_lagrangian(|a, b| raw.eval(a, b), q, DEFAULT_EXPANSION_STEP);
                    Ok(vec![e.gradient[0].abs(), (e.metric[(0, 0)] - 1.0).abs(), (e.third[(0, 0, 0)] - 1.0).abs()])
                },
            ));
        }
        BuiltinModel::EuclideanCubicR3 => {
            groups.push(CheckGroup::one("oracle.straight_line", 1e-8, move || {
                let delta = v(&[0.3, -0.4, 0.5]);
                let sv = value(q.clone(), q + &delta)?;
                let oracle = 0.5 * delta.norm_squared() + alpha / 6.0 * delta.iter().map(|d| d.powi(3)).sum::<f64>();
                Ok((sv - oracle).abs())
            }));
        }
        BuiltinModel::SphereRound => {
            let m = model.manifold().expect("sphere-round is statistical");
            groups.push(CheckGroup::one("oracle.great_circle", 1e-5, move || {
                let embed = |p: &DVector<f64>| v(&[p[0].sin() * p[1].cos(), p[0].sin() * p[1].sin(), p[0].cos()]);
                let mut worst: f64 = 0.0;
                for d in [[0.3, 0.4], [-0.2, 0.5]] {
                    let b = q + v(&d);
                    let sv = self_dual_potential(m, q, &b, &opts)?;
                    let dist = embed(q).dot(&embed(&b)).clamp(-1.0, 1.0).acos();
                    worst = worst.max((sv - 0.5 * dist * dist).abs());
                }
                Ok(worst)
            }));
        }
        BuiltinModel::SpherePullback => {
            let m = model.manifold().expect("sphere-pullback is statistical");
            groups.push(CheckGroup::many(&[("pullback.metric", 1e-9), ("pullback.skewness", 1e-9)], move || {
                let g = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, q[0].sin().powi(2)]);
                Ok(vec![
                    (m.metric(q)? - g).amax(),
                    m.skewness(q)?.max_abs_diff(&sphere_skewness(q[0], q[1])),
                ])
            }));
        }
    }
    groups
}

/// Recovery and oracle checks for one model; exit status reflects the worst check.
pub fn verify(s: &Settings) -> Result<Report> {
    let mut points = s.single_points()?;
    if points.is_empty() {
        points.push(v(&default_point(s.builtin)));
    }
    let reports: Vec<PointReport> = points
        .iter()
        .map(|q| {
            let groups = verify_groups(s, q);
            let checks = groups.par_iter().flat_map_iter(CheckGroup::run).collect();
            PointReport {
                point: q.iter().copied().collect(),
                checks,
            }
        })
        .collect();
    let all = || reports.iter().flat_map(|r| &r.checks);
    let status = if all().any(|c| c.error.is_none()) {
        Status::ComputationError
    } else if all().any(|c| !c.pass) {
        Status::ToleranceFailure
    } else {
        Status::Ok
    };
    let report = VerifyReport {
        model: s.model_name.clone(),
        alpha: s.alpha,
        pass: status == Status::Ok,
        points: reports,
    };
    let output = match s.format {
        crate::output::Format::Json => Output::Json(serde_json::to_value(&report)?),
        crate::output::Format::Csv => {
            let n = s.model.dim();
            let mut columns = indexed("q", n);
            columns.extend(["check", "error", "tolerance", "pass", "message"].map(String::from));
            let mut table = Table::new(columns);
            for p in &report.points {
                for c in &p.checks {
                    let mut row: Vec<Cell> = p.point.iter().map(|&x| Cell::Num(x)).collect();
                    row.push(Cell::Text(c.name.clone()));
                    row.push(c.error.into());
                    row.push(Cell::Num(c.tolerance));
                    row.push(Cell::Text(c.pass.to_string()));
                    row.push(c.message.clone().map_or(Cell::Empty, Cell::Text));
                    table.push(row);
                }
            }
            Output::Table(table)
        }
    };
    Ok(Report { output, status })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_written_sphere_skewness_matches_model() {
        let m = BuiltinModel::SpherePullback.manifold().unwrap();
        for (t, p) in [(0.4, 1.0), (1.3, 4.2), (2.5, 5.9)] {
            let err = m.skewness(&v(&[t, p])).unwrap().max_abs_diff(&sphere_skewness(t, p));
            assert!(err < 1e-14, "{err}");
        }
    }
}
