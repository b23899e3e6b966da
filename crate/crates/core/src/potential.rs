//! The Hamilton principal function `S(q_in, q_fin)` of a Lagrangian, the
//! exponential-map potential, and recovery of `(g, Γ, T)` from diagonal
//! derivatives of a two-point function.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{ConnectionSpray, CubicLagrangian, Lagrangian, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::{levi_civita_first, Domain, ManifoldModel};
use crate::quadrature::simpson;
use crate::shooting::{shoot, ShootOptions, ShootingResult};
use crate::tensor::Tensor3;

/// Shooting tolerance used for every stencil evaluation during recovery.
pub const STENCIL_TOLERANCE: f64 = 1e-11;
/// Relative step for second derivatives on the diagonal.
pub const SECOND_DERIVATIVE_STEP: f64 = 1e-4;
/// Relative step for third derivatives on the diagonal.
pub const THIRD_DERIVATIVE_STEP: f64 = 1e-3;
/// Step-doubling changes above this multiple of the tolerance are errors.
const QUADRATURE_SLACK: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialEvaluation {
    pub value: f64,
    pub shooting: ShootingResult,
    /// `|S(steps) − S(2·steps)|`, when estimated.
    pub quadrature_error: Option<f64>,
}

/// `∫₀¹ L(γ, γ̇) dt` by composite Simpson over the trajectory samples.
pub fn action<L: Lagrangian + ?Sized>(lagrangian: &L, trajectory: &Trajectory) -> Result<f64> {
    let values = trajectory
        .samples
        .iter()
        .map(|s| lagrangian.value(&s.state))
        .collect::<Result<Vec<_>>>()?;
    Ok(simpson(&values, 1.0 / trajectory.steps() as f64))
}

fn action_value<L: Lagrangian + ?Sized>(
    lagrangian: &L,
    q_in: &DVector<f64>,
    q_fin: &DVector<f64>,
    opts: &ShootOptions,
) -> Result<(f64, ShootingResult)> {
    let sol = shoot(lagrangian, q_in, q_fin, opts)?;
    let value = action(lagrangian, &sol.trajectory)?;
    Ok((value, sol))
}

fn with_step_doubling(
    opts: &ShootOptions,
    eval: impl Fn(&ShootOptions) -> Result<(f64, ShootingResult)>,
) -> Result<PotentialEvaluation> {
    let (value, shooting) = eval(opts)?;
    let (fine, _) = eval(&opts.with_steps(2 * opts.steps))?;
    let change = (fine - value).abs();
    if change > QUADRATURE_SLACK * opts.tol {
        return Err(Error::QuadratureNotConverged {
            change,
            tolerance: QUADRATURE_SLACK * opts.tol,
        });
    }
    Ok(PotentialEvaluation {
        value,
        shooting,
        quadrature_error: Some(change),
    })
}

/// Principal function of an arbitrary Lagrangian: the action along the
/// solution of the boundary problem, with a step-doubling error estimate.
pub fn principal_function<L: Lagrangian + ?Sized>(
    lagrangian: &L,
    q_in: &DVector<f64>,
    q_fin: &DVector<f64>,
    opts: &ShootOptions,
) -> Result<PotentialEvaluation> {
    with_step_doubling(opts, |o| action_value(lagrangian, q_in, q_fin, o))
}

/// `S_α(q_in, q_fin)` for the cubic Lagrangian `L_α` of `model`.
pub fn hamilton_principal(
    model: &ManifoldModel,
    alpha: f64,
    q_in: &DVector<f64>,
    q_fin: &DVector<f64>,
    opts: &ShootOptions,
) -> Result<PotentialEvaluation> {
    principal_function(&CubicLagrangian::new(model, alpha), q_in, q_fin, opts)
}

/// `S_0` of `model` with `T` set to zero, i.e. half the squared geodesic
/// distance for the Levi-Civita connection.
pub fn self_dual_potential(
    model: &ManifoldModel,
    q_in: &DVector<f64>,
    q_fin: &DVector<f64>,
    opts: &ShootOptions,
) -> Result<f64> {
    hamilton_principal(&model.self_dual(), 0.0, q_in, q_fin, opts).map(|e| e.value)
}

fn expmap_value(
    model: &ManifoldModel,
    q_in: &DVector<f64>,
    q_fin: &DVector<f64>,
    opts: &ShootOptions,
) -> Result<(f64, ShootingResult)> {
    let sol = shoot(&ConnectionSpray::new(model, 1.0), q_in, q_fin, opts)?;
    let g = model.metric(q_in)?;
    let v = &sol.v_in;
    Ok((0.5 * v.dot(&(g * v)), sol))
}

/// `½ g_jk(q_in) v^j v^k` with `v` the initial velocity of the geodesic of
/// the α = 1 connection from `q_in` to `q_fin`.
pub fn expmap_potential(
    model: &ManifoldModel,
    q_in: &DVector<f64>,
    q_fin: &DVector<f64>,
    opts: &ShootOptions,
) -> Result<PotentialEvaluation> {
    with_step_doubling(opts, |o| expmap_value(model, q_in, q_fin, o))
}

/// Central-difference steps for diagonal derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagonalSteps {
    pub second: f64,
    pub third: f64,
}

impl DiagonalSteps {
    /// `1e-4 · scale` and `1e-3 · scale` with `scale = max(1, |q|_∞)`.
    pub fn for_point(q: &DVector<f64>) -> Self {
        let scale = q.amax().max(1.0);
        Self {
            second: SECOND_DERIVATIVE_STEP * scale,
            third: THIRD_DERIVATIVE_STEP * scale,
        }
    }

    pub fn uniform(h: f64) -> Self {
        Self { second: h, third: h }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecoveryOptions {
    /// `None` selects [`DiagonalSteps::for_point`].
    pub steps: Option<DiagonalSteps>,
    pub shoot: ShootOptions,
}

impl Default for RecoveryOptions {
    fn default() -> Self {
        Self {
            steps: None,
            shoot: ShootOptions::default().with_tol(STENCIL_TOLERANCE),
        }
    }
}

/// Which two-point function was differentiated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PotentialKind {
    Principal { alpha: f64 },
    ExpMap,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredGeometry {
    pub point: DVector<f64>,
    pub kind: PotentialKind,
    pub step: DiagonalSteps,
    /// `−∂²S/∂q_fin^k ∂q_in^j`.
    pub metric: DMatrix<f64>,
    /// `∂³S/∂q_fin^l ∂q_fin^k ∂q_in^j`.
    pub third_fin_fin_in: Tensor3,
    /// `∂³S/∂q_in^l ∂q_in^k ∂q_fin^j`.
    pub third_in_in_fin: Tensor3,
    /// `−(third_in_in_fin + third_fin_fin_in)/2`; principal potentials only.
    pub gamma_first: Option<Tensor3>,
    skewness: Option<Tensor3>,
}

impl RecoveredGeometry {
    /// `(third_in_in_fin − third_fin_fin_in)/(2α)`. Unavailable at `α = 0`
    /// and for the exponential-map potential.
    pub fn skewness(&self) -> Result<&Tensor3> {
        self.skewness.as_ref().ok_or(Error::SkewnessUnavailable)
    }

    pub fn alpha(&self) -> Option<f64> {
        match self.kind {
            PotentialKind::Principal { alpha } => Some(alpha),
            PotentialKind::ExpMap => None,
        }
    }
}

/// Offsets of one stencil evaluation, in units of the step of `grid`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
struct StencilKey {
    third: bool,
    q_in: Vec<i8>,
    q_fin: Vec<i8>,
}

const SIGNS: [i8; 2] = [1, -1];

fn unit(n: usize, pairs: &[(usize, i8)]) -> Vec<i8> {
    let mut v = vec![0; n];
    for &(i, s) in pairs {
        v[i] += s;
    }
    v
}

fn metric_key(n: usize, j: usize, k: usize, s: i8, t: i8) -> StencilKey {
    StencilKey {
        third: false,
        q_in: unit(n, &[(j, s)]),
        q_fin: unit(n, &[(k, t)]),
    }
}

/// Key for `∂³/∂(pair)_l ∂(pair)_k ∂(single)_j`; `single_is_in` selects the
/// fin-fin-in orientation.
fn third_key(n: usize, single_is_in: bool, j: usize, k: usize, l: usize, a: i8, b: i8, c: i8) -> StencilKey {
    let single = unit(n, &[(j, a)]);
    let pair = unit(n, &[(k, b), (l, c)]);
    let (q_in, q_fin) = if single_is_in { (single, pair) } else { (pair, single) };
    StencilKey {
        third: true,
        q_in,
        q_fin,
    }
}

fn stencil_keys(n: usize) -> BTreeSet<StencilKey> {
    let mut keys = BTreeSet::new();
    for j in 0..n {
        for k in 0..n {
            for s in SIGNS {
                for t in SIGNS {
                    keys.insert(metric_key(n, j, k, s, t));
                }
            }
            for l in k..n {
                for a in SIGNS {
                    for b in SIGNS {
                        for c in SIGNS {
                            keys.insert(third_key(n, true, j, k, l, a, b, c));
                            keys.insert(third_key(n, false, j, k, l, a, b, c));
                        }
                    }
                }
            }
        }
    }
    keys
}

fn check_margin(domain: &Domain, q: &DVector<f64>, steps: &DiagonalSteps) -> Result<()> {
    domain.check(q)?;
    let reach = steps.second.max(2.0 * steps.third);
    for j in 0..q.len() {
        for s in [reach, -reach] {
            let mut p = q.clone();
            p[j] += s;
            if !domain.contains(&p) {
                return Err(Error::StepLeavesDomain {
                    coordinate: j,
                    point: q.iter().copied().collect(),
                });
            }
        }
    }
    Ok(())
}

/// Mixed second and third diagonal derivatives of a two-point function by
/// tensor-product central differences. All stencil points are evaluated,
/// in parallel, including those on the diagonal.
pub fn diagonal_derivatives(
    two_point: impl Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + Sync,
    domain: &Domain,
    q: &DVector<f64>,
    steps: &DiagonalSteps,
) -> Result<(DMatrix<f64>, Tensor3, Tensor3)> {
    let n = q.len();
    check_margin(domain, q, steps)?;
    let shift = |offset: &[i8], h: f64| {
        DVector::from_iterator(n, q.iter().zip(offset).map(|(x, &o)| x + h * o as f64))
    };
    let values: BTreeMap<StencilKey, f64> = stencil_keys(n)
        .into_iter()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|key| {
            let h = if key.third { steps.third } else { steps.second };
            let s = two_point(&shift(&key.q_in, h), &shift(&key.q_fin, h))?;
            Ok((key, s))
        })
        .collect::<Result<_>>()?;

    let h2 = steps.second;
    let metric = DMatrix::from_fn(n, n, |j, k| {
        let mut acc = 0.0;
        for s in SIGNS {
            for t in SIGNS {
                acc += (s * t) as f64 * values[&metric_key(n, j, k, s, t)];
            }
        }
        -acc / (4.0 * h2 * h2)
    });

    let h3 = steps.third;
    let third = |single_is_in: bool| {
        let mut out = Tensor3::zeros(n);
        for j in 0..n {
            for k in 0..n {
                for l in k..n {
                    let mut acc = 0.0;
                    for a in SIGNS {
                        for b in SIGNS {
                            for c in SIGNS {
                                acc += (a * b * c) as f64 * values[&third_key(n, single_is_in, j, k, l, a, b, c)];
                            }
                        }
                    }
                    let d = acc / (8.0 * h3 * h3 * h3);
                    out[(j, k, l)] = d;
                    out[(j, l, k)] = d;
                }
            }
        }
        out
    };
    Ok((metric, third(true), third(false)))
}

/// Recovers `g`, `Γ` (first kind) and `T` at `q` from diagonal derivatives
/// of `S_α`.
pub fn recover(model: &ManifoldModel, alpha: f64, q: &DVector<f64>, opts: &RecoveryOptions) -> Result<RecoveredGeometry> {
    let steps = opts.steps.unwrap_or_else(|| DiagonalSteps::for_point(q));
    let lagrangian = CubicLagrangian::new(model, alpha);
    let (metric, fin_fin_in, in_in_fin) = diagonal_derivatives(
        |a, b| action_value(&lagrangian, a, b, &opts.shoot).map(|(s, _)| s),
        model.domain(),
        q,
        &steps,
    )?;
    let gamma_first = in_in_fin.add_scaled(&fin_fin_in, 1.0).scale(-0.5);
    let skewness = (alpha != 0.0).then(|| in_in_fin.add_scaled(&fin_fin_in, -1.0).scale(0.5 / alpha));
    Ok(RecoveredGeometry {
        point: q.clone(),
        kind: PotentialKind::Principal { alpha },
        step: steps,
        metric,
        third_fin_fin_in: fin_fin_in,
        third_in_in_fin: in_in_fin,
        gamma_first: Some(gamma_first),
        skewness,
    })
}

/// Diagonal derivatives of the exponential-map potential. Only the metric
/// and the two third-derivative tensors are reported.
pub fn recover_expmap(model: &ManifoldModel, q: &DVector<f64>, opts: &RecoveryOptions) -> Result<RecoveredGeometry> {
    let steps = opts.steps.unwrap_or_else(|| DiagonalSteps::for_point(q));
    let (metric, fin_fin_in, in_in_fin) = diagonal_derivatives(
        |a, b| expmap_value(model, a, b, &opts.shoot).map(|(s, _)| s),
        model.domain(),
        q,
        &steps,
    )?;
    Ok(RecoveredGeometry {
        point: q.clone(),
        kind: PotentialKind::ExpMap,
        step: steps,
        metric,
        third_fin_fin_in: fin_fin_in,
        third_in_in_fin: in_in_fin,
        gamma_first: None,
        skewness: None,
    })
}

/// Analytic value of `third_fin_fin_in` for a potential of the given kind:
/// `−Γ_jkl − α T_jkl` for `S_α`, `−Γ_jkl + (3/2) T_jkl` for the
/// exponential-map potential.
pub fn expected_third_fin_fin_in(model: &ManifoldModel, q: &DVector<f64>, kind: PotentialKind) -> Result<Tensor3> {
    let gamma = levi_civita_first(model, q)?.first_kind;
    let t = model.skewness(q)?;
    let coeff = match kind {
        PotentialKind::Principal { alpha } => -alpha,
        PotentialKind::ExpMap => 1.5,
    };
    Ok(gamma.scale(-1.0).add_scaled(&t, coeff))
}

/// Derivatives in `v` at `v = 0` of a Lagrangian near the zero section.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceExpansion {
    pub gradient: DVector<f64>,
    pub metric: DMatrix<f64>,
    pub third: Tensor3,
}

pub const DEFAULT_EXPANSION_STEP: f64 = 1e-3;

/// Central differences of `v ↦ L(q, v)` at `v = 0`: gradient, Hessian and
/// third-derivative tensor. For a divergence Lagrangian the gradient
/// vanishes and the Hessian is the metric.
pub fn expand_divergence_lagrangian(
    lagrangian: impl Fn(&DVector<f64>, &DVector<f64>) -> f64,
    q: &DVector<f64>,
    h: f64,
) -> DivergenceExpansion {
    let n = q.len();
    let at = |offsets: &[(usize, i8)]| {
        let v = DVector::from_iterator(n, unit(n, offsets).into_iter().map(|o| h * o as f64));
        lagrangian(q, &v)
    };
    let gradient = DVector::from_fn(n, |j, _| (at(&[(j, 1)]) - at(&[(j, -1)])) / (2.0 * h));
    let metric = DMatrix::from_fn(n, n, |j, k| {
        let mut acc = 0.0;
        for s in SIGNS {
            for t in SIGNS {
                acc += (s * t) as f64 * at(&[(j, s), (k, t)]);
            }
        }
        acc / (4.0 * h * h)
    });
    let third = Tensor3::from_fn(n, |j, k, l| {
        let mut acc = 0.0;
        for a in SIGNS {
            for b in SIGNS {
                for c in SIGNS {
                    acc += (a * b * c) as f64 * at(&[(j, a), (k, b), (l, c)]);
                }
            }
        }
        acc / (8.0 * h * h * h)
    });
    DivergenceExpansion {
        gradient,
        metric,
        third,
    }
}

/// Max-abs deviations of a recovery from the model's analytic tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryErrors {
    pub metric: f64,
    pub third_fin_fin_in: f64,
    pub gamma_first: Option<f64>,
    pub skewness: Option<f64>,
}

/// Serializable summary of a [`RecoveredGeometry`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryReport {
    pub point: Vec<f64>,
    #[serde(flatten)]
    pub kind: PotentialKind,
    pub step: DiagonalSteps,
    pub metric: Vec<Vec<f64>>,
    pub gamma_first: Option<Vec<Vec<Vec<f64>>>>,
    pub skewness: Option<Vec<Vec<Vec<f64>>>>,
    pub third_fin_fin_in: Vec<Vec<Vec<f64>>>,
    pub third_in_in_fin: Vec<Vec<Vec<f64>>>,
    pub errors_vs_model: Option<RecoveryErrors>,
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

impl RecoveryReport {
    /// Compares against `model` when given.
    pub fn new(rec: &RecoveredGeometry, model: Option<&ManifoldModel>) -> Result<Self> {
        let errors_vs_model = model
            .map(|m| -> Result<RecoveryErrors> {
                let q = &rec.point;
                let g = m.metric(q)?;
                let gamma = levi_civita_first(m, q)?.first_kind;
                let t = m.skewness(q)?;
                Ok(RecoveryErrors {
                    metric: (&rec.metric - g).amax(),
                    third_fin_fin_in: rec
                        .third_fin_fin_in
                        .max_abs_diff(&expected_third_fin_fin_in(m, q, rec.kind)?),
                    gamma_first: rec.gamma_first.as_ref().map(|x| x.max_abs_diff(&gamma)),
                    skewness: rec.skewness.as_ref().map(|x| x.max_abs_diff(&t)),
                })
            })
            .transpose()?;
        Ok(Self {
            point: rec.point.iter().copied().collect(),
            kind: rec.kind,
            step: rec.step,
            metric: matrix_rows(&rec.metric),
            gamma_first: rec.gamma_first.as_ref().map(Tensor3::to_nested),
            skewness: rec.skewness.as_ref().map(Tensor3::to_nested),
            third_fin_fin_in: rec.third_fin_fin_in.to_nested(),
            third_in_in_fin: rec.third_in_in_fin.to_nested(),
            errors_vs_model,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{closed_form_potential_exponential, BuiltinModel};
    use std::f64::consts::E;

    fn p(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn exponential_principal_function() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        let opts = ShootOptions::default();
        for alpha in [0.0, 1.0] {
            let s = hamilton_principal(&m, alpha, &p(&[1.0]), &p(&[E]), &opts).unwrap();
            let oracle = closed_form_potential_exponential(1.0, E, alpha);
            assert!((s.value - oracle).abs() < 1e-7, "alpha {alpha}: {}", s.value);
            assert!(s.quadrature_error.unwrap() <= 1e-9);
        }
        let zero = hamilton_principal(&m, 0.3, &p(&[1.7]), &p(&[1.7]), &opts).unwrap();
        assert_eq!(zero.value, 0.0);
    }

    #[test]
    fn kl_principal_function() {
        let kl = BuiltinModel::KlFreeParticle.raw().unwrap();
        let s = principal_function(&kl, &p(&[0.0]), &p(&[0.7]), &ShootOptions::default()).unwrap();
        assert!((s.value - (0.7f64.exp() - 1.7)).abs() < 1e-10);
    }

    #[test]
    fn self_dual_examples() {
        let opts = ShootOptions::default();
        let r3 = BuiltinModel::EuclideanCubicR3.manifold().unwrap();
        let s = self_dual_potential(&r3, &p(&[0.0; 3]), &p(&[3.0, 4.0, 0.0]), &opts).unwrap();
        assert!((s - 12.5).abs() < 1e-10);
        let exp = BuiltinModel::Exponential1D.manifold().unwrap();
        assert!((self_dual_potential(&exp, &p(&[1.0]), &p(&[E]), &opts).unwrap() - 0.5).abs() < 1e-8);
        let sphere = BuiltinModel::SpherePullback.manifold().unwrap();
        let half = std::f64::consts::FRAC_PI_2;
        let s = self_dual_potential(&sphere, &p(&[half, 0.5]), &p(&[half, 0.5 + half]), &opts).unwrap();
        assert!((s - 0.5 * half * half).abs() < 1e-7, "{s}");
    }

    #[test]
    fn expmap_examples() {
        let opts = ShootOptions::default();
        let exp = BuiltinModel::Exponential1D.manifold().unwrap();
        let s = expmap_potential(&exp, &p(&[1.0]), &p(&[2.0]), &opts).unwrap();
        assert!((s.value - 0.5).abs() < 1e-12);
        assert!((s.shooting.v_in[0] - 1.0).abs() < 1e-12);
        assert_eq!(expmap_potential(&exp, &p(&[2.0]), &p(&[2.0]), &opts).unwrap().value, 0.0);
        // plain Euclidean space: the α = 1 connection of the cubic model is not flat
        let r3 = BuiltinModel::EuclideanCubicR3.manifold().unwrap().self_dual();
        let s = expmap_potential(&r3, &p(&[0.0; 3]), &p(&[1.0, -2.0, 0.5]), &opts).unwrap();
        assert!((s.value - 2.625).abs() < 1e-12);
    }

    #[test]
    fn exponential_recovery_at_one() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        let r = recover(&m, 0.5, &p(&[1.0]), &RecoveryOptions::default()).unwrap();
        assert!((r.metric[(0, 0)] - 1.0).abs() < 1e-4);
        assert!((r.third_fin_fin_in[(0, 0, 0)] - 2.0).abs() < 5e-3);
        assert!(r.third_in_in_fin[(0, 0, 0)].abs() < 5e-3);
        assert!((r.skewness().unwrap()[(0, 0, 0)] + 2.0).abs() < 1e-2);
        assert!((r.gamma_first.as_ref().unwrap()[(0, 0, 0)] + 1.0).abs() < 5e-3);
        assert_eq!(r.alpha(), Some(0.5));
    }

    #[test]
    fn skewness_unavailable_at_alpha_zero() {
        let m = BuiltinModel::ExponentialLogChart.manifold().unwrap();
        let r = recover(&m, 0.0, &p(&[0.2]), &RecoveryOptions::default()).unwrap();
        assert_eq!(r.skewness(), Err(Error::SkewnessUnavailable));
        assert!((r.metric[(0, 0)] - 1.0).abs() < 1e-4);
        assert!(r.gamma_first.unwrap().max_abs() < 5e-3);
    }

    #[test]
    fn stencil_must_fit_in_domain() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        let r = recover(&m, 0.5, &p(&[1e-3]), &RecoveryOptions::default());
        assert!(matches!(r, Err(Error::StepLeavesDomain { coordinate: 0, .. })));
    }

    #[test]
    fn expmap_recovery_exponential() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        let r = recover_expmap(&m, &p(&[1.0]), &RecoveryOptions::default()).unwrap();
        assert!((r.metric[(0, 0)] - 1.0).abs() < 1e-4);
        // S = (b − a)² / (2a²) in closed form, so ∂³S/∂b∂b∂a = −2/a³
        assert!((r.third_fin_fin_in[(0, 0, 0)] + 2.0).abs() < 5e-3);
        let expected = expected_third_fin_fin_in(&m, &p(&[1.0]), PotentialKind::ExpMap).unwrap();
        assert!((expected[(0, 0, 0)] + 2.0).abs() < 1e-12);
        assert_eq!(r.skewness(), Err(Error::SkewnessUnavailable));
    }

    #[test]
    fn expansion_examples() {
        let q = p(&[0.0]);
        let kl = expand_divergence_lagrangian(|_, v| v[0].exp_m1() - v[0], &q, DEFAULT_EXPANSION_STEP);
        assert!(kl.gradient[0].abs() < 1e-6);
        assert!((kl.metric[(0, 0)] - 1.0).abs() < 1e-5);
        assert!((kl.third[(0, 0, 0)] - 1.0).abs() < 1e-5);
        let quad = expand_divergence_lagrangian(|_, v| 0.5 * v.dot(v), &p(&[1.0, 2.0]), DEFAULT_EXPANSION_STEP);
        assert!(quad.gradient.amax() < 1e-12);
        assert!((quad.metric - DMatrix::identity(2, 2)).amax() < 1e-9);
        assert!(quad.third.max_abs() < 1e-6);
    }

    #[test]
    fn report_serializes_with_errors() {
        let m = BuiltinModel::ExponentialLogChart.manifold().unwrap();
        let r = recover(&m, 1.0, &p(&[0.0]), &RecoveryOptions::default()).unwrap();
        let report = RecoveryReport::new(&r, Some(&m)).unwrap();
        let errs = report.errors_vs_model.as_ref().unwrap();
        assert!(errs.metric < 1e-4 && errs.skewness.unwrap() < 5e-3);
        let json = serde_json::to_value(&report).unwrap();
        assert_eq!(json["kind"], "principal");
        assert_eq!(json["alpha"], 1.0);
        assert!(json["errors_vs_model"]["gamma_first"].as_f64().unwrap() < 5e-3);
    }
}
