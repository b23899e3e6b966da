//! Chart-level statistical manifolds `(M, g, T)`: tensor evaluation,
//! Christoffel symbols of both kinds, alpha-connections and pullbacks
//! along immersions.
//!
//! Index conventions: `first_kind[(j, k, l)]` is `Γ_jkl`, the Christoffel
//! symbol of the first kind with the lowered index in front and symmetric in
//! `(k, l)`; `second_kind[(j, k, l)]` is `Γ^j_kl = Σ_m g^{jm} Γ_mkl`.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor3;

/// Relative and absolute floor of the central-difference step used for
/// derivatives of `g` and `T`.
pub const FD_RELATIVE_STEP: f64 = 1e-5;

/// Number of step halvings tried before a stencil that leaves the domain is
/// reported as an error.
const MAX_STEP_SHRINKS: usize = 8;

/// Central-difference step for a coordinate of magnitude `x`.
pub fn fd_step(x: f64) -> f64 {
    FD_RELATIVE_STEP.max(FD_RELATIVE_STEP * x.abs())
}

/// Open interval `(lo, hi)`; either end may be infinite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub fn real_line() -> Self {
        Self::new(f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn positive() -> Self {
        Self::new(0.0, f64::INFINITY)
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Product of open intervals. Points closer than `margin` to a finite
/// boundary are rejected as well.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    intervals: Vec<Interval>,
    margin: f64,
}

impl Domain {
    pub fn new(intervals: Vec<Interval>) -> Self {
        Self {
            intervals,
            margin: 0.0,
        }
    }

    pub fn unbounded(dim: usize) -> Self {
        Self::new(vec![Interval::real_line(); dim])
    }

    pub fn with_margin(mut self, margin: f64) -> Self {
        self.margin = margin;
        self
    }

    pub fn dim(&self) -> usize {
        self.intervals.len()
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn contains(&self, q: &DVector<f64>) -> bool {
        q.len() == self.dim()
            && self.intervals.iter().zip(q.iter()).all(|(iv, &x)| {
                x.is_finite() && x > iv.lo + self.margin && x < iv.hi - self.margin
            })
    }

    pub fn check(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: q.len(),
            });
        }
        if self.contains(q) {
            Ok(())
        } else {
            Err(Error::OutsideDomain {
                point: q.iter().copied().collect(),
            })
        }
    }

    /// Smallest finite interval width, if any coordinate is bounded on both sides.
    pub fn min_finite_width(&self) -> Option<f64> {
        self.intervals
            .iter()
            .map(Interval::width)
            .filter(|w| w.is_finite())
            .reduce(f64::min)
    }

    /// Intersection with another domain of the same dimension.
    pub fn intersect(&self, other: &Domain) -> Result<Domain> {
        if other.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        let intervals = self
            .intervals
            .iter()
            .zip(&other.intervals)
            .map(|(a, b)| Interval::new(a.lo.max(b.lo), a.hi.min(b.hi)))
            .collect::<Vec<_>>();
        if intervals.iter().any(|iv| iv.lo >= iv.hi) {
            return Err(Error::InvalidArgument("empty domain intersection".into()));
        }
        Ok(Domain {
            intervals,
            margin: self.margin.max(other.margin),
        })
    }

    /// Largest `h <= initial` (by halving) with `q ± h e_j` inside the domain.
    pub(crate) fn central_step(&self, q: &DVector<f64>, j: usize, initial: f64) -> Result<f64> {
        let mut h = initial;
        for _ in 0..=MAX_STEP_SHRINKS {
            let mut plus = q.clone();
            plus[j] += h;
            let mut minus = q.clone();
            minus[j] -= h;
            if self.contains(&plus) && self.contains(&minus) {
                return Ok(h);
            }
            h *= 0.5;
        }
        Err(Error::StepLeavesDomain {
            coordinate: j,
            point: q.iter().copied().collect(),
        })
    }
}

pub type MatrixField = Arc<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
pub type TensorField = Arc<dyn Fn(&DVector<f64>) -> Tensor3 + Send + Sync>;
pub type VectorMap = Arc<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A chart-level description of a statistical manifold `(M, g, T)`.
///
/// Evaluators are only ever called at points inside `domain`.
#[derive(Clone)]
pub struct ManifoldModel {
    name: String,
    domain: Domain,
    metric: MatrixField,
    skewness: TensorField,
    christoffel_first: Option<TensorField>,
}

impl fmt::Debug for ManifoldModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ManifoldModel")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .field("analytic_christoffel", &self.christoffel_first.is_some())
            .finish()
    }
}

impl ManifoldModel {
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        metric: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        skewness: impl Fn(&DVector<f64>) -> Tensor3 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            metric: Arc::new(metric),
            skewness: Arc::new(skewness),
            christoffel_first: None,
        }
    }

    pub fn with_christoffel_first(
        mut self,
        f: impl Fn(&DVector<f64>) -> Tensor3 + Send + Sync + 'static,
    ) -> Self {
        self.christoffel_first = Some(Arc::new(f));
        self
    }

    /// Same metric, `T ≡ 0` (the self-dual manifold of `g`).
    pub fn self_dual(&self) -> Self {
        let n = self.dim();
        Self {
            name: format!("{}[T=0]", self.name),
            skewness: Arc::new(move |_| Tensor3::zeros(n)),
            ..self.clone()
        }
    }

    /// Same tensors on a restricted domain.
    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn has_analytic_christoffel(&self) -> bool {
        self.christoffel_first.is_some()
    }

    pub fn metric(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.domain.check(q)?;
        Ok((self.metric)(q))
    }

    pub fn skewness(&self, q: &DVector<f64>) -> Result<Tensor3> {
        self.domain.check(q)?;
        Ok((self.skewness)(q))
    }

    /// `∂_m T_jkl` by central differences; entry `m` of the result is `∂_m T`.
    pub fn skewness_derivative(&self, q: &DVector<f64>) -> Result<Vec<Tensor3>> {
        self.domain.check(q)?;
        (0..self.dim())
            .map(|m| {
                let h = self.domain.central_step(q, m, fd_step(q[m]))?;
                let mut plus = q.clone();
                plus[m] += h;
                let mut minus = q.clone();
                minus[m] -= h;
                Ok((self.skewness)(&plus).add_scaled(&(self.skewness)(&minus), -1.0).scale(0.5 / h))
            })
            .collect()
    }

    /// `∂_m g_jk` by central differences with step `h` (default policy if `None`).
    fn metric_derivative(&self, q: &DVector<f64>, h: Option<f64>) -> Result<Vec<DMatrix<f64>>> {
        (0..self.dim())
            .map(|m| {
                let h = self.domain.central_step(q, m, h.unwrap_or_else(|| fd_step(q[m])))?;
                let mut plus = q.clone();
                plus[m] += h;
                let mut minus = q.clone();
                minus[m] -= h;
                Ok(((self.metric)(&plus) - (self.metric)(&minus)) * (0.5 / h))
            })
            .collect()
    }
}

/// Christoffel symbols at a point, both kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct ConnectionCoefficients {
    pub point: DVector<f64>,
    pub first_kind: Tensor3,
    pub second_kind: Tensor3,
}

impl ConnectionCoefficients {
    /// Raises the first index with `g⁻¹`. Fails unless `g` is positive-definite.
    pub fn from_first_kind(point: DVector<f64>, first_kind: Tensor3, metric: &DMatrix<f64>) -> Result<Self> {
        let inverse = inverse_metric(metric, &point)?;
        let second_kind = first_kind.transform_first(&inverse);
        Ok(Self {
            point,
            first_kind,
            second_kind,
        })
    }

    /// Lowers the second-kind symbols again with `g`.
    pub fn lowered(&self, metric: &DMatrix<f64>) -> Tensor3 {
        self.second_kind.transform_first(metric)
    }
}

pub(crate) fn inverse_metric(metric: &DMatrix<f64>, point: &DVector<f64>) -> Result<DMatrix<f64>> {
    metric
        .clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotPositiveDefinite {
            point: point.iter().copied().collect(),
        })
}

fn christoffel_from_metric_derivative(dg: &[DMatrix<f64>]) -> Tensor3 {
    let n = dg.len();
    Tensor3::from_fn(n, |j, k, l| 0.5 * (dg[k][(j, l)] + dg[l][(j, k)] - dg[j][(k, l)]))
}

/// Levi-Civita symbols `Γ_jkl = ½(∂_k g_jl + ∂_l g_jk − ∂_j g_kl)`, analytic
/// when the model supplies them, else by central differences of `g`.
pub fn levi_civita_first(model: &ManifoldModel, q: &DVector<f64>) -> Result<ConnectionCoefficients> {
    let g = model.metric(q)?;
    let first = match &model.christoffel_first {
        Some(f) => f(q),
        None => christoffel_from_metric_derivative(&model.metric_derivative(q, None)?),
    };
    ConnectionCoefficients::from_first_kind(q.clone(), first, &g)
}

/// Levi-Civita first-kind symbols from finite differences of `g`, ignoring
/// any analytic closure. `h = None` uses the default step policy.
pub fn levi_civita_fd(model: &ManifoldModel, q: &DVector<f64>, h: Option<f64>) -> Result<Tensor3> {
    model.domain.check(q)?;
    Ok(christoffel_from_metric_derivative(&model.metric_derivative(q, h)?))
}

/// `_αΓ_jkl = _gΓ_jkl − (α/2) T_jkl`.
pub fn alpha_connection(model: &ManifoldModel, q: &DVector<f64>, alpha: f64) -> Result<ConnectionCoefficients> {
    let lc = levi_civita_first(model, q)?;
    if alpha == 0.0 {
        return Ok(lc);
    }
    let t = model.skewness(q)?;
    let first = lc.first_kind.add_scaled(&t, -0.5 * alpha);
    ConnectionCoefficients::from_first_kind(q.clone(), first, &model.metric(q)?)
}

/// A smooth map `x(q)` from a source chart into a target chart.
#[derive(Clone)]
pub struct Immersion {
    pub source_dim: usize,
    pub target_dim: usize,
    domain: Domain,
    map: VectorMap,
    jacobian: Option<MatrixField>,
}

impl fmt::Debug for Immersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Immersion")
            .field("source_dim", &self.source_dim)
            .field("target_dim", &self.target_dim)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .finish()
    }
}

/// Relative singular-value floor below which a pullback is declared degenerate.
const RANK_TOLERANCE: f64 = 1e-10;

impl Immersion {
    pub fn new(
        domain: Domain,
        target_dim: usize,
        map: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            source_dim: domain.dim(),
            target_dim,
            domain,
            map: Arc::new(map),
            jacobian: None,
        }
    }

    pub fn with_jacobian(mut self, j: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(j));
        self
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn map(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        self.domain.check(q)?;
        Ok((self.map)(q))
    }

    /// `∂x^a/∂q^j` as a `target_dim x source_dim` matrix.
    pub fn jacobian(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.domain.check(q)?;
        if let Some(j) = &self.jacobian {
            return Ok(j(q));
        }
        let mut jac = DMatrix::zeros(self.target_dim, self.source_dim);
        for j in 0..self.source_dim {
            let h = self.domain.central_step(q, j, fd_step(q[j]))?;
            let mut plus = q.clone();
            plus[j] += h;
            let mut minus = q.clone();
            minus[j] -= h;
            let col = ((self.map)(&plus) - (self.map)(&minus)) * (0.5 / h);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }
}

/// `(i*g)_jk = g_ab J^a_j J^b_k` and `(i*T)_jkl = T_abc J^a_j J^b_k J^c_l`.
pub fn pull_back_tensors(jac: &DMatrix<f64>, g: &DMatrix<f64>, t: &Tensor3) -> (DMatrix<f64>, Tensor3) {
    let n = jac.ncols();
    let m = jac.nrows();
    let metric = jac.transpose() * g * jac;
    let skew = Tensor3::from_fn(n, |j, k, l| {
        let mut s = 0.0;
        for a in 0..m {
            for b in 0..m {
                let jab = jac[(a, j)] * jac[(b, k)];
                if jab == 0.0 {
                    continue;
                }
                for c in 0..m {
                    s += t[(a, b, c)] * jab * jac[(c, l)];
                }
            }
        }
        s
    });
    (metric, skew)
}

/// Pulls the ambient metric and skewness back to the source chart at `q`.
/// A rank-deficient jacobian is reported as [`Error::DegeneratePullback`].
pub fn pullback(
    immersion: &Immersion,
    ambient_metric: impl Fn(&DVector<f64>) -> DMatrix<f64>,
    ambient_skewness: impl Fn(&DVector<f64>) -> Tensor3,
    q: &DVector<f64>,
) -> Result<(DMatrix<f64>, Tensor3)> {
    let x = immersion.map(q)?;
    let jac = immersion.jacobian(q)?;
    let sv = jac.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if jac.ncols() > jac.nrows() || !(smin > RANK_TOLERANCE * smax.max(1.0)) {
        return Err(Error::DegeneratePullback {
            singular_values: sv.iter().copied().collect(),
        });
    }
    Ok(pull_back_tensors(&jac, &ambient_metric(&x), &ambient_skewness(&x)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BuiltinModel;

    fn pt(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn euclidean_levi_civita_vanishes() {
        let model = BuiltinModel::EuclideanCubicR3.manifold().unwrap();
        let c = levi_civita_first(&model, &pt(&[0.3, -1.0, 2.0])).unwrap();
        assert_eq!(c.first_kind.max_abs(), 0.0);
        assert_eq!(levi_civita_fd(&model, &pt(&[0.3, -1.0, 2.0]), None).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn exponential_levi_civita_values() {
        let model = BuiltinModel::Exponential1D.manifold().unwrap();
        let c1 = levi_civita_first(&model, &pt(&[1.0])).unwrap();
        assert!((c1.first_kind[(0, 0, 0)] + 1.0).abs() < 1e-14);
        // second kind: -1/ξ
        assert!((c1.second_kind[(0, 0, 0)] + 1.0).abs() < 1e-14);
        let c2 = levi_civita_first(&model, &pt(&[2.0])).unwrap();
        assert!((c2.first_kind[(0, 0, 0)] + 0.125).abs() < 1e-14);
        assert!((c2.second_kind[(0, 0, 0)] + 0.5).abs() < 1e-14);
        let fd = levi_civita_fd(&model, &pt(&[2.0]), None).unwrap();
        assert!((fd[(0, 0, 0)] + 0.125).abs() < 1e-9);
    }

    #[test]
    fn alpha_connection_values() {
        let model = BuiltinModel::Exponential1D.manifold().unwrap();
        let q = pt(&[1.0]);
        let zero = alpha_connection(&model, &q, 0.0).unwrap();
        assert_eq!(zero, levi_civita_first(&model, &q).unwrap());
        let plus = alpha_connection(&model, &q, 1.0).unwrap();
        assert!(plus.first_kind[(0, 0, 0)].abs() < 1e-14);
        let minus = alpha_connection(&model, &q, -1.0).unwrap();
        assert!((minus.first_kind[(0, 0, 0)] + 2.0).abs() < 1e-14);
    }

    #[test]
    fn outside_domain_rejected() {
        let model = BuiltinModel::Exponential1D.manifold().unwrap();
        assert!(matches!(
            levi_civita_first(&model, &pt(&[-1.0])),
            Err(Error::OutsideDomain { .. })
        ));
        assert!(matches!(
            model.metric(&pt(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn stencil_near_boundary_shrinks_then_fails() {
        let model = BuiltinModel::Exponential1D.manifold().unwrap();
        // h = 1e-5 does not fit at ξ = 4e-6, a halved step does
        assert!(levi_civita_fd(&model, &pt(&[4e-6]), None).is_ok());
        // no halving within the budget fits
        assert!(matches!(
            levi_civita_fd(&model, &pt(&[1e-9]), None),
            Err(Error::StepLeavesDomain { .. })
        ));
    }

    #[test]
    fn sphere_round_christoffel_fd_matches_analytic() {
        let model = BuiltinModel::SphereRound.manifold().unwrap();
        let q = pt(&[1.1, 2.0]);
        let analytic = levi_civita_first(&model, &q).unwrap().first_kind;
        let fd = levi_civita_fd(&model, &q, None).unwrap();
        assert!(analytic.max_abs_diff(&fd) < 1e-9);
        assert!(analytic.last_pair_symmetry_defect() == 0.0);
    }

    #[test]
    fn fd_christoffel_is_second_order() {
        let model = BuiltinModel::Exponential1D.manifold().unwrap();
        let q = pt(&[1.3]);
        let exact = levi_civita_first(&model, &q).unwrap().first_kind;
        let errs: Vec<f64> = [4e-2, 2e-2, 1e-2, 5e-3]
            .iter()
            .map(|&h| levi_civita_fd(&model, &q, Some(h)).unwrap().max_abs_diff(&exact))
            .collect();
        for w in errs.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!(order >= 1.9, "observed order {order} from {errs:?}");
        }
    }

    #[test]
    fn sphere_pullback_metric_at_sample_point() {
        let imm = crate::models::sphere_immersion();
        let q = pt(&[std::f64::consts::FRAC_PI_3, std::f64::consts::FRAC_PI_4]);
        let (g, _) = pullback(&imm, |_| DMatrix::identity(3, 3), |_| Tensor3::axis_cubic(&[1.0; 3]), &q).unwrap();
        assert!((g[(0, 0)] - 1.0).abs() < 1e-14);
        assert!((g[(1, 1)] - 0.75).abs() < 1e-14);
        assert!(g[(0, 1)].abs() < 1e-14);
    }

    #[test]
    fn sphere_pullback_skewness_at_equator() {
        // ∂θ x = (0, 0, -1), ∂φ x = (0, 1, 0) at (π/2, 0): T_θθθ = (-1)³, T_φφφ = 1³
        let imm = crate::models::sphere_immersion();
        let q = pt(&[std::f64::consts::FRAC_PI_2, 1e-2]);
        let (_, t) = pullback(&imm, |_| DMatrix::identity(3, 3), |_| Tensor3::axis_cubic(&[1.0; 3]), &q).unwrap();
        let (s, c) = (1e-2f64.sin(), 1e-2f64.cos());
        assert!((t[(0, 0, 0)] + 1.0).abs() < 1e-12);
        assert!((t[(1, 1, 1)] - (c.powi(3) - s.powi(3))).abs() < 1e-12);
        assert!(t[(0, 0, 1)].abs() < 1e-12);
        assert!(t[(0, 1, 1)].abs() < 1e-12);
        assert!(t.symmetry_defect() < 1e-15);
    }

    #[test]
    fn identity_immersion_leaves_tensors_unchanged() {
        let imm = Immersion::new(Domain::unbounded(2), 2, |q| q.clone());
        let g0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let t0 = Tensor3::from_fn(2, |j, k, l| (j + k + l) as f64);
        let (g, t) = pullback(&imm, |_| g0.clone(), |_| t0.clone(), &pt(&[0.1, 0.2])).unwrap();
        assert!((g - &g0).amax() < 1e-9);
        assert!(t.max_abs_diff(&t0) < 1e-9);
    }

    #[test]
    fn degenerate_pullback_is_reported() {
        // both source directions map onto the same target direction
        let imm = Immersion::new(Domain::unbounded(2), 2, |q| DVector::from_vec(vec![q[0] + q[1], 0.0]));
        let r = pullback(&imm, |_| DMatrix::identity(2, 2), |_| Tensor3::zeros(2), &pt(&[0.0, 0.0]));
        assert!(matches!(r, Err(Error::DegeneratePullback { .. })));
    }

    #[test]
    fn raise_lower_round_trip() {
        let model = BuiltinModel::SpherePullback.manifold().unwrap();
        let q = pt(&[0.9, 2.5]);
        let c = alpha_connection(&model, &q, 0.7).unwrap();
        let lowered = c.lowered(&model.metric(&q).unwrap());
        assert!(lowered.max_abs_diff(&c.first_kind) < 1e-12);
    }
}
