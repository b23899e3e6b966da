//! Builtin models and the quadrature-based Fisher-Rao constructor for
//! parametric densities.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dynamics::{CubicLagrangian, Lagrangian, RawLagrangian};
use crate::error::{Error, Result};
use crate::geometry::{pull_back_tensors, Domain, Immersion, Interval, ManifoldModel};
use crate::quadrature::{integrate, integrate_vec, truncate_support, QuadratureConfig};
use crate::tensor::Tensor3;

/// Distance to the chart boundary below which sphere evaluations are rejected.
pub const SPHERE_BOUNDARY_MARGIN: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinModel {
    /// `M = R⁺`, `g = 1/ξ²`, `T = −2/ξ³` (exponential distributions).
    Exponential1D,
    /// The same manifold in the chart `y = ln ξ`: `g = 1`, `T = −2`.
    ExponentialLogChart,
    /// `L(y, u) = eᵘ − u − 1` on `R`, whose principal function is the KL divergence.
    KlFreeParticle,
    /// `R³` with `g = δ` and `T = Σᵢ dxᵢ³`.
    EuclideanCubicR3,
    /// `g` and `T` of [`BuiltinModel::EuclideanCubicR3`] pulled back to `S²`.
    SpherePullback,
    /// Round `S²`, `T ≡ 0`.
    SphereRound,
}

impl BuiltinModel {
    pub const ALL: [BuiltinModel; 6] = [
        BuiltinModel::Exponential1D,
        BuiltinModel::ExponentialLogChart,
        BuiltinModel::KlFreeParticle,
        BuiltinModel::EuclideanCubicR3,
        BuiltinModel::SpherePullback,
        BuiltinModel::SphereRound,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinModel::Exponential1D => "exponential1d",
            BuiltinModel::ExponentialLogChart => "exponential-log",
            BuiltinModel::KlFreeParticle => "kl-free",
            BuiltinModel::EuclideanCubicR3 => "euclidean-cubic-r3",
            BuiltinModel::SpherePullback => "sphere-pullback",
            BuiltinModel::SphereRound => "sphere-round",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn dim(self) -> usize {
        match self {
            BuiltinModel::Exponential1D | BuiltinModel::ExponentialLogChart | BuiltinModel::KlFreeParticle => 1,
            BuiltinModel::SpherePullback | BuiltinModel::SphereRound => 2,
            BuiltinModel::EuclideanCubicR3 => 3,
        }
    }

    pub fn build(self) -> Model {
        match self {
            BuiltinModel::KlFreeParticle => Model::Raw(kl_free_particle()),
            other => Model::Statistical(other.manifold().expect("statistical builtin")),
        }
    }

    /// The `(M, g, T)` description; `kl-free` is a raw Lagrangian and has none.
    pub fn manifold(self) -> Result<ManifoldModel> {
        Ok(match self {
            BuiltinModel::Exponential1D => exponential1d(),
            BuiltinModel::ExponentialLogChart => exponential_log_chart(),
            BuiltinModel::EuclideanCubicR3 => euclidean_cubic_r3(),
            BuiltinModel::SpherePullback => sphere_pullback(),
            BuiltinModel::SphereRound => sphere_round(),
            BuiltinModel::KlFreeParticle => {
                return Err(Error::InvalidArgument(
                    "kl-free is a raw Lagrangian without metric/skewness tensors".into(),
                ))
            }
        })
    }

    pub fn raw(self) -> Result<RawLagrangian> {
        match self {
            BuiltinModel::KlFreeParticle => Ok(kl_free_particle()),
            other => Err(Error::InvalidArgument(format!("{} is not a raw Lagrangian model", other.name()))),
        }
    }

    /// The parametric density behind the model, when there is one.
    pub fn density(self) -> Option<ParametricDensity> {
        match self {
            BuiltinModel::Exponential1D => Some(exponential_density()),
            _ => None,
        }
    }
}

impl fmt::Display for BuiltinModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Either a statistical manifold driven by `L_α`, or a raw Lagrangian.
#[derive(Debug, Clone)]
pub enum Model {
    Statistical(ManifoldModel),
    Raw(RawLagrangian),
}

impl Model {
    pub fn name(&self) -> &str {
        match self {
            Model::Statistical(m) => m.name(),
            Model::Raw(r) => r.name(),
        }
    }

    pub fn domain(&self) -> &Domain {
        match self {
            Model::Statistical(m) => m.domain(),
            Model::Raw(r) => crate::dynamics::SecondOrderSystem::domain(r),
        }
    }

    pub fn dim(&self) -> usize {
        self.domain().dim()
    }

    pub fn manifold(&self) -> Option<&ManifoldModel> {
        match self {
            Model::Statistical(m) => Some(m),
            Model::Raw(_) => None,
        }
    }

    /// `L_α` for statistical models; raw Lagrangians ignore `alpha`.
    pub fn lagrangian(&self, alpha: f64) -> Box<dyn Lagrangian + '_> {
        match self {
            Model::Statistical(m) => Box::new(CubicLagrangian::new(m, alpha)),
            Model::Raw(r) => Box::new(r.clone()),
        }
    }

    fn restrict(self, domain: Domain) -> Self {
        match self {
            Model::Statistical(m) => Model::Statistical(m.with_domain(domain)),
            Model::Raw(r) => Model::Raw(r.with_domain(domain)),
        }
    }
}

/// Model specification file: `{ "dim": n, "domain": [[lo, hi], ...], "model": "<builtin-name>" }`.
/// Infinite bounds may be written as `null`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dim: usize,
    pub domain: Vec<[Option<f64>; 2]>,
    pub model: String,
}

impl ModelSpec {
    /// The builtin restricted to the declared domain (intersected with its own).
    pub fn build(&self) -> Result<Model> {
        let builtin = BuiltinModel::from_name(&self.model)?;
        if self.dim != builtin.dim() {
            return Err(Error::DimensionMismatch {
                expected: builtin.dim(),
                found: self.dim,
            });
        }
        if self.domain.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: self.domain.len(),
            });
        }
        let declared = Domain::new(
            self.domain
                .iter()
                .map(|[lo, hi]| Interval::new(lo.unwrap_or(f64::NEG_INFINITY), hi.unwrap_or(f64::INFINITY)))
                .collect(),
        );
        let model = builtin.build();
        let domain = model.domain().intersect(&declared)?;
        Ok(model.restrict(domain))
    }
}

fn exponential1d() -> ManifoldModel {
    ManifoldModel::new(
        "exponential1d",
        Domain::new(vec![Interval::positive()]),
        |q| DMatrix::from_element(1, 1, 1.0 / (q[0] * q[0])),
        |q| Tensor3::axis_cubic(&[-2.0 / q[0].powi(3)]),
    )
    .with_christoffel_first(|q| Tensor3::axis_cubic(&[-1.0 / q[0].powi(3)]))
}

fn exponential_log_chart() -> ManifoldModel {
    ManifoldModel::new(
        "exponential-log",
        Domain::unbounded(1),
        |_| DMatrix::identity(1, 1),
        |_| Tensor3::axis_cubic(&[-2.0]),
    )
    .with_christoffel_first(|_| Tensor3::zeros(1))
}

fn euclidean_cubic_r3() -> ManifoldModel {
    ManifoldModel::new(
        "euclidean-cubic-r3",
        Domain::unbounded(3),
        |_| DMatrix::identity(3, 3),
        |_| Tensor3::axis_cubic(&[1.0, 1.0, 1.0]),
    )
    .with_christoffel_first(|_| Tensor3::zeros(3))
}

fn sphere_domain() -> Domain {
    Domain::new(vec![Interval::new(0.0, PI), Interval::new(0.0, 2.0 * PI)]).with_margin(SPHERE_BOUNDARY_MARGIN)
}

fn sphere_embedding(q: &DVector<f64>) -> DVector<f64> {
    let (t, p) = (q[0], q[1]);
    DVector::from_vec(vec![t.sin() * p.cos(), t.sin() * p.sin(), t.cos()])
}

fn sphere_jacobian(q: &DVector<f64>) -> DMatrix<f64> {
    let (st, ct) = q[0].sin_cos();
    let (sp, cp) = q[1].sin_cos();
    DMatrix::from_row_slice(3, 2, &[ct * cp, -st * sp, ct * sp, st * cp, -st, 0.0])
}

/// `(θ, φ) ↦ (sin θ cos φ, sin θ sin φ, cos θ)` on `θ ∈ (0, π), φ ∈ (0, 2π)`.
pub fn sphere_immersion() -> Immersion {
    Immersion::new(sphere_domain(), 3, sphere_embedding).with_jacobian(sphere_jacobian)
}

/// Levi-Civita symbols of `dθ² + sin²θ dφ²`: `Γ_θφφ = −sinθ cosθ`, `Γ_φθφ = Γ_φφθ = sinθ cosθ`.
fn sphere_christoffel(q: &DVector<f64>) -> Tensor3 {
    let sc = q[0].sin() * q[0].cos();
    let mut t = Tensor3::zeros(2);
    t[(0, 1, 1)] = -sc;
    t[(1, 0, 1)] = sc;
    t[(1, 1, 0)] = sc;
    t
}

fn sphere_metric(q: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, q[0].sin().powi(2)])
}

fn sphere_round() -> ManifoldModel {
    ManifoldModel::new("sphere-round", sphere_domain(), sphere_metric, |_| Tensor3::zeros(2))
        .with_christoffel_first(sphere_christoffel)
}

fn sphere_pullback() -> ManifoldModel {
    let ambient_t = Tensor3::axis_cubic(&[1.0, 1.0, 1.0]);
    let ambient_g = DMatrix::<f64>::identity(3, 3);
    ManifoldModel::new(
        "sphere-pullback",
        sphere_domain(),
        move |q| pull_back_tensors(&sphere_jacobian(q), &ambient_g, &Tensor3::zeros(3)).0,
        move |q| {
            let g = DMatrix::<f64>::identity(3, 3);
            pull_back_tensors(&sphere_jacobian(q), &g, &ambient_t).1
        },
    )
    .with_christoffel_first(sphere_christoffel)
}

fn kl_free_particle() -> RawLagrangian {
    RawLagrangian::new("kl-free", Domain::unbounded(1), |_, v| v[0].exp_m1() - v[0])
        .with_velocity_gradient(|_, v| DVector::from_element(1, v[0].exp_m1()))
        .with_velocity_hessian(|_, v| DMatrix::from_element(1, 1, v[0].exp()))
        .with_position_gradient(|_, _| DVector::zeros(1))
        .with_mixed_hessian(|_, _| DMatrix::zeros(1, 1))
}

/// `S_α(ξ_in, ξ_fin) = ln²(ξ_fin/ξ_in)/2 − (α/3) ln³(ξ_fin/ξ_in)` for the
/// exponential family.
pub fn closed_form_potential_exponential(xi_in: f64, xi_fin: f64, alpha: f64) -> f64 {
    let l = (xi_fin / xi_in).ln();
    0.5 * l * l - alpha / 3.0 * l * l * l
}

type DensityFn = Arc<dyn Fn(f64, &DVector<f64>) -> f64 + Send + Sync>;
type ScoreFn = Arc<dyn Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// A family `p(x, ξ)` of densities on an interval of outcomes.
#[derive(Clone)]
pub struct ParametricDensity {
    name: String,
    dim: usize,
    sample_domain: Interval,
    density: DensityFn,
    log_density: Option<DensityFn>,
    score: Option<ScoreFn>,
}

impl fmt::Debug for ParametricDensity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ParametricDensity")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("sample_domain", &self.sample_domain)
            .field("analytic_score", &self.score.is_some())
            .finish()
    }
}

/// Relative step of the five-point score stencil in `ξ`.
const SCORE_FD_STEP: f64 = 1e-4;
/// Allowed deviation of `∫ p dx` from 1.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-6;

impl ParametricDensity {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        sample_domain: Interval,
        density: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            sample_domain,
            density: Arc::new(density),
            log_density: None,
            score: None,
        }
    }

    pub fn with_log_density(mut self, f: impl Fn(f64, &DVector<f64>) -> f64 + Send + Sync + 'static) -> Self {
        self.log_density = Some(Arc::new(f));
        self
    }

    /// Analytic `∂ log p / ∂ξ^j`.
    pub fn with_score(mut self, f: impl Fn(f64, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static) -> Self {
        self.score = Some(Arc::new(f));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sample_domain(&self) -> Interval {
        self.sample_domain
    }

    pub fn density(&self, x: f64, xi: &DVector<f64>) -> f64 {
        (self.density)(x, xi)
    }

    pub fn log_density(&self, x: f64, xi: &DVector<f64>) -> f64 {
        match &self.log_density {
            Some(f) => f(x, xi),
            None => (self.density)(x, xi).ln(),
        }
    }

    /// `∂ log p / ∂ξ^j`, analytic or by a five-point central stencil with
    /// step `1e-4 · max(1, |ξ_j|)`.
    pub fn score(&self, x: f64, xi: &DVector<f64>) -> DVector<f64> {
        if let Some(f) = &self.score {
            return f(x, xi);
        }
        DVector::from_fn(self.dim, |j, _| {
            let h = SCORE_FD_STEP * xi[j].abs().max(1.0);
            let at = |s: f64| {
                let mut shifted = xi.clone();
                shifted[j] += s * h;
                self.log_density(x, &shifted)
            };
            (-at(2.0) + 8.0 * at(1.0) - 8.0 * at(-1.0) + at(-2.0)) / (12.0 * h)
        })
    }

    fn support(&self, xi: &DVector<f64>, quad: &QuadratureConfig) -> Result<(f64, f64)> {
        truncate_support(
            |x| (self.density)(x, xi),
            self.sample_domain.lo,
            self.sample_domain.hi,
            quad.tail_ratio,
        )
    }

    fn check_parameter(&self, xi: &DVector<f64>) -> Result<()> {
        if xi.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                found: xi.len(),
            });
        }
        Ok(())
    }

    /// `∫ p(x, ξ) dx` over the truncated support.
    pub fn normalization(&self, xi: &DVector<f64>, quad: &QuadratureConfig) -> Result<f64> {
        self.check_parameter(xi)?;
        let (a, b) = self.support(xi, quad)?;
        integrate(
            |x| {
                let p = (self.density)(x, xi);
                if p.is_finite() {
                    Ok(p)
                } else {
                    Err(Error::NonFiniteIntegrand { x })
                }
            },
            a,
            b,
            quad,
        )
    }

    fn check_normalized(&self, xi: &DVector<f64>, quad: &QuadratureConfig) -> Result<()> {
        let z = self.normalization(xi, quad)?;
        if (z - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(Error::NormalizationFailure { integral: z });
        }
        Ok(())
    }

    /// `∫ p Π score` over the truncated support, for every index tuple of
    /// length `order` (row-major).
    fn score_moments(&self, xi: &DVector<f64>, order: u32, quad: &QuadratureConfig) -> Result<Vec<f64>> {
        self.check_parameter(xi)?;
        self.check_normalized(xi, quad)?;
        let n = self.dim;
        let width = n.pow(order);
        let (a, b) = self.support(xi, quad)?;
        integrate_vec(
            |x| {
                let p = (self.density)(x, xi);
                if p == 0.0 {
                    return Ok(vec![0.0; width]);
                }
                let s = self.score(x, xi);
                let out: Vec<f64> = (0..width)
                    .map(|idx| {
                        let mut prod = p;
                        let mut rest = idx;
                        for _ in 0..order {
                            prod *= s[rest % n];
                            rest /= n;
                        }
                        prod
                    })
                    .collect();
                if out.iter().all(|v| v.is_finite()) {
                    Ok(out)
                } else {
                    Err(Error::NonFiniteIntegrand { x })
                }
            },
            a,
            b,
            width,
            quad,
        )
    }
}

/// `g_jk = ∫ p (∂_j log p)(∂_k log p) dx`.
pub fn fisher_rao_metric(density: &ParametricDensity, xi: &DVector<f64>, quad: &QuadratureConfig) -> Result<DMatrix<f64>> {
    let n = density.dim();
    let m = density.score_moments(xi, 2, quad)?;
    Ok(DMatrix::from_fn(n, n, |j, k| m[j + n * k]))
}

/// `T_jkl = ∫ p (∂_j log p)(∂_k log p)(∂_l log p) dx`.
pub fn skewness_tensor(density: &ParametricDensity, xi: &DVector<f64>, quad: &QuadratureConfig) -> Result<Tensor3> {
    let n = density.dim();
    let m = density.score_moments(xi, 3, quad)?;
    Ok(Tensor3::from_fn(n, |j, k, l| m[j + n * (k + n * l)]))
}

/// `∫ p(x, ξ_in) ln(p(x, ξ_in) / p(x, ξ_fin)) dx`.
pub fn kl_divergence(
    density: &ParametricDensity,
    xi_in: &DVector<f64>,
    xi_fin: &DVector<f64>,
    quad: &QuadratureConfig,
) -> Result<f64> {
    density.check_parameter(xi_in)?;
    density.check_parameter(xi_fin)?;
    let (a, b) = density.support(xi_in, quad)?;
    integrate(
        |x| {
            let p = density.density(x, xi_in);
            if p == 0.0 {
                return Ok(0.0);
            }
            let v = p * (density.log_density(x, xi_in) - density.log_density(x, xi_fin));
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::NonFiniteIntegrand { x })
            }
        },
        a,
        b,
        quad,
    )
}

/// `p(x, ξ) = ξ e^{−xξ}` on `x > 0`, with analytic score `1/ξ − x`.
pub fn exponential_density() -> ParametricDensity {
    ParametricDensity::new("exponential", 1, Interval::positive(), |x, xi| xi[0] * (-x * xi[0]).exp())
        .with_log_density(|x, xi| xi[0].ln() - x * xi[0])
        .with_score(|x, xi| DVector::from_element(1, 1.0 / xi[0] - x))
}

/// Normal density with mean `ξ` and fixed standard deviation `sigma`.
pub fn gaussian_mean_density(sigma: f64) -> ParametricDensity {
    let norm = 1.0 / (sigma * (2.0 * PI).sqrt());
    ParametricDensity::new("gaussian-mean", 1, Interval::real_line(), move |x, xi| {
        let z = (x - xi[0]) / sigma;
        norm * (-0.5 * z * z).exp()
    })
    .with_log_density(move |x, xi| {
        let z = (x - xi[0]) / sigma;
        norm.ln() - 0.5 * z * z
    })
}
