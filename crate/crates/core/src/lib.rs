//! Numerical potential functions for statistical manifolds.
//!
//! A statistical manifold `(M, g, T)` defines the cubic Lagrangian
//! `L_α(q, v) = ½ g(v, v) + (α/6) T(v, v, v)`. Its Hamilton principal
//! function `S_α(q_in, q_fin)` is computed here by shooting on the
//! Euler-Lagrange flow and integrating the action; differentiating `S_α`
//! on the diagonal recovers `g`, the Levi-Civita symbols and `T`.
//!
//! ```
//! use hamilton_potential::{hamilton_principal, BuiltinModel, ShootOptions};
//! use nalgebra::DVector;
//!
//! let model = BuiltinModel::Exponential1D.manifold().unwrap();
//! let (a, b) = (DVector::from_element(1, 1.0), DVector::from_element(1, std::f64::consts::E));
//! let s = hamilton_principal(&model, 0.0, &a, &b, &ShootOptions::default()).unwrap();
//! assert!((s.value - 0.5).abs() < 1e-7);
//! ```

pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod models;
pub mod potential;
pub mod quadrature;
pub mod shooting;
pub mod tensor;

pub use dynamics::{
    energy, integrate, lagrangian, momentum, ConnectionSpray, CubicLagrangian, Lagrangian, RawLagrangian,
    SecondOrderSystem, TangentState, Trajectory, DEFAULT_STEPS,
};
pub use error::{Error, Result};
pub use geometry::{
    alpha_connection, levi_civita_fd, levi_civita_first, pullback, ConnectionCoefficients, Domain, Immersion,
    Interval, ManifoldModel,
};
pub use models::{
    closed_form_potential_exponential, exponential_density, fisher_rao_metric, kl_divergence, skewness_tensor,
    sphere_immersion, BuiltinModel, Model, ModelSpec, ParametricDensity,
};
pub use potential::{
    expand_divergence_lagrangian, expmap_potential, hamilton_principal, principal_function, recover,
    recover_expmap, self_dual_potential, DiagonalSteps, PotentialEvaluation, PotentialKind, RecoveredGeometry,
    RecoveryOptions, RecoveryReport,
};
pub use quadrature::QuadratureConfig;
pub use shooting::{shoot, ShootOptions, ShootingResult};
pub use tensor::Tensor3;
