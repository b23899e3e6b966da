//! Dynamics on the tangent bundle: the cubic Lagrangian
//! `L_α(q, v) = ½ g_jk v^j v^k + (α/6) T_jkl v^j v^k v^l`, its momenta,
//! energy and Euler-Lagrange acceleration, plus a fixed-step RK4 integrator
//! over `t ∈ [0, 1]`.

use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::geometry::{alpha_connection, fd_step, levi_civita_first, Domain, ManifoldModel};

/// Default number of RK4 steps on `[0, 1]`.
pub const DEFAULT_STEPS: usize = 200;

/// `|det M| < SINGULAR_MASS_RATIO * |det g|` is treated as a singular mass matrix.
pub const SINGULAR_MASS_RATIO: f64 = 1e-12;

/// A point-velocity pair `(q, v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
}

impl TangentState {
    pub fn new(q: DVector<f64>, v: DVector<f64>) -> Self {
        assert_eq!(q.len(), v.len(), "position and velocity dimensions differ");
        Self { q, v }
    }

    pub fn from_slices(q: &[f64], v: &[f64]) -> Self {
        Self::new(DVector::from_column_slice(q), DVector::from_column_slice(v))
    }

    pub fn at_rest(q: DVector<f64>) -> Self {
        let v = DVector::zeros(q.len());
        Self { q, v }
    }
}

/// A second-order flow `q̈ = a(q, q̇)` on a chart.
pub trait SecondOrderSystem: Send + Sync {
    fn label(&self) -> String;

    fn domain(&self) -> &Domain;

    fn dim(&self) -> usize {
        self.domain().dim()
    }

    /// The parameter α of the system, when it has one.
    fn alpha(&self) -> Option<f64> {
        None
    }

    fn acceleration(&self, state: &TangentState) -> Result<DVector<f64>>;

    /// Conserved energy, when the flow comes from an autonomous Lagrangian.
    fn energy(&self, _state: &TangentState) -> Result<Option<f64>> {
        Ok(None)
    }

    /// Starting velocity for the boundary problem `q(0) = q_in, q(1) = q_fin`.
    fn initial_guess(&self, q_in: &DVector<f64>, q_fin: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(q_fin - q_in)
    }
}

/// A flow generated by a Lagrangian `L(q, v)`.
pub trait Lagrangian: SecondOrderSystem {
    fn value(&self, state: &TangentState) -> Result<f64>;

    /// `p_j = ∂L/∂v^j`.
    fn momentum(&self, state: &TangentState) -> Result<DVector<f64>>;
}

/// Legendre energy `p·v − L`.
pub fn legendre_energy<L: Lagrangian + ?Sized>(lagrangian: &L, state: &TangentState) -> Result<f64> {
    Ok(lagrangian.momentum(state)?.dot(&state.v) - lagrangian.value(state)?)
}

/// `L_α(q, v) = ½ g_jk v^j v^k + (α/6) T_jkl v^j v^k v^l`.
pub fn lagrangian(model: &ManifoldModel, alpha: f64, state: &TangentState) -> Result<f64> {
    let g = model.metric(&state.q)?;
    let quadratic = 0.5 * (&g * &state.v).dot(&state.v);
    if alpha == 0.0 {
        return Ok(quadratic);
    }
    let t = model.skewness(&state.q)?;
    Ok(quadratic + alpha / 6.0 * t.contract_all(&state.v))
}

/// `p_j = g_jk v^k + (α/2) T_jkl v^k v^l`.
pub fn momentum(model: &ManifoldModel, alpha: f64, state: &TangentState) -> Result<DVector<f64>> {
    let g = model.metric(&state.q)?;
    let p = &g * &state.v;
    if alpha == 0.0 {
        return Ok(p);
    }
    let t = model.skewness(&state.q)?;
    Ok(p + t.contract_last_two(&state.v) * (0.5 * alpha))
}

/// `E = p·v − L_α = ½ g_jk v^j v^k + (α/3) T_jkl v^j v^k v^l`.
pub fn energy(model: &ManifoldModel, alpha: f64, state: &TangentState) -> Result<f64> {
    let g = model.metric(&state.q)?;
    let quadratic = 0.5 * (&g * &state.v).dot(&state.v);
    if alpha == 0.0 {
        return Ok(quadratic);
    }
    let t = model.skewness(&state.q)?;
    Ok(quadratic + alpha / 3.0 * t.contract_all(&state.v))
}

/// Solves the Euler-Lagrange equations of `L_α` for `v̇`:
///
/// `(g_jk + α T_jkl v^l) v̇^k = −Γ_jkl v^k v^l
///     − (α/6)(∂_m T_jkl + ∂_k T_jlm + ∂_l T_jkm − ∂_j T_klm) v^k v^l v^m`.
pub fn el_acceleration(model: &ManifoldModel, alpha: f64, state: &TangentState) -> Result<DVector<f64>> {
    let q = &state.q;
    let v = &state.v;
    let n = model.dim();
    let g = model.metric(q)?;
    let gamma = levi_civita_first(model, q)?;
    let mut rhs = -gamma.first_kind.contract_last_two(v);
    let mut mass = g.clone();
    if alpha != 0.0 {
        let t = model.skewness(q)?;
        mass += t.contract_last(v) * alpha;
        let dt = model.skewness_derivative(q)?;
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                for l in 0..n {
                    for m in 0..n {
                        let bracket = dt[m][(j, k, l)] + dt[k][(j, l, m)] + dt[l][(j, k, m)] - dt[j][(k, l, m)];
                        s += bracket * v[k] * v[l] * v[m];
                    }
                }
            }
            rhs[j] -= alpha / 6.0 * s;
        }
    }
    let det_g = g.determinant();
    let lu = mass.lu();
    let ratio = (lu.determinant() / det_g).abs();
    if !(ratio >= SINGULAR_MASS_RATIO) {
        return Err(Error::SingularMassMatrix { ratio });
    }
    lu.solve(&rhs).ok_or(Error::SingularMassMatrix { ratio })
}

/// `L_α` for a [`ManifoldModel`].
#[derive(Debug, Clone, Copy)]
pub struct CubicLagrangian<'a> {
    pub model: &'a ManifoldModel,
    pub alpha: f64,
}

impl<'a> CubicLagrangian<'a> {
    pub fn new(model: &'a ManifoldModel, alpha: f64) -> Self {
        Self { model, alpha }
    }
}

impl SecondOrderSystem for CubicLagrangian<'_> {
    fn label(&self) -> String {
        format!("{} (alpha = {})", self.model.name(), self.alpha)
    }

    fn domain(&self) -> &Domain {
        self.model.domain()
    }

    fn alpha(&self) -> Option<f64> {
        Some(self.alpha)
    }

    fn acceleration(&self, state: &TangentState) -> Result<DVector<f64>> {
        el_acceleration(self.model, self.alpha, state)
    }

    fn energy(&self, state: &TangentState) -> Result<Option<f64>> {
        energy(self.model, self.alpha, state).map(Some)
    }

    /// `v = Δq + ½ Γ^j_kl(q_in) Δq^k Δq^l`, Levi-Civita symbols of the second kind.
    fn initial_guess(&self, q_in: &DVector<f64>, q_fin: &DVector<f64>) -> Result<DVector<f64>> {
        crate::shooting::initial_guess(self.model, q_in, q_fin)
    }
}

impl Lagrangian for CubicLagrangian<'_> {
    fn value(&self, state: &TangentState) -> Result<f64> {
        lagrangian(self.model, self.alpha, state)
    }

    fn momentum(&self, state: &TangentState) -> Result<DVector<f64>> {
        momentum(self.model, self.alpha, state)
    }
}

/// Geodesic spray of the α-connection: `v̇^j = −_αΓ^j_kl v^k v^l`.
#[derive(Debug, Clone, Copy)]
pub struct ConnectionSpray<'a> {
    pub model: &'a ManifoldModel,
    pub alpha: f64,
}

impl<'a> ConnectionSpray<'a> {
    pub fn new(model: &'a ManifoldModel, alpha: f64) -> Self {
        Self { model, alpha }
    }
}

impl SecondOrderSystem for ConnectionSpray<'_> {
    fn label(&self) -> String {
        format!("{} geodesics of the alpha = {} connection", self.model.name(), self.alpha)
    }

    fn domain(&self) -> &Domain {
        self.model.domain()
    }

    fn alpha(&self) -> Option<f64> {
        Some(self.alpha)
    }

    fn acceleration(&self, state: &TangentState) -> Result<DVector<f64>> {
        let c = alpha_connection(self.model, &state.q, self.alpha)?;
        Ok(-c.second_kind.contract_last_two(&state.v))
    }

    fn initial_guess(&self, q_in: &DVector<f64>, q_fin: &DVector<f64>) -> Result<DVector<f64>> {
        self.model.domain().check(q_fin)?;
        // same series as the Lagrangian seed, with the α-connection symbols
        let delta = q_fin - q_in;
        let c = alpha_connection(self.model, q_in, self.alpha)?;
        Ok(&delta + c.second_kind.contract_last_two(&delta) * 0.5)
    }
}

type ScalarFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync>;
type VectorFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatrixFn = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

/// An arbitrary Lagrangian `L(q, v)` given as a closure. Derivatives not
/// supplied analytically are taken by central differences.
#[derive(Clone)]
pub struct RawLagrangian {
    name: String,
    domain: Domain,
    value: ScalarFn,
    velocity_gradient: Option<VectorFn>,
    velocity_hessian: Option<MatrixFn>,
    position_gradient: Option<VectorFn>,
    mixed_hessian: Option<MatrixFn>,
}

impl fmt::Debug for RawLagrangian {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RawLagrangian")
            .field("name", &self.name)
            .field("domain", &self.domain)
            .finish()
    }
}

const VELOCITY_FD_STEP: f64 = 1e-4;

impl RawLagrangian {
    pub fn new(
        name: impl Into<String>,
        domain: Domain,
        value: impl Fn(&DVector<f64>, &DVector<f64>) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            domain,
            value: Arc::new(value),
            velocity_gradient: None,
            velocity_hessian: None,
            position_gradient: None,
            mixed_hessian: None,
        }
    }

    pub fn with_velocity_gradient(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.velocity_gradient = Some(Arc::new(f));
        self
    }

    pub fn with_velocity_hessian(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.velocity_hessian = Some(Arc::new(f));
        self
    }

    pub fn with_position_gradient(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
    ) -> Self {
        self.position_gradient = Some(Arc::new(f));
        self
    }

    /// `∂²L/∂v^j∂q^k` as entry `(j, k)`.
    pub fn with_mixed_hessian(
        mut self,
        f: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        self.mixed_hessian = Some(Arc::new(f));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    /// Evaluates `L` without a domain check.
    pub fn eval(&self, q: &DVector<f64>, v: &DVector<f64>) -> f64 {
        (self.value)(q, v)
    }

    fn velocity_gradient(&self, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        if let Some(f) = &self.velocity_gradient {
            return f(q, v);
        }
        DVector::from_fn(v.len(), |j, _| {
            let h = VELOCITY_FD_STEP * v[j].abs().max(1.0);
            let mut plus = v.clone();
            plus[j] += h;
            let mut minus = v.clone();
            minus[j] -= h;
            ((self.value)(q, &plus) - (self.value)(q, &minus)) / (2.0 * h)
        })
    }

    fn velocity_hessian(&self, q: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        if let Some(f) = &self.velocity_hessian {
            return f(q, v);
        }
        let n = v.len();
        let mut hess = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = VELOCITY_FD_STEP * v[k].abs().max(1.0);
            let mut plus = v.clone();
            plus[k] += h;
            let mut minus = v.clone();
            minus[k] -= h;
            let col = (self.velocity_gradient(q, &plus) - self.velocity_gradient(q, &minus)) / (2.0 * h);
            hess.set_column(k, &col);
        }
        (&hess + hess.transpose()) * 0.5
    }

    fn position_gradient(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        if let Some(f) = &self.position_gradient {
            return Ok(f(q, v));
        }
        let mut grad = DVector::zeros(q.len());
        for k in 0..q.len() {
            let h = self.domain.central_step(q, k, fd_step(q[k]))?;
            let mut plus = q.clone();
            plus[k] += h;
            let mut minus = q.clone();
            minus[k] -= h;
            grad[k] = ((self.value)(&plus, v) - (self.value)(&minus, v)) / (2.0 * h);
        }
        Ok(grad)
    }

    fn mixed_hessian(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Some(f) = &self.mixed_hessian {
            return Ok(f(q, v));
        }
        let n = q.len();
        let mut mixed = DMatrix::zeros(n, n);
        for k in 0..n {
            let h = self.domain.central_step(q, k, fd_step(q[k]))?;
            let mut plus = q.clone();
            plus[k] += h;
            let mut minus = q.clone();
            minus[k] -= h;
            let col = (self.velocity_gradient(&plus, v) - self.velocity_gradient(&minus, v)) / (2.0 * h);
            mixed.set_column(k, &col);
        }
        Ok(mixed)
    }
}

impl SecondOrderSystem for RawLagrangian {
    fn label(&self) -> String {
        self.name.clone()
    }

    fn domain(&self) -> &Domain {
        &self.domain
    }

    /// `∂²L/∂v∂v v̇ = ∂L/∂q − ∂²L/∂v∂q v`.
    fn acceleration(&self, state: &TangentState) -> Result<DVector<f64>> {
        self.domain.check(&state.q)?;
        let (q, v) = (&state.q, &state.v);
        let hess = self.velocity_hessian(q, v);
        let rhs = self.position_gradient(q, v)? - self.mixed_hessian(q, v)? * v;
        let scale = hess.amax().max(f64::MIN_POSITIVE).powi(hess.nrows() as i32);
        let lu = hess.lu();
        let ratio = (lu.determinant() / scale).abs();
        if !(ratio >= SINGULAR_MASS_RATIO) {
            return Err(Error::SingularMassMatrix { ratio });
        }
        lu.solve(&rhs).ok_or(Error::SingularMassMatrix { ratio })
    }

    fn energy(&self, state: &TangentState) -> Result<Option<f64>> {
        legendre_energy(self, state).map(Some)
    }
}

impl Lagrangian for RawLagrangian {
    fn value(&self, state: &TangentState) -> Result<f64> {
        self.domain.check(&state.q)?;
        Ok((self.value)(&state.q, &state.v))
    }

    fn momentum(&self, state: &TangentState) -> Result<DVector<f64>> {
        self.domain.check(&state.q)?;
        Ok(self.velocity_gradient(&state.q, &state.v))
    }
}

/// One sample of a [`Trajectory`].
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub state: TangentState,
    pub energy: Option<f64>,
}

/// A time-sampled solution on `t ∈ [0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub system: String,
    pub alpha: Option<f64>,
    pub samples: Vec<TrajectorySample>,
    /// `max_t |E(t) − E(0)|`, when the flow has an energy.
    pub energy_drift: Option<f64>,
}

impl Trajectory {
    pub fn first(&self) -> &TangentState {
        &self.samples[0].state
    }

    pub fn last(&self) -> &TangentState {
        &self.samples[self.samples.len() - 1].state
    }

    pub fn steps(&self) -> usize {
        self.samples.len() - 1
    }

    /// CSV with header `t,q1..qn,v1..vn,E`; numbers carry 17 significant digits.
    /// `E` is left empty for flows without an energy.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        let n = self.first().q.len();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("q{i}")));
        header.extend((1..=n).map(|i| format!("v{i}")));
        header.push("E".into());
        writeln!(out, "{}", header.join(","))?;
        for s in &self.samples {
            let mut row = vec![fmt_f64(s.t)];
            row.extend(s.state.q.iter().map(|&x| fmt_f64(x)));
            row.extend(s.state.v.iter().map(|&x| fmt_f64(x)));
            row.push(s.energy.map(fmt_f64).unwrap_or_default());
            writeln!(out, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Round-trip-safe formatting with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn exit_error(err: Error, t: f64) -> Error {
    match err {
        Error::OutsideDomain { point } => Error::DomainExit { t, point },
        Error::StepLeavesDomain { point, .. } => Error::DomainExit { t, point },
        other => other,
    }
}

/// Kahan summation `x += dx`, keeping the lost low-order bits in `carry`.
fn compensated_add(x: &mut DVector<f64>, carry: &mut DVector<f64>, dx: &DVector<f64>) {
    for i in 0..x.len() {
        let y = dx[i] - carry[i];
        let t = x[i] + y;
        carry[i] = (t - x[i]) - y;
        x[i] = t;
    }
}

/// Classical RK4 with fixed step `1/steps` over `t ∈ [0, 1]`. Position and
/// velocity updates use compensated summation.
pub fn integrate<S: SecondOrderSystem + ?Sized>(system: &S, initial: &TangentState, steps: usize) -> Result<Trajectory> {
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    system.domain().check(&initial.q)?;
    if initial.v.len() != initial.q.len() {
        return Err(Error::DimensionMismatch {
            expected: initial.q.len(),
            found: initial.v.len(),
        });
    }
    let dt = 1.0 / steps as f64;
    let accel = |t: f64, q: &DVector<f64>, v: &DVector<f64>| {
        let s = TangentState::new(q.clone(), v.clone());
        system.acceleration(&s).map_err(|e| exit_error(e, t))
    };

    let mut samples = Vec::with_capacity(steps + 1);
    let e0 = system.energy(initial)?;
    samples.push(TrajectorySample {
        t: 0.0,
        state: initial.clone(),
        energy: e0,
    });
    let mut drift: f64 = 0.0;
    let (mut q, mut v) = (initial.q.clone(), initial.v.clone());
    let (mut q_carry, mut v_carry) = (DVector::zeros(q.len()), DVector::zeros(q.len()));
    for i in 0..steps {
        let t = i as f64 * dt;
        let a1 = accel(t, &q, &v)?;
        let (q2, v2) = (&q + &v * (0.5 * dt), &v + &a1 * (0.5 * dt));
        let a2 = accel(t + 0.5 * dt, &q2, &v2)?;
        let (q3, v3) = (&q + &v2 * (0.5 * dt), &v + &a2 * (0.5 * dt));
        let a3 = accel(t + 0.5 * dt, &q3, &v3)?;
        let (q4, v4) = (&q + &v3 * dt, &v + &a3 * dt);
        let a4 = accel(t + dt, &q4, &v4)?;
        let dq = (&v + &v2 * 2.0 + &v3 * 2.0 + &v4) * (dt / 6.0);
        let dv = (&a1 + &a2 * 2.0 + &a3 * 2.0 + &a4) * (dt / 6.0);
        compensated_add(&mut q, &mut q_carry, &dq);
        compensated_add(&mut v, &mut v_carry, &dv);
        let t_next = if i + 1 == steps { 1.0 } else { (i + 1) as f64 * dt };
        if !system.domain().contains(&q) {
            return Err(Error::DomainExit {
                t: t_next,
                point: q.iter().copied().collect(),
            });
        }
        let state = TangentState::new(q.clone(), v.clone());
        let e = system.energy(&state).map_err(|e| exit_error(e, t_next))?;
        if let (Some(e), Some(e0)) = (e, e0) {
            drift = drift.max((e - e0).abs());
        }
        samples.push(TrajectorySample {
            t: t_next,
            state,
            energy: e,
        });
    }
    Ok(Trajectory {
        system: system.label(),
        alpha: system.alpha(),
        samples,
        energy_drift: e0.map(|_| drift),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::BuiltinModel;
    use std::f64::consts::E;

    fn exp_model() -> ManifoldModel {
        BuiltinModel::Exponential1D.manifold().unwrap()
    }

    #[test]
    fn lagrangian_values() {
        let m = exp_model();
        assert_eq!(lagrangian(&m, 0.3, &TangentState::from_slices(&[1.0], &[0.0])).unwrap(), 0.0);
        let l = lagrangian(&m, -0.5, &TangentState::from_slices(&[1.0], &[1.0])).unwrap();
        assert!((l - 2.0 / 3.0).abs() < 1e-15);
        let l = lagrangian(&m, 0.0, &TangentState::from_slices(&[2.0], &[1.0])).unwrap();
        assert!((l - 0.125).abs() < 1e-15);
    }

    #[test]
    fn momentum_values() {
        let m = exp_model();
        let p = momentum(&m, 1.0, &TangentState::from_slices(&[1.0], &[1.0])).unwrap();
        assert!(p[0].abs() < 1e-15);
        let p = momentum(&m, 1.0, &TangentState::from_slices(&[1.0], &[0.0])).unwrap();
        assert_eq!(p[0], 0.0);
        let r3 = BuiltinModel::EuclideanCubicR3.manifold().unwrap();
        let p = momentum(&r3, 3.0, &TangentState::from_slices(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0])).unwrap();
        assert!((p - DVector::from_vec(vec![2.5, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn energy_values() {
        let m = exp_model();
        assert_eq!(energy(&m, 1.0, &TangentState::from_slices(&[1.0], &[0.0])).unwrap(), 0.0);
        assert!((energy(&m, 0.0, &TangentState::from_slices(&[1.0], &[1.0])).unwrap() - 0.5).abs() < 1e-15);
        assert!((energy(&m, 1.0, &TangentState::from_slices(&[1.0], &[1.0])).unwrap() + 1.0 / 6.0).abs() < 1e-15);
        let cubic = CubicLagrangian::new(&m, 1.0);
        let s = TangentState::from_slices(&[1.3], &[0.4]);
        assert!((legendre_energy(&cubic, &s).unwrap() - energy(&m, 1.0, &s).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn acceleration_values() {
        let m = exp_model();
        let a = el_acceleration(&m, 0.4, &TangentState::from_slices(&[1.0], &[0.0])).unwrap();
        assert_eq!(a[0], 0.0);
        let a = el_acceleration(&m, 0.0, &TangentState::from_slices(&[1.0], &[2.0])).unwrap();
        assert!((a[0] - 4.0).abs() < 1e-9);
        let a = el_acceleration(&m, 0.1, &TangentState::from_slices(&[1.0], &[2.0])).unwrap();
        assert!((a[0] - 4.0).abs() < 1e-8);
    }

    #[test]
    fn singular_mass_matrix_is_reported() {
        // M = (1 - 2 α v / ξ) / ξ² vanishes at α = ½, v = ξ
        let m = exp_model();
        let r = el_acceleration(&m, 0.5, &TangentState::from_slices(&[1.0], &[1.0]));
        assert!(matches!(r, Err(Error::SingularMassMatrix { .. })));
    }

    #[test]
    fn integrate_rest_is_constant() {
        let m = exp_model();
        let traj = integrate(&CubicLagrangian::new(&m, 0.5), &TangentState::from_slices(&[1.5], &[0.0]), 10).unwrap();
        assert!(traj.samples.iter().all(|s| s.state.q[0] == 1.5));
        assert_eq!(traj.energy_drift, Some(0.0));
    }

    #[test]
    fn integrate_exponential_geodesic() {
        let m = exp_model();
        let traj = integrate(&CubicLagrangian::new(&m, 0.0), &TangentState::from_slices(&[1.0], &[1.0]), 200).unwrap();
        assert!((traj.last().q[0] - E).abs() < 1e-9);
        assert_eq!(traj.samples.len(), 201);
        assert_eq!(traj.samples[200].t, 1.0);
        assert!(traj.samples.windows(2).all(|w| w[0].t < w[1].t));
    }

    #[test]
    fn integrate_kl_free_particle_is_straight() {
        let kl = BuiltinModel::KlFreeParticle.raw().unwrap();
        let traj = integrate(&kl, &TangentState::from_slices(&[0.0], &[0.7]), 10).unwrap();
        assert_eq!(traj.last().q[0], 0.7);
    }

    #[test]
    fn domain_exit_is_reported() {
        let m = exp_model();
        let r = integrate(&CubicLagrangian::new(&m, 0.0), &TangentState::from_slices(&[1.0], &[-800.0]), 10);
        assert!(matches!(r, Err(Error::DomainExit { .. })), "{r:?}");
        assert!(matches!(
            integrate(&CubicLagrangian::new(&m, 0.0), &TangentState::from_slices(&[1.0], &[1.0]), 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn raw_lagrangian_fd_matches_cubic() {
        let m = exp_model();
        let alpha = 0.3;
        let m2 = m.clone();
        let raw = RawLagrangian::new("exp-raw", m.domain().clone(), move |q, v| {
            lagrangian(&m2, alpha, &TangentState::new(q.clone(), v.clone())).unwrap()
        });
        let s = TangentState::from_slices(&[1.2], &[0.3]);
        let a_raw = raw.acceleration(&s).unwrap();
        let a = el_acceleration(&m, alpha, &s).unwrap();
        assert!((a_raw - a).amax() < 1e-5);
    }

    #[test]
    fn csv_export_header_and_rows() {
        let m = exp_model();
        let traj = integrate(&CubicLagrangian::new(&m, 0.0), &TangentState::from_slices(&[1.0], &[1.0]), 4).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,q1,v1,E");
        assert_eq!(lines.len(), 6);
        let last: Vec<f64> = lines[5].split(',').map(|x| x.parse().unwrap()).collect();
        assert_eq!(last[0], 1.0);
        assert_eq!(last[1], traj.last().q[0]);
    }
}
