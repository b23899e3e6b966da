//! Two-point boundary problem `γ(0) = q_in, γ(1) = q_fin` by damped Newton
//! shooting on the initial velocity, seeded with the second-order series.

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{integrate, SecondOrderSystem, TangentState, Trajectory, DEFAULT_STEPS};
use crate::error::{Error, Result};
use crate::geometry::{levi_civita_first, ManifoldModel};

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 50;
/// Smallest Armijo damping factor tried, `2⁻¹⁰`.
pub const MIN_DAMPING: f64 = 1.0 / 1024.0;
const ARMIJO_SLOPE: f64 = 1e-4;
const JACOBIAN_REL_STEP: f64 = 1e-6;
const JACOBIAN_CONDITION_FLOOR: f64 = 1e-12;
const CONTINUATION: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootOptions {
    /// Max-norm tolerance on `q(1) − q_fin`.
    pub tol: f64,
    pub steps: usize,
    pub max_iterations: usize,
}

impl Default for ShootOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOLERANCE,
            steps: DEFAULT_STEPS,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

impl ShootOptions {
    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShootingResult {
    pub v_in: DVector<f64>,
    /// `‖q(1) − q_fin‖_∞` of the returned trajectory.
    pub residual: f64,
    pub iterations: usize,
    pub trajectory: Trajectory,
    /// The plain Newton solve failed and the homotopy `q_in + sΔq` was used.
    pub used_continuation: bool,
    /// `|Δq|` is comparable to the domain size; the boundary problem may have
    /// several solutions and only the continuation-selected one is returned.
    pub near_domain_scale: bool,
}

/// `v^j = Δq^j + ½ Γ^j_kl(q_in) Δq^k Δq^l`: the implicit series relation
/// `v = Δq + ½ Γ(v, v)` refined once from `v = Δq`, with Levi-Civita symbols
/// of the second kind. Accurate to `O(|Δq|³)`.
pub fn initial_guess(model: &ManifoldModel, q_in: &DVector<f64>, q_fin: &DVector<f64>) -> Result<DVector<f64>> {
    model.domain().check(q_in)?;
    model.domain().check(q_fin)?;
    let delta = q_fin - q_in;
    if delta.iter().all(|&d| d == 0.0) {
        return Ok(delta);
    }
    let gamma = levi_civita_first(model, q_in)?;
    Ok(&delta + gamma.second_kind.contract_last_two(&delta) * 0.5)
}

struct Newton<'s, S: ?Sized> {
    system: &'s S,
    q_in: &'s DVector<f64>,
    opts: ShootOptions,
}

struct Converged {
    v: DVector<f64>,
    residual: f64,
    iterations: usize,
    trajectory: Trajectory,
}

impl<S: SecondOrderSystem + ?Sized> Newton<'_, S> {
    fn endpoint(&self, v: &DVector<f64>, target: &DVector<f64>) -> Result<(DVector<f64>, Trajectory)> {
        let traj = integrate(self.system, &TangentState::new(self.q_in.clone(), v.clone()), self.opts.steps)?;
        Ok((&traj.last().q - target, traj))
    }

    fn jacobian(&self, v: &DVector<f64>, f: &DVector<f64>, target: &DVector<f64>) -> Result<DMatrix<f64>> {
        let n = v.len();
        let delta = JACOBIAN_REL_STEP * v.amax().max(1.0);
        let mut jac = DMatrix::zeros(n, n);
        for i in 0..n {
            let mut vp = v.clone();
            vp[i] += delta;
            let col = match self.endpoint(&vp, target) {
                Ok((fp, _)) => (fp - f) / delta,
                Err(_) => {
                    // backward difference when the forward probe leaves the domain
                    let mut vm = v.clone();
                    vm[i] -= delta;
                    let (fm, _) = self.endpoint(&vm, target)?;
                    (f - fm) / delta
                }
            };
            jac.set_column(i, &col);
        }
        Ok(jac)
    }

    fn solve(&self, v0: DVector<f64>, target: &DVector<f64>) -> Result<Converged> {
        let mut v = v0;
        let (mut f, mut traj) = self.endpoint(&v, target)?;
        let mut iterations = 0;
        loop {
            let residual = f.amax();
            if residual <= self.opts.tol {
                return Ok(Converged {
                    v,
                    residual,
                    iterations,
                    trajectory: traj,
                });
            }
            if iterations == self.opts.max_iterations {
                return Err(Error::NoConvergence { iterations, residual });
            }
            let jac = self.jacobian(&v, &f, target)?;
            let sv = jac.singular_values();
            if !(sv.min() > JACOBIAN_CONDITION_FLOOR * sv.max()) {
                return Err(Error::SingularShootingJacobian);
            }
            let step = jac.lu().solve(&(-&f)).ok_or(Error::SingularShootingJacobian)?;
            iterations += 1;

            let norm = f.norm();
            let mut lambda = 1.0;
            loop {
                let trial = &v + &step * lambda;
                if let Ok((ft, tt)) = self.endpoint(&trial, target) {
                    if ft.norm() <= (1.0 - ARMIJO_SLOPE * lambda) * norm {
                        v = trial;
                        f = ft;
                        traj = tt;
                        break;
                    }
                }
                lambda *= 0.5;
                if lambda < MIN_DAMPING {
                    return Err(Error::NoConvergence { iterations, residual });
                }
            }
        }
    }
}

fn recoverable(err: &Error) -> bool {
    matches!(
        err,
        Error::NoConvergence { .. }
            | Error::SingularShootingJacobian
            | Error::DomainExit { .. }
            | Error::SingularMassMatrix { .. }
            | Error::StepLeavesDomain { .. }
    )
}

/// Finds `v_in` with `γ(0) = q_in, γ(1) = q_fin` for the flow of `system`.
///
/// Damped Newton on `F(v) = q_v(1) − q_fin` with a forward-difference
/// jacobian. If that fails from the series seed, the targets
/// `q_in + sΔq, s = ¼, ½, ¾, 1` are solved in turn, each warm-started from
/// the previous one, which selects the branch connected to `v = 0`.
pub fn shoot<S: SecondOrderSystem + ?Sized>(
    system: &S,
    q_in: &DVector<f64>,
    q_fin: &DVector<f64>,
    opts: &ShootOptions,
) -> Result<ShootingResult> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidArgument(format!("tolerance must be positive, got {}", opts.tol)));
    }
    let domain = system.domain();
    domain.check(q_in)?;
    domain.check(q_fin)?;
    let delta = q_fin - q_in;
    let near_domain_scale = domain
        .min_finite_width()
        .is_some_and(|w| delta.amax() > 0.5 * w);
    let newton = Newton {
        system,
        q_in,
        opts: *opts,
    };

    if delta.iter().all(|&d| d == 0.0) {
        let traj = integrate(system, &TangentState::at_rest(q_in.clone()), opts.steps)?;
        return Ok(ShootingResult {
            v_in: DVector::zeros(q_in.len()),
            residual: (&traj.last().q - q_fin).amax(),
            iterations: 0,
            trajectory: traj,
            used_continuation: false,
            near_domain_scale,
        });
    }

    let seed = system.initial_guess(q_in, q_fin).unwrap_or_else(|_| delta.clone());
    let direct = newton.solve(seed, q_fin);
    let (sol, used_continuation) = match direct {
        Ok(sol) => (sol, false),
        Err(err) if recoverable(&err) => (continuation(&newton, q_in, &delta)?, true),
        Err(err) => return Err(err),
    };
    Ok(ShootingResult {
        v_in: sol.v,
        residual: sol.residual,
        iterations: sol.iterations,
        trajectory: sol.trajectory,
        used_continuation,
        near_domain_scale,
    })
}

fn continuation<S: SecondOrderSystem + ?Sized>(
    newton: &Newton<'_, S>,
    q_in: &DVector<f64>,
    delta: &DVector<f64>,
) -> Result<Converged> {
    let mut total = 0;
    let mut previous: Option<(f64, DVector<f64>)> = None;
    let mut last = None;
    for s in CONTINUATION {
        let target = q_in + delta * s;
        let warm = match &previous {
            Some((s_prev, v_prev)) => v_prev * (s / s_prev),
            None => newton
                .system
                .initial_guess(q_in, &target)
                .unwrap_or_else(|_| delta * s),
        };
        let sol = newton.solve(warm, &target)?;
        total += sol.iterations;
        previous = Some((s, sol.v.clone()));
        last = Some(sol);
    }
    let mut sol = last.expect("continuation runs at least one stage");
    sol.iterations = total;
    Ok(sol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{ConnectionSpray, CubicLagrangian};
    use crate::models::BuiltinModel;
    use std::f64::consts::E;

    fn p(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn guess_values() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        assert_eq!(initial_guess(&m, &p(&[1.0]), &p(&[1.0])).unwrap()[0], 0.0);
        let g = initial_guess(&m, &p(&[1.0]), &p(&[1.2])).unwrap()[0];
        assert!((g - 0.18).abs() < 1e-12);
        assert!((g - 1.2f64.ln()).abs() < 0.01);
        let r3 = BuiltinModel::EuclideanCubicR3.manifold().unwrap();
        let g = initial_guess(&r3, &p(&[0.0, 1.0, 2.0]), &p(&[0.5, 0.0, 2.25])).unwrap();
        assert_eq!(g, p(&[0.5, -1.0, 0.25]));
    }

    #[test]
    fn exponential_shoot_recovers_log_velocity() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        for alpha in [-0.5, 0.0, 0.25, 1.0] {
            let r = shoot(&CubicLagrangian::new(&m, alpha), &p(&[1.0]), &p(&[E]), &ShootOptions::default().with_tol(1e-10))
                .unwrap();
            assert!((r.v_in[0] - 1.0).abs() < 1e-9, "alpha {alpha}: {}", r.v_in[0]);
            assert!(r.residual <= 1e-10);
            assert!((r.trajectory.last().q[0] - E).abs() <= r.residual + 1e-15);
        }
    }

    #[test]
    fn diagonal_needs_no_iterations() {
        let m = BuiltinModel::SpherePullback.manifold().unwrap();
        let q = p(&[1.0, 2.0]);
        let r = shoot(&CubicLagrangian::new(&m, 1.0), &q, &q, &ShootOptions::default()).unwrap();
        assert_eq!(r.iterations, 0);
        assert_eq!(r.v_in, p(&[0.0, 0.0]));
    }

    #[test]
    fn kl_free_particle_shoot_is_straight() {
        let kl = BuiltinModel::KlFreeParticle.raw().unwrap();
        let r = shoot(&kl, &p(&[0.0]), &p(&[0.7]), &ShootOptions::default()).unwrap();
        assert!((r.v_in[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn flat_spray_shoot() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        let r = shoot(&ConnectionSpray::new(&m, 1.0), &p(&[1.0]), &p(&[2.0]), &ShootOptions::default()).unwrap();
        assert!((r.v_in[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn near_diagonal_converges_quickly() {
        for model in [BuiltinModel::Exponential1D, BuiltinModel::SpherePullback, BuiltinModel::SphereRound] {
            let m = model.manifold().unwrap();
            let q_in = if m.dim() == 1 { p(&[1.5]) } else { p(&[1.2, 2.0]) };
            let dq = if m.dim() == 1 { p(&[0.5]) } else { p(&[0.3, -0.4]) };
            let r = shoot(&CubicLagrangian::new(&m, 0.5), &q_in, &(&q_in + dq), &ShootOptions::default()).unwrap();
            assert!(r.iterations <= 8, "{}: {} iterations", m.name(), r.iterations);
            assert!(!r.used_continuation);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        let sys = CubicLagrangian::new(&m, 0.0);
        assert!(matches!(
            shoot(&sys, &p(&[1.0]), &p(&[2.0]), &ShootOptions::default().with_tol(0.0)),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            shoot(&sys, &p(&[1.0]), &p(&[-2.0]), &ShootOptions::default()),
            Err(Error::OutsideDomain { .. })
        ));
    }

    #[test]
    fn max_iterations_reported() {
        let m = BuiltinModel::Exponential1D.manifold().unwrap();
        let opts = ShootOptions {
            tol: 1e-300,
            steps: 50,
            max_iterations: 2,
        };
        let r = shoot(&CubicLagrangian::new(&m, 0.0), &p(&[1.0]), &p(&[3.0]), &opts);
        assert!(matches!(r, Err(Error::NoConvergence { .. })), "{r:?}");
    }
}
