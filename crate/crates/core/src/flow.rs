//! Continuous constrained dynamics: Lagrange multipliers, the constraint
//! force, second-order vector fields, and a fixed-step fourth-order
//! integrator.
//!
//! With mass matrix M(q), constraint matrix A(q), and free force
//! F(q, v) = -grad V + applied force, the multipliers solve
//!
//! ```text
//! (A M^-1 A^T) lambda = -(dA/dt v + A M^-1 F)
//! ```
//!
//! and the constrained acceleration is a = M^-1 (F + A^T lambda). The right
//! hand side enforces tangency: d/dt (A v) = 0 along solutions. The same
//! formula extends the field off the constraint set, which keeps the
//! intermediate stages of the integrator well defined even when they drift
//! slightly off A v = 0.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{
    ensure_finite_vec, ChartPoint, MechanicalLagrangian, Momentum, NonholonomicSystem, State,
    Velocity,
};

/// Lagrange multipliers, one entry per constraint row.
#[derive(Debug, Clone, PartialEq)]
pub struct Multipliers(DVector<f64>);

impl Multipliers {
    pub fn coords(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }
}

/// Fixed-step trajectory: times and states, including the initial state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<State>,
}

impl Trajectory {
    pub(crate) fn new(times: Vec<f64>, states: Vec<State>) -> Self {
        debug_assert_eq!(times.len(), states.len());
        Self { times, states }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[State] {
        &self.states
    }

    pub fn last(&self) -> &State {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Multiplier solve without the admissibility precondition; this is the
/// extension used for integrator stages.
pub(crate) fn multipliers_raw(
    system: &NonholonomicSystem,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let a = system.constraint_matrix(q)?;
    let m = system.lagrangian().mass_matrix(q)?;
    let lu = m.lu();
    let minv_at = lu.solve(&a.transpose()).ok_or(Error::SingularMass)?;
    let c = &a * &minv_at;
    let free = system.lagrangian().free_force(q, v)?;
    let minv_free = lu.solve(&free).ok_or(Error::SingularMass)?;
    let rate = system.distribution().rate(q, v)?;
    let rhs = -(&rate * v + &a * minv_free);
    c.lu().solve(&rhs).ok_or(Error::SingularCompatibility)
}

/// Constrained acceleration a = M^-1 (F + A^T lambda), valid for any (q, v).
pub(crate) fn acceleration(
    system: &NonholonomicSystem,
    q: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>> {
    let lambda = multipliers_raw(system, q, v)?;
    let a = system.constraint_matrix(q)?;
    let m = system.lagrangian().mass_matrix(q)?;
    let free = system.lagrangian().free_force(q, v)?;
    let total = free + a.tr_mul(&lambda);
    m.lu().solve(&total).ok_or(Error::SingularMass)
}

/// Lagrange multipliers at an admissible state.
pub fn multipliers(system: &NonholonomicSystem, state: &State) -> Result<Multipliers> {
    system.assert_constrained(state)?;
    let lambda = multipliers_raw(system, state.q.coords(), state.v.coords())?;
    ensure_finite_vec(&lambda, "multipliers")?;
    Ok(Multipliers(lambda))
}

/// Constraint force A^T lambda as a covector at the state's configuration.
pub fn nonholonomic_force(system: &NonholonomicSystem, state: &State) -> Result<Momentum> {
    let lambda = multipliers(system, state)?;
    let a = system.constraint_matrix(state.q.coords())?;
    Momentum::new(a.tr_mul(lambda.coords()))
}

/// Second-order field of the constrained dynamics at an admissible state:
/// returns (velocity, acceleration).
pub fn nonholonomic_vector_field(
    system: &NonholonomicSystem,
    state: &State,
) -> Result<(DVector<f64>, DVector<f64>)> {
    system.assert_constrained(state)?;
    let a = acceleration(system, state.q.coords(), state.v.coords())?;
    ensure_finite_vec(&a, "acceleration")?;
    Ok((state.v.coords().clone(), a))
}

/// Borrowed state-dependent force callable of (q, v).
pub type ForceFn<'a> = dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + 'a;

/// Second-order field of a forced unconstrained system: the acceleration is
/// M^-1 (free force + F(q, v)). Feeding the constraint-force extension as F
/// reproduces the constrained field.
pub fn forced_vector_field(
    lagrangian: &MechanicalLagrangian,
    force: &ForceFn<'_>,
    state: &State,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let q = state.q.coords();
    let v = state.v.coords();
    let m = lagrangian.mass_matrix(q)?;
    let total = lagrangian.free_force(q, v)? + force(q, v)?;
    let a = m.lu().solve(&total).ok_or(Error::SingularMass)?;
    ensure_finite_vec(&a, "acceleration")?;
    Ok((v.clone(), a))
}

/// One classical fourth-order step of the constrained dynamics.
fn rk4_step(
    system: &NonholonomicSystem,
    q: &DVector<f64>,
    v: &DVector<f64>,
    dt: f64,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let k1v = acceleration(system, q, v)?;
    let k1q = v.clone();

    let q2 = q + &k1q * (dt / 2.0);
    let v2 = v + &k1v * (dt / 2.0);
    let k2v = acceleration(system, &q2, &v2)?;
    let k2q = v2;

    let q3 = q + &k2q * (dt / 2.0);
    let v3 = v + &k2v * (dt / 2.0);
    let k3v = acceleration(system, &q3, &v3)?;
    let k3q = v3;

    let q4 = q + &k3q * dt;
    let v4 = v + &k3v * dt;
    let k4v = acceleration(system, &q4, &v4)?;
    let k4q = v4;

    let qn = q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * (dt / 6.0);
    let vn = v + (k1v + k2v * 2.0 + k3v * 2.0 + k4v) * (dt / 6.0);
    Ok((qn, vn))
}

/// Integrates the constrained dynamics with a fixed step, recording every
/// `record_every`-th state (plus the initial one). `n_steps` must be a
/// multiple of `record_every`.
pub(crate) fn integrate_samples(
    system: &NonholonomicSystem,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    dt: f64,
    n_steps: usize,
    record_every: usize,
) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    debug_assert!(record_every > 0 && n_steps.is_multiple_of(record_every));
    let mut samples = Vec::with_capacity(n_steps / record_every + 1);
    samples.push((q0.clone(), v0.clone()));
    let mut q = q0.clone();
    let mut v = v0.clone();
    for step in 1..=n_steps {
        let (qn, vn) = rk4_step(system, &q, &v, dt)?;
        if !(qn.iter().all(|x| x.is_finite()) && vn.iter().all(|x| x.is_finite())) {
            return Err(Error::Divergence { step });
        }
        q = qn;
        v = vn;
        if step % record_every == 0 {
            samples.push((q.clone(), v.clone()));
        }
    }
    Ok(samples)
}

/// Fixed-step fourth-order integration of the constrained dynamics from an
/// admissible state, recording every step.
pub fn integrate(
    system: &NonholonomicSystem,
    state0: &State,
    step: f64,
    n_steps: usize,
) -> Result<Trajectory> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidConfig("step must be positive and finite".into()));
    }
    if n_steps == 0 {
        return Err(Error::InvalidConfig("n_steps must be positive".into()));
    }
    system.assert_constrained(state0)?;
    let samples = integrate_samples(
        system,
        state0.q.coords(),
        state0.v.coords(),
        step,
        n_steps,
        1,
    )?;
    let mut times = Vec::with_capacity(samples.len());
    let mut states = Vec::with_capacity(samples.len());
    for (i, (q, v)) in samples.into_iter().enumerate() {
        times.push(i as f64 * step);
        states.push(State::new(ChartPoint::new(q)?, Velocity::new(v)?)?);
    }
    Ok(Trajectory::new(times, states))
}
