//! Python bindings over the nonholonomic mechanics library: system
//! construction, constrained continuous flows, exact discrete maps, and the
//! forced discrete integrator, all exchanged as plain lists of floats.

use nalgebra::DVector;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use nhmech::exact::{
    exact_discrete_flow, exact_discrete_lagrangian, retraction_shoot, ConfigPair,
};
use nhmech::flow::{integrate, multipliers};
use nhmech::integrator::{
    mla_step, projected_discrete_legendre, restricted_hamiltonian_series, run,
    DiscretizationScheme, LegendreSide,
};
use nhmech::model::{ChartPoint, State, Velocity};
use nhmech::systems::{
    make_knife_edge, make_particle, particle_closed_flow, particle_mla_update, KnifeEdgeParams,
    SystemBundle,
};
use nhmech::{Error, SolverSettings};

fn to_py(err: Error) -> PyErr {
    match err {
        Error::InvalidConfig(_) | Error::DimensionMismatch { .. } | Error::NonFinite(_) => {
            PyValueError::new_err(err.to_string())
        }
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

fn chart(q: Vec<f64>) -> PyResult<ChartPoint> {
    ChartPoint::new(DVector::from_vec(q)).map_err(to_py)
}

fn velocity(v: Vec<f64>) -> PyResult<Velocity> {
    Velocity::new(DVector::from_vec(v)).map_err(to_py)
}

fn cells(v: &DVector<f64>) -> Vec<f64> {
    v.iter().copied().collect()
}

/// Times, configurations, and velocities of a sampled trajectory.
type SampledTrajectory = (Vec<f64>, Vec<Vec<f64>>, Vec<Vec<f64>>);

/// A nonholonomic system together with its discretization step and solver
/// settings. Constructed via the `particle` and `knife_edge` static methods.
#[pyclass]
struct System {
    bundle: SystemBundle,
    step: f64,
}

impl System {
    fn settings(&self) -> SolverSettings {
        SolverSettings::default()
    }

    fn scheme_for(&self, forced: bool) -> DiscretizationScheme {
        if forced {
            self.bundle.scheme.clone()
        } else {
            self.bundle.scheme.without_forces()
        }
    }

    fn pair(&self, q0: Vec<f64>, q1: Vec<f64>) -> PyResult<ConfigPair> {
        ConfigPair::new(chart(q0)?, chart(q1)?, self.step).map_err(to_py)
    }

    fn discrete_run(
        &self,
        q0: Vec<f64>,
        q1: Vec<f64>,
        n_steps: usize,
        forced: bool,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        let scheme = self.scheme_for(forced);
        let settings = self.settings();
        let traj = run(&scheme, &chart(q0)?, &chart(q1)?, n_steps, &settings).map_err(to_py)?;
        let series = restricted_hamiltonian_series(
            &scheme,
            &self.bundle.system,
            &self.bundle.restricted_hamiltonian,
            &traj,
        )
        .map_err(to_py)?;
        let points = traj.points.iter().map(|q| cells(q.coords())).collect();
        Ok((points, series))
    }
}

#[pymethods]
impl System {
    /// Free particle in three-space subject to the constraint vz = y * vx.
    #[staticmethod]
    fn particle(step: f64) -> PyResult<Self> {
        Ok(Self {
            bundle: make_particle(step).map_err(to_py)?,
            step,
        })
    }

    /// Knife edge on an inclined plane in coordinates (x, y, phi); `epsilon`
    /// perturbs the constraint to sin(phi) vx = (cos(phi) - epsilon) vy.
    #[staticmethod]
    #[pyo3(signature = (step, epsilon = 0.0))]
    fn knife_edge(step: f64, epsilon: f64) -> PyResult<Self> {
        Ok(Self {
            bundle: make_knife_edge(&KnifeEdgeParams { epsilon }, step).map_err(to_py)?,
            step,
        })
    }

    fn dimension(&self) -> usize {
        self.bundle.system.dimension()
    }

    fn corank(&self) -> usize {
        self.bundle.system.corank()
    }

    fn step(&self) -> f64 {
        self.step
    }

    /// Mechanical energy at a state.
    fn energy(&self, q: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        self.bundle
            .system
            .energy(&chart(q)?, &velocity(v)?)
            .map_err(to_py)
    }

    /// Infinity norm of A(q) v; zero for admissible velocities.
    fn constraint_residual(&self, q: Vec<f64>, v: Vec<f64>) -> PyResult<f64> {
        let a = self
            .bundle
            .system
            .constraint_matrix(&DVector::from_vec(q))
            .map_err(to_py)?;
        Ok((a * DVector::from_vec(v)).amax())
    }

    /// Orthogonal projection of a velocity onto the constraint distribution.
    fn project_velocity(&self, q: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        let projected = self
            .bundle
            .system
            .project_velocity(&chart(q)?, &velocity(v)?)
            .map_err(to_py)?;
        Ok(cells(projected.coords()))
    }

    /// Constraint-force multipliers of the continuous dynamics at a state.
    fn multipliers(&self, q: Vec<f64>, v: Vec<f64>) -> PyResult<Vec<f64>> {
        let state = State::new(chart(q)?, velocity(v)?).map_err(to_py)?;
        let lambda = multipliers(&self.bundle.system, &state).map_err(to_py)?;
        Ok(cells(lambda.coords()))
    }

    /// RK4 integration of the constrained dynamics; returns (times,
    /// configurations, velocities).
    fn integrate(
        &self,
        q: Vec<f64>,
        v: Vec<f64>,
        step: f64,
        n_steps: usize,
    ) -> PyResult<SampledTrajectory> {
        let state = State::new(chart(q)?, velocity(v)?).map_err(to_py)?;
        let traj = integrate(&self.bundle.system, &state, step, n_steps).map_err(to_py)?;
        let times = traj.times().to_vec();
        let configs = traj.states().iter().map(|s| cells(s.q.coords())).collect();
        let velocities = traj.states().iter().map(|s| cells(s.v.coords())).collect();
        Ok((times, configs, velocities))
    }

    /// Velocity whose constrained flow joins q0 to q1 in one step, found by
    /// shooting.
    fn retract(&self, q0: Vec<f64>, q1: Vec<f64>) -> PyResult<Vec<f64>> {
        let pair = self.pair(q0, q1)?;
        let shot =
            retraction_shoot(&self.bundle.system, &pair, None, &self.settings()).map_err(to_py)?;
        Ok(cells(shot.velocity.coords()))
    }

    /// Iterates the exact discrete flow; returns the n_steps + 2
    /// configurations q_0 .. q_{n_steps + 1}.
    fn exact_flow(&self, q0: Vec<f64>, q1: Vec<f64>, n_steps: usize) -> PyResult<Vec<Vec<f64>>> {
        let seed = self.pair(q0, q1)?;
        let pairs =
            exact_discrete_flow(&self.bundle.system, &seed, n_steps, &self.settings())
                .map_err(to_py)?;
        let mut configs: Vec<Vec<f64>> =
            pairs.iter().map(|p| cells(p.q0().coords())).collect();
        if let Some(last) = pairs.last() {
            configs.push(cells(last.q1().coords()));
        }
        Ok(configs)
    }

    /// Action of the connecting constrained trajectory of a pair.
    fn exact_lagrangian(&self, q0: Vec<f64>, q1: Vec<f64>) -> PyResult<f64> {
        let pair = self.pair(q0, q1)?;
        let settings = self.settings();
        exact_discrete_lagrangian(&self.bundle.system, &pair, settings.quad_intervals, &settings)
            .map_err(to_py)
    }

    /// One step of the forced discrete integrator; returns q_next.
    fn mla_step(&self, q_prev: Vec<f64>, q_cur: Vec<f64>) -> PyResult<Vec<f64>> {
        let result = mla_step(
            &self.bundle.scheme,
            &DVector::from_vec(q_prev),
            &DVector::from_vec(q_cur),
            &self.settings(),
        )
        .map_err(to_py)?;
        Ok(cells(result.q_next.coords()))
    }

    /// Runs the forced discrete integrator; returns (configurations,
    /// restricted Hamiltonian series).
    fn run_mla(
        &self,
        q0: Vec<f64>,
        q1: Vec<f64>,
        n_steps: usize,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        self.discrete_run(q0, q1, n_steps, true)
    }

    /// Same integrator with the discrete forces dropped.
    fn run_dla(
        &self,
        q0: Vec<f64>,
        q1: Vec<f64>,
        n_steps: usize,
    ) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
        self.discrete_run(q0, q1, n_steps, false)
    }

    /// Discrete constraint residuals of a pair.
    fn omega(&self, q0: Vec<f64>, q1: Vec<f64>) -> PyResult<Vec<f64>> {
        let value = self
            .bundle
            .scheme
            .constraint()
            .omega(&DVector::from_vec(q0), &DVector::from_vec(q1))
            .map_err(to_py)?;
        Ok(cells(&value))
    }

    /// Frame components of the minus-side discrete Legendre transform.
    fn legendre_minus(&self, q0: Vec<f64>, q1: Vec<f64>) -> PyResult<Vec<f64>> {
        let p = projected_discrete_legendre(
            &self.bundle.scheme,
            &self.bundle.system,
            &DVector::from_vec(q0),
            &DVector::from_vec(q1),
            LegendreSide::Minus,
        )
        .map_err(to_py)?;
        Ok(cells(p.coords()))
    }

    /// Restricted Hamiltonian at a configuration and frame momentum.
    fn restricted_hamiltonian(&self, q: Vec<f64>, p: Vec<f64>) -> PyResult<f64> {
        (self.bundle.restricted_hamiltonian)(&DVector::from_vec(q), &DVector::from_vec(p))
            .map_err(to_py)
    }
}

/// Closed-form constrained flow of the particle system from a state, for
/// time t; returns (configuration, velocity).
#[pyfunction]
fn particle_flow(q: Vec<f64>, v: Vec<f64>, t: f64) -> PyResult<(Vec<f64>, Vec<f64>)> {
    let state = State::new(chart(q)?, velocity(v)?).map_err(to_py)?;
    let end = particle_closed_flow(&state, t).map_err(to_py)?;
    Ok((cells(end.q.coords()), cells(end.v.coords())))
}

/// Closed-form forced-integrator update of the particle system; maps a pair
/// (q0, q1) to q2.
#[pyfunction]
fn particle_update(q0: Vec<f64>, q1: Vec<f64>) -> PyResult<Vec<f64>> {
    let q2 = particle_mla_update(&chart(q0)?, &chart(q1)?).map_err(to_py)?;
    Ok(cells(q2.coords()))
}

#[pymodule]
fn nhmech_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<System>()?;
    m.add_function(wrap_pyfunction!(particle_flow, m)?)?;
    m.add_function(wrap_pyfunction!(particle_update, m)?)?;
    Ok(())
}
