//! Built-in benchmark systems: a constrained particle with a closed-form
//! flow and a knife edge sliding on an inclined plane, each packaged with a
//! matching discretization and restricted Hamiltonian.
//!
//! The particle lives in coordinates (x, y, z) with unit mass, no potential,
//! and the constraint zdot = y xdot. Its flow, retraction, discrete
//! constraint function, and one-step update all have closed forms, which
//! makes it the reference oracle for the solvers in `exact` and
//! `integrator`. The knife edge lives in (x, y, phi) with potential -x/2 and
//! constraint sin(phi) xdot = (cos(phi) - epsilon) ydot; epsilon = 0 is the
//! classical edge and small positive epsilon tilts the admissible plane.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrator::{
    DiscreteConstraint, DiscreteForces, DiscreteLagrangian, DiscretizationScheme, PairMatrix,
    PairScalar, PairVector, RestrictedHamiltonian,
};
use crate::model::{
    ChartPoint, DistributionSpec, MatrixField, MechanicalLagrangian, NonholonomicSystem, RateField,
    ScalarField, State, Velocity, VectorField,
};

/// Below this |cos(phi) - epsilon| the knife-edge frame column blows up and
/// evaluation fails instead of returning garbage.
const FRAME_GUARD: f64 = 1e-6;

/// Treat the y-chord as degenerate below this and switch the particle chart
/// formulas to their y1 -> y0 limits.
const CHART_BRANCH_TOL: f64 = 1e-8;

/// Treat the initial y-velocity as zero below this and use the straight-line
/// branch of the particle flow.
const LINE_BRANCH_TOL: f64 = 1e-10;

/// A system together with a compatible discretization and its restricted
/// Hamiltonian in frame momenta.
#[derive(Clone)]
pub struct SystemBundle {
    pub system: NonholonomicSystem,
    pub scheme: DiscretizationScheme,
    pub restricted_hamiltonian: RestrictedHamiltonian,
}

fn check_step(step: f64) -> Result<()> {
    if step.is_finite() && step > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidConfig(
            "step must be positive and finite".into(),
        ))
    }
}

fn unit_mass() -> MatrixField {
    Arc::new(|q| Ok(DMatrix::identity(q.len(), q.len())))
}

/// Constrained particle in (x, y, z): unit mass, no potential, constraint
/// zdot = y xdot, discretized with step `step`.
pub fn make_particle(step: f64) -> Result<SystemBundle> {
    check_step(step)?;
    let potential: ScalarField = Arc::new(|_| Ok(0.0));
    let gradient: VectorField = Arc::new(|q| Ok(DVector::zeros(q.len())));
    let lagrangian = MechanicalLagrangian::new(unit_mass(), potential, gradient);

    let constraint: MatrixField =
        Arc::new(|q| Ok(DMatrix::from_row_slice(1, 3, &[-q[1], 0.0, 1.0])));
    let frame: MatrixField = Arc::new(|q| {
        Ok(DMatrix::from_column_slice(
            3,
            2,
            &[1.0, 0.0, q[1], 0.0, 1.0, 0.0],
        ))
    });
    let rate: RateField =
        Arc::new(|_q, v| Ok(DMatrix::from_row_slice(1, 3, &[-v[1], 0.0, 0.0])));
    let distribution = DistributionSpec::new(constraint, frame.clone()).with_constraint_rate(rate);
    let system = NonholonomicSystem::new(lagrangian, distribution, 3, 1)?;

    let h = step;
    let value: PairScalar = Arc::new(move |q0, q1| Ok((q1 - q0).norm_squared() / (2.0 * h)));
    let d1: PairVector = Arc::new(move |q0, q1| Ok((q0 - q1) / h));
    let d2: PairVector = Arc::new(move |q0, q1| Ok((q1 - q0) / h));
    let discrete_lagrangian = DiscreteLagrangian::new(value).with_gradients(d1, d2);

    // Discrete constraint force: the covector is normal to the admissible
    // plane at the midpoint height, scaled so the update stays on omega = 0.
    let force = move |q0: &DVector<f64>, q1: &DVector<f64>| -> Result<DVector<f64>> {
        let dx = q1[0] - q0[0];
        let dy = q1[1] - q0[1];
        let ys = q0[1] + q1[1];
        let coef = (2.0 / h) * dx * dy / (4.0 + ys * ys);
        Ok(DVector::from_row_slice(&[-0.5 * ys * coef, 0.0, coef]))
    };
    let plus: PairVector = Arc::new(force);
    let minus: PairVector = Arc::new(force);
    let forces = DiscreteForces::new(plus, minus);

    let omega: PairVector = Arc::new(|q0, q1| {
        Ok(DVector::from_row_slice(&[
            q1[2] - q0[2] - 0.5 * (q1[1] + q0[1]) * (q1[0] - q0[0]),
        ]))
    });
    let d_omega: PairMatrix = Arc::new(|q0, q1| {
        Ok(DMatrix::from_row_slice(
            1,
            3,
            &[
                -0.5 * (q1[1] + q0[1]),
                -0.5 * (q1[0] - q0[0]),
                1.0,
            ],
        ))
    });
    let discrete_constraint = DiscreteConstraint::new(1, omega).with_jacobian(d_omega);
    let scheme = DiscretizationScheme::new(
        discrete_lagrangian,
        forces,
        discrete_constraint,
        frame,
        3,
    )?;

    let restricted_hamiltonian: RestrictedHamiltonian = Arc::new(|q, p| {
        let y = q[1];
        Ok(0.5 * (p[0] * p[0] / (1.0 + y * y) + p[1] * p[1]))
    });

    Ok(SystemBundle {
        system,
        scheme,
        restricted_hamiltonian,
    })
}

/// Parameters of the knife edge: `epsilon` tilts the constraint away from
/// the classical edge at epsilon = 0.
#[derive(Debug, Clone, Copy)]
pub struct KnifeEdgeParams {
    pub epsilon: f64,
}

impl Default for KnifeEdgeParams {
    fn default() -> Self {
        Self { epsilon: 0.0 }
    }
}

/// Knife edge on an inclined plane in (x, y, phi): unit mass, potential
/// -x/2, constraint sin(phi) xdot = (cos(phi) - epsilon) ydot.
pub fn make_knife_edge(params: &KnifeEdgeParams, step: f64) -> Result<SystemBundle> {
    check_step(step)?;
    let eps = params.epsilon;
    if !eps.is_finite() {
        return Err(Error::InvalidConfig("epsilon must be finite".into()));
    }

    let potential: ScalarField = Arc::new(|q| Ok(-0.5 * q[0]));
    let gradient: VectorField = Arc::new(|_| Ok(DVector::from_row_slice(&[-0.5, 0.0, 0.0])));
    let lagrangian = MechanicalLagrangian::new(unit_mass(), potential, gradient);

    let constraint: MatrixField = Arc::new(move |q| {
        Ok(DMatrix::from_row_slice(
            1,
            3,
            &[q[2].sin(), -(q[2].cos() - eps), 0.0],
        ))
    });
    let frame: MatrixField = Arc::new(move |q| {
        let c = q[2].cos() - eps;
        if c.abs() <= FRAME_GUARD {
            return Err(Error::FrameSingularity(format!(
                "cos(phi) - epsilon = {c:.3e} at phi = {}; the frame column is unbounded there",
                q[2]
            )));
        }
        Ok(DMatrix::from_column_slice(
            3,
            2,
            &[1.0, q[2].sin() / c, 0.0, 0.0, 0.0, 1.0],
        ))
    });
    let rate: RateField = Arc::new(|q, v| {
        Ok(DMatrix::from_row_slice(
            1,
            3,
            &[v[2] * q[2].cos(), v[2] * q[2].sin(), 0.0],
        ))
    });
    let distribution = DistributionSpec::new(constraint, frame.clone()).with_constraint_rate(rate);
    let system = NonholonomicSystem::new(lagrangian, distribution, 3, 1)?;

    let h = step;
    let value: PairScalar = Arc::new(move |q0, q1| {
        Ok((q1 - q0).norm_squared() / (2.0 * h) + h * (q1[0] + q0[0]) / 4.0)
    });
    let d1: PairVector = Arc::new(move |q0, q1| {
        let mut g = (q0 - q1) / h;
        g[0] += h / 4.0;
        Ok(g)
    });
    let d2: PairVector = Arc::new(move |q0, q1| {
        let mut g = (q1 - q0) / h;
        g[0] += h / 4.0;
        Ok(g)
    });
    let discrete_lagrangian = DiscreteLagrangian::new(value).with_gradients(d1, d2);

    // Midpoint discretization of the continuous multiplier; the force
    // direction is the constraint covector at the midpoint angle.
    let force = move |q0: &DVector<f64>, q1: &DVector<f64>| -> Result<DVector<f64>> {
        let phi = 0.5 * (q0[2] + q1[2]);
        let s = phi.sin();
        let c = phi.cos() - eps;
        let dx = q1[0] - q0[0];
        let dy = q1[1] - q0[1];
        let dphi = q1[2] - q0[2];
        let gram = s * s + c * c;
        let lambda = (-(dphi / (h * h)) * (dx * phi.cos() + dy * s) - 0.5 * s) / gram;
        Ok(DVector::from_row_slice(&[
            0.5 * h * lambda * s,
            -0.5 * h * lambda * c,
            0.0,
        ]))
    };
    let plus: PairVector = Arc::new(force);
    let minus: PairVector = Arc::new(force);
    let forces = DiscreteForces::new(plus, minus);

    let omega: PairVector = Arc::new(move |q0, q1| {
        let phi = 0.5 * (q0[2] + q1[2]);
        Ok(DVector::from_row_slice(&[
            (phi.sin() * (q1[0] - q0[0]) - (phi.cos() - eps) * (q1[1] - q0[1])) / h,
        ]))
    });
    let d_omega: PairMatrix = Arc::new(move |q0, q1| {
        let phi = 0.5 * (q0[2] + q1[2]);
        let dx = q1[0] - q0[0];
        let dy = q1[1] - q0[1];
        Ok(DMatrix::from_row_slice(
            1,
            3,
            &[
                phi.sin() / h,
                -(phi.cos() - eps) / h,
                (0.5 * phi.cos() * dx + 0.5 * phi.sin() * dy) / h,
            ],
        ))
    });
    let discrete_constraint = DiscreteConstraint::new(1, omega).with_jacobian(d_omega);
    let scheme = DiscretizationScheme::new(
        discrete_lagrangian,
        forces,
        discrete_constraint,
        frame,
        3,
    )?;

    let restricted_hamiltonian: RestrictedHamiltonian = Arc::new(move |q, p| {
        let c = q[2].cos() - eps;
        if c.abs() <= FRAME_GUARD {
            return Err(Error::FrameSingularity(format!(
                "cos(phi) - epsilon = {c:.3e} at phi = {}; the restricted metric degenerates",
                q[2]
            )));
        }
        let t = q[2].sin() / c;
        Ok(0.5 * (p[0] * p[0] / (1.0 + t * t) + p[1] * p[1]) - 0.5 * q[0])
    });

    Ok(SystemBundle {
        system,
        scheme,
        restricted_hamiltonian,
    })
}

/// Closed-form flow of the constrained particle from an admissible state.
pub fn particle_closed_flow(state: &State, t: f64) -> Result<State> {
    if state.q.len() != 3 {
        return Err(Error::DimensionMismatch {
            what: "particle state",
            expected: 3,
            got: state.q.len(),
        });
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("flow time"));
    }
    let q = state.q.coords();
    let v = state.v.coords();
    let (x0, y0, z0) = (q[0], q[1], q[2]);
    let (vx, vy) = (v[0], v[1]);
    let residual = v[2] - y0 * vx;
    if residual.abs() > 1e-9 {
        return Err(Error::ConstraintViolated {
            residual: residual.abs(),
        });
    }
    if vy.abs() <= LINE_BRANCH_TOL {
        return State::from_slices(
            &[x0 + vx * t, y0 + vy * t, z0 + y0 * vx * t],
            &[vx, vy, y0 * vx],
        );
    }
    let r0 = (y0 * y0 + 1.0).sqrt();
    let y = y0 + vy * t;
    let r = (y * y + 1.0).sqrt();
    let scale = vx / vy * r0;
    let x = x0 + scale * (y.asinh() - y0.asinh());
    let z = z0 + scale * (r - r0);
    let vxt = vx * r0 / r;
    State::from_slices(&[x, y, z], &[vxt, vy, y * vxt])
}

/// Closed-form retraction of the particle: the admissible initial velocity
/// whose trajectory reaches q1 from q0 in time `step`.
pub fn particle_retraction_closed(
    q0: &ChartPoint,
    q1: &ChartPoint,
    step: f64,
) -> Result<Velocity> {
    if q0.len() != 3 || q1.len() != 3 {
        return Err(Error::DimensionMismatch {
            what: "particle configuration",
            expected: 3,
            got: q0.len().min(q1.len()),
        });
    }
    check_step(step)?;
    let dx = q1.coords()[0] - q0.coords()[0];
    let dy = q1.coords()[1] - q0.coords()[1];
    let (y0, y1) = (q0.coords()[1], q1.coords()[1]);
    let vx = if dy.abs() < CHART_BRANCH_TOL {
        dx / step
    } else {
        dx * dy / (step * (y0 * y0 + 1.0).sqrt() * (y1.asinh() - y0.asinh()))
    };
    Velocity::from_slice(&[vx, dy / step, y0 * vx])
}

/// Closed-form discrete constraint function of the particle: vanishes
/// exactly on pairs connected by the flow in time `step`.
pub fn particle_mu_d(q0: &DVector<f64>, q1: &DVector<f64>, step: f64) -> f64 {
    let dx = q1[0] - q0[0];
    let dz = q1[2] - q0[2];
    let (y0, y1) = (q0[1], q1[1]);
    if (y1 - y0).abs() < CHART_BRANCH_TOL {
        (dz - y0 * dx) / step
    } else {
        let slope = ((y1 * y1 + 1.0).sqrt() - (y0 * y0 + 1.0).sqrt()) / (y1.asinh() - y0.asinh());
        (dz - dx * slope) / step
    }
}

/// Closed-form one-step update of the particle discretization; the step
/// length cancels out of the stationarity equations.
pub fn particle_mla_update(q0: &ChartPoint, q1: &ChartPoint) -> Result<ChartPoint> {
    if q0.len() != 3 || q1.len() != 3 {
        return Err(Error::DimensionMismatch {
            what: "particle configuration",
            expected: 3,
            got: q0.len().min(q1.len()),
        });
    }
    let (x0, y0) = (q0.coords()[0], q0.coords()[1]);
    let (x1, y1, z1) = (q1.coords()[0], q1.coords()[1], q1.coords()[2]);
    let y2 = 2.0 * y1 - y0;
    let diff = y1 - y0;
    let sum01 = y1 + y0;
    let sum12 = y2 + y1;
    let num = 1.0 + 0.5 * y1 * sum01 + diff * diff / (4.0 + sum01 * sum01);
    let den = 1.0 + 0.5 * y1 * sum12 + diff * diff / (4.0 + sum12 * sum12);
    let x2 = x1 + (x1 - x0) * num / den;
    let z2 = z1 + 0.5 * sum12 * (x2 - x1);
    ChartPoint::from_slice(&[x2, y2, z2])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::inf_norm;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn builders_reject_bad_steps() {
        assert!(make_particle(0.0).is_err());
        assert!(make_particle(-0.5).is_err());
        assert!(make_particle(f64::INFINITY).is_err());
        assert!(make_knife_edge(&KnifeEdgeParams::default(), 0.0).is_err());
        assert!(make_knife_edge(&KnifeEdgeParams { epsilon: f64::NAN }, 0.5).is_err());
    }

    #[test]
    fn frames_span_the_constraint_kernel() {
        let particle = make_particle(0.5).unwrap().system;
        let knife = make_knife_edge(&KnifeEdgeParams { epsilon: 0.1 }, 0.5)
            .unwrap()
            .system;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let q = DVector::from_fn(3, |_, _| rng.random_range(-1.0..1.0));
            for sys in [&particle, &knife] {
                let a = sys.constraint_matrix(&q).unwrap();
                let e = sys.frame_matrix(&q).unwrap();
                let product = &a * &e;
                assert!(product.iter().all(|x| x.abs() < 1e-12));
            }
        }
    }

    #[test]
    fn knife_rate_matches_the_difference_fallback() {
        let bundle = make_knife_edge(&KnifeEdgeParams { epsilon: 0.1 }, 0.5).unwrap();
        let q = DVector::from_row_slice(&[0.2, -0.3, 0.7]);
        let v = DVector::from_row_slice(&[0.5, -0.1, 0.9]);
        let analytic = bundle.system.distribution().rate(&q, &v).unwrap();
        let fallback = DistributionSpec::new(
            Arc::new(move |q: &DVector<f64>| {
                Ok(DMatrix::from_row_slice(
                    1,
                    3,
                    &[q[2].sin(), -(q[2].cos() - 0.1), 0.0],
                ))
            }),
            Arc::new(|_q: &DVector<f64>| Ok(DMatrix::zeros(3, 2))),
        )
        .rate(&q, &v)
        .unwrap();
        assert!((analytic - fallback).iter().all(|x| x.abs() < 1e-8));
    }

    #[test]
    fn knife_frame_degenerates_at_the_guarded_angle() {
        let flat = make_knife_edge(&KnifeEdgeParams::default(), 0.5).unwrap();
        let upright = DVector::from_row_slice(&[0.0, 0.0, std::f64::consts::FRAC_PI_2]);
        assert!(matches!(
            flat.system.frame_matrix(&upright),
            Err(Error::FrameSingularity(_))
        ));
        assert!((flat.restricted_hamiltonian)(&upright, &DVector::zeros(2)).is_err());

        let tilted = make_knife_edge(&KnifeEdgeParams { epsilon: 0.1 }, 0.5).unwrap();
        let critical = DVector::from_row_slice(&[0.0, 0.0, 0.1_f64.acos()]);
        assert!(tilted.system.frame_matrix(&critical).is_err());
        assert!(tilted.system.frame_matrix(&DVector::zeros(3)).is_ok());
    }

    #[test]
    fn knife_energy_and_restricted_hamiltonian_agree_at_rest() {
        let bundle = make_knife_edge(&KnifeEdgeParams::default(), 0.5).unwrap();
        let state = State::from_slices(&[1.0, 0.0, 0.0], &[0.0, 0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(
            bundle.system.energy(&state.q, &state.v).unwrap(),
            -0.5,
            epsilon = 1e-15
        );
        let h = (bundle.restricted_hamiltonian)(state.q.coords(), &DVector::zeros(2)).unwrap();
        assert_abs_diff_eq!(h, -0.5, epsilon = 1e-15);
    }

    #[test]
    fn knife_discrete_derivatives_match_finite_differences() {
        let scheme = make_knife_edge(&KnifeEdgeParams { epsilon: 0.1 }, 0.5)
            .unwrap()
            .scheme;
        let q0 = DVector::from_row_slice(&[0.1, -0.2, 0.3]);
        let q1 = DVector::from_row_slice(&[0.5, 0.1, 0.6]);
        let l = scheme.lagrangian();
        let plain = DiscreteLagrangian::new({
            let inner = l.clone();
            Arc::new(move |a: &DVector<f64>, b: &DVector<f64>| inner.value(a, b))
        });
        let fd1 = plain.d1(&q0, &q1).unwrap();
        let fd2 = plain.d2(&q0, &q1).unwrap();
        let a1 = l.d1(&q0, &q1).unwrap();
        let a2 = l.d2(&q0, &q1).unwrap();
        assert!(inf_norm(&(a1 - fd1)) < 1e-6);
        assert!(inf_norm(&(a2 - fd2)) < 1e-6);

        let c = scheme.constraint();
        let fd = DiscreteConstraint::new(1, {
            let inner = c.clone();
            Arc::new(move |a: &DVector<f64>, b: &DVector<f64>| inner.omega(a, b))
        })
        .d_omega_q1(&q0, &q1)
        .unwrap();
        let analytic = c.d_omega_q1(&q0, &q1).unwrap();
        assert!((analytic - fd).iter().all(|x| x.abs() < 1e-6));
    }

    #[test]
    fn knife_seed_height_satisfies_the_discrete_constraint() {
        let bundle = make_knife_edge(&KnifeEdgeParams::default(), 0.5).unwrap();
        let q0 = DVector::zeros(3);
        let y1 = 0.2_f64.tan() * 0.4;
        let q1 = DVector::from_row_slice(&[0.4, y1, 0.4]);
        let w = bundle.scheme.constraint().omega(&q0, &q1).unwrap();
        assert_abs_diff_eq!(w[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(y1, 0.0810840, epsilon = 1e-5);
    }

    #[test]
    fn closed_flow_requires_an_admissible_state() {
        let bad = State::from_slices(&[0.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            particle_closed_flow(&bad, 1.0),
            Err(Error::ConstraintViolated { .. })
        ));
    }

    #[test]
    fn closed_flow_fixes_time_zero_and_composes() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let y0 = rng.random_range(-1.0..1.0);
            let vx = rng.random_range(-1.0..1.0);
            let vy = rng.random_range(-1.0..1.0);
            let state = State::from_slices(
                &[rng.random_range(-1.0..1.0), y0, rng.random_range(-1.0..1.0)],
                &[vx, vy, y0 * vx],
            )
            .unwrap();
            let frozen = particle_closed_flow(&state, 0.0).unwrap();
            assert_abs_diff_eq!(
                inf_norm(&(frozen.q.coords() - state.q.coords())),
                0.0,
                epsilon = 1e-14
            );
            let (s, t) = (0.3, 0.9);
            let two_leg = particle_closed_flow(&particle_closed_flow(&state, s).unwrap(), t)
                .unwrap();
            let direct = particle_closed_flow(&state, s + t).unwrap();
            assert_abs_diff_eq!(
                inf_norm(&(two_leg.q.coords() - direct.q.coords())),
                0.0,
                epsilon = 1e-12
            );
            assert_abs_diff_eq!(
                inf_norm(&(two_leg.v.coords() - direct.v.coords())),
                0.0,
                epsilon = 1e-12
            );
            // The flown state stays admissible.
            let r = direct.v.coords()[2] - direct.q.coords()[1] * direct.v.coords()[0];
            assert_abs_diff_eq!(r, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn closed_flow_straight_line_branch() {
        let state = State::from_slices(&[0.2, -0.5, 0.1], &[0.8, 0.0, -0.4]).unwrap();
        let moved = particle_closed_flow(&state, 2.0).unwrap();
        assert_abs_diff_eq!(moved.q.coords()[0], 0.2 + 1.6, epsilon = 1e-15);
        assert_abs_diff_eq!(moved.q.coords()[1], -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(moved.q.coords()[2], 0.1 - 0.8, epsilon = 1e-15);
    }

    #[test]
    fn closed_retraction_inverts_the_closed_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for h in [0.1, 0.5] {
            for _ in 0..20 {
                let y0 = rng.random_range(-1.0..1.0);
                let vx = rng.random_range(-1.0..1.0);
                let vy = rng.random_range(0.2..1.2)
                    * if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
                let state = State::from_slices(
                    &[rng.random_range(-1.0..1.0), y0, rng.random_range(-1.0..1.0)],
                    &[vx, vy, y0 * vx],
                )
                .unwrap();
                let arrived = particle_closed_flow(&state, h).unwrap();
                let recovered = particle_retraction_closed(&state.q, &arrived.q, h).unwrap();
                assert_abs_diff_eq!(
                    inf_norm(&(recovered.coords() - state.v.coords())),
                    0.0,
                    epsilon = 1e-12
                );
            }
        }
        // Level chord: the limit branch.
        let q0 = ChartPoint::from_slice(&[0.0, 0.7, 0.0]).unwrap();
        let q1 = ChartPoint::from_slice(&[1.0, 0.7, 0.7]).unwrap();
        let v = particle_retraction_closed(&q0, &q1, 0.5).unwrap();
        assert_abs_diff_eq!(v.coords()[0], 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.coords()[1], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(v.coords()[2], 1.4, epsilon = 1e-15);
    }

    #[test]
    fn discrete_constraint_function_separates_flow_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..20 {
            let y0 = rng.random_range(-1.0..1.0);
            let vx = rng.random_range(-1.0..1.0);
            let vy = rng.random_range(0.2..1.2);
            let state = State::from_slices(
                &[rng.random_range(-1.0..1.0), y0, rng.random_range(-1.0..1.0)],
                &[vx, vy, y0 * vx],
            )
            .unwrap();
            let arrived = particle_closed_flow(&state, 0.5).unwrap();
            let mu = particle_mu_d(state.q.coords(), arrived.q.coords(), 0.5);
            assert_abs_diff_eq!(mu, 0.0, epsilon = 1e-12);

            let mut off = arrived.q.coords().clone();
            off[2] += 0.01;
            assert!(particle_mu_d(state.q.coords(), &off, 0.5).abs() > 1e-3);
        }
        // Level pairs take the limit branch.
        let q0 = DVector::from_row_slice(&[0.0, 0.7, 0.0]);
        let q1 = DVector::from_row_slice(&[1.0, 0.7, 0.7]);
        assert_abs_diff_eq!(particle_mu_d(&q0, &q1, 0.5), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn one_step_update_matches_the_worked_example() {
        let q0 = ChartPoint::from_slice(&[0.0, 0.0, 0.0]).unwrap();
        let q1 = ChartPoint::from_slice(&[0.4, 0.4, 0.08]).unwrap();
        let q2 = particle_mla_update(&q0, &q1).unwrap();
        assert_abs_diff_eq!(q2.coords()[0], 0.7524344, epsilon = 1e-6);
        assert_eq!(q2.coords()[1], 0.8);
        assert_abs_diff_eq!(
            q2.coords()[2],
            0.08 + 0.6 * (q2.coords()[0] - 0.4),
            epsilon = 1e-15
        );
    }
}
