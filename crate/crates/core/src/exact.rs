//! Exact discrete mechanics on configuration pairs.
//!
//! A pair (q0, q1) with a step h stands for the trajectory of the continuous
//! constrained dynamics that leaves q0 with an admissible velocity and
//! arrives at q1 at time h. The retraction recovers that velocity by
//! shooting over the frame coordinates, the exponential produces the pair
//! reached from a state, and the exact discrete Lagrangian evaluates the
//! action integral along the connecting trajectory. These are the reference
//! objects the discretizations in `integrator` approximate.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::flow::{integrate_samples, multipliers_raw};
use crate::integrator::LegendreSide;
use crate::model::{
    inf_norm, ChartPoint, FrameMomentum, Momentum, NonholonomicSystem, State, Velocity,
};
use crate::settings::SolverSettings;

/// Bound on the constraint derivative along a boundary variation for it to
/// count as tangent to the discrete constraint set.
const TANGENCY_TOL: f64 = 1e-6;

/// Configuration pair with the time step separating its endpoints.
#[derive(Debug, Clone)]
pub struct ConfigPair {
    q0: ChartPoint,
    q1: ChartPoint,
    step: f64,
}

impl ConfigPair {
    pub fn new(q0: ChartPoint, q1: ChartPoint, step: f64) -> Result<Self> {
        if q0.len() != q1.len() {
            return Err(Error::DimensionMismatch {
                what: "configuration pair",
                expected: q0.len(),
                got: q1.len(),
            });
        }
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidConfig(
                "pair step must be positive and finite".into(),
            ));
        }
        Ok(Self { q0, q1, step })
    }

    pub fn q0(&self) -> &ChartPoint {
        &self.q0
    }

    pub fn q1(&self) -> &ChartPoint {
        &self.q1
    }

    pub fn step(&self) -> f64 {
        self.step
    }
}

/// Outcome of the shooting retraction: the admissible initial velocity whose
/// trajectory reaches the pair's second endpoint.
#[derive(Debug, Clone)]
pub struct ShootingResult {
    pub velocity: Velocity,
    /// Endpoint miss of the returned velocity, in the infinity norm.
    pub terminal_error: f64,
    pub iterations: usize,
}

/// Nonholonomic exponential: the pair reached by flowing the constrained
/// dynamics from an admissible state for one step.
pub fn exp_nh(
    system: &NonholonomicSystem,
    q0: &ChartPoint,
    v0: &Velocity,
    step: f64,
    settings: &SolverSettings,
) -> Result<ConfigPair> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidConfig(
            "exponential step must be positive and finite".into(),
        ));
    }
    system.assert_constrained(&State::new(q0.clone(), v0.clone())?)?;
    let dt = step / settings.substeps as f64;
    let samples = integrate_samples(
        system,
        q0.coords(),
        v0.coords(),
        dt,
        settings.substeps,
        settings.substeps,
    )?;
    let (q1, _) = samples.last().expect("integration records the endpoint");
    ConfigPair::new(q0.clone(), ChartPoint::new(q1.clone())?, step)
}

/// Recovers the admissible initial velocity connecting a pair's endpoints by
/// a Gauss-Newton shooting iteration over the frame coordinates. The initial
/// iterate comes from `guess` when given, otherwise from projecting the
/// chord velocity onto the distribution.
pub fn retraction_shoot(
    system: &NonholonomicSystem,
    pair: &ConfigPair,
    guess: Option<&Velocity>,
    settings: &SolverSettings,
) -> Result<ShootingResult> {
    let q0 = pair.q0.coords();
    let target = pair.q1.coords();
    let frame = system.frame_matrix(q0)?;
    let mut c = match guess {
        Some(v) => system.frame_coordinates(q0, v.coords())?,
        None => {
            let chord = Velocity::new((target - q0) / pair.step)?;
            let projected = system.project_velocity(&pair.q0, &chord)?;
            system.frame_coordinates(q0, projected.coords())?
        }
    };
    let dt = pair.step / settings.substeps as f64;
    let miss = |c: &DVector<f64>| -> Result<DVector<f64>> {
        let v0 = &frame * c;
        let samples =
            integrate_samples(system, q0, &v0, dt, settings.substeps, settings.substeps)?;
        let (q_end, _) = samples.last().expect("integration records the endpoint");
        Ok(q_end - target)
    };
    let correction = |c: &DVector<f64>, r: &DVector<f64>| -> Result<DVector<f64>> {
        let mut jac = DMatrix::zeros(r.len(), c.len());
        for j in 0..c.len() {
            let s = settings.shooting_fd_step * (1.0 + c[j].abs());
            let mut cp = c.clone();
            let mut cm = c.clone();
            cp[j] += s;
            cm[j] -= s;
            jac.set_column(j, &((miss(&cp)? - miss(&cm)?) / (2.0 * s)));
        }
        // Least-squares step through the normal equations; the residual has
        // n components but only n - k degrees of freedom.
        let jtj = jac.tr_mul(&jac);
        let jtr = jac.tr_mul(r);
        jtj.lu().solve(&(-jtr)).ok_or(Error::SingularJacobian)
    };
    let mut r = miss(&c)?;
    let mut err = inf_norm(&r);
    for iteration in 0..settings.shooting_max_iters {
        if err < settings.shooting_tol {
            // One extra correction, kept only when it tightens the miss.
            let cand = &c + correction(&c, &r)?;
            let cand_err = inf_norm(&miss(&cand)?);
            if cand_err < err {
                c = cand;
                err = cand_err;
            }
            return Ok(ShootingResult {
                velocity: Velocity::new(&frame * &c)?,
                terminal_error: err,
                iterations: iteration,
            });
        }
        let delta = correction(&c, &r)?;
        let mut scale = 1.0;
        loop {
            let cand = &c + &delta * scale;
            let cand_r = miss(&cand)?;
            let cand_err = inf_norm(&cand_r);
            if cand_err <= err || scale < 1.0 / 256.0 {
                c = cand;
                r = cand_r;
                err = cand_err;
                break;
            }
            scale *= 0.5;
        }
        if !err.is_finite() {
            return Err(Error::NotOnSubmanifold {
                terminal_error: err,
                iterations: iteration + 1,
            });
        }
    }
    if err < settings.shooting_tol {
        return Ok(ShootingResult {
            velocity: Velocity::new(&frame * &c)?,
            terminal_error: err,
            iterations: settings.shooting_max_iters,
        });
    }
    Err(Error::NotOnSubmanifold {
        terminal_error: err,
        iterations: settings.shooting_max_iters,
    })
}

/// One step of the exact discrete flow: retract the pair to a state, flow it
/// for one step, and pair the old second endpoint with the new one.
pub fn exact_step(
    system: &NonholonomicSystem,
    pair: &ConfigPair,
    settings: &SolverSettings,
) -> Result<(ConfigPair, ShootingResult)> {
    let shot = retraction_shoot(system, pair, None, settings)?;
    let dt = pair.step / settings.substeps as f64;
    let samples = integrate_samples(
        system,
        pair.q0.coords(),
        shot.velocity.coords(),
        dt,
        2 * settings.substeps,
        settings.substeps,
    )?;
    let (q2, _) = samples.last().expect("integration records the endpoint");
    let next = ConfigPair::new(pair.q1.clone(), ChartPoint::new(q2.clone())?, pair.step)?;
    Ok((next, shot))
}

/// Iterates the exact discrete flow, returning the seed pair followed by
/// `n_steps` successors.
pub fn exact_discrete_flow(
    system: &NonholonomicSystem,
    pair: &ConfigPair,
    n_steps: usize,
    settings: &SolverSettings,
) -> Result<Vec<ConfigPair>> {
    let mut pairs = Vec::with_capacity(n_steps + 1);
    pairs.push(pair.clone());
    for _ in 0..n_steps {
        let (next, _) = exact_step(system, pairs.last().expect("seeded"), settings)?;
        pairs.push(next);
    }
    Ok(pairs)
}

/// Exact discrete Legendre transform of a pair: the boundary momentum of the
/// connecting trajectory, restricted to the frame at the matching endpoint.
pub fn exact_discrete_legendre(
    system: &NonholonomicSystem,
    pair: &ConfigPair,
    side: LegendreSide,
    settings: &SolverSettings,
) -> Result<FrameMomentum> {
    let shot = retraction_shoot(system, pair, None, settings)?;
    match side {
        LegendreSide::Minus => {
            let m = system.lagrangian().mass_matrix(pair.q0.coords())?;
            let p = Momentum::new(&m * shot.velocity.coords())?;
            system.momentum_restrict(&pair.q0, &p)
        }
        LegendreSide::Plus => {
            let dt = pair.step / settings.substeps as f64;
            let samples = integrate_samples(
                system,
                pair.q0.coords(),
                shot.velocity.coords(),
                dt,
                settings.substeps,
                settings.substeps,
            )?;
            let (q_end, v_end) = samples.last().expect("integration records the endpoint");
            let m = system.lagrangian().mass_matrix(q_end)?;
            let p = Momentum::new(&m * v_end)?;
            system.momentum_restrict(&pair.q1, &p)
        }
    }
}

/// Shot trajectory sampled on a uniform quadrature grid of `intervals`
/// intervals between the pair endpoints.
pub(crate) struct SampledShot {
    pub shot: ShootingResult,
    /// States at the `intervals + 1` quadrature nodes.
    pub samples: Vec<(DVector<f64>, DVector<f64>)>,
    /// Spacing between consecutive nodes.
    pub node_width: f64,
}

pub(crate) fn shoot_and_sample(
    system: &NonholonomicSystem,
    pair: &ConfigPair,
    guess: Option<&Velocity>,
    intervals: usize,
    settings: &SolverSettings,
) -> Result<SampledShot> {
    let shot = retraction_shoot(system, pair, guess, settings)?;
    let per = settings.substeps.div_ceil(intervals).max(1);
    let dt = pair.step / (intervals * per) as f64;
    let samples = integrate_samples(
        system,
        pair.q0.coords(),
        shot.velocity.coords(),
        dt,
        intervals * per,
        per,
    )?;
    Ok(SampledShot {
        shot,
        samples,
        node_width: pair.step / intervals as f64,
    })
}

fn even_intervals(n: usize) -> usize {
    let n = n.max(2);
    n + n % 2
}

/// Composite Simpson rule over uniformly spaced samples; `values` must hold
/// an odd number of nodes.
fn simpson(values: &[f64], width: f64) -> f64 {
    let n = values.len() - 1;
    let mut acc = values[0] + values[n];
    for (j, v) in values.iter().enumerate().take(n).skip(1) {
        acc += v * if j % 2 == 1 { 4.0 } else { 2.0 };
    }
    acc * width / 3.0
}

fn action_of(system: &NonholonomicSystem, sampled: &SampledShot) -> Result<f64> {
    let mut values = Vec::with_capacity(sampled.samples.len());
    for (q, v) in &sampled.samples {
        values.push(system.lagrangian().value(q, v)?);
    }
    Ok(simpson(&values, sampled.node_width))
}

/// Exact discrete Lagrangian: the action integral along the trajectory
/// connecting the pair, by composite Simpson quadrature on `intervals`
/// intervals (rounded up to an even count).
pub fn exact_discrete_lagrangian(
    system: &NonholonomicSystem,
    pair: &ConfigPair,
    intervals: usize,
    settings: &SolverSettings,
) -> Result<f64> {
    let sampled = shoot_and_sample(system, pair, None, even_intervals(intervals), settings)?;
    action_of(system, &sampled)
}

/// Both sides of the boundary identity checked by [`exact_one_form_identity`]:
/// `lhs` is the directional derivative of the exact discrete Lagrangian plus
/// the integrated constraint-force pairing, `rhs` the boundary momentum
/// pairing. They agree on variations tangent to the discrete constraint set.
#[derive(Debug, Clone, Copy)]
pub struct OneFormCheck {
    pub lhs: f64,
    pub rhs: f64,
}

impl OneFormCheck {
    /// Gap between the two sides, relative to the scale of the right one.
    pub fn gap(&self) -> f64 {
        (self.lhs - self.rhs).abs() / (1.0 + self.rhs.abs())
    }
}

/// Borrowed scalar discrete-constraint callable of (q0, q1, step).
pub type PairConstraintFn = dyn Fn(&DVector<f64>, &DVector<f64>, f64) -> f64;

/// Checks the boundary one-form identity at a pair along a boundary
/// variation (x0, x1): the variation of the action equals the boundary
/// momentum pairing minus the integrated constraint-force pairing. The
/// variation must be tangent to the zero set of `mu`, the discrete
/// constraint function of (q0, q1, step).
pub fn exact_one_form_identity(
    system: &NonholonomicSystem,
    pair: &ConfigPair,
    x0: &DVector<f64>,
    x1: &DVector<f64>,
    mu: &PairConstraintFn,
    settings: &SolverSettings,
) -> Result<OneFormCheck> {
    system.check_len(x0, "boundary variation at q0")?;
    system.check_len(x1, "boundary variation at q1")?;
    let h = pair.step;
    let delta = settings.boundary_fd_step;
    let q0p = pair.q0.coords() + x0 * delta;
    let q0m = pair.q0.coords() - x0 * delta;
    let q1p = pair.q1.coords() + x1 * delta;
    let q1m = pair.q1.coords() - x1 * delta;
    let dmu = (mu(&q0p, &q1p, h) - mu(&q0m, &q1m, h)) / (2.0 * delta);
    if dmu.abs() > TANGENCY_TOL {
        return Err(Error::InvalidTangent { derivative: dmu });
    }

    let intervals = even_intervals(settings.quad_intervals);
    let base = shoot_and_sample(system, pair, None, intervals, settings)?;
    let pair_plus = ConfigPair::new(ChartPoint::new(q0p)?, ChartPoint::new(q1p)?, h)?;
    let pair_minus = ConfigPair::new(ChartPoint::new(q0m)?, ChartPoint::new(q1m)?, h)?;
    let plus = shoot_and_sample(system, &pair_plus, Some(&base.shot.velocity), intervals, settings)?;
    let minus =
        shoot_and_sample(system, &pair_minus, Some(&base.shot.velocity), intervals, settings)?;
    let dl = (action_of(system, &plus)? - action_of(system, &minus)?) / (2.0 * delta);

    // Constraint-force pairing with the variation field of the shot family,
    // both sampled on the shared quadrature grid.
    let mut values = Vec::with_capacity(base.samples.len());
    for (j, (q, v)) in base.samples.iter().enumerate() {
        let lambda = multipliers_raw(system, q, v)?;
        let force = system.constraint_matrix(q)?.tr_mul(&lambda);
        let x = (&plus.samples[j].0 - &minus.samples[j].0) / (2.0 * delta);
        values.push(force.dot(&x));
    }
    let beta = simpson(&values, base.node_width);

    let (q_end, v_end) = base.samples.last().expect("integration records the endpoint");
    let p0 = system.lagrangian().mass_matrix(pair.q0.coords())? * base.shot.velocity.coords();
    let p1 = system.lagrangian().mass_matrix(q_end)? * v_end;
    Ok(OneFormCheck {
        lhs: dl + beta,
        rhs: p1.dot(x1) - p0.dot(x0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::systems::{
        make_particle, particle_closed_flow, particle_mu_d, particle_retraction_closed,
    };
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn particle() -> NonholonomicSystem {
        make_particle(0.5).unwrap().system
    }

    fn unit_start() -> State {
        State::from_slices(&[0.0, 0.0, 0.0], &[1.0, 1.0, 0.0]).unwrap()
    }

    #[test]
    fn pair_construction_validates_inputs() {
        let a = ChartPoint::from_slice(&[0.0, 0.0, 0.0]).unwrap();
        let b = ChartPoint::from_slice(&[1.0, 1.0, 0.0]).unwrap();
        assert!(ConfigPair::new(a.clone(), b.clone(), 0.5).is_ok());
        assert!(ConfigPair::new(a.clone(), b.clone(), 0.0).is_err());
        assert!(ConfigPair::new(a.clone(), b.clone(), -1.0).is_err());
        assert!(ConfigPair::new(a.clone(), b, f64::NAN).is_err());
        let short = ChartPoint::from_slice(&[1.0, 1.0]).unwrap();
        assert!(ConfigPair::new(a, short, 0.5).is_err());
    }

    #[test]
    fn exponential_reproduces_the_closed_flow_endpoint() {
        let sys = particle();
        let start = unit_start();
        let pair = exp_nh(&sys, &start.q, &start.v, 0.5, &SolverSettings::default()).unwrap();
        let target = particle_closed_flow(&start, 0.5).unwrap();
        for i in 0..3 {
            assert_abs_diff_eq!(
                pair.q1().coords()[i],
                target.q.coords()[i],
                epsilon = 1e-10
            );
        }
        assert_abs_diff_eq!(pair.q1().coords()[0], 0.5_f64.asinh(), epsilon = 1e-10);
        assert_abs_diff_eq!(pair.q1().coords()[2], 1.25_f64.sqrt() - 1.0, epsilon = 1e-10);

        let inadmissible = Velocity::from_slice(&[0.0, 0.0, 1.0]).unwrap();
        assert!(exp_nh(&sys, &start.q, &inadmissible, 0.5, &SolverSettings::default()).is_err());
    }

    #[test]
    fn shooting_recovers_the_closed_retraction() {
        let sys = particle();
        let settings = SolverSettings::default();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let q0 = ChartPoint::from_slice(&[
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ])
            .unwrap();
            let c1: f64 = rng.random_range(-1.0..1.0);
            let c2 = rng.random_range(0.2..1.2) * if rng.random_range(0.0..1.0) < 0.5 { -1.0 } else { 1.0 };
            let frame = sys.frame_matrix(q0.coords()).unwrap();
            let v0 = Velocity::new(&frame * DVector::from_row_slice(&[c1, c2])).unwrap();
            for h in [0.1, 0.5] {
                let target = particle_closed_flow(&State::new(q0.clone(), v0.clone()).unwrap(), h)
                    .unwrap();
                let pair = ConfigPair::new(q0.clone(), target.q.clone(), h).unwrap();
                let shot = retraction_shoot(&sys, &pair, None, &settings).unwrap();
                let closed = particle_retraction_closed(&q0, &target.q, h).unwrap();
                for i in 0..3 {
                    assert_abs_diff_eq!(
                        shot.velocity.coords()[i],
                        closed.coords()[i],
                        epsilon = 1e-8
                    );
                    assert_abs_diff_eq!(shot.velocity.coords()[i], v0.coords()[i], epsilon = 1e-8);
                }
            }
        }
    }

    #[test]
    fn zero_chord_shoots_the_rest_velocity() {
        let sys = particle();
        let q = ChartPoint::from_slice(&[0.3, -0.4, 0.2]).unwrap();
        let pair = ConfigPair::new(q.clone(), q, 0.5).unwrap();
        let shot = retraction_shoot(&sys, &pair, None, &SolverSettings::default()).unwrap();
        assert_eq!(shot.iterations, 0);
        assert_abs_diff_eq!(inf_norm(shot.velocity.coords()), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn shooting_accepts_a_velocity_guess() {
        let sys = particle();
        let start = unit_start();
        let target = particle_closed_flow(&start, 0.5).unwrap();
        let pair = ConfigPair::new(start.q.clone(), target.q, 0.5).unwrap();
        let shot =
            retraction_shoot(&sys, &pair, Some(&start.v), &SolverSettings::default()).unwrap();
        assert!(shot.iterations <= 1);
        assert!(shot.terminal_error < 1e-9);
    }

    #[test]
    fn exact_flow_iterates_match_the_closed_flow() {
        let sys = particle();
        let settings = SolverSettings::default();
        let start = unit_start();
        let q_half = particle_closed_flow(&start, 0.5).unwrap().q;
        let pair = ConfigPair::new(start.q.clone(), q_half, 0.5).unwrap();
        let pairs = exact_discrete_flow(&sys, &pair, 4, &settings).unwrap();
        assert_eq!(pairs.len(), 5);
        for (k, p) in pairs.iter().enumerate() {
            let expected = particle_closed_flow(&start, 0.5 * (k + 1) as f64).unwrap();
            for i in 0..3 {
                assert_abs_diff_eq!(
                    p.q1().coords()[i],
                    expected.q.coords()[i],
                    epsilon = 1e-8
                );
            }
        }
        assert_abs_diff_eq!(pairs[1].q1().coords()[0], 1.0_f64.asinh(), epsilon = 1e-8);
        assert_abs_diff_eq!(
            pairs[1].q1().coords()[2],
            2.0_f64.sqrt() - 1.0,
            epsilon = 1e-8
        );
    }

    #[test]
    fn legendre_sides_take_the_boundary_momenta() {
        let sys = particle();
        let settings = SolverSettings::default();
        let start = unit_start();
        let q_half = particle_closed_flow(&start, 0.5).unwrap().q;
        let pair = ConfigPair::new(start.q.clone(), q_half, 0.5).unwrap();
        let minus = exact_discrete_legendre(&sys, &pair, LegendreSide::Minus, &settings).unwrap();
        assert_abs_diff_eq!(minus.coords()[0], 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(minus.coords()[1], 1.0, epsilon = 1e-9);
        // At the far end x-velocity has decayed by 1/sqrt(1 + y^2) while the
        // frame pairing restores the factor, landing on sqrt(1.25).
        let plus = exact_discrete_legendre(&sys, &pair, LegendreSide::Plus, &settings).unwrap();
        assert_abs_diff_eq!(plus.coords()[0], 1.25_f64.sqrt(), epsilon = 1e-8);
        assert_abs_diff_eq!(plus.coords()[1], 1.0, epsilon = 1e-9);
    }

    #[test]
    fn action_of_the_unit_trajectory_is_half() {
        // Kinetic energy is conserved and the potential vanishes, so the
        // action is E * h = 1 * 0.5.
        let sys = particle();
        let settings = SolverSettings::default();
        let start = unit_start();
        let q_half = particle_closed_flow(&start, 0.5).unwrap().q;
        let pair = ConfigPair::new(start.q.clone(), q_half, 0.5).unwrap();
        let action = exact_discrete_lagrangian(&sys, &pair, 100, &settings).unwrap();
        assert_abs_diff_eq!(action, 0.5, epsilon = 1e-9);
        // Odd interval counts round up to the next even one.
        let odd = exact_discrete_lagrangian(&sys, &pair, 99, &settings).unwrap();
        let even = exact_discrete_lagrangian(&sys, &pair, 100, &settings).unwrap();
        assert_abs_diff_eq!(odd, even, epsilon = 0.0);
    }

    #[test]
    fn simpson_rule_is_exact_on_cubics_and_fourth_order_on_sine() {
        let cubic: Vec<f64> = (0..=2).map(|j| (0.5 * j as f64).powi(3)).collect();
        assert_abs_diff_eq!(simpson(&cubic, 0.5), 0.25, epsilon = 1e-15);

        let sine_error = |n: usize| {
            let values: Vec<f64> = (0..=n).map(|j| (j as f64 / n as f64).sin()).collect();
            (simpson(&values, 1.0 / n as f64) - (1.0 - 1.0_f64.cos())).abs()
        };
        let ratio = sine_error(8) / sine_error(16);
        assert!(
            (12.0..20.0).contains(&ratio),
            "expected fourth-order decay, got ratio {ratio}"
        );
    }

    #[test]
    fn one_form_identity_holds_for_tangent_variations() {
        let sys = particle();
        let settings = SolverSettings::default();
        let start = unit_start();
        let q_half = particle_closed_flow(&start, 0.5).unwrap().q;
        let pair = ConfigPair::new(start.q.clone(), q_half.clone(), 0.5).unwrap();

        let zero = DVector::zeros(3);
        let check =
            exact_one_form_identity(&sys, &pair, &zero, &zero, &particle_mu_d, &settings).unwrap();
        assert_abs_diff_eq!(check.lhs, 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(check.rhs, 0.0, epsilon = 1e-10);

        // Sliding q1 along x stays on the constraint set when z follows with
        // the chart slope.
        let (y0, y1) = (start.q.coords()[1], q_half.coords()[1]);
        let slope = ((y1 * y1 + 1.0).sqrt() - (y0 * y0 + 1.0).sqrt())
            / (y1.asinh() - y0.asinh());
        let x1 = DVector::from_row_slice(&[1.0, 0.0, slope]);
        let check =
            exact_one_form_identity(&sys, &pair, &zero, &x1, &particle_mu_d, &settings).unwrap();
        assert!(check.gap() < 1e-4, "gap {}", check.gap());
        assert!(check.rhs.abs() > 0.5, "pairing should not be trivial");

        let off = DVector::from_row_slice(&[0.0, 0.0, 1.0]);
        assert!(matches!(
            exact_one_form_identity(&sys, &pair, &zero, &off, &particle_mu_d, &settings),
            Err(Error::InvalidTangent { .. })
        ));
    }
}
