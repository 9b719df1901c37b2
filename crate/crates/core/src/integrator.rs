//! Discrete variational integrators with forces and constraints.
//!
//! A discretization bundles a discrete Lagrangian L_d(q0, q1), a pair of
//! discrete forces F_d^+(q0, q1) and F_d^-(q0, q1) (covectors at q1 and q0
//! respectively), a discrete constraint map omega(q0, q1) with k components,
//! and the frame of the admissible distribution. One step solves, for q_next,
//!
//! ```text
//! < D2 L_d(q_prev, q_cur) + D1 L_d(q_cur, q_next)
//!   + F_d^+(q_prev, q_cur) + F_d^-(q_cur, q_next), e_a(q_cur) > = 0
//! omega(q_cur, q_next) = 0
//! ```
//!
//! which is n - k frame projections plus k constraint rows, n equations in
//! the n unknowns of q_next. Setting the forces to zero recovers the
//! force-free constrained scheme, and an empty constraint with the identity
//! frame recovers the plain discrete Euler-Lagrange equations.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{
    ensure_finite_vec, inf_norm, ChartPoint, FrameMomentum, MatrixField, Momentum,
    NonholonomicSystem,
};
use crate::settings::SolverSettings;

/// Scalar function of a configuration pair.
pub type PairScalar = Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + Send + Sync>;
/// Vector- or covector-valued function of a configuration pair.
pub type PairVector =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;
/// Matrix-valued function of a configuration pair.
pub type PairMatrix =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;
/// Hamiltonian restricted to the admissible momenta: maps (q, frame momenta)
/// to a scalar.
pub type RestrictedHamiltonian =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<f64> + Send + Sync>;

/// Central-difference step scale for slot gradients of pair functions,
/// scaled per component by 1 + |q_j|.
const GRADIENT_FD_STEP: f64 = 1e-6;

/// Infinity-norm tolerance for a seed pair to count as satisfying the
/// discrete constraint.
pub const SEED_PAIR_TOL: f64 = 1e-9;

/// Which discrete Legendre transform of a pair to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LegendreSide {
    /// Covector at the first configuration of the pair.
    Minus,
    /// Covector at the second configuration of the pair.
    Plus,
}

/// Which slot of a pair function to differentiate.
#[derive(Clone, Copy)]
enum Slot {
    First,
    Second,
}

fn slot_gradient(
    f: &PairScalar,
    q0: &DVector<f64>,
    q1: &DVector<f64>,
    slot: Slot,
) -> Result<DVector<f64>> {
    let base = match slot {
        Slot::First => q0,
        Slot::Second => q1,
    };
    let mut grad = DVector::zeros(base.len());
    for j in 0..base.len() {
        let s = GRADIENT_FD_STEP * (1.0 + base[j].abs());
        let mut plus = base.clone();
        let mut minus = base.clone();
        plus[j] += s;
        minus[j] -= s;
        let (fp, fm) = match slot {
            Slot::First => (f(&plus, q1)?, f(&minus, q1)?),
            Slot::Second => (f(q0, &plus)?, f(q0, &minus)?),
        };
        grad[j] = (fp - fm) / (2.0 * s);
    }
    Ok(grad)
}

/// Discrete Lagrangian on configuration pairs, with optional analytic slot
/// derivatives. Omitted derivatives fall back to central differences.
#[derive(Clone)]
pub struct DiscreteLagrangian {
    value: PairScalar,
    d1: Option<PairVector>,
    d2: Option<PairVector>,
}

impl DiscreteLagrangian {
    pub fn new(value: PairScalar) -> Self {
        Self {
            value,
            d1: None,
            d2: None,
        }
    }

    pub fn with_gradients(mut self, d1: PairVector, d2: PairVector) -> Self {
        self.d1 = Some(d1);
        self.d2 = Some(d2);
        self
    }

    pub fn value(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<f64> {
        let v = (self.value)(q0, q1)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("discrete Lagrangian"));
        }
        Ok(v)
    }

    /// Derivative in the first slot, a covector at q0.
    pub fn d1(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.d1 {
            Some(d) => d(q0, q1),
            None => slot_gradient(&self.value, q0, q1, Slot::First),
        }
    }

    /// Derivative in the second slot, a covector at q1.
    pub fn d2(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.d2 {
            Some(d) => d(q0, q1),
            None => slot_gradient(&self.value, q0, q1, Slot::Second),
        }
    }
}

/// Discrete force pair: plus acts at the second configuration, minus at the
/// first.
#[derive(Clone)]
pub struct DiscreteForces {
    plus: PairVector,
    minus: PairVector,
}

impl DiscreteForces {
    pub fn new(plus: PairVector, minus: PairVector) -> Self {
        Self { plus, minus }
    }

    /// Identically zero forces in dimension n.
    pub fn zero(dimension: usize) -> Self {
        let z: PairVector = Arc::new(move |_, _| Ok(DVector::zeros(dimension)));
        Self {
            plus: z.clone(),
            minus: z,
        }
    }

    pub fn plus(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<DVector<f64>> {
        let f = (self.plus)(q0, q1)?;
        ensure_finite_vec(&f, "discrete force (plus)")?;
        Ok(f)
    }

    pub fn minus(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<DVector<f64>> {
        let f = (self.minus)(q0, q1)?;
        ensure_finite_vec(&f, "discrete force (minus)")?;
        Ok(f)
    }
}

/// Discrete constraint map omega(q0, q1) with `corank` components, plus an
/// optional analytic derivative in the second slot.
#[derive(Clone)]
pub struct DiscreteConstraint {
    omega: PairVector,
    d_omega_q1: Option<PairMatrix>,
    corank: usize,
}

impl DiscreteConstraint {
    pub fn new(corank: usize, omega: PairVector) -> Self {
        Self {
            omega,
            d_omega_q1: None,
            corank,
        }
    }

    /// No discrete constraint (corank zero); omega is the empty vector.
    pub fn empty() -> Self {
        Self {
            omega: Arc::new(|_, _| Ok(DVector::zeros(0))),
            d_omega_q1: None,
            corank: 0,
        }
    }

    pub fn with_jacobian(mut self, d_omega_q1: PairMatrix) -> Self {
        self.d_omega_q1 = Some(d_omega_q1);
        self
    }

    pub fn corank(&self) -> usize {
        self.corank
    }

    pub fn omega(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<DVector<f64>> {
        let w = (self.omega)(q0, q1)?;
        if w.len() != self.corank {
            return Err(Error::DimensionMismatch {
                what: "discrete constraint",
                expected: self.corank,
                got: w.len(),
            });
        }
        ensure_finite_vec(&w, "discrete constraint")?;
        Ok(w)
    }

    /// Derivative of omega in the second slot (k x n), analytic when
    /// supplied, otherwise central differences.
    pub fn d_omega_q1(&self, q0: &DVector<f64>, q1: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Some(d) = &self.d_omega_q1 {
            return d(q0, q1);
        }
        let mut jac = DMatrix::zeros(self.corank, q1.len());
        for j in 0..q1.len() {
            let s = GRADIENT_FD_STEP * (1.0 + q1[j].abs());
            let mut plus = q1.clone();
            let mut minus = q1.clone();
            plus[j] += s;
            minus[j] -= s;
            let col = (self.omega(q0, &plus)? - self.omega(q0, &minus)?) / (2.0 * s);
            jac.set_column(j, &col);
        }
        Ok(jac)
    }
}

/// One full discretization: discrete Lagrangian, discrete forces, discrete
/// constraint, and the frame the stationarity equations are projected onto.
#[derive(Clone)]
pub struct DiscretizationScheme {
    lagrangian: DiscreteLagrangian,
    forces: DiscreteForces,
    constraint: DiscreteConstraint,
    frame: MatrixField,
    dimension: usize,
}

impl DiscretizationScheme {
    pub fn new(
        lagrangian: DiscreteLagrangian,
        forces: DiscreteForces,
        constraint: DiscreteConstraint,
        frame: MatrixField,
        dimension: usize,
    ) -> Result<Self> {
        if constraint.corank() >= dimension && dimension > 0 && constraint.corank() > 0 {
            return Err(Error::InvalidConfig(
                "discrete constraint corank must be smaller than the dimension".into(),
            ));
        }
        if dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        Ok(Self {
            lagrangian,
            forces,
            constraint,
            frame,
            dimension,
        })
    }

    /// Plain discrete Euler-Lagrange configuration: no forces, no constraint,
    /// identity frame, with the midpoint discrete Lagrangian
    /// L_d(q0, q1) = step * L((q0 + q1) / 2, (q1 - q0) / step).
    pub fn unconstrained_midpoint(
        lagrangian: PairScalar,
        dimension: usize,
        step: f64,
    ) -> Result<Self> {
        let value: PairScalar = Arc::new(move |q0, q1| {
            let mid = (q0 + q1) * 0.5;
            let vel = (q1 - q0) / step;
            Ok(step * lagrangian(&mid, &vel)?)
        });
        let frame: MatrixField = Arc::new(move |q| Ok(DMatrix::identity(q.len(), q.len())));
        Self::new(
            DiscreteLagrangian::new(value),
            DiscreteForces::zero(dimension),
            DiscreteConstraint::empty(),
            frame,
            dimension,
        )
    }

    /// Same scheme with the forces replaced by zero.
    pub fn without_forces(&self) -> Self {
        Self {
            lagrangian: self.lagrangian.clone(),
            forces: DiscreteForces::zero(self.dimension),
            constraint: self.constraint.clone(),
            frame: self.frame.clone(),
            dimension: self.dimension,
        }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn corank(&self) -> usize {
        self.constraint.corank()
    }

    pub fn lagrangian(&self) -> &DiscreteLagrangian {
        &self.lagrangian
    }

    pub fn forces(&self) -> &DiscreteForces {
        &self.forces
    }

    pub fn constraint(&self) -> &DiscreteConstraint {
        &self.constraint
    }

    pub fn frame(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = (self.frame)(q)?;
        let cols = self.dimension - self.corank();
        if e.nrows() != self.dimension || e.ncols() != cols {
            return Err(Error::DimensionMismatch {
                what: "scheme frame",
                expected: self.dimension * cols,
                got: e.nrows() * e.ncols(),
            });
        }
        Ok(e)
    }

    fn check_len(&self, q: &DVector<f64>, what: &'static str) -> Result<()> {
        if q.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dimension,
                got: q.len(),
            });
        }
        Ok(())
    }
}

/// Trajectory of a discrete run: the seed pair followed by the solved
/// configurations, with per-step solver diagnostics.
#[derive(Debug, Clone)]
pub struct DiscreteTrajectory {
    /// Configurations q_0 .. q_{n_steps + 1}.
    pub points: Vec<ChartPoint>,
    /// Newton iterations spent on each solved step.
    pub newton_iterations: Vec<usize>,
    /// Final residual norm of each solved step.
    pub residual_norms: Vec<f64>,
}

/// Output of a single discrete step.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub q_next: ChartPoint,
    pub iterations: usize,
    pub residual: f64,
}

/// Stationarity-plus-constraint residual for a configuration triple. The
/// first n - k entries are the frame projections of the discrete momentum
/// balance at q_cur, the last k entries are omega(q_cur, q_next).
pub fn mla_residual(
    scheme: &DiscretizationScheme,
    q_prev: &DVector<f64>,
    q_cur: &DVector<f64>,
    q_next: &DVector<f64>,
) -> Result<DVector<f64>> {
    scheme.check_len(q_prev, "q_prev")?;
    scheme.check_len(q_cur, "q_cur")?;
    scheme.check_len(q_next, "q_next")?;
    let balance = scheme.lagrangian.d2(q_prev, q_cur)?
        + scheme.lagrangian.d1(q_cur, q_next)?
        + scheme.forces.plus(q_prev, q_cur)?
        + scheme.forces.minus(q_cur, q_next)?;
    let e = scheme.frame(q_cur)?;
    let projected = e.tr_mul(&balance);
    let omega = scheme.constraint.omega(q_cur, q_next)?;
    let n = scheme.dimension;
    let k = scheme.corank();
    let mut residual = DVector::zeros(n);
    residual.rows_mut(0, n - k).copy_from(&projected);
    if k > 0 {
        residual.rows_mut(n - k, k).copy_from(&omega);
    }
    Ok(residual)
}

fn residual_jacobian<F>(
    eval: &F,
    q_next: &DVector<f64>,
    base: &DVector<f64>,
    fd_step: f64,
) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    // Forward differences in q_next, refreshed at the current iterate.
    let n = q_next.len();
    let mut jac = DMatrix::zeros(n, n);
    for j in 0..n {
        let s = fd_step * (1.0 + q_next[j].abs());
        let mut shifted = q_next.clone();
        shifted[j] += s;
        let r = eval(&shifted)?;
        jac.set_column(j, &((r - base) / s));
    }
    Ok(jac)
}

/// Solves one discrete step for q_next by a damped Newton iteration, seeded
/// with the linear extrapolation 2 q_cur - q_prev. The reported residual is
/// row-equilibrated: stationarity rows are divided by their frame column's
/// norm (clamped below at one), so the convergence test stays meaningful
/// where the frame columns grow. The zero set is unchanged.
pub fn mla_step(
    scheme: &DiscretizationScheme,
    q_prev: &DVector<f64>,
    q_cur: &DVector<f64>,
    settings: &SolverSettings,
) -> Result<StepResult> {
    let frame = scheme.frame(q_cur)?;
    let n = scheme.dimension;
    let k = scheme.corank();
    let mut weights = DVector::from_element(n, 1.0);
    for i in 0..(n - k) {
        weights[i] = 1.0 / frame.column(i).norm().max(1.0);
    }
    let eval = |q_next: &DVector<f64>| -> Result<DVector<f64>> {
        Ok(mla_residual(scheme, q_prev, q_cur, q_next)?.component_mul(&weights))
    };
    let mut q = q_cur * 2.0 - q_prev;
    let mut residual = eval(&q)?;
    let mut norm = inf_norm(&residual);
    for iteration in 0..settings.newton_max_iters {
        if norm < settings.newton_tol {
            return Ok(StepResult {
                q_next: ChartPoint::new(q)?,
                iterations: iteration,
                residual: norm,
            });
        }
        let jac = residual_jacobian(&eval, &q, &residual, settings.newton_fd_step)?;
        let delta = jac
            .lu()
            .solve(&(-&residual))
            .ok_or(Error::SingularJacobian)?;
        // Full step first; halve only while the residual norm would grow.
        let mut scale = 1.0;
        let (mut cand, mut cand_res, mut cand_norm);
        loop {
            cand = &q + &delta * scale;
            cand_res = eval(&cand)?;
            cand_norm = inf_norm(&cand_res);
            if cand_norm <= norm || scale < 1.0 / 256.0 {
                break;
            }
            scale *= 0.5;
        }
        q = cand;
        residual = cand_res;
        norm = cand_norm;
        if !norm.is_finite() {
            return Err(Error::NewtonStalled {
                residual: norm,
                iterations: iteration + 1,
            });
        }
    }
    if norm < settings.newton_tol {
        return Ok(StepResult {
            q_next: ChartPoint::new(q)?,
            iterations: settings.newton_max_iters,
            residual: norm,
        });
    }
    Err(Error::NewtonStalled {
        residual: norm,
        iterations: settings.newton_max_iters,
    })
}

/// Runs the discrete scheme for `n_steps` new configurations from a seed
/// pair that must already satisfy the discrete constraint.
pub fn run(
    scheme: &DiscretizationScheme,
    q0: &ChartPoint,
    q1: &ChartPoint,
    n_steps: usize,
    settings: &SolverSettings,
) -> Result<DiscreteTrajectory> {
    scheme.check_len(q0.coords(), "q0")?;
    scheme.check_len(q1.coords(), "q1")?;
    let seed_residual = inf_norm(&scheme.constraint.omega(q0.coords(), q1.coords())?);
    if seed_residual > SEED_PAIR_TOL {
        return Err(Error::SeedPairOffConstraint {
            residual: seed_residual,
        });
    }
    let mut points = Vec::with_capacity(n_steps + 2);
    points.push(q0.clone());
    points.push(q1.clone());
    let mut newton_iterations = Vec::with_capacity(n_steps);
    let mut residual_norms = Vec::with_capacity(n_steps);
    for step in 0..n_steps {
        let prev = points[points.len() - 2].coords();
        let cur = points[points.len() - 1].coords();
        let result = mla_step(scheme, prev, cur, settings).map_err(|e| Error::StepFailed {
            step,
            source: Box::new(e),
        })?;
        points.push(result.q_next);
        newton_iterations.push(result.iterations);
        residual_norms.push(result.residual);
    }
    Ok(DiscreteTrajectory {
        points,
        newton_iterations,
        residual_norms,
    })
}

/// Forced discrete Legendre transform of a pair: the plus side is
/// D2 L_d + F_d^+ (a covector at q1), the minus side is -D1 L_d - F_d^-
/// (a covector at q0).
pub fn forced_discrete_legendre(
    scheme: &DiscretizationScheme,
    q0: &DVector<f64>,
    q1: &DVector<f64>,
    side: LegendreSide,
) -> Result<Momentum> {
    scheme.check_len(q0, "q0")?;
    scheme.check_len(q1, "q1")?;
    let p = match side {
        LegendreSide::Plus => scheme.lagrangian.d2(q0, q1)? + scheme.forces.plus(q0, q1)?,
        LegendreSide::Minus => -(scheme.lagrangian.d1(q0, q1)? + scheme.forces.minus(q0, q1)?),
    };
    Momentum::new(p)
}

/// Forced discrete Legendre transform projected onto the frame at the pair
/// endpoint the covector lives at. The pair must satisfy the discrete
/// constraint.
pub fn projected_discrete_legendre(
    scheme: &DiscretizationScheme,
    system: &NonholonomicSystem,
    q0: &DVector<f64>,
    q1: &DVector<f64>,
    side: LegendreSide,
) -> Result<FrameMomentum> {
    let omega = inf_norm(&scheme.constraint.omega(q0, q1)?);
    if omega > SEED_PAIR_TOL {
        return Err(Error::SeedPairOffConstraint { residual: omega });
    }
    let p = forced_discrete_legendre(scheme, q0, q1, side)?;
    let at = match side {
        LegendreSide::Minus => q0,
        LegendreSide::Plus => q1,
    };
    system.momentum_restrict(&ChartPoint::new(at.clone())?, &p)
}

/// Restricted Hamiltonian along a discrete trajectory, one value per
/// consecutive pair, evaluated at the minus-side projected Legendre
/// transform.
pub fn restricted_hamiltonian_series(
    scheme: &DiscretizationScheme,
    system: &NonholonomicSystem,
    hamiltonian: &RestrictedHamiltonian,
    trajectory: &DiscreteTrajectory,
) -> Result<Vec<f64>> {
    let mut series = Vec::with_capacity(trajectory.points.len().saturating_sub(1));
    for pair in trajectory.points.windows(2) {
        let q0 = pair[0].coords();
        let q1 = pair[1].coords();
        let p = projected_discrete_legendre(scheme, system, q0, q1, LegendreSide::Minus)?;
        let h = hamiltonian(q0, p.coords())?;
        if !h.is_finite() {
            return Err(Error::NonFinite("restricted Hamiltonian"));
        }
        series.push(h);
    }
    Ok(series)
}
