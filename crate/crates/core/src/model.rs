//! Core model types: chart coordinates, velocities, momenta, mechanical
//! Lagrangians, constraint distributions, and the assembled nonholonomic
//! system.
//!
//! Conventions used throughout the crate:
//!
//! - configurations live in a single chart, represented as column vectors of
//!   length `n`,
//! - the constraint distribution D is the kernel of a full-rank `k x n`
//!   matrix A(q), so admissible velocities satisfy A(q) v = 0,
//! - a frame for D is an `n x (n - k)` matrix E(q) whose columns span the
//!   admissible directions,
//! - momenta are covectors stored as column vectors; pairing is the plain
//!   dot product in chart coordinates.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Infinity-norm tolerance under which a velocity counts as satisfying the
/// constraints.
pub const CONSTRAINED_TOL: f64 = 1e-9;

/// Step scale for the central-difference fallback of the constraint-matrix
/// rate, scaled by 1 + |q|.
const RATE_FD_STEP: f64 = 1e-6;

/// Scalar field on configuration space.
pub type ScalarField = Arc<dyn Fn(&DVector<f64>) -> Result<f64> + Send + Sync>;
/// Vector- or covector-valued field on configuration space.
pub type VectorField = Arc<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;
/// Matrix-valued field on configuration space.
pub type MatrixField = Arc<dyn Fn(&DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;
/// Force field: maps (q, v) to a covector.
pub type ForceField =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;
/// Matrix-valued field of (q, v), used for the time rate of the constraint
/// matrix along a velocity.
pub type RateField =
    Arc<dyn Fn(&DVector<f64>, &DVector<f64>) -> Result<DMatrix<f64>> + Send + Sync>;

/// Infinity norm that tolerates empty vectors.
pub(crate) fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

pub(crate) fn ensure_finite_vec(v: &DVector<f64>, what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn ensure_finite_mat(m: &DMatrix<f64>, what: &'static str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

macro_rules! coordinate_newtype {
    ($(#[$doc:meta])* $name:ident) => {
        $(#[$doc])*
        #[derive(Debug, Clone, PartialEq)]
        pub struct $name(DVector<f64>);

        impl $name {
            /// Wraps raw coordinates, rejecting non-finite entries.
            pub fn new(coords: DVector<f64>) -> Result<Self> {
                ensure_finite_vec(&coords, stringify!($name))?;
                Ok(Self(coords))
            }

            /// Wraps a coordinate slice, rejecting non-finite entries.
            pub fn from_slice(coords: &[f64]) -> Result<Self> {
                Self::new(DVector::from_row_slice(coords))
            }

            /// Raw coordinate view.
            pub fn coords(&self) -> &DVector<f64> {
                &self.0
            }

            /// Number of coordinates.
            pub fn len(&self) -> usize {
                self.0.len()
            }

            /// True for a zero-length coordinate vector.
            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            /// Consumes the wrapper and returns the raw coordinates.
            pub fn into_inner(self) -> DVector<f64> {
                self.0
            }
        }
    };
}

coordinate_newtype!(
    /// Point of the configuration manifold in chart coordinates.
    ChartPoint
);
coordinate_newtype!(
    /// Tangent vector at a configuration.
    Velocity
);
coordinate_newtype!(
    /// Covector at a configuration (full momentum, one entry per coordinate).
    Momentum
);
coordinate_newtype!(
    /// Momentum paired against the distribution frame, one entry per frame
    /// field (length n - k).
    FrameMomentum
);

/// Configuration and velocity at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: ChartPoint,
    pub v: Velocity,
}

impl State {
    pub fn new(q: ChartPoint, v: Velocity) -> Result<Self> {
        if q.len() != v.len() {
            return Err(Error::DimensionMismatch {
                what: "State velocity",
                expected: q.len(),
                got: v.len(),
            });
        }
        Ok(Self { q, v })
    }

    pub fn from_slices(q: &[f64], v: &[f64]) -> Result<Self> {
        Self::new(ChartPoint::from_slice(q)?, Velocity::from_slice(v)?)
    }
}

/// Lagrangian of mechanical type: kinetic energy from a configuration
/// dependent mass matrix minus a potential, plus an optional applied force.
#[derive(Clone)]
pub struct MechanicalLagrangian {
    mass: MatrixField,
    potential: ScalarField,
    potential_gradient: VectorField,
    applied_force: Option<ForceField>,
}

impl MechanicalLagrangian {
    pub fn new(mass: MatrixField, potential: ScalarField, potential_gradient: VectorField) -> Self {
        Self {
            mass,
            potential,
            potential_gradient,
            applied_force: None,
        }
    }

    /// Adds a velocity-dependent applied force (a covector field of (q, v)).
    pub fn with_applied_force(mut self, force: ForceField) -> Self {
        self.applied_force = Some(force);
        self
    }

    /// Mass matrix at q. Must be symmetric positive definite wherever it is
    /// queried; squareness and finiteness are checked here, definiteness
    /// surfaces as a singular-mass error in the solves that need it.
    pub fn mass_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let m = (self.mass)(q)?;
        if m.nrows() != q.len() || m.ncols() != q.len() {
            return Err(Error::DimensionMismatch {
                what: "mass matrix",
                expected: q.len(),
                got: m.nrows().max(m.ncols()),
            });
        }
        ensure_finite_mat(&m, "mass matrix")?;
        Ok(m)
    }

    pub fn potential(&self, q: &DVector<f64>) -> Result<f64> {
        let v = (self.potential)(q)?;
        if !v.is_finite() {
            return Err(Error::NonFinite("potential"));
        }
        Ok(v)
    }

    pub fn potential_gradient(&self, q: &DVector<f64>) -> Result<DVector<f64>> {
        let g = (self.potential_gradient)(q)?;
        if g.len() != q.len() {
            return Err(Error::DimensionMismatch {
                what: "potential gradient",
                expected: q.len(),
                got: g.len(),
            });
        }
        ensure_finite_vec(&g, "potential gradient")?;
        Ok(g)
    }

    /// Applied force covector; zero when none was configured.
    pub fn applied_force(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        match &self.applied_force {
            Some(f) => {
                let out = f(q, v)?;
                if out.len() != q.len() {
                    return Err(Error::DimensionMismatch {
                        what: "applied force",
                        expected: q.len(),
                        got: out.len(),
                    });
                }
                ensure_finite_vec(&out, "applied force")?;
                Ok(out)
            }
            None => Ok(DVector::zeros(q.len())),
        }
    }

    /// Force before constraints: minus the potential gradient plus any
    /// applied force.
    pub fn free_force(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.applied_force(q, v)? - self.potential_gradient(q)?)
    }

    /// Lagrangian value L(q, v) = v^T M(q) v / 2 - V(q).
    pub fn value(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
        let m = self.mass_matrix(q)?;
        Ok(0.5 * (&m * v).dot(v) - self.potential(q)?)
    }
}

/// Constraint distribution: the kernel of A(q) together with a spanning
/// frame, and optionally the analytic time rate of A along a velocity.
#[derive(Clone)]
pub struct DistributionSpec {
    constraint_matrix: MatrixField,
    constraint_rate: Option<RateField>,
    frame: MatrixField,
}

impl DistributionSpec {
    pub fn new(constraint_matrix: MatrixField, frame: MatrixField) -> Self {
        Self {
            constraint_matrix,
            constraint_rate: None,
            frame,
        }
    }

    /// Supplies the analytic rate dA/dt along a velocity; without it the
    /// rate falls back to central differences.
    pub fn with_constraint_rate(mut self, rate: RateField) -> Self {
        self.constraint_rate = Some(rate);
        self
    }

    pub fn matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let a = (self.constraint_matrix)(q)?;
        ensure_finite_mat(&a, "constraint matrix")?;
        Ok(a)
    }

    pub fn frame(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = (self.frame)(q)?;
        ensure_finite_mat(&e, "frame")?;
        Ok(e)
    }

    /// Time rate of the constraint matrix along v, analytic when supplied
    /// and otherwise a central difference of A along the ray q + t v.
    pub fn rate(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
        if let Some(rate) = &self.constraint_rate {
            let r = rate(q, v)?;
            ensure_finite_mat(&r, "constraint rate")?;
            return Ok(r);
        }
        let s = RATE_FD_STEP * (1.0 + q.norm());
        let plus = self.matrix(&(q + v * s))?;
        let minus = self.matrix(&(q - v * s))?;
        Ok((plus - minus) / (2.0 * s))
    }
}

/// Mechanical Lagrangian plus a linear velocity constraint distribution on an
/// n-dimensional configuration space with k independent constraints.
#[derive(Clone)]
pub struct NonholonomicSystem {
    lagrangian: MechanicalLagrangian,
    distribution: DistributionSpec,
    dimension: usize,
    corank: usize,
}

impl NonholonomicSystem {
    pub fn new(
        lagrangian: MechanicalLagrangian,
        distribution: DistributionSpec,
        dimension: usize,
        corank: usize,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidConfig("dimension must be positive".into()));
        }
        if corank == 0 || corank >= dimension {
            return Err(Error::InvalidConfig(
                "constraint corank must lie strictly between 0 and the dimension".into(),
            ));
        }
        Ok(Self {
            lagrangian,
            distribution,
            dimension,
            corank,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// Number of independent velocity constraints (rows of A).
    pub fn corank(&self) -> usize {
        self.corank
    }

    pub fn lagrangian(&self) -> &MechanicalLagrangian {
        &self.lagrangian
    }

    pub fn distribution(&self) -> &DistributionSpec {
        &self.distribution
    }

    pub(crate) fn check_len(&self, v: &DVector<f64>, what: &'static str) -> Result<()> {
        if v.len() != self.dimension {
            return Err(Error::DimensionMismatch {
                what,
                expected: self.dimension,
                got: v.len(),
            });
        }
        Ok(())
    }

    /// Constraint matrix with shape validation (k x n).
    pub fn constraint_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let a = self.distribution.matrix(q)?;
        if a.nrows() != self.corank || a.ncols() != self.dimension {
            return Err(Error::DimensionMismatch {
                what: "constraint matrix",
                expected: self.corank * self.dimension,
                got: a.nrows() * a.ncols(),
            });
        }
        Ok(a)
    }

    /// Frame matrix with shape validation (n x (n - k)).
    pub fn frame_matrix(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let e = self.distribution.frame(q)?;
        if e.nrows() != self.dimension || e.ncols() != self.dimension - self.corank {
            return Err(Error::DimensionMismatch {
                what: "frame matrix",
                expected: self.dimension * (self.dimension - self.corank),
                got: e.nrows() * e.ncols(),
            });
        }
        Ok(e)
    }

    /// A(q) v, one entry per constraint; zero exactly on admissible
    /// velocities.
    pub fn constraint_residual(&self, q: &ChartPoint, v: &Velocity) -> Result<DVector<f64>> {
        self.check_len(q.coords(), "configuration")?;
        self.check_len(v.coords(), "velocity")?;
        Ok(self.constraint_matrix(q.coords())? * v.coords())
    }

    /// Errors unless |A(q) v|_inf stays below [`CONSTRAINED_TOL`]; returns the
    /// residual norm on success.
    pub fn assert_constrained(&self, state: &State) -> Result<f64> {
        let residual = inf_norm(&self.constraint_residual(&state.q, &state.v)?);
        if residual > CONSTRAINED_TOL {
            return Err(Error::ConstraintViolated { residual });
        }
        Ok(residual)
    }

    /// Legendre transform p = M(q) v.
    pub fn legendre(&self, q: &ChartPoint, v: &Velocity) -> Result<Momentum> {
        self.check_len(q.coords(), "configuration")?;
        self.check_len(v.coords(), "velocity")?;
        let m = self.lagrangian.mass_matrix(q.coords())?;
        Momentum::new(&m * v.coords())
    }

    /// Total energy v^T M v / 2 + V(q).
    pub fn energy(&self, q: &ChartPoint, v: &Velocity) -> Result<f64> {
        self.check_len(q.coords(), "configuration")?;
        self.check_len(v.coords(), "velocity")?;
        let m = self.lagrangian.mass_matrix(q.coords())?;
        Ok(0.5 * (&m * v.coords()).dot(v.coords()) + self.lagrangian.potential(q.coords())?)
    }

    /// Pairs a full momentum against the frame fields: p_a = <p, e_a(q)>.
    pub fn momentum_restrict(&self, q: &ChartPoint, p: &Momentum) -> Result<FrameMomentum> {
        self.check_len(q.coords(), "configuration")?;
        self.check_len(p.coords(), "momentum")?;
        let e = self.frame_matrix(q.coords())?;
        FrameMomentum::new(e.tr_mul(p.coords()))
    }

    /// Compatibility matrix C(q) = A M^-1 A^T (k x k, symmetric positive
    /// definite wherever A has full rank).
    pub fn compatibility(&self, q: &DVector<f64>) -> Result<DMatrix<f64>> {
        let a = self.constraint_matrix(q)?;
        let m = self.lagrangian.mass_matrix(q)?;
        let lu = m.lu();
        let minv_at = lu.solve(&a.transpose()).ok_or(Error::SingularMass)?;
        Ok(&a * minv_at)
    }

    /// Metric-orthogonal projection of v onto the admissible directions:
    /// v - M^-1 A^T (A M^-1 A^T)^-1 A v.
    pub fn project_velocity(&self, q: &ChartPoint, v: &Velocity) -> Result<Velocity> {
        self.check_len(q.coords(), "configuration")?;
        self.check_len(v.coords(), "velocity")?;
        let a = self.constraint_matrix(q.coords())?;
        let m = self.lagrangian.mass_matrix(q.coords())?;
        let lu = m.lu();
        let minv_at = lu.solve(&a.transpose()).ok_or(Error::SingularMass)?;
        let c = &a * &minv_at;
        let av = &a * v.coords();
        let y = c.lu().solve(&av).ok_or(Error::SingularCompatibility)?;
        Velocity::new(v.coords() - minv_at * y)
    }

    /// Least-squares coefficients of v in the frame columns at q.
    pub fn frame_coordinates(&self, q: &DVector<f64>, v: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(q, "configuration")?;
        self.check_len(v, "velocity")?;
        let e = self.frame_matrix(q)?;
        let gram = e.tr_mul(&e);
        let rhs = e.tr_mul(v);
        gram.lu().solve(&rhs).ok_or(Error::SingularCompatibility)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Free particle in R^3 with the constraint q3' = q2 q1'.
    fn test_particle() -> NonholonomicSystem {
        let mass: MatrixField = Arc::new(|q| Ok(DMatrix::identity(q.len(), q.len())));
        let potential: ScalarField = Arc::new(|_| Ok(0.0));
        let gradient: VectorField = Arc::new(|q| Ok(DVector::zeros(q.len())));
        let constraint: MatrixField =
            Arc::new(|q| Ok(DMatrix::from_row_slice(1, 3, &[-q[1], 0.0, 1.0])));
        let frame: MatrixField = Arc::new(|q| {
            Ok(DMatrix::from_column_slice(
                3,
                2,
                &[1.0, 0.0, q[1], 0.0, 1.0, 0.0],
            ))
        });
        NonholonomicSystem::new(
            MechanicalLagrangian::new(mass, potential, gradient),
            DistributionSpec::new(constraint, frame),
            3,
            1,
        )
        .unwrap()
    }

    fn kkt_projection(system: &NonholonomicSystem, q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
        // Independent oracle: solve the saddle system
        //   [M A^T] [w ]   [M v]
        //   [A 0  ] [mu] = [ 0 ]
        let n = system.dimension();
        let k = system.corank();
        let m = system.lagrangian().mass_matrix(q).unwrap();
        let a = system.constraint_matrix(q).unwrap();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&m);
        kkt.view_mut((0, n), (n, k)).copy_from(&a.transpose());
        kkt.view_mut((n, 0), (k, n)).copy_from(&a);
        let mut rhs = DVector::zeros(n + k);
        rhs.rows_mut(0, n).copy_from(&(&m * v));
        let sol = kkt.lu().solve(&rhs).unwrap();
        sol.rows(0, n).into_owned()
    }

    #[test]
    fn newtypes_reject_non_finite_entries() {
        assert!(ChartPoint::from_slice(&[0.0, f64::NAN, 1.0]).is_err());
        assert!(Velocity::from_slice(&[f64::INFINITY]).is_err());
        assert!(Momentum::from_slice(&[1.0, 2.0]).is_ok());
    }

    #[test]
    fn state_requires_matching_lengths() {
        let q = ChartPoint::from_slice(&[0.0, 0.0, 0.0]).unwrap();
        let v = Velocity::from_slice(&[1.0, 2.0]).unwrap();
        assert!(matches!(
            State::new(q, v),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn constraint_residual_measures_violation() {
        let system = test_particle();
        let q = ChartPoint::from_slice(&[0.0, 1.0, 0.0]).unwrap();
        let ok = Velocity::from_slice(&[1.0, 0.0, 1.0]).unwrap();
        let bad = Velocity::from_slice(&[1.0, 0.0, 0.0]).unwrap();
        let r_ok = system.constraint_residual(&q, &ok).unwrap();
        let r_bad = system.constraint_residual(&q, &bad).unwrap();
        assert_abs_diff_eq!(r_ok[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(r_bad[0], -1.0, epsilon = 1e-15);
    }

    #[test]
    fn legendre_with_identity_mass_copies_the_velocity() {
        let system = test_particle();
        let q = ChartPoint::from_slice(&[0.3, -0.2, 0.9]).unwrap();
        let v = Velocity::from_slice(&[1.0, 2.0, 3.0]).unwrap();
        let p = system.legendre(&q, &v).unwrap();
        assert_eq!(p.coords(), v.coords());
    }

    #[test]
    fn energy_is_kinetic_plus_potential() {
        let system = test_particle();
        let q = ChartPoint::from_slice(&[0.0, 1.0, 0.0]).unwrap();
        let v = Velocity::from_slice(&[2.0, 3.0, 2.0]).unwrap();
        assert_abs_diff_eq!(system.energy(&q, &v).unwrap(), 8.5, epsilon = 1e-15);
    }

    #[test]
    fn momentum_restrict_pairs_against_the_frame() {
        let system = test_particle();
        let q = ChartPoint::from_slice(&[0.0, 3.0, 0.0]).unwrap();
        let p = Momentum::from_slice(&[1.0, 0.0, 2.0]).unwrap();
        let fp = system.momentum_restrict(&q, &p).unwrap();
        assert_abs_diff_eq!(fp.coords()[0], 7.0, epsilon = 1e-15);
        assert_abs_diff_eq!(fp.coords()[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn project_velocity_matches_the_saddle_point_solve() {
        let system = test_particle();

        // Pinned cases. At q2 = 0 the constraint plane is q3' = 0, so a pure
        // q3 velocity projects to zero; at q2 = 1 the same velocity splits.
        let q = ChartPoint::from_slice(&[0.0, 0.0, 0.0]).unwrap();
        let v = Velocity::from_slice(&[0.0, 0.0, 1.0]).unwrap();
        let w = system.project_velocity(&q, &v).unwrap();
        assert_abs_diff_eq!(inf_norm(w.coords()), 0.0, epsilon = 1e-15);

        let q = ChartPoint::from_slice(&[0.0, 1.0, 0.0]).unwrap();
        let w = system.project_velocity(&q, &v).unwrap();
        assert_abs_diff_eq!(w.coords()[0], 0.5, epsilon = 1e-14);
        assert_abs_diff_eq!(w.coords()[1], 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(w.coords()[2], 0.5, epsilon = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(61);
        for _ in 0..50 {
            let q = ChartPoint::from_slice(&[
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            ])
            .unwrap();
            let v = Velocity::from_slice(&[
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            ])
            .unwrap();
            let w = system.project_velocity(&q, &v).unwrap();
            let oracle = kkt_projection(&system, q.coords(), v.coords());
            assert_abs_diff_eq!(inf_norm(&(w.coords() - oracle)), 0.0, epsilon = 1e-12);

            // Projection output is admissible and projecting twice changes
            // nothing.
            let residual = system.constraint_residual(&q, &w).unwrap();
            assert_abs_diff_eq!(inf_norm(&residual), 0.0, epsilon = 1e-12);
            let w2 = system.project_velocity(&q, &w).unwrap();
            assert_abs_diff_eq!(inf_norm(&(w2.coords() - w.coords())), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn compatibility_matrix_is_positive_for_the_particle() {
        let system = test_particle();
        let q = DVector::from_row_slice(&[0.0, 2.0, 0.0]);
        let c = system.compatibility(&q).unwrap();
        assert_eq!(c.shape(), (1, 1));
        assert_abs_diff_eq!(c[(0, 0)], 5.0, epsilon = 1e-14);
    }

    #[test]
    fn frame_coordinates_invert_the_frame_combination() {
        let system = test_particle();
        let q = DVector::from_row_slice(&[0.2, -0.7, 0.4]);
        let e = system.frame_matrix(&q).unwrap();
        let c = DVector::from_row_slice(&[0.8, -1.3]);
        let v = &e * &c;
        let back = system.frame_coordinates(&q, &v).unwrap();
        assert_abs_diff_eq!(inf_norm(&(back - c)), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn constraint_rate_fallback_matches_analytic_for_the_particle() {
        let analytic: RateField =
            Arc::new(|_q, v| Ok(DMatrix::from_row_slice(1, 3, &[-v[1], 0.0, 0.0])));
        let constraint: MatrixField =
            Arc::new(|q| Ok(DMatrix::from_row_slice(1, 3, &[-q[1], 0.0, 1.0])));
        let frame: MatrixField = Arc::new(|q| {
            Ok(DMatrix::from_column_slice(
                3,
                2,
                &[1.0, 0.0, q[1], 0.0, 1.0, 0.0],
            ))
        });
        let spec = DistributionSpec::new(constraint, frame);
        let q = DVector::from_row_slice(&[0.4, 1.2, -0.3]);
        let v = DVector::from_row_slice(&[0.7, -0.5, 0.2]);
        let fd = spec.rate(&q, &v).unwrap();
        let exact = analytic(&q, &v).unwrap();
        assert_abs_diff_eq!((fd - exact).norm(), 0.0, epsilon = 1e-8);
    }

    #[test]
    fn dimension_mismatches_are_rejected() {
        let system = test_particle();
        let q = ChartPoint::from_slice(&[0.0, 0.0]).unwrap();
        let v = Velocity::from_slice(&[0.0, 0.0]).unwrap();
        assert!(matches!(
            system.constraint_residual(&q, &v),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
