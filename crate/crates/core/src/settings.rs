/// Tolerances, iteration caps, and discretization knobs shared by the
/// solvers. The defaults are sized for the worked systems in [`crate::systems`]
/// at step sizes up to 0.5.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    /// Absolute infinity-norm tolerance for the discrete-step Newton solve.
    pub newton_tol: f64,
    /// Iteration cap for the discrete-step Newton solve.
    pub newton_max_iters: usize,
    /// Forward-difference step scale for Newton Jacobians, scaled per
    /// component by 1 + |q_j|.
    pub newton_fd_step: f64,
    /// Infinity-norm endpoint tolerance for the shooting retraction.
    pub shooting_tol: f64,
    /// Iteration cap for the shooting retraction.
    pub shooting_max_iters: usize,
    /// Central-difference step scale for shooting Jacobians, scaled per
    /// component by 1 + |c_j|.
    pub shooting_fd_step: f64,
    /// Inner integration substeps per discrete step for the exponential map
    /// and the shooting residual.
    pub substeps: usize,
    /// Simpson intervals for action and one-form quadratures (odd requests
    /// are rounded up to even).
    pub quad_intervals: usize,
    /// Boundary perturbation used for variation fields and tangency checks.
    pub boundary_fd_step: f64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            newton_tol: 1e-12,
            newton_max_iters: 50,
            newton_fd_step: 1e-7,
            shooting_tol: 1e-9,
            shooting_max_iters: 50,
            shooting_fd_step: 1e-6,
            substeps: 200,
            quad_intervals: 100,
            boundary_fd_step: 1e-5,
        }
    }
}
