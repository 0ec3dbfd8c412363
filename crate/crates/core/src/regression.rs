//! Simultaneous derivative/coefficient recovery through an iteratively
//! reweighted second-order cone program, plus the sparse-regression
//! baselines (Tikhonov differentiation, reweighted Lasso, thresholded
//! least squares).

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::operators::{
    pseudoinverse, pseudoinverse_apply, DifferenceStack, Projector, TrapezoidMatrix,
    DEFAULT_RANK_TOL,
};

/// Default feasibility / relative-gap tolerance handed to the cone solver.
pub const DEFAULT_SOLVER_TOL: f64 = 1e-8;

/// Reweighting floor: eps in W_jj = 1 / (|c_j| + eps * max|c|).
pub const DEFAULT_EPS_WEIGHT: f64 = 1e-4;

/// Outcome classification of a single cone-program solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Optimal,
    AlmostOptimal,
    Infeasible,
    MaxIterations,
    NumericalTrouble,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::AlmostOptimal)
    }
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::AlmostOptimal => "almost-optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::MaxIterations => "max-iterations",
            SolveStatus::NumericalTrouble => "numerical-trouble",
        };
        f.write_str(s)
    }
}

/// Shared per-problem state for the cone-program recovery: the smoothed
/// library, its integrated form, the Gramian estimate and its inverse
/// action, and the discrete operators.
#[derive(Debug, Clone)]
pub struct RegressionContext {
    pub theta_tilde: DMatrix<f64>,
    pub phi_tilde: DMatrix<f64>,
    pub gram: DMatrix<f64>,
    /// G^-1 Theta^T, the linear map from derivatives to coefficients.
    pub coefficient_map: DMatrix<f64>,
    pub trapezoid: TrapezoidMatrix,
    pub difference: DifferenceStack,
    projector: Projector,
}

impl RegressionContext {
    /// Builds the context from a smoothed library over a uniform grid.
    /// `gram` defaults to Theta^T Theta when not supplied.
    pub fn new(theta_tilde: DMatrix<f64>, t_end: f64, gram: Option<DMatrix<f64>>) -> Result<Self> {
        let n = theta_tilde.nrows();
        let trapezoid = TrapezoidMatrix::new(n, t_end)?;
        let difference = DifferenceStack::new(n, t_end)?;
        let phi_tilde = crate::basis::build_phi(&theta_tilde, &trapezoid)?;
        let gram = gram.unwrap_or_else(|| theta_tilde.transpose() * &theta_tilde);
        if gram.nrows() != theta_tilde.ncols() || gram.ncols() != theta_tilde.ncols() {
            return Err(Error::DimensionMismatch {
                what: "Gramian",
                left: gram.nrows(),
                right: theta_tilde.ncols(),
            });
        }
        let coefficient_map = pseudoinverse(&gram, DEFAULT_RANK_TOL) * theta_tilde.transpose();
        let projector = Projector::from_matrix(&phi_tilde, DEFAULT_RANK_TOL);
        Ok(Self {
            theta_tilde,
            phi_tilde,
            gram,
            coefficient_map,
            trapezoid,
            difference,
            projector,
        })
    }

    /// c = G^-1 Theta^T udot.
    pub fn coefficients_for(&self, u_dot: &DVector<f64>) -> DVector<f64> {
        &self.coefficient_map * u_dot
    }

    /// Projection of a state vector onto the column space of Phi.
    pub fn project_data(&self, u: &DVector<f64>) -> DVector<f64> {
        self.projector.apply(u)
    }
}

/// Assembled instance of the derivative-recovery cone program
///
/// minimize    || M udot ||_1
/// subject to  || D udot ||                        <= smooth_radius
///             || u0 * 1 + T udot - data_target || <= data_radius
///
/// over (u0, udot). `M` is the weighted coefficient map W G^-1 Theta^T.
#[derive(Debug, Clone)]
pub struct ConeProgram {
    pub objective_map: DMatrix<f64>,
    pub difference: DifferenceStack,
    pub smooth_radius: f64,
    pub trapezoid: TrapezoidMatrix,
    pub data_target: DVector<f64>,
    pub data_radius: f64,
    pub solver_tol: f64,
    /// Optional quadratic roughness term epsilon * (||D udot|| / C)^2 added
    /// to the objective. The plain l1 objective profits from high-frequency
    /// dither in `udot` (integration hides it from the data cone while it
    /// cancels coefficients), so the raw optimizer runs its roughness up to
    /// the smoothing ceiling; a positive epsilon damps that if the raw point
    /// itself is wanted. Zero by default: the recovery consumes the
    /// coefficients, not the raw point.
    pub roughness_tie_break: f64,
}

/// Roughness damping is off by default.
pub const DEFAULT_TIE_BREAK: f64 = 0.0;

/// Solution point of one cone-program solve.
#[derive(Debug, Clone)]
pub struct SocpSolution {
    pub u0: f64,
    pub u_dot: DVector<f64>,
    pub status: SolveStatus,
    pub objective: f64,
}

impl ConeProgram {
    /// Number of decision variables in the mathematical program (u0, udot).
    pub fn n_vars(&self) -> usize {
        self.trapezoid.len() + 1
    }

    fn validate(&self) -> Result<()> {
        let n = self.trapezoid.len();
        if self.objective_map.ncols() != n
            || self.difference.input_len() != n
            || self.data_target.len() != n
        {
            return Err(Error::DimensionMismatch {
                what: "cone program assembly",
                left: n,
                right: self.objective_map.ncols(),
            });
        }
        if self.smooth_radius < 0.0 || self.data_radius < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "cone radii must be nonnegative (C = {}, gamma = {})",
                self.smooth_radius, self.data_radius
            )));
        }
        Ok(())
    }

    /// Constraint slacks (C - ||D udot||, gamma - ||u0 + T udot - target||)
    /// at a candidate point; nonnegative means feasible.
    pub fn constraint_slacks(&self, u0: f64, u_dot: &DVector<f64>) -> Result<(f64, f64)> {
        let smooth = self.smooth_radius - self.difference.apply(u_dot)?.norm();
        let fit = self.trapezoid.apply(u_dot)?.add_scalar(u0) - &self.data_target;
        let data = self.data_radius - fit.norm();
        Ok((smooth, data))
    }
}

fn map_status(status: &SolverStatus) -> SolveStatus {
    match status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
        SolverStatus::PrimalInfeasible
        | SolverStatus::DualInfeasible
        | SolverStatus::AlmostPrimalInfeasible
        | SolverStatus::AlmostDualInfeasible => SolveStatus::Infeasible,
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::MaxIterations,
        _ => SolveStatus::NumericalTrouble,
    }
}

/// Sorted-triplet CSC builder.
struct TripletMatrix {
    nrows: usize,
    ncols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletMatrix {
    fn new(nrows: usize, ncols: usize) -> Self {
        Self {
            nrows,
            ncols,
            entries: Vec::new(),
        }
    }

    fn push(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    fn build(mut self) -> CscMatrix<f64> {
        self.entries
            .sort_unstable_by(|a, b| (a.1, a.0).cmp(&(b.1, b.0)));
        let mut colptr = vec![0usize; self.ncols + 1];
        let mut rowval = Vec::with_capacity(self.entries.len());
        let mut nzval = Vec::with_capacity(self.entries.len());
        for &(r, c, v) in &self.entries {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
        }
        for c in 0..self.ncols {
            colptr[c + 1] += colptr[c];
        }
        CscMatrix::new(self.nrows, self.ncols, colptr, rowval, nzval)
    }
}

/// Solves the cone program.
///
/// The l1 objective is lifted with epigraph variables w_j >= |(M udot)_j|
/// and the dense cumulative-integration block is decoupled through an
/// auxiliary vector v = T udot expressed by its sparse two-term recurrence,
/// so the interior-point solver only factors sparse blocks.
pub fn solve_socp(prog: &ConeProgram) -> Result<SocpSolution> {
    prog.validate()?;
    let n = prog.trapezoid.len();
    let p = prog.objective_map.nrows();
    let dt = prog.trapezoid.dt();

    // variable layout: [u0 | udot (n) | v (n) | w (p)]
    let iu0 = 0usize;
    let iu = |i: usize| 1 + i;
    let iv = |i: usize| 1 + n + i;
    let iw = |j: usize| 1 + 2 * n + j;
    let n_vars = 1 + 2 * n + p;

    let d_rows = prog.difference.output_len();
    let n_rows = n + 2 * p + (1 + d_rows) + (1 + n);
    let mut a = TripletMatrix::new(n_rows, n_vars);
    let mut b = vec![0.0; n_rows];

    // zero cone: v_0 = 0 and v_i - v_{i-1} - dt/2 (udot_{i-1} + udot_i) = 0
    a.push(0, iv(0), 1.0);
    for i in 1..n {
        a.push(i, iv(i), 1.0);
        a.push(i, iv(i - 1), -1.0);
        a.push(i, iu(i - 1), -0.5 * dt);
        a.push(i, iu(i), -0.5 * dt);
    }
    let mut row = n;

    // nonnegative cone: w_j -/+ (M udot)_j >= 0
    for j in 0..p {
        for i in 0..n {
            a.push(row, iu(i), prog.objective_map[(j, i)]);
        }
        a.push(row, iw(j), -1.0);
        row += 1;
    }
    for j in 0..p {
        for i in 0..n {
            a.push(row, iu(i), -prog.objective_map[(j, i)]);
        }
        a.push(row, iw(j), -1.0);
        row += 1;
    }

    // second-order cone: (C, D udot)
    b[row] = prog.smooth_radius;
    row += 1;
    for r in 0..d_rows {
        for (c, v) in prog.difference.row_entries(r) {
            a.push(row, iu(c), -v);
        }
        row += 1;
    }

    // second-order cone: (gamma, u0 + v - target)
    b[row] = prog.data_radius;
    row += 1;
    for i in 0..n {
        a.push(row, iu0, -1.0);
        a.push(row, iv(i), -1.0);
        b[row] = -prog.data_target[i];
        row += 1;
    }
    debug_assert_eq!(row, n_rows);

    let mut q = vec![0.0; n_vars];
    for j in 0..p {
        q[iw(j)] = 1.0;
    }
    // quadratic tie-break on the udot block: eps * (||D udot|| / C)^2
    let mut p_triplets = TripletMatrix::new(n_vars, n_vars);
    if prog.roughness_tie_break > 0.0 && prog.smooth_radius > 0.0 {
        let scale = 2.0 * prog.roughness_tie_break / (prog.smooth_radius * prog.smooth_radius);
        let mut gram = vec![std::collections::BTreeMap::<usize, f64>::new(); n];
        for r in 0..d_rows {
            let entries = prog.difference.row_entries(r);
            for &(ci, vi) in &entries {
                for &(cj, vj) in &entries {
                    if cj >= ci {
                        *gram[ci].entry(cj).or_insert(0.0) += vi * vj;
                    }
                }
            }
        }
        // Clarabel expects the upper triangle of P
        for (ci, row_entries) in gram.iter().enumerate() {
            for (&cj, &v) in row_entries {
                p_triplets.push(iu(ci), iu(cj), scale * v);
            }
        }
    }
    let p_quad = p_triplets.build();
    let a_csc = a.build();
    let cones = [
        SupportedConeT::ZeroConeT(n),
        SupportedConeT::NonnegativeConeT(2 * p),
        SupportedConeT::SecondOrderConeT(1 + d_rows),
        SupportedConeT::SecondOrderConeT(1 + n),
    ];
    let settings = DefaultSettingsBuilder::default()
        .verbose(false)
        .tol_feas(prog.solver_tol)
        .tol_gap_abs(prog.solver_tol)
        .tol_gap_rel(prog.solver_tol)
        .max_iter(200)
        .build()
        .map_err(|e| Error::InvalidConfig(format!("solver settings: {e}")))?;

    let mut solver =
        DefaultSolver::new(&p_quad, &q, &a_csc, &b, &cones, settings).map_err(|e| {
            Error::Solver {
                status: format!("{e:?}"),
                context: "assembling the cone program",
            }
        })?;
    solver.solve();

    let status = map_status(&solver.solution.status);
    let x = &solver.solution.x;
    Ok(SocpSolution {
        u0: x[iu0],
        u_dot: DVector::from_iterator(n, (0..n).map(|i| x[iu(i)])),
        status,
        objective: solver.solution.obj_val,
    })
}

/// Initial derivative estimate and matching intercept from the smoothed
/// data: least squares through the integrated library, re-expanded
/// through Theta.
#[derive(Debug, Clone)]
pub struct InitialDerivative {
    pub u0: f64,
    pub derivative: DVector<f64>,
}

pub fn initial_derivative(
    theta_tilde: &DMatrix<f64>,
    phi_tilde: &DMatrix<f64>,
    u_tilde: &DVector<f64>,
) -> Result<InitialDerivative> {
    if phi_tilde.nrows() != u_tilde.len() || phi_tilde.ncols() != theta_tilde.ncols() + 1 {
        return Err(Error::DimensionMismatch {
            what: "initial derivative",
            left: phi_tilde.nrows(),
            right: u_tilde.len(),
        });
    }
    let sigma = phi_tilde.clone().svd(false, false).singular_values;
    let smax = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let rank = sigma
        .iter()
        .filter(|&&s| s > DEFAULT_RANK_TOL * smax && s > 0.0)
        .count();
    if rank < phi_tilde.ncols() {
        return Err(Error::RankDeficient {
            what: "integrated library",
        });
    }
    let b_full = pseudoinverse_apply(phi_tilde, u_tilde, DEFAULT_RANK_TOL)?;
    let coeffs = b_full.rows(1, theta_tilde.ncols()).clone_owned();
    Ok(InitialDerivative {
        u0: b_full[0],
        derivative: theta_tilde * coeffs,
    })
}

/// Smoothing radius C = ||D udot_init||, which makes the cone program
/// feasible for every nonnegative data radius.
pub fn smoothing_radius(difference: &DifferenceStack, u_dot_init: &DVector<f64>) -> Result<f64> {
    Ok(difference.apply(u_dot_init)?.norm())
}

/// Theory value of the data-matching radius: sigma * sqrt(p + 1).
pub fn gamma_theory(sigma: f64, p: usize) -> f64 {
    sigma * ((p + 1) as f64).sqrt()
}

/// Reweighting diagonal from the previous coefficient iterate. Falls back
/// to uniform weights when the iterate is identically zero.
pub fn irw_weights(coeffs: &DVector<f64>, eps_weight: f64) -> (DVector<f64>, bool) {
    let max = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    if max == 0.0 {
        return (DVector::from_element(coeffs.len(), 1.0), true);
    }
    (
        DVector::from_iterator(
            coeffs.len(),
            coeffs.iter().map(|c| 1.0 / (c.abs() + eps_weight * max)),
        ),
        false,
    )
}

/// Per-state result of the reweighted cone-program recovery.
#[derive(Debug, Clone)]
pub struct StateDiscovery {
    pub coefficients: DVector<f64>,
    /// Derivative of the recovered model, Theta c.
    pub derivative: DVector<f64>,
    pub u0: f64,
    pub gamma_used: Vec<f64>,
    pub irw_iterations: usize,
    pub solver_statuses: Vec<SolveStatus>,
    pub weight_fallbacks: usize,
}

/// Combined multi-state recovery output.
#[derive(Debug, Clone)]
pub struct DiscoveryResult {
    pub coefficients: DMatrix<f64>,
    pub derivatives: DMatrix<f64>,
    pub u0: Vec<f64>,
    pub gamma_used: Vec<Vec<f64>>,
    pub irw_iterations: usize,
    pub solver_statuses: Vec<Vec<SolveStatus>>,
    pub weight_fallbacks: usize,
}

/// Options for [`irw_socp`].
#[derive(Debug, Clone)]
pub struct IrwOptions {
    pub irw_iters: usize,
    pub eps_weight: f64,
    pub solver_tol: f64,
}

impl Default for IrwOptions {
    fn default() -> Self {
        Self {
            irw_iters: 2,
            eps_weight: DEFAULT_EPS_WEIGHT,
            solver_tol: DEFAULT_SOLVER_TOL,
        }
    }
}

/// Iteratively reweighted cone-program recovery for one state.
///
/// Starts from uniform weights, solves the program, maps the derivative to
/// coefficients through c = G^-1 Theta^T udot, reweights, and repeats.
/// `gamma_schedule` supplies the data radius per pass (last entry repeats).
pub fn irw_socp(
    ctx: &RegressionContext,
    u_tilde: &DVector<f64>,
    gamma_schedule: &[f64],
    smooth_radius: f64,
    opts: &IrwOptions,
) -> Result<StateDiscovery> {
    if opts.irw_iters == 0 {
        return Err(Error::InvalidConfig("irw_iters must be >= 1".into()));
    }
    if gamma_schedule.is_empty() {
        return Err(Error::InvalidConfig(
            "gamma schedule must be nonempty".into(),
        ));
    }
    let p = ctx.theta_tilde.ncols();
    let data_target = ctx.project_data(u_tilde);

    let mut weights = DVector::from_element(p, 1.0);
    let mut weight_fallbacks = 0;
    let mut statuses = Vec::new();
    let mut gamma_used = Vec::new();
    let mut best: Option<SocpSolution> = None;

    for iter in 0..opts.irw_iters {
        let gamma = *gamma_schedule
            .get(iter)
            .unwrap_or_else(|| gamma_schedule.last().unwrap());
        let mut objective_map = ctx.coefficient_map.clone();
        for j in 0..p {
            objective_map.row_mut(j).scale_mut(weights[j]);
        }
        let prog = ConeProgram {
            objective_map,
            difference: ctx.difference.clone(),
            smooth_radius,
            trapezoid: ctx.trapezoid.clone(),
            data_target: data_target.clone(),
            data_radius: gamma,
            solver_tol: opts.solver_tol,
            roughness_tie_break: DEFAULT_TIE_BREAK,
        };
        let sol = solve_socp(&prog)?;
        statuses.push(sol.status);
        gamma_used.push(gamma);
        if !sol.status.is_usable() {
            return Err(Error::Solver {
                status: sol.status.to_string(),
                context: "reweighted cone-program pass",
            });
        }
        let coeffs = ctx.coefficients_for(&sol.u_dot);
        let (w, fell_back) = irw_weights(&coeffs, opts.eps_weight);
        weights = w;
        weight_fallbacks += usize::from(fell_back);
        best = Some(sol);
    }

    let sol = best.expect("at least one pass ran");
    let coefficients = ctx.coefficients_for(&sol.u_dot);
    // the derivative of the recovered model: the raw optimizer point carries
    // objective-neutral high-frequency dither (see ConeProgram docs), while
    // Theta c is what the identified dynamics predict
    let derivative = &ctx.theta_tilde * &coefficients;
    Ok(StateDiscovery {
        coefficients,
        derivative,
        u0: sol.u0,
        gamma_used,
        irw_iterations: opts.irw_iters,
        solver_statuses: statuses,
        weight_fallbacks,
    })
}

/// Tikhonov-regularized derivative: minimizer of
/// ||T udot - u||^2 + lambda ||D udot||^2 through the normal equations.
/// At lambda = 0 the minimum-norm least-squares solution is returned.
pub fn tikhonov_derivative(
    u: &DVector<f64>,
    trapezoid: &TrapezoidMatrix,
    difference: &DifferenceStack,
    lambda: f64,
) -> Result<DVector<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "ridge weight must be nonnegative, got {lambda}"
        )));
    }
    let n = trapezoid.len();
    if u.len() != n || difference.input_len() != n {
        return Err(Error::DimensionMismatch {
            what: "tikhonov derivative",
            left: n,
            right: u.len(),
        });
    }
    if lambda == 0.0 {
        return pseudoinverse_apply(&trapezoid.to_dense(), u, DEFAULT_RANK_TOL);
    }
    let mut normal = trapezoid.gram();
    normal += difference.gram() * lambda;
    let rhs = trapezoid.apply_transpose(u)?;
    // D^T D >= I makes the system positive definite for lambda > 0
    match normal.clone().cholesky() {
        Some(chol) => Ok(chol.solve(&rhs)),
        None => pseudoinverse_apply(&normal, &rhs, DEFAULT_RANK_TOL),
    }
}

/// Weighted-Lasso solve by cyclic coordinate descent:
/// minimize ||A c - b||^2 + lambda ||W c||_1, reweighting between passes
/// with W_jj = 1 / (|c_j| + eps).
pub fn irw_lasso(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    irw_iters: usize,
    eps_weight: f64,
) -> Result<DVector<f64>> {
    if lambda < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "l1 weight must be nonnegative, got {lambda}"
        )));
    }
    if a.nrows() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "lasso",
            left: a.nrows(),
            right: b.len(),
        });
    }
    if !a.iter().all(|v| v.is_finite()) || !b.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidConfig("non-finite lasso inputs".into()));
    }
    let p = a.ncols();
    let mut weights = DVector::from_element(p, 1.0);
    let mut coeffs = DVector::zeros(p);
    for _ in 0..irw_iters.max(1) {
        coeffs = lasso_cd(a, b, lambda, &weights)?;
        for j in 0..p {
            weights[j] = 1.0 / (coeffs[j].abs() + eps_weight);
        }
    }
    Ok(coeffs)
}

/// Single weighted-Lasso solve to a duality gap of 1e-8 (relative to the
/// problem scale max(1, ||b||^2)).
fn lasso_cd(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda: f64,
    weights: &DVector<f64>,
) -> Result<DVector<f64>> {
    let p = a.ncols();
    let col_sq: Vec<f64> = (0..p).map(|j| a.column(j).norm_squared()).collect();
    let mut coeffs = DVector::zeros(p);
    let mut residual = b.clone();
    let gap_tol = 1e-8 * b.norm_squared().max(1.0);

    for _sweep in 0..100_000 {
        for j in 0..p {
            if col_sq[j] == 0.0 {
                continue;
            }
            let old = coeffs[j];
            let rho = a.column(j).dot(&residual) + col_sq[j] * old;
            let threshold = lambda * weights[j] / 2.0;
            let new = soft_threshold(rho, threshold) / col_sq[j];
            if new != old {
                residual.axpy(old - new, &a.column(j).clone_owned(), 1.0);
                coeffs[j] = new;
            }
        }
        // duality gap from the scaled residual certificate
        let primal = residual.norm_squared()
            + lambda
                * coeffs
                    .iter()
                    .zip(weights.iter())
                    .map(|(c, w)| w * c.abs())
                    .sum::<f64>();
        let mut max_corr = 0.0_f64;
        for j in 0..p {
            if weights[j] > 0.0 {
                max_corr = max_corr.max(
                    2.0 * a.column(j).dot(&residual).abs()
                        / (lambda * weights[j]).max(f64::MIN_POSITIVE),
                );
            }
        }
        let scale = if lambda == 0.0 || max_corr <= 1.0 {
            1.0
        } else {
            1.0 / max_corr
        };
        let nu = &residual * (2.0 * scale);
        let dual = -0.25 * nu.norm_squared() + b.dot(&nu);
        if primal - dual <= gap_tol {
            return Ok(coeffs);
        }
    }
    Ok(coeffs)
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Sequential-thresholding least squares. Coefficients below `threshold`
/// in magnitude (and above `upper_bound` when set) are zeroed, then the
/// active set is refit, until the support stabilizes.
pub fn stls(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    threshold: f64,
    upper_bound: Option<f64>,
) -> Result<DVector<f64>> {
    if threshold < 0.0 {
        return Err(Error::InvalidConfig(format!(
            "threshold must be nonnegative, got {threshold}"
        )));
    }
    let p = a.ncols();
    let mut active: Vec<bool> = vec![true; p];
    let mut coeffs = DVector::zeros(p);
    for _ in 0..p + 1 {
        let idx: Vec<usize> = (0..p).filter(|&j| active[j]).collect();
        if idx.is_empty() {
            return Ok(DVector::zeros(p));
        }
        let sub = a.select_columns(&idx);
        let sol = pseudoinverse_apply(&sub, b, DEFAULT_RANK_TOL)?;
        coeffs.fill(0.0);
        for (pos, &j) in idx.iter().enumerate() {
            coeffs[j] = sol[pos];
        }
        let mut changed = false;
        for j in 0..p {
            if !active[j] {
                continue;
            }
            let keep = coeffs[j].abs() >= threshold
                && upper_bound.map_or(true, |cap| coeffs[j].abs() <= cap);
            if !keep {
                active[j] = false;
                coeffs[j] = 0.0;
                changed = true;
            }
        }
        if !changed {
            return Ok(coeffs);
        }
    }
    Ok(coeffs)
}

/// Scans a relative threshold grid, running the capped thresholding
/// variant per candidate, and returns the coefficients minimizing
/// ||A (c - c_ls)|| / ||A c_ls|| + ||c||_0 / p.
pub fn mstls_select(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    lambda_grid: &[f64],
) -> Result<(DVector<f64>, f64)> {
    if lambda_grid.is_empty() {
        return Err(Error::InvalidConfig("empty lambda grid".into()));
    }
    let p = a.ncols() as f64;
    let c_ls = pseudoinverse_apply(a, b, DEFAULT_RANK_TOL)?;
    let scale = c_ls.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let fit_ls = a * &c_ls;
    let fit_norm = fit_ls.norm().max(f64::MIN_POSITIVE);

    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    for &lambda in lambda_grid {
        if !(lambda > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "lambda grid entries must be positive, got {lambda}"
            )));
        }
        let c = stls(a, b, lambda * scale, Some(scale / lambda))?;
        let misfit = (a * &c - &fit_ls).norm() / fit_norm;
        let sparsity = c.iter().filter(|v| **v != 0.0).count() as f64 / p;
        let loss = misfit + sparsity;
        if best.as_ref().map_or(true, |(l, _, _)| loss < *l) {
            best = Some((loss, c, lambda));
        }
    }
    let (_, c, lambda) = best.expect("nonempty grid");
    Ok((c, lambda))
}
