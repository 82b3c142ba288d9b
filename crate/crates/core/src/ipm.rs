//! Inexact interior point local solver for the penalized relaxation.
//!
//! One Newton step is taken per barrier value; the barrier parameter starts
//! at one and is reduced by a factor of ten each outer iteration. The Newton
//! saddle-point system is solved by right-preconditioned GMRES whose
//! tolerance follows the barrier parameter (inexact Newton-Krylov), using
//! the block-triangular preconditioner from [`crate::linalg::saddle`]. The
//! concave penalty block is kept positive definite by replacing non-positive
//! diagonal entries with a small `gamma` (convexification).

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    gmres, BlockTriangularPreconditioner, CsrMatrix, SaddleSystem,
};
use crate::model::{IterateX, MipdecoProblem};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct IpmConfig {
    /// Outer stopping tolerance on `max(|xi_p|, |xi_d|, |xi_c|)`.
    pub kkt_tolerance: f64,
    pub mu_initial: f64,
    pub mu_reduction: f64,
    /// Safeguard: stop once the barrier parameter falls below this.
    pub mu_safeguard: f64,
    /// Convexification floor for the penalty diagonal block.
    pub gamma: f64,
    pub fraction_to_boundary: f64,
    pub max_outer: usize,
    pub gmres_max_iters: usize,
    /// Test hook: with the penalty term disabled the solver addresses the
    /// plain continuous relaxation, which is used both for the default
    /// initial iterate and for convex-oracle comparisons.
    pub penalty_enabled: bool,
}

impl Default for IpmConfig {
    fn default() -> Self {
        Self {
            kkt_tolerance: 1e-6,
            mu_initial: 1.0,
            mu_reduction: 0.1,
            mu_safeguard: 1e-15,
            gamma: 1e-6,
            fraction_to_boundary: 0.995,
            max_outer: 60,
            gmres_max_iters: 400,
            penalty_enabled: true,
        }
    }
}

/// GMRES tolerance rule `eta = max(min(1e-1, mu), 1e-10)`.
pub fn eta_tolerance(mu: f64) -> f64 {
    1e-1f64.min(mu).max(1e-10)
}

/// Primal, dual and slack iterates of the barrier subproblem.
#[derive(Debug, Clone)]
pub struct IpmState {
    pub y: DVector<f64>,
    pub u: DVector<f64>,
    pub z: f64,
    pub p: DVector<f64>,
    pub q: f64,
    pub lam_u0: DVector<f64>,
    pub lam_u1: DVector<f64>,
    pub lam_z0: f64,
    pub mu: f64,
}

impl IpmState {
    /// Strictly interior start: the control is clamped into `[0.01, 0.99]`,
    /// the slack covers the knapsack, duals start at zero and the bound
    /// multipliers at perturbed complementarity (so the initial `xi_c`
    /// vanishes).
    pub fn initialize(x_init: &IterateX, s: usize, mu: f64) -> Self {
        let u = x_init.control.map(|v| v.clamp(0.01, 0.99));
        let z = (s as f64 - u.sum()).max(0.1);
        let lam_u0 = u.map(|v| mu / v);
        let lam_u1 = u.map(|v| mu / (1.0 - v));
        Self {
            y: x_init.state.clone(),
            z,
            p: DVector::zeros(x_init.state.len()),
            q: 0.0,
            lam_u0,
            lam_u1,
            lam_z0: mu / z,
            u,
            mu,
        }
    }

    pub fn is_strictly_interior(&self) -> bool {
        self.u.iter().all(|&v| v > 0.0 && v < 1.0)
            && self.z > 0.0
            && self.lam_u0.iter().all(|&v| v > 0.0)
            && self.lam_u1.iter().all(|&v| v > 0.0)
            && self.lam_z0 > 0.0
    }
}

/// The three residual blocks of the first-order conditions.
#[derive(Debug, Clone)]
pub struct Residuals {
    /// `[F(y, u); 1'u + z - S]`
    pub primal: DVector<f64>,
    /// `[M y - M y_d + J' p; pen (1 - 2u) - B' p + q 1 - lam_u0 + lam_u1; q - lam_z0]`
    pub dual: DVector<f64>,
    /// `[U lam_u0 - mu; (I - U) lam_u1 - mu; z lam_z0 - mu]`
    pub complementarity: DVector<f64>,
}

impl Residuals {
    pub fn primal_norm(&self) -> f64 {
        self.primal.norm()
    }

    pub fn dual_norm(&self) -> f64 {
        self.dual.norm()
    }

    pub fn complementarity_norm(&self) -> f64 {
        self.complementarity.norm()
    }

    /// `max(|xi_p|_2, |xi_d|_2, |xi_c|_2)`, the outer stopping quantity.
    pub fn max_norm(&self) -> f64 {
        self.primal_norm()
            .max(self.dual_norm())
            .max(self.complementarity_norm())
    }
}

/// Evaluates the residual blocks at a state. `pen_lin` is `1/eps`, or zero
/// when the penalty hook is off.
pub fn residuals(
    problem: &MipdecoProblem,
    state: &IpmState,
    jac: &CsrMatrix,
    pen_lin: f64,
) -> Residuals {
    let sys = &problem.system;
    let n = sys.n_dofs();
    let l = sys.n_controls();
    let s = problem.knapsack_bound as f64;

    let mut primal = DVector::zeros(n + 1);
    let f = sys.nonlinear_residual(&state.y, &state.u);
    primal.rows_mut(0, n).copy_from(&f);
    primal[n] = state.u.sum() + state.z - s;

    let mut dual = DVector::zeros(n + l + 1);
    let mut d1 = sys.mass.mul_vec(&state.y);
    d1 -= sys.mass.mul_vec(&problem.desired_state);
    d1 += jac.mul_transpose_vec(&state.p);
    dual.rows_mut(0, n).copy_from(&d1);
    let bt_p = sys.control_load.tr_mul(&state.p);
    for i in 0..l {
        dual[n + i] = pen_lin * (1.0 - 2.0 * state.u[i]) - bt_p[i] + state.q
            - state.lam_u0[i]
            + state.lam_u1[i];
    }
    dual[n + l] = state.q - state.lam_z0;

    let mut comp = DVector::zeros(2 * l + 1);
    for i in 0..l {
        comp[i] = state.u[i] * state.lam_u0[i] - state.mu;
        comp[l + i] = (1.0 - state.u[i]) * state.lam_u1[i] - state.mu;
    }
    comp[2 * l] = state.z * state.lam_z0 - state.mu;

    Residuals {
        primal,
        dual,
        complementarity: comp,
    }
}

/// Assembles the Newton saddle system at a state: the convexified diagonal
/// block `D_u = -2 pen I + Theta_u` (entries `<= 0` replaced by `gamma`),
/// `theta_z`, and the negated residual vector as right-hand side. For the
/// nonlinear PDE kind the state Jacobian replaces the stiffness matrix in
/// the constraint rows and their transposes.
///
/// The control and slack rows of the right-hand side carry the exact
/// elimination of the perturbed complementarity rows
/// (`- U^{-1} xi_c` terms); with multipliers sitting exactly on perturbed
/// complementarity these corrections vanish and the rows reduce to the
/// plain negated dual residuals.
pub fn assemble_newton_system<'a>(
    problem: &'a MipdecoProblem,
    state: &IpmState,
    jac: &'a CsrMatrix,
    pen_lin: f64,
    gamma: f64,
    res: &Residuals,
) -> SaddleSystem<'a> {
    let sys = &problem.system;
    let n = sys.n_dofs();
    let l = sys.n_controls();
    let mut d_u = DVector::zeros(l);
    for i in 0..l {
        let theta = state.lam_u0[i] / state.u[i] + state.lam_u1[i] / (1.0 - state.u[i]);
        let raw = -2.0 * pen_lin + theta;
        d_u[i] = if raw <= 0.0 { gamma } else { raw };
    }
    let theta_z = state.lam_z0 / state.z;

    let dim = 2 * n + l + 2;
    let mut rhs = DVector::zeros(dim);
    rhs.rows_mut(0, n + l + 1).copy_from(&(-&res.dual));
    for i in 0..l {
        let comp_lower = res.complementarity[i] / state.u[i];
        let comp_upper = res.complementarity[l + i] / (1.0 - state.u[i]);
        rhs[n + i] += -comp_lower + comp_upper;
    }
    rhs[n + l] += -res.complementarity[2 * l] / state.z;
    rhs.rows_mut(n + l + 1, n + 1).copy_from(&(-&res.primal));

    SaddleSystem {
        mass: &sys.mass,
        state_jac: jac,
        control_load: &sys.control_load,
        d_u,
        theta_z,
        rhs,
    }
}

/// Newton direction split into blocks, with the multiplier steps attached.
#[derive(Debug, Clone)]
pub struct NewtonDirection {
    pub dy: DVector<f64>,
    pub du: DVector<f64>,
    pub dz: f64,
    pub dp: DVector<f64>,
    pub dq: f64,
    pub dlam_u0: DVector<f64>,
    pub dlam_u1: DVector<f64>,
    pub dlam_z0: f64,
}

impl NewtonDirection {
    pub fn split(solution: &DVector<f64>, n: usize, l: usize) -> Self {
        Self {
            dy: DVector::from(solution.rows(0, n).clone_owned()),
            du: DVector::from(solution.rows(n, l).clone_owned()),
            dz: solution[n + l],
            dp: DVector::from(solution.rows(n + l + 1, n).clone_owned()),
            dq: solution[2 * n + l + 1],
            dlam_u0: DVector::zeros(l),
            dlam_u1: DVector::zeros(l),
            dlam_z0: 0.0,
        }
    }
}

/// Steps for the bound multipliers recovered from the eliminated
/// complementarity rows.
pub fn multiplier_steps(
    state: &IpmState,
    du: &DVector<f64>,
    dz: f64,
    mu: f64,
) -> (DVector<f64>, DVector<f64>, f64) {
    let l = du.len();
    let mut d0 = DVector::zeros(l);
    let mut d1 = DVector::zeros(l);
    for i in 0..l {
        d0[i] = -state.lam_u0[i] / state.u[i] * du[i] - state.lam_u0[i] + mu / state.u[i];
        d1[i] = state.lam_u1[i] / (1.0 - state.u[i]) * du[i] - state.lam_u1[i]
            + mu / (1.0 - state.u[i]);
    }
    let dz0 = -(state.lam_z0 / state.z) * dz - state.lam_z0 + mu / state.z;
    (d0, d1, dz0)
}

/// Fraction-to-boundary step lengths: the largest primal step keeping
/// `0 < u < 1` and `z > 0`, and the largest dual step keeping all
/// multipliers positive, both scaled by the fraction-to-boundary factor
/// and capped at one.
pub fn step_lengths(state: &IpmState, dir: &NewtonDirection, factor: f64) -> (f64, f64) {
    let mut ap = f64::INFINITY;
    for i in 0..state.u.len() {
        if dir.du[i] < 0.0 {
            ap = ap.min(state.u[i] / -dir.du[i]);
        } else if dir.du[i] > 0.0 {
            ap = ap.min((1.0 - state.u[i]) / dir.du[i]);
        }
    }
    if dir.dz < 0.0 {
        ap = ap.min(state.z / -dir.dz);
    }
    let mut ad = f64::INFINITY;
    for i in 0..state.u.len() {
        if dir.dlam_u0[i] < 0.0 {
            ad = ad.min(state.lam_u0[i] / -dir.dlam_u0[i]);
        }
        if dir.dlam_u1[i] < 0.0 {
            ad = ad.min(state.lam_u1[i] / -dir.dlam_u1[i]);
        }
    }
    if dir.dlam_z0 < 0.0 {
        ad = ad.min(state.lam_z0 / -dir.dlam_z0);
    }
    ((factor * ap).min(1.0), (factor * ad).min(1.0))
}

/// Representable interiority margin: steps that would round a control onto
/// a bound are pulled back inside. Irrelevant at the outer tolerance but
/// keeps the barrier quotients finite when the path hugs a bound.
const INTERIOR_MIN: f64 = 1e-15;

fn apply_step(state: &mut IpmState, dir: &NewtonDirection, alpha_p: f64, alpha_d: f64) {
    state.y.axpy(alpha_p, &dir.dy, 1.0);
    state.u.axpy(alpha_p, &dir.du, 1.0);
    state.z += alpha_p * dir.dz;
    state.p.axpy(alpha_d, &dir.dp, 1.0);
    state.q += alpha_d * dir.dq;
    state.lam_u0.axpy(alpha_d, &dir.dlam_u0, 1.0);
    state.lam_u1.axpy(alpha_d, &dir.dlam_u1, 1.0);
    state.lam_z0 += alpha_d * dir.dlam_z0;
    for v in state.u.iter_mut() {
        *v = v.clamp(INTERIOR_MIN, 1.0 - INTERIOR_MIN);
    }
    state.z = state.z.max(INTERIOR_MIN);
    for v in state.lam_u0.iter_mut().chain(state.lam_u1.iter_mut()) {
        *v = v.max(f64::MIN_POSITIVE);
    }
    state.lam_z0 = state.lam_z0.max(f64::MIN_POSITIVE);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmExit {
    /// KKT residual norms reached the outer tolerance.
    Converged,
    /// Barrier safeguard triggered before the residual test.
    MuSafeguard,
    MaxIterations,
    /// The Krylov solve produced non-finite values.
    LinearSolverBreakdown,
}

impl std::fmt::Display for IpmExit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            IpmExit::Converged => "converged",
            IpmExit::MuSafeguard => "mu-safeguard",
            IpmExit::MaxIterations => "max-iterations",
            IpmExit::LinearSolverBreakdown => "linear-solver-breakdown",
        };
        f.write_str(s)
    }
}

/// Per-call convergence record: outer iteration count (NLI), per-iteration
/// GMRES counts (for the aGMRES metric), tolerances used, and exit reason.
#[derive(Debug, Clone)]
pub struct IpmTrace {
    pub eps: f64,
    pub outer_iterations: usize,
    pub gmres_iterations: Vec<usize>,
    pub etas: Vec<f64>,
    pub final_kkt: f64,
    pub final_norms: (f64, f64, f64),
    /// `(|xi_p|, |xi_d|, |xi_c|)` at the start of each outer iteration.
    pub residual_history: Vec<(f64, f64, f64)>,
    /// Primal/dual step lengths taken per iteration.
    pub step_lengths: Vec<(f64, f64)>,
    pub exit: IpmExit,
    pub gmres_stagnations: usize,
}

impl IpmTrace {
    /// Average preconditioned GMRES iterations per outer iteration.
    pub fn agmres(&self) -> f64 {
        if self.gmres_iterations.is_empty() {
            0.0
        } else {
            self.gmres_iterations.iter().sum::<usize>() as f64
                / self.gmres_iterations.len() as f64
        }
    }
}

/// Runs the interior point method on the penalized relaxation for a fixed
/// penalty parameter, starting from an iterate of the relaxed set.
///
/// The returned iterate is strictly feasible for the relaxed set: after the
/// barrier loop the control is rescaled onto the knapsack if the equation
/// residual left it marginally above, and the state is recomputed by an
/// exact forward solve.
pub fn ipm_solve(
    problem: &MipdecoProblem,
    eps: f64,
    x_init: &IterateX,
    config: &IpmConfig,
) -> Result<(IterateX, IpmTrace)> {
    let sys = &problem.system;
    let n = sys.n_dofs();
    let l = sys.n_controls();
    if x_init.state.len() != n || x_init.control.len() != l {
        return Err(Error::DimensionMismatch(
            "initial iterate does not match the problem dimensions".into(),
        ));
    }
    if config.penalty_enabled && !(eps > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "penalty parameter must be positive, got {eps}"
        )));
    }
    let pen_lin = if config.penalty_enabled { 1.0 / eps } else { 0.0 };
    let factors = sys.factors()?;
    let nonlinear = matches!(sys.kind, crate::fem::PdeKind::NonlinearPoisson);

    let mut state = IpmState::initialize(x_init, problem.knapsack_bound, config.mu_initial);
    let mut trace = IpmTrace {
        eps: if config.penalty_enabled { eps } else { f64::INFINITY },
        outer_iterations: 0,
        gmres_iterations: Vec::new(),
        etas: Vec::new(),
        final_kkt: f64::INFINITY,
        final_norms: (f64::INFINITY, f64::INFINITY, f64::INFINITY),
        residual_history: Vec::new(),
        step_lengths: Vec::new(),
        exit: IpmExit::MaxIterations,
        gmres_stagnations: 0,
    };
    let mut best: Option<(f64, IpmState)> = None;

    for _ in 0..config.max_outer {
        let jac = sys.state_jacobian(&state.y)?;
        let res = residuals(problem, &state, &jac, pen_lin);
        let kkt = res.max_norm();
        trace.residual_history.push((
            res.primal_norm(),
            res.dual_norm(),
            res.complementarity_norm(),
        ));
        if best.as_ref().is_none_or(|(b, _)| kkt < *b) {
            best = Some((kkt, state.clone()));
            trace.final_kkt = kkt;
            trace.final_norms = (
                res.primal_norm(),
                res.dual_norm(),
                res.complementarity_norm(),
            );
        }
        if kkt <= config.kkt_tolerance {
            trace.exit = IpmExit::Converged;
            break;
        }
        if state.mu <= config.mu_safeguard {
            trace.exit = IpmExit::MuSafeguard;
            break;
        }

        let newton = assemble_newton_system(problem, &state, &jac, pen_lin, config.gamma, &res);
        let eta = eta_tolerance(state.mu);
        let precond =
            BlockTriangularPreconditioner::for_system(&newton, &factors.mass, &factors.stiffness);
        let solve = gmres(
            &newton.operator(),
            &newton.rhs,
            Some(&precond),
            eta,
            config.gmres_max_iters,
        );
        trace.gmres_iterations.push(solve.iterations);
        trace.etas.push(eta);
        if !solve.converged {
            trace.gmres_stagnations += 1;
        }
        if solve.x.iter().any(|v| !v.is_finite()) {
            trace.exit = IpmExit::LinearSolverBreakdown;
            break;
        }

        let mut dir = NewtonDirection::split(&solve.x, n, l);
        let (d0, d1, dz0) = multiplier_steps(&state, &dir.du, dir.dz, state.mu);
        dir.dlam_u0 = d0;
        dir.dlam_u1 = d1;
        dir.dlam_z0 = dz0;
        let (alpha_p, alpha_d) = step_lengths(&state, &dir, config.fraction_to_boundary);
        trace.step_lengths.push((alpha_p, alpha_d));

        if nonlinear {
            // Residual-decrease backtracking on top of fraction-to-boundary.
            let mut scale = 1.0;
            let mut chosen = state.clone();
            for attempt in 0..=10 {
                let mut trial = state.clone();
                apply_step(&mut trial, &dir, alpha_p * scale, alpha_d * scale);
                let trial_jac = sys.state_jacobian(&trial.y)?;
                let trial_res = residuals(problem, &trial, &trial_jac, pen_lin);
                if trial_res.max_norm() < kkt || attempt == 10 {
                    chosen = trial;
                    break;
                }
                scale *= 0.5;
            }
            state = chosen;
        } else {
            apply_step(&mut state, &dir, alpha_p, alpha_d);
        }
        debug_assert!(state.is_strictly_interior());
        state.mu *= config.mu_reduction;
        trace.outer_iterations += 1;
    }

    let final_state = match trace.exit {
        IpmExit::Converged | IpmExit::MuSafeguard => state,
        _ => best.map(|(_, s)| s).unwrap_or(state),
    };
    let mut u = final_state.u.clone();
    let total = u.sum();
    let s = problem.knapsack_bound as f64;
    if total > s {
        u *= s / total;
    }
    let y = sys.solve_state(&u)?;
    Ok((IterateX::new(y, u), trace))
}
