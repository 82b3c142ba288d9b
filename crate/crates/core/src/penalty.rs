//! Outer solution algorithms on top of the interior point local solver:
//! the simple penalty loop, the exact-penalty (EXP) loop, and the improved
//! penalty algorithm (IPA) that replaces EXP's global subsolver with a
//! perturbation-driven local search.

use std::time::Instant;

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ipm::{ipm_solve, IpmConfig, IpmTrace};
use crate::model::{IterateX, MipdecoProblem};
use crate::oracle::{enumerate_global_min, EnumerationBudget};

/// Shared configuration of the outer algorithms. Defaults follow the
/// reference parameter set: `eps0 = 1e5`, `sigma = 0.7` for the IPA and
/// `0.9` for the simple penalty loop, feasibility tolerance `0.1`,
/// `p_max = 300` perturbation cycles and three flips per perturbation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterConfig {
    pub eps_initial: f64,
    pub sigma_ipa: f64,
    pub sigma_penalty: f64,
    /// Iterates with `||u - [u]_SR||_inf` below this count as integral.
    pub eps_feasibility: f64,
    /// Perturbation cycles before the local search gives up.
    pub p_max: usize,
    /// Flips per perturbation (theta).
    pub flips_per_perturbation: usize,
    pub seed: u64,
    /// Cap on penalty reductions in the simple penalty loop.
    pub max_eps_reductions: usize,
    /// Safety floor under which the IPA stops reducing eps.
    pub eps_floor: f64,
    /// Safety cap on IPA outer iterations.
    pub max_outer_iterations: usize,
    pub ipm: IpmConfig,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            eps_initial: 1e5,
            sigma_ipa: 0.7,
            sigma_penalty: 0.9,
            eps_feasibility: 0.1,
            p_max: 300,
            flips_per_perturbation: 3,
            seed: 0,
            max_eps_reductions: 1000,
            eps_floor: 1e-12,
            max_outer_iterations: 1000,
            ipm: IpmConfig::default(),
        }
    }
}

/// Configuration of the EXP loop: initial accuracy `delta`, the shared
/// reduction factor, and the value of `delta` at which the loop stops.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ExpConfig {
    pub delta_initial: f64,
    pub sigma: f64,
    pub delta_min: f64,
    pub max_iterations: usize,
}

impl Default for ExpConfig {
    fn default() -> Self {
        Self {
            delta_initial: 1.0,
            sigma: 0.7,
            delta_min: 1e-2,
            max_iterations: 200,
        }
    }
}

/// How EXP's Step-1 subproblem (a delta-global minimizer of the penalized
/// relaxation) is approximated.
#[derive(Debug, Clone, Copy)]
pub enum ExpSubsolver {
    /// Exact surrogate by brute-force enumeration of the binary set; only
    /// viable at small control dimensions, used for validation.
    OracleEnumeration(EnumerationBudget),
    /// The IPA's perturbation search, which approximates a delta-global
    /// minimizer for an unknown delta.
    PerturbationSearch,
}

/// Condensed record of one interior point call inside an outer algorithm.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IpmCallRecord {
    pub eps: f64,
    /// Nonlinear (outer) IPM iterations.
    pub nli: usize,
    /// Average preconditioned GMRES iterations per outer iteration.
    pub agmres: f64,
    pub gmres_iterations: Vec<usize>,
    pub exit: String,
}

impl From<&IpmTrace> for IpmCallRecord {
    fn from(t: &IpmTrace) -> Self {
        Self {
            eps: t.eps,
            nli: t.outer_iterations,
            agmres: t.agmres(),
            gmres_iterations: t.gmres_iterations.clone(),
            exit: t.exit.to_string(),
        }
    }
}

/// Outcome of one outer solve: the final binary control with its lifted
/// state, objective values, the penalty trajectory and per-call solver
/// statistics.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub algorithm: String,
    pub control: Vec<f64>,
    pub state: Vec<f64>,
    pub objective_raw: f64,
    /// Penalized objective at the final penalty parameter (coincides with
    /// the raw objective on binary controls).
    pub objective_penalized: f64,
    /// Penalty parameter per outer iteration.
    pub eps_trajectory: Vec<f64>,
    /// First outer iteration whose update did not reduce eps; iterations
    /// before it all took the reduction branch (phase one).
    pub phase_boundary: Option<usize>,
    /// Perturbation cycles consumed per outer iteration.
    pub perturbation_cycles: Vec<usize>,
    /// Interior point call used to produce the default initial iterate.
    pub initial_call: Option<IpmCallRecord>,
    pub ipm_calls: Vec<IpmCallRecord>,
    pub flags: Vec<String>,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// Solves the plain continuous relaxation (penalty term off) with the
/// interior point method from a box-interior constant control; this is the
/// default initial iterate of the outer algorithms.
pub fn default_initial_iterate(
    problem: &MipdecoProblem,
    ipm: &IpmConfig,
) -> Result<(IterateX, IpmTrace)> {
    let l = problem.n_controls();
    let fill = (0.9 * problem.knapsack_bound as f64 / l as f64).min(0.5);
    let u0 = DVector::from_element(l, fill);
    let y0 = problem.system.solve_state(&u0)?;
    let cfg = IpmConfig {
        penalty_enabled: false,
        ..ipm.clone()
    };
    ipm_solve(problem, 1.0, &IterateX::new(y0, u0), &cfg)
}

/// Inputs of the local-solution acceptance decision inside the perturbation
/// search. All objectives are penalized values at the current eps; `d_loc`
/// and `d_sr` are the max-norm distances between the controls and between
/// their smart roundings.
#[derive(Debug, Clone, Copy)]
pub struct AcceptanceContext {
    /// Whether the outer loop reduced eps in its last update.
    pub eps_decreased: bool,
    pub j_current: f64,
    pub j_local: f64,
    pub j_current_rounded: f64,
    pub j_local_rounded: f64,
    pub d_loc: f64,
    pub d_sr: f64,
}

/// Replacement for the plain descent test of the perturbation search.
///
/// After an eps reduction any of: objective decrease, staying in the same
/// neighborhood (`d_loc < 0.2`), or an identical rounding (`d_sr = 0`)
/// accepts the local solution. At unchanged eps only strict progress toward
/// a different and better rounding is accepted.
pub fn accept_local_candidate(c: &AcceptanceContext) -> bool {
    if c.eps_decreased {
        c.j_local < c.j_current || c.d_loc < 0.2 || c.d_sr == 0.0
    } else {
        c.d_sr != 0.0
            && c.j_local < c.j_current
            && c.j_local_rounded < c.j_current_rounded
    }
}

/// One basin-hopping move: up to `theta` flips deactivate a strong control
/// component (new value uniform in `[0.1, 0.2]`) and activate an adjacent
/// one (uniform in `[d - 0.1, d]` where `d` is the deactivation drop). The
/// ranges keep the control inside the box and never increase its sum, so
/// feasibility is preserved. Controls with no component above one half are
/// returned unchanged.
pub fn perturb<R: Rng>(
    problem: &MipdecoProblem,
    x: &IterateX,
    theta: usize,
    rng: &mut R,
) -> Result<IterateX> {
    let l = problem.n_controls();
    let mut strong: Vec<usize> = (0..l).filter(|&i| x.control[i] > 0.5).collect();
    if strong.is_empty() {
        return Ok(x.clone());
    }
    let mut u = x.control.clone();
    let flips = theta.min(strong.len());
    for _ in 0..flips {
        let pick = rng.gen_range(0..strong.len());
        let i_hat = strong.swap_remove(pick);
        let adjacent = problem.system.sources.adjacency(i_hat);
        if adjacent.is_empty() {
            continue;
        }
        let i_adj = adjacent[rng.gen_range(0..adjacent.len())];
        let old = x.control[i_hat];
        let fresh = rng.gen_range(0.1..0.2);
        u[i_hat] = fresh;
        let drop = (old - fresh).abs();
        u[i_adj] = rng.gen_range((drop - 0.1)..drop);
    }
    let y = problem.system.solve_state(&u)?;
    Ok(IterateX::new(y, u))
}

/// Result of one perturbation search.
pub struct ReductionOutcome {
    pub x: IterateX,
    /// False when `p_max` cycles elapsed without an acceptable candidate;
    /// the input iterate is returned in that case.
    pub improved: bool,
    pub ipm_calls: Vec<IpmCallRecord>,
    pub cycles: usize,
}

/// The inner search of the IPA: run the local solver, accept per the
/// criteria above, otherwise perturb the local solution and retry, up to
/// `p_max` cycles.
pub fn reduction_via_perturbation<R: Rng>(
    problem: &MipdecoProblem,
    x: &IterateX,
    eps: f64,
    eps_decreased: bool,
    config: &OuterConfig,
    rng: &mut R,
) -> Result<ReductionOutcome> {
    let j_x = problem.objective_penalized(eps, x);
    let u_sr = problem.smart_round(&x.control);
    let x_sr = problem.lift_control(&u_sr)?;
    let j_x_sr = problem.objective_penalized(eps, &x_sr);

    let mut x_init = x.clone();
    let mut calls = Vec::new();
    for cycle in 1..=config.p_max {
        let (x_loc, trace) = ipm_solve(problem, eps, &x_init, &config.ipm)?;
        calls.push(IpmCallRecord::from(&trace));
        let d_loc = (&x_loc.control - &x.control).amax();
        let d_sr = (&problem.smart_round(&x_loc.control) - &u_sr).amax();
        let x_loc_sr = problem.smart_round_lifted(&x_loc)?;
        let ctx = AcceptanceContext {
            eps_decreased,
            j_current: j_x,
            j_local: problem.objective_penalized(eps, &x_loc),
            j_current_rounded: j_x_sr,
            j_local_rounded: problem.objective_penalized(eps, &x_loc_sr),
            d_loc,
            d_sr,
        };
        if accept_local_candidate(&ctx) {
            return Ok(ReductionOutcome {
                x: x_loc,
                improved: true,
                ipm_calls: calls,
                cycles: cycle,
            });
        }
        x_init = perturb(problem, &x_loc, config.flips_per_perturbation, rng)?;
    }
    Ok(ReductionOutcome {
        x: x.clone(),
        improved: false,
        ipm_calls: calls,
        cycles: config.p_max,
    })
}

struct ReportBuilder<'a> {
    problem: &'a MipdecoProblem,
    algorithm: &'static str,
    started: Instant,
    seed: u64,
    eps_trajectory: Vec<f64>,
    phase_boundary: Option<usize>,
    perturbation_cycles: Vec<usize>,
    initial_call: Option<IpmCallRecord>,
    ipm_calls: Vec<IpmCallRecord>,
    flags: Vec<String>,
}

impl ReportBuilder<'_> {
    fn finish(mut self, x_final: &IterateX, final_eps: f64) -> Result<SolveReport> {
        let x_sr = self.problem.smart_round_lifted(x_final)?;
        if !self.problem.in_binary_set(&x_sr) {
            self.flags.push("output-not-binary-feasible".into());
        }
        Ok(SolveReport {
            algorithm: self.algorithm.to_string(),
            control: x_sr.control.iter().copied().collect(),
            state: x_sr.state.iter().copied().collect(),
            objective_raw: self.problem.objective_raw(&x_sr),
            objective_penalized: self.problem.objective_penalized(final_eps, &x_sr),
            eps_trajectory: self.eps_trajectory,
            phase_boundary: self.phase_boundary,
            perturbation_cycles: self.perturbation_cycles,
            initial_call: self.initial_call,
            ipm_calls: self.ipm_calls,
            flags: self.flags,
            seed: self.seed,
            wall_time_s: self.started.elapsed().as_secs_f64(),
        })
    }
}

/// The naive penalty loop: solve, reduce eps by `sigma_penalty`, repeat
/// until the iterate rounds within the feasibility tolerance; return the
/// smart rounding of the final iterate.
pub fn simple_penalty(
    problem: &MipdecoProblem,
    x0: Option<IterateX>,
    config: &OuterConfig,
) -> Result<SolveReport> {
    let started = Instant::now();
    let mut builder = ReportBuilder {
        problem,
        algorithm: "penalty",
        started,
        seed: config.seed,
        eps_trajectory: Vec::new(),
        phase_boundary: None,
        perturbation_cycles: Vec::new(),
        initial_call: None,
        ipm_calls: Vec::new(),
        flags: Vec::new(),
    };
    let mut x = match x0 {
        Some(x) => x,
        None => {
            let (x, trace) = default_initial_iterate(problem, &config.ipm)?;
            builder.initial_call = Some(IpmCallRecord::from(&trace));
            x
        }
    };
    let mut eps = config.eps_initial;
    let mut reductions = 0;
    loop {
        builder.eps_trajectory.push(eps);
        let (x_next, trace) = ipm_solve(problem, eps, &x, &config.ipm)?;
        builder.ipm_calls.push(IpmCallRecord::from(&trace));
        x = x_next;
        eps *= config.sigma_penalty;
        reductions += 1;
        if problem.feasibility_gap(&x.control) < config.eps_feasibility {
            break;
        }
        if reductions >= config.max_eps_reductions {
            builder.flags.push("eps-reduction-cap".into());
            break;
        }
    }
    let final_eps = eps / config.sigma_penalty;
    builder.finish(&x, final_eps)
}

/// The improved penalty algorithm: alternate the perturbation search with
/// the eps update of the exact-penalty loop; terminate when the search can
/// no longer improve the iterate, and return its smart rounding.
pub fn ipa(
    problem: &MipdecoProblem,
    x0: Option<IterateX>,
    config: &OuterConfig,
) -> Result<SolveReport> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut builder = ReportBuilder {
        problem,
        algorithm: "ipa",
        started,
        seed: config.seed,
        eps_trajectory: Vec::new(),
        phase_boundary: None,
        perturbation_cycles: Vec::new(),
        initial_call: None,
        ipm_calls: Vec::new(),
        flags: Vec::new(),
    };
    let mut x = match x0 {
        Some(x) => x,
        None => {
            let (x, trace) = default_initial_iterate(problem, &config.ipm)?;
            builder.initial_call = Some(IpmCallRecord::from(&trace));
            x
        }
    };
    let mut eps = config.eps_initial;
    // The first search counts as following an eps reduction: the input is
    // the relaxation solution and must be accepted, not escaped from.
    let mut eps_decreased = true;
    let mut n = 0usize;
    loop {
        builder.eps_trajectory.push(eps);
        let outcome = reduction_via_perturbation(problem, &x, eps, eps_decreased, config, &mut rng)?;
        builder.ipm_calls.extend(outcome.ipm_calls);
        builder.perturbation_cycles.push(outcome.cycles);
        let x_next = outcome.x;

        // Step 2: reduce eps while the iterate is non-integral and the
        // rounding gap is within the Hoelder bound.
        let nonintegral = problem.feasibility_gap(&x_next.control) > config.eps_feasibility;
        let x_next_sr = problem.smart_round_lifted(&x_next)?;
        let hoelder = problem.objective_penalized(eps, &x_next)
            - problem.objective_penalized(eps, &x_next_sr)
            <= eps * x_next.stacked_distance(&x_next_sr);
        if nonintegral && hoelder {
            eps *= config.sigma_ipa;
            eps_decreased = true;
        } else {
            if builder.phase_boundary.is_none() {
                builder.phase_boundary = Some(n);
            }
            eps_decreased = false;
        }

        // Step 3: the search returning its input means no better iterate
        // exists within the perturbation budget.
        x = x_next;
        if !outcome.improved {
            break;
        }
        n += 1;
        if eps < config.eps_floor {
            builder.flags.push("eps-floor-reached".into());
            break;
        }
        if n >= config.max_outer_iterations {
            builder.flags.push("outer-iteration-cap".into());
            break;
        }
    }
    builder.finish(&x, eps)
}

/// The exact-penalty loop: Step 1 computes (an approximation of) a
/// delta-global minimizer of the penalized relaxation, Step 2 decides
/// between more penalization (`eps`) and more accuracy (`delta`); the loop
/// stops once `delta` reaches `delta_min` and the best rounding encountered
/// is returned.
pub fn exp_algorithm(
    problem: &MipdecoProblem,
    config: &OuterConfig,
    exp: &ExpConfig,
    subsolver: ExpSubsolver,
) -> Result<SolveReport> {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut builder = ReportBuilder {
        problem,
        algorithm: "exp",
        started,
        seed: config.seed,
        eps_trajectory: Vec::new(),
        phase_boundary: None,
        perturbation_cycles: Vec::new(),
        initial_call: None,
        ipm_calls: Vec::new(),
        flags: Vec::new(),
    };
    let mut eps = config.eps_initial;
    let mut delta = exp.delta_initial;
    let mut eps_decreased = true;
    let mut x_prev: Option<IterateX> = None;
    let mut oracle_point: Option<IterateX> = None;
    let mut best: Option<(f64, IterateX)> = None;
    for n in 0..exp.max_iterations {
        builder.eps_trajectory.push(eps);
        let x_n = match subsolver {
            ExpSubsolver::OracleEnumeration(budget) => {
                if oracle_point.is_none() {
                    let sol = enumerate_global_min(problem, budget)?;
                    oracle_point = Some(problem.lift_control(&sol.control)?);
                }
                oracle_point.clone().expect("cached above")
            }
            ExpSubsolver::PerturbationSearch => {
                let base = match &x_prev {
                    Some(x) => x.clone(),
                    None => {
                        let (x, trace) = default_initial_iterate(problem, &config.ipm)?;
                        builder.initial_call = Some(IpmCallRecord::from(&trace));
                        x
                    }
                };
                let outcome =
                    reduction_via_perturbation(problem, &base, eps, eps_decreased, config, &mut rng)?;
                builder.ipm_calls.extend(outcome.ipm_calls);
                builder.perturbation_cycles.push(outcome.cycles);
                outcome.x
            }
        };
        let x_sr = problem.smart_round_lifted(&x_n)?;
        let raw = problem.objective_raw(&x_sr);
        if best.as_ref().is_none_or(|(b, _)| raw < *b) {
            best = Some((raw, x_sr.clone()));
        }

        // Step 2 of the exact-penalty loop.
        let nonintegral = problem.feasibility_gap(&x_n.control) > config.eps_feasibility;
        let hoelder = problem.objective_penalized(eps, &x_n)
            - problem.objective_penalized(eps, &x_sr)
            <= eps * x_n.stacked_distance(&x_sr);
        if nonintegral && hoelder {
            eps *= exp.sigma;
            eps_decreased = true;
        } else {
            if builder.phase_boundary.is_none() {
                builder.phase_boundary = Some(n);
            }
            delta *= exp.sigma;
            eps_decreased = false;
        }
        x_prev = Some(x_n);
        if delta <= exp.delta_min {
            break;
        }
        if eps < config.eps_floor {
            builder.flags.push("eps-floor-reached".into());
            break;
        }
    }
    let final_eps = eps;
    let (_, x_best) = best.expect("at least one iteration ran");
    builder.finish(&x_best, final_eps)
}
