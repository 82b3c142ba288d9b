//! Brute-force global solver over the binary feasible set.
//!
//! Every binary control with at most `S` active sources is evaluated through
//! one forward/back substitution with the cached stiffness factorization, so
//! small control dimensions enumerate in seconds. This is the ground truth
//! the outer algorithms are validated against.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::MipdecoProblem;

/// Cap on the number of candidates an enumeration may visit.
#[derive(Debug, Clone, Copy)]
pub struct EnumerationBudget {
    pub max_candidates: usize,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        Self {
            max_candidates: 200_000,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSolution {
    pub control: DVector<f64>,
    pub objective: f64,
    pub candidates_evaluated: usize,
}

/// Number of binary controls with at most `s` ones: `sum_k C(l, k)`.
pub fn candidate_count(l: usize, s: usize) -> u128 {
    let mut total: u128 = 0;
    let mut binom: u128 = 1; // C(l, 0)
    for k in 0..=s.min(l) {
        total = total.saturating_add(binom);
        binom = binom.saturating_mul((l - k) as u128) / (k + 1) as u128;
    }
    total
}

/// Iterator over all binary controls with at most `s` ones, in order of
/// increasing cardinality and lexicographic index sets within each
/// cardinality. The enumeration order fixes the tie-break: the first
/// candidate attaining the minimum is kept.
pub fn binary_controls_within_knapsack(
    l: usize,
    s: usize,
) -> impl Iterator<Item = DVector<f64>> {
    let mut cardinality = 0usize;
    let mut indices: Vec<usize> = Vec::new();
    let mut started = false;
    std::iter::from_fn(move || {
        if !started {
            started = true;
            return Some(DVector::zeros(l)); // the empty set
        }
        loop {
            if indices.is_empty() || !advance_combination(&mut indices, l) {
                cardinality += 1;
                if cardinality > s.min(l) {
                    return None;
                }
                indices = (0..cardinality).collect();
            }
            let mut u = DVector::zeros(l);
            for &i in &indices {
                u[i] = 1.0;
            }
            return Some(u);
        }
    })
}

/// Advances a k-combination of `0..l` in lexicographic order; false at end.
fn advance_combination(c: &mut [usize], l: usize) -> bool {
    let k = c.len();
    let mut i = k;
    while i > 0 {
        i -= 1;
        if c[i] < l - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Exact global minimizer of the discretized problem over all binary
/// controls with at most `S` ones. Ties keep the candidate that appears
/// first in the enumeration order.
pub fn enumerate_global_min(
    problem: &MipdecoProblem,
    budget: EnumerationBudget,
) -> Result<OracleSolution> {
    enumerate_impl(problem, budget, None)
}

/// Same enumeration, also returning the full candidate/value table.
pub fn enumerate_with_table(
    problem: &MipdecoProblem,
    budget: EnumerationBudget,
) -> Result<(OracleSolution, Vec<(Vec<u8>, f64)>)> {
    let mut table = Vec::new();
    let sol = enumerate_impl(problem, budget, Some(&mut table))?;
    Ok((sol, table))
}

fn enumerate_impl(
    problem: &MipdecoProblem,
    budget: EnumerationBudget,
    mut table: Option<&mut Vec<(Vec<u8>, f64)>>,
) -> Result<OracleSolution> {
    let l = problem.n_controls();
    let s = problem.knapsack_bound;
    let count = candidate_count(l, s);
    if count > budget.max_candidates as u128 {
        return Err(Error::BudgetExceeded {
            candidates: count,
            budget: budget.max_candidates,
        });
    }
    let factors = problem.system.factors()?;
    let mut best_u: Option<DVector<f64>> = None;
    let mut best_obj = f64::INFINITY;
    let mut evaluated = 0usize;
    for u in binary_controls_within_knapsack(l, s) {
        let load = problem.system.load_for_control(&u);
        let y = match problem.system.kind {
            crate::fem::PdeKind::NonlinearPoisson => problem.system.solve_state(&u)?,
            _ => factors.stiffness.solve(&load),
        };
        let d = &y - &problem.desired_state;
        let obj = 0.5 * d.dot(&problem.system.mass.mul_vec(&d));
        if let Some(t) = table.as_deref_mut() {
            t.push((u.iter().map(|&v| v as u8).collect(), obj));
        }
        if obj < best_obj {
            best_obj = obj;
            best_u = Some(u);
        }
        evaluated += 1;
    }
    Ok(OracleSolution {
        control: best_u.expect("enumeration visits at least the zero control"),
        objective: best_obj,
        candidates_evaluated: evaluated,
    })
}
