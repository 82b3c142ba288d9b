//! Problem definitions, objectives, feasible-set tests, smart rounding and
//! Chebyshev box distances.

use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::fem::FemSystem;

/// Relative PDE-residual tolerance of the relaxed-set membership test.
pub const X_MEMBERSHIP_RESIDUAL: f64 = 1e-8;

/// One discretized problem instance: the PDE system, the desired state and
/// the knapsack bound.
#[derive(Clone)]
pub struct MipdecoProblem {
    pub system: Arc<FemSystem>,
    pub desired_state: DVector<f64>,
    /// Knapsack bound `S`, `1 <= S <= l`.
    pub knapsack_bound: usize,
}

/// A stacked state/control pair `x = (y, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IterateX {
    pub state: DVector<f64>,
    pub control: DVector<f64>,
}

impl IterateX {
    pub fn new(state: DVector<f64>, control: DVector<f64>) -> Self {
        Self { state, control }
    }

    /// Euclidean norm of the stacked difference `x - other`.
    pub fn stacked_distance(&self, other: &Self) -> f64 {
        let dy = (&self.state - &other.state).norm_squared();
        let du = (&self.control - &other.control).norm_squared();
        (dy + du).sqrt()
    }
}

/// Rounds the `S` largest components of `u` to the nearest integer and sets
/// the rest to zero. Ties between equal components are broken by lowest
/// index; components at exactly one half round up.
pub fn smart_round(u: &DVector<f64>, s: usize) -> DVector<f64> {
    let l = u.len();
    let mut order: Vec<usize> = (0..l).collect();
    // Stable sort by descending value keeps the lowest index first on ties.
    order.sort_by(|&a, &b| u[b].partial_cmp(&u[a]).unwrap());
    let mut out = DVector::zeros(l);
    for &i in order.iter().take(s.min(l)) {
        out[i] = if u[i] >= 0.5 { 1.0 } else { 0.0 };
    }
    out
}

impl MipdecoProblem {
    pub fn new(system: Arc<FemSystem>, desired_state: DVector<f64>, s: usize) -> Result<Self> {
        if desired_state.len() != system.n_dofs() {
            return Err(Error::DimensionMismatch(format!(
                "desired state has length {}, expected {}",
                desired_state.len(),
                system.n_dofs()
            )));
        }
        if desired_state.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("desired state must be finite".into()));
        }
        if s == 0 || s > system.n_controls() {
            return Err(Error::InvalidParameter(format!(
                "knapsack bound {s} outside 1..={}",
                system.n_controls()
            )));
        }
        Ok(Self {
            system,
            desired_state,
            knapsack_bound: s,
        })
    }

    pub fn n_controls(&self) -> usize {
        self.system.n_controls()
    }

    /// Tracking objective `1/2 (y - y_d)' M (y - y_d)`.
    pub fn objective_raw(&self, x: &IterateX) -> f64 {
        let d = &x.state - &self.desired_state;
        0.5 * d.dot(&self.system.mass.mul_vec(&d))
    }

    /// Penalized objective: raw objective plus `1/eps * sum u_i (1 - u_i)`.
    pub fn objective_penalized(&self, eps: f64, x: &IterateX) -> f64 {
        self.objective_raw(x) + x.control.iter().map(|&v| v * (1.0 - v)).sum::<f64>() / eps
    }

    pub fn smart_round(&self, u: &DVector<f64>) -> DVector<f64> {
        smart_round(u, self.knapsack_bound)
    }

    /// Pairs a binary control with its exact forward state.
    pub fn lift_control(&self, u: &DVector<f64>) -> Result<IterateX> {
        let y = self.system.solve_state(u)?;
        Ok(IterateX::new(y, u.clone()))
    }

    /// The smart rounding of an iterate, lifted to the binary feasible set.
    pub fn smart_round_lifted(&self, x: &IterateX) -> Result<IterateX> {
        self.lift_control(&self.smart_round(&x.control))
    }

    /// `||u - [u]_SR||_inf`, the distance used by the integrality test.
    pub fn feasibility_gap(&self, u: &DVector<f64>) -> f64 {
        let r = self.smart_round(u);
        (u - r).amax()
    }

    /// Membership in the relaxed feasible set: box and knapsack constraints
    /// plus the relative PDE residual test.
    pub fn in_relaxed_set(&self, x: &IterateX) -> bool {
        let u = &x.control;
        if u.iter().any(|&v| !(-1e-12..=1.0 + 1e-12).contains(&v)) {
            return false;
        }
        if u.sum() > self.knapsack_bound as f64 + 1e-12 {
            return false;
        }
        let res = self.system.nonlinear_residual(&x.state, u);
        let load = self.system.load_for_control(u);
        res.norm() / load.norm().max(1.0) <= X_MEMBERSHIP_RESIDUAL
    }

    /// Membership in the binary feasible set: relaxed membership with an
    /// exactly binary control.
    pub fn in_binary_set(&self, x: &IterateX) -> bool {
        x.control.iter().all(|&v| v == 0.0 || v == 1.0) && self.in_relaxed_set(x)
    }
}

/// Chebyshev boxes `B(z)` around binary feasible points: `||y||_inf <= beta`
/// and `||u - z_u||_inf <= rho` with disjointness guaranteed by `rho < 1/2`.
#[derive(Debug, Clone)]
pub struct ChebyshevBoxes {
    pub rho: f64,
    pub beta: f64,
}

impl ChebyshevBoxes {
    /// `rho = 0.4` and `beta = S * max_i ||f(e_i)||_inf`, an upper bound on
    /// the state magnitude over the whole relaxed set by superposition.
    pub fn for_problem(problem: &MipdecoProblem) -> Result<Self> {
        let l = problem.n_controls();
        let mut max_state = 0.0f64;
        for i in 0..l {
            let mut e = DVector::zeros(l);
            e[i] = 1.0;
            let y = problem.system.solve_state(&e)?;
            max_state = max_state.max(y.amax());
        }
        Ok(Self {
            rho: 0.4,
            beta: problem.knapsack_bound as f64 * max_state,
        })
    }

    /// Chebyshev distance from `x` to the box `B(z)`, in closed form per
    /// coordinate (clamp to the box).
    pub fn distance(&self, x: &IterateX, z_u: &DVector<f64>) -> f64 {
        let mut d = 0.0f64;
        for &y in x.state.iter() {
            d = d.max(y.abs() - self.beta);
        }
        for (u, z) in x.control.iter().zip(z_u.iter()) {
            d = d.max((u - z).abs() - self.rho);
        }
        d.max(0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{assemble_poisson, build_mesh, GaussianSourceGrid};
    use crate::oracle::binary_controls_within_knapsack;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn desk_problem(m: usize, s: usize) -> MipdecoProblem {
        let mesh = build_mesh(2f64.powi(-3)).unwrap();
        let grid = GaussianSourceGrid::standard(m).unwrap();
        let sys = Arc::new(assemble_poisson(mesh, grid).unwrap());
        let n = sys.n_dofs();
        let mut rng = StdRng::seed_from_u64(5);
        let y_d = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        MipdecoProblem::new(sys, y_d, s).unwrap()
    }

    #[test]
    fn objective_raw_two_paths_agree() {
        // The direct evaluation must match the stacked quadratic form
        // 1/2 x' [[M,0],[0,0]] x - x' [M y_d; 0] + 1/2 y_d' M y_d.
        let p = desk_problem(2, 2);
        let mut rng = StdRng::seed_from_u64(6);
        for _ in 0..10 {
            let y = DVector::from_fn(p.system.n_dofs(), |_, _| rng.gen_range(-2.0..2.0));
            let u = DVector::from_fn(p.n_controls(), |_, _| rng.gen_range(0.0..1.0));
            let x = IterateX::new(y.clone(), u);
            let direct = p.objective_raw(&x);
            let my = p.system.mass.mul_vec(&y);
            let myd = p.system.mass.mul_vec(&p.desired_state);
            let stacked =
                0.5 * y.dot(&my) - y.dot(&myd) + 0.5 * p.desired_state.dot(&myd);
            assert!((direct - stacked).abs() <= 1e-12 * direct.abs().max(1.0));
        }
        // y = y_d gives zero; y = 0 gives the constant term.
        let x0 = IterateX::new(p.desired_state.clone(), DVector::zeros(p.n_controls()));
        assert!(p.objective_raw(&x0).abs() < 1e-14);
        let xz = IterateX::new(DVector::zeros(p.system.n_dofs()), DVector::zeros(p.n_controls()));
        let myd = p.system.mass.mul_vec(&p.desired_state);
        assert!((p.objective_raw(&xz) - 0.5 * p.desired_state.dot(&myd)).abs() < 1e-12);
    }

    #[test]
    fn penalized_objective_term() {
        let p = desk_problem(2, 2);
        let y = DVector::zeros(p.system.n_dofs());
        // Binary control: penalty vanishes for every eps.
        let xb = IterateX::new(y.clone(), DVector::from_vec(vec![1.0, 0.0, 1.0, 0.0]));
        for eps in [1e5, 1.0, 1e-3] {
            assert_eq!(p.objective_penalized(eps, &xb), p.objective_raw(&xb));
        }
        // u = 1/2 everywhere: penalty is l/4 * 1/eps.
        let xh = IterateX::new(y.clone(), DVector::from_element(4, 0.5));
        let diff = p.objective_penalized(1e5, &xh) - p.objective_raw(&xh);
        // The difference of the two sums carries cancellation noise at the
        // scale of the raw objective.
        assert!((diff - 4.0 * 0.25 / 1e5).abs() < 1e-12);
        // Monotone in decreasing eps for non-binary controls.
        assert!(p.objective_penalized(1e-2, &xh) > p.objective_penalized(1e-1, &xh));
        // Penalty gap stays within [0, l/(4 eps)].
        let mut rng = StdRng::seed_from_u64(7);
        for _ in 0..50 {
            let u = DVector::from_fn(4, |_, _| rng.gen_range(0.0..1.0));
            let x = IterateX::new(y.clone(), u);
            let gap = p.objective_penalized(2.0, &x) - p.objective_raw(&x);
            assert!(gap >= -1e-12 && gap <= 4.0 / (4.0 * 2.0) + 1e-12);
        }
    }

    #[test]
    fn smart_round_examples() {
        let u = DVector::from_vec(vec![0.8, 0.7, 0.1]);
        assert_eq!(smart_round(&u, 2).as_slice(), &[1.0, 1.0, 0.0]);
        let u = DVector::from_vec(vec![0.63, 0.62, 0.61]);
        assert_eq!(smart_round(&u, 2).as_slice(), &[1.0, 1.0, 0.0]);
        let u = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_eq!(smart_round(&u, 2).as_slice(), &[1.0, 0.0, 0.0]);
        // Below one half, selected components round down to zero.
        let u = DVector::from_vec(vec![0.4, 0.3, 0.2]);
        assert_eq!(smart_round(&u, 2).as_slice(), &[0.0, 0.0, 0.0]);
        // Tie broken by lowest index; exactly one half rounds up.
        let u = DVector::from_vec(vec![0.5, 0.5, 0.5]);
        assert_eq!(smart_round(&u, 2).as_slice(), &[1.0, 1.0, 0.0]);
    }

    #[test]
    fn smart_round_satisfies_knapsack_randomized() {
        let mut rng = StdRng::seed_from_u64(8);
        for _ in 0..500 {
            let l = rng.gen_range(1..12);
            let s = rng.gen_range(1..=l);
            let u = DVector::from_fn(l, |_, _| rng.gen_range(0.0..1.0));
            let r = smart_round(&u, s);
            assert!(r.iter().all(|&v| v == 0.0 || v == 1.0));
            assert!(r.sum() as usize <= s);
        }
    }

    #[test]
    fn lift_and_membership() {
        let p = desk_problem(2, 2);
        let u = DVector::from_vec(vec![1.0, 0.0, 0.0, 1.0]);
        let x = p.lift_control(&u).unwrap();
        assert!(p.in_binary_set(&x));
        assert!(p.in_relaxed_set(&x));
        // Lift then smart round is the identity on the control.
        assert_eq!(p.smart_round(&x.control), u);
        // u = 0 lifts to the origin.
        let x0 = p.lift_control(&DVector::zeros(4)).unwrap();
        assert_eq!(x0.state.norm(), 0.0);
        // A wrong state fails the residual test.
        let bad = IterateX::new(x.state.clone() * 2.0, u.clone());
        assert!(!p.in_relaxed_set(&bad));
        // Too many active sources fail the knapsack test.
        let over = p.lift_control(&DVector::from_vec(vec![1.0, 1.0, 1.0, 0.0])).unwrap();
        assert!(!p.in_binary_set(&over));
    }

    #[test]
    fn feasibility_gap_examples() {
        let p = desk_problem(2, 1);
        assert_eq!(p.feasibility_gap(&DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0])), 0.0);
        let g = p.feasibility_gap(&DVector::from_vec(vec![0.95, 0.02, 0.03, 0.0]));
        assert!((g - 0.05).abs() < 1e-15);
        let p2 = desk_problem(2, 2);
        let g = p2.feasibility_gap(&DVector::from_vec(vec![0.63, 0.62, 0.61, 0.0]));
        assert!((g - 0.61).abs() < 1e-15);
    }

    #[test]
    fn chebyshev_distance_scalar_analogue() {
        let boxes = ChebyshevBoxes { rho: 0.4, beta: 10.0 };
        // Control-only analogue: u = 0.7 against the box around z_u = 0.
        let x = IterateX::new(DVector::zeros(0), DVector::from_vec(vec![0.7]));
        let d = boxes.distance(&x, &DVector::from_vec(vec![0.0]));
        assert!((d - 0.3).abs() < 1e-15);
        // Inside the box the distance is zero.
        let inside = IterateX::new(DVector::zeros(0), DVector::from_vec(vec![0.3]));
        assert_eq!(boxes.distance(&inside, &DVector::from_vec(vec![0.0])), 0.0);
    }

    #[test]
    fn smart_rounding_minimizes_box_distance() {
        // Randomized check of the rounding-optimality property: the box
        // around [x]_SR attains the minimal Chebyshev distance over the
        // binary feasible set (value equality; minimizers may tie).
        let p = desk_problem(2, 2);
        let boxes = ChebyshevBoxes::for_problem(&p).unwrap();
        let mut rng = StdRng::seed_from_u64(9);
        let l = p.n_controls();
        for _ in 0..500 {
            let mut u = DVector::from_fn(l, |_, _| rng.gen_range(0.0..1.0));
            let total = u.sum();
            if total > p.knapsack_bound as f64 {
                u *= p.knapsack_bound as f64 / total;
            }
            let x = p.lift_control(&u).unwrap();
            let d_sr = boxes.distance(&x, &p.smart_round(&u));
            let mut best = f64::INFINITY;
            for z in binary_controls_within_knapsack(l, p.knapsack_bound) {
                best = best.min(boxes.distance(&x, &z));
            }
            assert!((d_sr - best).abs() <= 1e-12, "d_sr {d_sr} best {best}");
        }
    }
}
