//! Shared helpers for the integration and acceptance suites: instance
//! builders mirroring the experiment protocol, and an independent
//! projected-gradient solver for the convex regime used as an oracle
//! against the interior point method.

#![allow(dead_code)]

use mipdeco::fem::{self, FemSystem, GaussianSourceGrid};
use mipdeco::{build_mesh, MipdecoProblem};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

/// Independent per-instance RNG stream derived from a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    master ^ (0x9E3779B97F4A7C15u64.wrapping_mul(index.wrapping_add(1)))
}

pub fn poisson_system(h_exp: i32, m: usize) -> Arc<FemSystem> {
    let mesh = build_mesh(2f64.powi(-h_exp)).unwrap();
    let grid = GaussianSourceGrid::standard(m).unwrap();
    Arc::new(fem::assemble_poisson(mesh, grid).unwrap())
}

pub fn nonlinear_system(h_exp: i32, m: usize) -> Arc<FemSystem> {
    let mesh = build_mesh(2f64.powi(-h_exp)).unwrap();
    let grid = GaussianSourceGrid::standard(m).unwrap();
    Arc::new(fem::assemble_nonlinear_poisson(mesh, grid).unwrap())
}

/// Desired state from `count` Gaussian sources at random centers in the
/// source subdomain, with the grid's height and width (the random-instance
/// recipe of the experiment protocol).
pub fn random_centers_desired_state(
    sys: &Arc<FemSystem>,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> DVector<f64> {
    let grid = match &sys.sources {
        mipdeco::SourceDescriptor::Gaussian(g) => g.clone(),
        _ => panic!("random-centers recipe needs Gaussian sources"),
    };
    let (a, b) = grid.bounds;
    let centers: Vec<[f64; 2]> = (0..count)
        .map(|_| [rng.gen_range(a..b), rng.gen_range(a..b)])
        .collect();
    let nodal = DVector::from_fn(sys.n_dofs(), |i, _| {
        let x = sys.mesh.coords[sys.mesh.interior[i]];
        centers.iter().map(|&c| grid.eval_free(c, x)).sum::<f64>()
    });
    let load = sys.mass.mul_vec(&nodal);
    sys.solve_for_load(&load).unwrap()
}

/// Desired state generated by a binary grid control (the recovery recipe).
pub fn grid_control_desired_state(sys: &Arc<FemSystem>, active: &[usize]) -> DVector<f64> {
    let mut u = DVector::zeros(sys.n_controls());
    for &i in active {
        u[i] = 1.0;
    }
    sys.solve_state(&u).unwrap()
}

/// Random binary control with exactly `s` ones.
pub fn random_binary_control(l: usize, s: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..l).collect();
    for i in 0..s {
        let j = rng.gen_range(i..l);
        idx.swap(i, j);
    }
    let mut active = idx[..s].to_vec();
    active.sort_unstable();
    active
}

/// Reduced quadratic data of the penalized relaxation over the control:
/// `g(u) = 1/2 u' H u + c' u + c0` with `H = G - (2/eps) I`,
/// `G_ij = f(e_i)' M f(e_j)`.
pub struct ReducedQp {
    pub h: DMatrix<f64>,
    pub c: DVector<f64>,
    pub s: f64,
    pub lipschitz: f64,
}

impl ReducedQp {
    pub fn build(problem: &MipdecoProblem, eps: Option<f64>) -> Self {
        let sys = &problem.system;
        let l = sys.n_controls();
        let factors = sys.factors().unwrap();
        // Columns of F = K^{-1} B.
        let mut states = Vec::with_capacity(l);
        for i in 0..l {
            let mut e = DVector::zeros(l);
            e[i] = 1.0;
            let load = sys.load_for_control(&e);
            states.push(factors.stiffness.solve(&load));
        }
        let mut gram = DMatrix::zeros(l, l);
        let m_states: Vec<DVector<f64>> = states.iter().map(|y| sys.mass.mul_vec(y)).collect();
        for i in 0..l {
            for j in 0..l {
                gram[(i, j)] = states[i].dot(&m_states[j]);
            }
        }
        let myd = sys.mass.mul_vec(&problem.desired_state);
        let mut c = DVector::from_fn(l, |i, _| -states[i].dot(&myd));
        let mut h = gram;
        if let Some(e) = eps {
            for i in 0..l {
                h[(i, i)] -= 2.0 / e;
                c[i] += 1.0 / e;
            }
        }
        // Lipschitz constant of the gradient via the symmetric eigenvalues.
        let eig = h.clone().symmetric_eigen();
        let lipschitz = eig.eigenvalues.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
        Self {
            h,
            c,
            s: problem.knapsack_bound as f64,
            lipschitz,
        }
    }

    fn gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.h * u + &self.c
    }

    /// Euclidean projection onto the box intersected with the knapsack
    /// half-space, by bisection on the shift of the clamped vector.
    pub fn project(&self, v: &DVector<f64>) -> DVector<f64> {
        let clamp_shift = |nu: f64| v.map(|x| (x - nu).clamp(0.0, 1.0));
        let w = clamp_shift(0.0);
        if w.sum() <= self.s + 1e-15 {
            return w;
        }
        let mut lo = 0.0f64;
        let mut hi = v.max();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if clamp_shift(mid).sum() > self.s {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        clamp_shift(0.5 * (lo + hi))
    }

    /// Accelerated projected gradient with restart; returns the stationary
    /// control. Independent of the interior point solution path.
    pub fn solve_projected_gradient(&self) -> DVector<f64> {
        let l = self.c.len();
        let step = 1.0 / self.lipschitz.max(1e-12);
        let mut u = DVector::from_element(l, (self.s / l as f64).min(0.5));
        let mut v = u.clone();
        let mut t = 1.0f64;
        let mut obj_prev = f64::INFINITY;
        for _ in 0..500_000 {
            let grad = self.gradient(&v);
            let u_next = self.project(&(&v - step * &grad));
            let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
            let obj = 0.5 * u_next.dot(&(&self.h * &u_next)) + self.c.dot(&u_next);
            if obj > obj_prev {
                // Restart the momentum when the objective increases.
                v = u.clone();
                t = 1.0;
                obj_prev = f64::INFINITY;
                continue;
            }
            let fixed_point = (&u_next - &u).amax();
            v = &u_next + ((t - 1.0) / t_next) * (&u_next - &u);
            u = u_next;
            t = t_next;
            obj_prev = obj;
            if fixed_point <= 1e-13 {
                break;
            }
        }
        u
    }
}
