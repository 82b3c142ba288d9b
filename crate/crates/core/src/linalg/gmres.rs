//! Full (non-restarted) GMRES with optional right preconditioning.
//!
//! Right preconditioning is used throughout this crate because the Arnoldi
//! least-squares residual then coincides with the *unpreconditioned* residual
//! of the original system, which is the quantity the interior point method's
//! inexactness rule is stated in.

use nalgebra::DVector;

/// A square linear operator given by its action on a vector.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>);
}

/// Wraps a closure as a [`LinearOperator`].
pub struct FnOperator<F: Fn(&DVector<f64>, &mut DVector<f64>)> {
    pub dim: usize,
    pub f: F,
}

impl<F: Fn(&DVector<f64>, &mut DVector<f64>)> LinearOperator for FnOperator<F> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        (self.f)(x, out)
    }
}

impl LinearOperator for crate::linalg::CsrMatrix {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        self.mul_vec_into(x, out);
    }
}

#[derive(Debug, Clone)]
pub struct GmresResult {
    pub x: DVector<f64>,
    /// Number of Krylov (Arnoldi) steps performed.
    pub iterations: usize,
    /// Relative unpreconditioned residual of the returned iterate.
    pub residual: f64,
    pub converged: bool,
    /// Relative residual after each iteration (non-increasing for full GMRES).
    pub residual_history: Vec<f64>,
}

/// Solve `A x = b` with full GMRES, starting from `x = 0`.
///
/// Stops at the first iterate whose relative residual `||b - A x|| / ||b||`
/// drops to `rel_tol`, or after `max_iters` Krylov steps (flagged via
/// `converged = false`). Breakdown of the Arnoldi process means the solution
/// lies in the current subspace and is treated as convergence.
pub fn gmres(
    op: &dyn LinearOperator,
    rhs: &DVector<f64>,
    preconditioner: Option<&dyn LinearOperator>,
    rel_tol: f64,
    max_iters: usize,
) -> GmresResult {
    let n = op.dim();
    assert_eq!(rhs.len(), n, "rhs dimension mismatch");
    let beta = rhs.norm();
    if beta == 0.0 {
        return GmresResult {
            x: DVector::zeros(n),
            iterations: 0,
            residual: 0.0,
            converged: true,
            residual_history: Vec::new(),
        };
    }

    let max_iters = max_iters.min(n);
    let mut basis: Vec<DVector<f64>> = vec![rhs / beta];
    // Hessenberg columns after Givens reduction (upper triangular part).
    let mut h_cols: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut history = Vec::new();

    let mut work = DVector::zeros(n);
    let mut precond_work = DVector::zeros(n);

    let mut iterations = 0;
    let mut converged = false;

    for k in 0..max_iters {
        // w = A P^{-1} v_k
        let z = match preconditioner {
            Some(p) => {
                p.apply(&basis[k], &mut precond_work);
                &precond_work
            }
            None => &basis[k],
        };
        op.apply(z, &mut work);
        let mut w = work.clone();

        // Modified Gram-Schmidt.
        let mut h = vec![0.0f64; k + 2];
        for (i, v) in basis.iter().enumerate() {
            let hik = w.dot(v);
            h[i] = hik;
            w.axpy(-hik, v, 1.0);
        }
        let hnext = w.norm();
        h[k + 1] = hnext;

        // Apply accumulated Givens rotations to the new column.
        for i in 0..k {
            let t = cs[i] * h[i] + sn[i] * h[i + 1];
            h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
            h[i] = t;
        }
        // New rotation to annihilate h[k+1].
        let (c, s) = givens(h[k], h[k + 1]);
        let hkk = c * h[k] + s * h[k + 1];
        h[k] = hkk;
        h[k + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        let gk = g[k];
        g[k] = c * gk;
        g.push(-s * gk);

        h_cols.push(h);
        iterations = k + 1;
        let rel_res = g[k + 1].abs() / beta;
        history.push(rel_res);

        let breakdown = hnext <= 1e-14 * beta.max(1.0);
        if rel_res <= rel_tol || breakdown {
            converged = true;
            break;
        }
        if k + 1 < max_iters {
            basis.push(&w / hnext);
        }
    }

    // Back substitution for y in H y = g.
    let m = iterations;
    let mut y = vec![0.0f64; m];
    for i in (0..m).rev() {
        let mut s = g[i];
        for j in (i + 1)..m {
            s -= h_cols[j][i] * y[j];
        }
        y[i] = s / h_cols[i][i];
    }
    let mut t = DVector::zeros(n);
    for (i, yi) in y.iter().enumerate() {
        t.axpy(*yi, &basis[i], 1.0);
    }
    let x = match preconditioner {
        Some(p) => {
            let mut out = DVector::zeros(n);
            p.apply(&t, &mut out);
            out
        }
        None => t,
    };

    GmresResult {
        x,
        iterations,
        residual: history.last().copied().unwrap_or(1.0),
        converged,
        residual_history: history,
    }
}

fn givens(a: f64, b: f64) -> (f64, f64) {
    if b == 0.0 {
        (1.0, 0.0)
    } else {
        let r = a.hypot(b);
        (a / r, b / r)
    }
}
