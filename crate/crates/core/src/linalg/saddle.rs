//! Newton saddle-point system of the interior point method and its
//! block-triangular preconditioner.
//!
//! Unknown ordering is `[dy (n), du (l), dz (1), dp (n), dq (1)]`. With
//! `A = blockdiag(M, D_u, theta_z)` and `B = [[J, -B_ctl, 0], [0, 1', 1]]`
//! the system matrix is `[[A, B'], [B, 0]]`, where `J` is the state Jacobian
//! (the stiffness matrix for linear PDE kinds) and `B_ctl` the control-to-load
//! matrix. `D_u` is assumed already convexified (strictly positive entries).

use nalgebra::{DMatrix, DVector};

use crate::linalg::band::Factorization;
use crate::linalg::gmres::LinearOperator;
use crate::linalg::sparse::CsrMatrix;

/// Assembled Newton system: block data plus right-hand side.
pub struct SaddleSystem<'a> {
    pub mass: &'a CsrMatrix,
    pub state_jac: &'a CsrMatrix,
    pub control_load: &'a DMatrix<f64>,
    pub d_u: DVector<f64>,
    pub theta_z: f64,
    pub rhs: DVector<f64>,
}

impl<'a> SaddleSystem<'a> {
    pub fn n(&self) -> usize {
        self.mass.nrows()
    }

    pub fn l(&self) -> usize {
        self.control_load.ncols()
    }

    /// Total dimension `(n + l + 1) + (n + 1)`.
    pub fn dim(&self) -> usize {
        2 * self.n() + self.l() + 2
    }

    pub fn operator(&self) -> SaddleOperator<'_> {
        SaddleOperator { sys: self }
    }
}

/// Matrix-vector action of the saddle system.
pub struct SaddleOperator<'a> {
    sys: &'a SaddleSystem<'a>,
}

struct BlockSplit {
    n: usize,
    l: usize,
}

impl BlockSplit {
    fn y(&self) -> std::ops::Range<usize> {
        0..self.n
    }
    fn u(&self) -> std::ops::Range<usize> {
        self.n..self.n + self.l
    }
    fn z(&self) -> usize {
        self.n + self.l
    }
    fn p(&self) -> std::ops::Range<usize> {
        self.n + self.l + 1..2 * self.n + self.l + 1
    }
    fn q(&self) -> usize {
        2 * self.n + self.l + 1
    }
}

impl LinearOperator for SaddleOperator<'_> {
    fn dim(&self) -> usize {
        self.sys.dim()
    }

    fn apply(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let s = self.sys;
        let sp = BlockSplit { n: s.n(), l: s.l() };
        let dy = x.rows(sp.y().start, sp.n);
        let du = x.rows(sp.u().start, sp.l);
        let dz = x[sp.z()];
        let dp = x.rows(sp.p().start, sp.n);
        let dq = x[sp.q()];

        let dy_v = DVector::from(dy.clone_owned());
        let dp_v = DVector::from(dp.clone_owned());
        let du_v = DVector::from(du.clone_owned());

        // Row y: M dy + J' dp
        let mut row_y = s.mass.mul_vec(&dy_v);
        row_y += s.state_jac.mul_transpose_vec(&dp_v);
        // Row u: D_u du - B' dp + dq 1
        let mut row_u = s.control_load.tr_mul(&dp_v);
        for i in 0..sp.l {
            row_u[i] = s.d_u[i] * du_v[i] - row_u[i] + dq;
        }
        // Row z: theta_z dz + dq
        let row_z = s.theta_z * dz + dq;
        // Row p: J dy - B du
        let mut row_p = s.state_jac.mul_vec(&dy_v);
        row_p -= s.control_load * &du_v;
        // Row q: 1' du + dz
        let row_q = du_v.sum() + dz;

        out.rows_mut(sp.y().start, sp.n).copy_from(&row_y);
        out.rows_mut(sp.u().start, sp.l).copy_from(&row_u);
        out[sp.z()] = row_z;
        out.rows_mut(sp.p().start, sp.n).copy_from(&row_p);
        out[sp.q()] = row_q;
    }
}

/// Block-triangular preconditioner `P = [[A_hat, 0], [B, -S_hat]]` with
/// `A_hat = A` applied exactly and the Schur complement approximated by
/// `S_hat = blockdiag(J_s M^{-1} J_s', 1)` through cached factorizations.
///
/// `schur_jac`/`schur_fact` normally refer to the stiffness matrix whose
/// factorization is computed once per system; `bblock_jac` is the Jacobian
/// appearing in the constraint rows (identical for linear PDE kinds).
pub struct BlockTriangularPreconditioner<'a> {
    pub mass: &'a CsrMatrix,
    pub mass_fact: &'a Factorization,
    pub schur_fact: &'a Factorization,
    pub bblock_jac: &'a CsrMatrix,
    pub control_load: &'a DMatrix<f64>,
    pub d_u: DVector<f64>,
    pub theta_z: f64,
}

impl<'a> BlockTriangularPreconditioner<'a> {
    pub fn for_system(
        sys: &'a SaddleSystem<'a>,
        mass_fact: &'a Factorization,
        schur_fact: &'a Factorization,
    ) -> Self {
        Self {
            mass: sys.mass,
            mass_fact,
            schur_fact,
            bblock_jac: sys.state_jac,
            control_load: sys.control_load,
            d_u: sys.d_u.clone(),
            theta_z: sys.theta_z,
        }
    }

    fn n(&self) -> usize {
        self.mass.nrows()
    }

    fn l(&self) -> usize {
        self.control_load.ncols()
    }

    /// Applies the Schur approximation inverse: `(J M^{-1} J')^{-1} r`,
    /// i.e. a J-solve and a J'-solve around a mass multiply.
    fn schur_solve(&self, r: &DVector<f64>) -> DVector<f64> {
        let a = self.schur_fact.solve(r);
        let b = self.mass.mul_vec(&a);
        self.schur_fact.solve_transpose(&b)
    }

    /// Forward application of `P` (used by round-trip tests).
    pub fn apply_forward(&self, x: &DVector<f64>, out: &mut DVector<f64>) {
        let (n, l) = (self.n(), self.l());
        let sp = BlockSplit { n, l };
        let wy = DVector::from(x.rows(sp.y().start, n).clone_owned());
        let wu = DVector::from(x.rows(sp.u().start, l).clone_owned());
        let wz = x[sp.z()];
        let wp = DVector::from(x.rows(sp.p().start, n).clone_owned());
        let wq = x[sp.q()];

        let row_y = self.mass.mul_vec(&wy);
        let mut row_u = DVector::zeros(l);
        for i in 0..l {
            row_u[i] = self.d_u[i] * wu[i];
        }
        let row_z = self.theta_z * wz;
        // B w1 - S_hat w2
        let mut row_p = self.bblock_jac.mul_vec(&wy);
        row_p -= self.control_load * &wu;
        let jt_wp = self.bblock_jac.mul_transpose_vec(&wp);
        let m_inv = self.mass_fact.solve(&jt_wp);
        row_p -= self.bblock_jac.mul_vec(&m_inv);
        let row_q = wu.sum() + wz - wq;

        out.rows_mut(sp.y().start, n).copy_from(&row_y);
        out.rows_mut(sp.u().start, l).copy_from(&row_u);
        out[sp.z()] = row_z;
        out.rows_mut(sp.p().start, n).copy_from(&row_p);
        out[sp.q()] = row_q;
    }
}

impl LinearOperator for BlockTriangularPreconditioner<'_> {
    fn dim(&self) -> usize {
        2 * self.n() + self.l() + 2
    }

    /// Applies `P^{-1}`: solve the `A_hat` block, then the Schur block.
    fn apply(&self, v: &DVector<f64>, out: &mut DVector<f64>) {
        let (n, l) = (self.n(), self.l());
        let sp = BlockSplit { n, l };
        let vy = DVector::from(v.rows(sp.y().start, n).clone_owned());
        let vu = DVector::from(v.rows(sp.u().start, l).clone_owned());
        let vz = v[sp.z()];
        let vp = DVector::from(v.rows(sp.p().start, n).clone_owned());
        let vq = v[sp.q()];

        let wy = self.mass_fact.solve(&vy);
        let mut wu = DVector::zeros(l);
        for i in 0..l {
            wu[i] = vu[i] / self.d_u[i];
        }
        let wz = vz / self.theta_z;

        // w2 = S_hat^{-1} (B w1 - v2)
        let mut rp = self.bblock_jac.mul_vec(&wy);
        rp -= self.control_load * &wu;
        rp -= &vp;
        let wp = self.schur_solve(&rp);
        let wq = wu.sum() + wz - vq;

        out.rows_mut(sp.y().start, n).copy_from(&wy);
        out.rows_mut(sp.u().start, l).copy_from(&wu);
        out[sp.z()] = wz;
        out.rows_mut(sp.p().start, n).copy_from(&wp);
        out[sp.q()] = wq;
    }
}
