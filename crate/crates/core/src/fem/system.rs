//! Discretized PDE systems and forward solves.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use once_cell::sync::OnceCell;

use crate::error::{Error, Result};
use crate::fem::assemble;
use crate::fem::mesh::{build_mesh, Mesh2D};
use crate::fem::sources::{GaussianSourceGrid, PatchGrid, SourceDescriptor};
use crate::linalg::{factorize, CsrMatrix, FactorKind, Factorization};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PdeKind {
    Poisson,
    ConvectionDiffusion,
    NonlinearPoisson,
}

/// The recirculating wind of the convection-diffusion problem.
pub fn recirculating_wind(x: [f64; 2]) -> [f64; 2] {
    [
        2.0 * x[1] * (1.0 - x[0] * x[0]),
        -2.0 * x[0] * (1.0 - x[1] * x[1]),
    ]
}

/// Cached direct factorizations of the mass and stiffness matrices,
/// computed once per system and reused by every solver component.
pub struct Factors {
    pub mass: Factorization,
    pub stiffness: Factorization,
}

/// One discretized PDE: interior-restricted matrices, source matrix and
/// the control-to-load map. Immutable after assembly and safe to share.
pub struct FemSystem {
    pub kind: PdeKind,
    pub mesh: Mesh2D,
    /// Mass matrix on interior DOFs (SPD).
    pub mass: CsrMatrix,
    /// Stiffness matrix on interior DOFs; SPD for Poisson kinds,
    /// nonsymmetric for convection-diffusion.
    pub stiffness: CsrMatrix,
    /// Source matrix: nodal evaluations (Gaussian case) or patch-indicator
    /// loads (piecewise-constant case), one column per source.
    pub phi: DMatrix<f64>,
    /// Control-to-load matrix `B`: `M * phi` in the Gaussian case, `phi`
    /// itself in the patch case. The state equation is `K y = B u`.
    pub control_load: DMatrix<f64>,
    pub sources: SourceDescriptor,
    factors: OnceCell<Factors>,
}

/// Assembles the P1 Poisson system with Gaussian sources.
pub fn assemble_poisson(mesh: Mesh2D, sources: GaussianSourceGrid) -> Result<FemSystem> {
    assemble_gaussian_kind(mesh, sources, PdeKind::Poisson)
}

/// Assembles the nonlinear Poisson variant (`-Lap y + y^2 = sum u_i phi_i`);
/// matrices coincide with the linear Poisson system, the quadratic term is
/// applied through [`FemSystem::nonlinear_residual`].
pub fn assemble_nonlinear_poisson(mesh: Mesh2D, sources: GaussianSourceGrid) -> Result<FemSystem> {
    assemble_gaussian_kind(mesh, sources, PdeKind::NonlinearPoisson)
}

fn assemble_gaussian_kind(
    mesh: Mesh2D,
    sources: GaussianSourceGrid,
    kind: PdeKind,
) -> Result<FemSystem> {
    let (a, b) = sources.bounds;
    if a <= 0.0 || b >= 1.0 {
        return Err(Error::InvalidParameter(format!(
            "source subdomain [{a}, {b}]^2 must be contained in (0,1)^2"
        )));
    }
    let (mass, stiffness) = assemble::p1_mass_stiffness(&mesh)?;
    let phi = assemble::gaussian_nodal_matrix(&mesh, &sources);
    let mut control_load = DMatrix::zeros(phi.nrows(), phi.ncols());
    for c in 0..phi.ncols() {
        let col = DVector::from(phi.column(c).clone_owned());
        control_load.set_column(c, &mass.mul_vec(&col));
    }
    Ok(FemSystem {
        kind,
        mesh,
        mass,
        stiffness,
        phi,
        control_load,
        sources: SourceDescriptor::Gaussian(sources),
        factors: OnceCell::new(),
    })
}

/// Assembles the Q1 SUPG convection-diffusion system with the recirculating
/// wind and an `m x m` patch decomposition of the domain.
pub fn assemble_convection_diffusion(mesh: Mesh2D, patches: PatchGrid) -> Result<FemSystem> {
    assemble_convection_diffusion_with_wind(mesh, patches, &recirculating_wind)
}

/// Same as [`assemble_convection_diffusion`] with a caller-supplied wind
/// field (zero wind reproduces the pure diffusion matrix).
pub fn assemble_convection_diffusion_with_wind(
    mesh: Mesh2D,
    patches: PatchGrid,
    wind: &dyn Fn([f64; 2]) -> [f64; 2],
) -> Result<FemSystem> {
    if mesh.cells_per_side % patches.m != 0 {
        return Err(Error::InvalidParameter(format!(
            "patch grid m = {} does not align with {} cells per side",
            patches.m, mesh.cells_per_side
        )));
    }
    let (mass, stiffness) = assemble::q1_supg_mass_stiffness(&mesh, wind)?;
    let phi = assemble::patch_load_matrix(&mesh, &patches, wind);
    let control_load = phi.clone();
    Ok(FemSystem {
        kind: PdeKind::ConvectionDiffusion,
        mesh,
        mass,
        stiffness,
        phi,
        control_load,
        sources: SourceDescriptor::Patches(patches),
    factors: OnceCell::new(),
    })
}

impl FemSystem {
    /// Number of interior DOFs.
    pub fn n_dofs(&self) -> usize {
        self.mass.nrows()
    }

    /// Number of controls `l`.
    pub fn n_controls(&self) -> usize {
        self.phi.ncols()
    }

    /// Cached factorizations of `M` (Cholesky) and `K` (Cholesky when
    /// symmetric, LU otherwise), computed on first use.
    pub fn factors(&self) -> Result<&Factors> {
        self.factors.get_or_try_init(|| {
            let mass = factorize(&self.mass, FactorKind::SymmetricPositiveDefinite)?;
            let kind = match self.kind {
                PdeKind::Poisson | PdeKind::NonlinearPoisson => {
                    FactorKind::SymmetricPositiveDefinite
                }
                PdeKind::ConvectionDiffusion => FactorKind::General,
            };
            let stiffness = factorize(&self.stiffness, kind)?;
            Ok(Factors { mass, stiffness })
        })
    }

    /// Control-to-load vector `B u`.
    pub fn load_for_control(&self, u: &DVector<f64>) -> DVector<f64> {
        &self.control_load * u
    }

    /// Solves the state equation for a control: `K y = B u` for linear
    /// kinds, `F(y, u) = 0` by damped Newton for the nonlinear kind. The
    /// solution is verified to relative residual `1e-10`.
    pub fn solve_state(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        if u.len() != self.n_controls() {
            return Err(Error::DimensionMismatch(format!(
                "control has length {}, expected {}",
                u.len(),
                self.n_controls()
            )));
        }
        self.solve_for_load(&self.load_for_control(u))
    }

    /// Solves the PDE for an arbitrary load vector: `K y = b` for linear
    /// kinds, `K y + N(y) = b` by damped Newton for the nonlinear kind.
    pub fn solve_for_load(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        let scale = b.norm().max(1.0);
        match self.kind {
            PdeKind::Poisson | PdeKind::ConvectionDiffusion => {
                let y = self.factors()?.stiffness.solve(b);
                let res = (b - self.stiffness.mul_vec(&y)).norm() / scale;
                if res > 1e-10 {
                    return Err(Error::SolveAccuracy {
                        residual: res,
                        required: 1e-10,
                    });
                }
                Ok(y)
            }
            PdeKind::NonlinearPoisson => self.solve_state_newton(b, scale),
        }
    }

    fn solve_state_newton(&self, b: &DVector<f64>, scale: f64) -> Result<DVector<f64>> {
        let n = self.n_dofs();
        let mut y = DVector::zeros(n);
        let mut res = self.nonlinear_residual_for_load(&y, b);
        let mut res_norm = res.norm();
        for _ in 0..50 {
            if res_norm <= 1e-10 * scale {
                return Ok(y);
            }
            let jac = self.state_jacobian_owned(&y)?;
            let fact = factorize(&jac, FactorKind::General)?;
            let step = fact.solve(&res);
            let mut alpha = 1.0;
            let mut accepted = false;
            for _ in 0..10 {
                let trial = &y - alpha * &step;
                let trial_res = self.nonlinear_residual_for_load(&trial, b);
                let trial_norm = trial_res.norm();
                if trial_norm < res_norm {
                    y = trial;
                    res = trial_res;
                    res_norm = trial_norm;
                    accepted = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !accepted {
                return Err(Error::NewtonFailure { residual: res_norm / scale });
            }
        }
        if res_norm <= 1e-10 * scale {
            Ok(y)
        } else {
            Err(Error::NewtonFailure { residual: res_norm / scale })
        }
    }

    fn nonlinear_residual_for_load(&self, y: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let mut r = self.stiffness.mul_vec(y);
        r += assemble::p1_quadratic_term(&self.mesh, y);
        r -= b;
        r
    }

    /// PDE residual `F(y, u)`: `K y - B u` for linear kinds,
    /// `K y + N(y) - B u` for the nonlinear kind.
    pub fn nonlinear_residual(&self, y: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let b = self.load_for_control(u);
        match self.kind {
            PdeKind::Poisson | PdeKind::ConvectionDiffusion => self.stiffness.mul_vec(y) - b,
            PdeKind::NonlinearPoisson => self.nonlinear_residual_for_load(y, &b),
        }
    }

    /// State Jacobian `F'_y`: the stiffness matrix for linear kinds,
    /// `K + 2 W(y)` for the nonlinear kind.
    pub fn state_jacobian(&self, y: &DVector<f64>) -> Result<Cow<'_, CsrMatrix>> {
        match self.kind {
            PdeKind::Poisson | PdeKind::ConvectionDiffusion => Ok(Cow::Borrowed(&self.stiffness)),
            PdeKind::NonlinearPoisson => Ok(Cow::Owned(self.state_jacobian_owned(y)?)),
        }
    }

    fn state_jacobian_owned(&self, y: &DVector<f64>) -> Result<CsrMatrix> {
        let w = assemble::p1_weighted_mass(&self.mesh, y)?;
        self.stiffness.add_scaled(&w, 2.0)
    }

    /// Control Jacobian `F'_u = -B`, constant in `u`.
    pub fn control_jacobian(&self) -> DMatrix<f64> {
        -self.control_load.clone()
    }
}

/// Manufactured-solution L2 error of the P1 Poisson discretization at step
/// size `h`, for `y = sin(pi x1) sin(pi x2)` with load `f = 2 pi^2 y`
/// interpolated nodally. Successive errors contract by about four per mesh
/// halving.
pub fn manufactured_solution_error(h: f64) -> Result<f64> {
    use std::f64::consts::PI;
    let mesh = build_mesh(h)?;
    let (mass, stiffness) = assemble::p1_mass_stiffness(&mesh)?;
    let exact = |x: [f64; 2]| (PI * x[0]).sin() * (PI * x[1]).sin();
    let f = DVector::from_fn(mesh.interior_count(), |i, _| {
        2.0 * PI * PI * exact(mesh.coords[mesh.interior[i]])
    });
    let rhs = mass.mul_vec(&f);
    let fact = factorize(&stiffness, FactorKind::SymmetricPositiveDefinite)?;
    let y = fact.solve(&rhs);
    Ok(assemble::p1_l2_error(&mesh, &y, &exact))
}
