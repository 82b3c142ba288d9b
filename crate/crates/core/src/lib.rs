//! Solvers for mixed-integer PDE-constrained optimal control (MIPDECO).
//!
//! The problem class: fit a desired state by activating at most `S` out of
//! `l` source functions on the right-hand side of an elliptic PDE,
//!
//! ```text
//! min  1/2 (y - y_d)' M (y - y_d)
//! s.t. K y = M Phi u,   u in {0,1}^l,   sum(u) <= S.
//! ```
//!
//! Binary constraints are handled by an exact penalty reformulation: the
//! concave term `1/eps * sum u_i (1 - u_i)` is added to the objective and the
//! integrality constraint is relaxed to the box `[0,1]^l`. The crate provides
//!
//! * [`fem`]: structured meshes and finite element matrices for the Poisson,
//!   convection-diffusion (SUPG-stabilized) and nonlinear Poisson problems,
//! * [`linalg`]: sparse storage, banded direct factorizations, right
//!   preconditioned GMRES and the block-triangular saddle-point
//!   preconditioner used by the interior point method,
//! * [`model`]: objective functions, feasible-set tests, smart rounding and
//!   Chebyshev box distances,
//! * [`ipm`]: the structure-exploiting inexact interior point local solver,
//! * [`penalty`]: the outer algorithms (simple penalty, exact penalty loop,
//!   and the perturbation-driven improved penalty algorithm),
//! * [`oracle`]: brute-force enumeration of the binary feasible set, used as
//!   ground truth at small control dimensions.

pub mod error;
pub mod fem;
pub mod ipm;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod penalty;

pub use error::{Error, Result};
pub use fem::{
    build_mesh, FemSystem, GaussianSourceGrid, Mesh2D, PatchGrid, PdeKind, SourceDescriptor,
};
pub use ipm::{ipm_solve, IpmConfig, IpmExit, IpmTrace};
pub use model::{smart_round, ChebyshevBoxes, IterateX, MipdecoProblem};
pub use oracle::{enumerate_global_min, EnumerationBudget, OracleSolution};
pub use penalty::{
    default_initial_iterate, exp_algorithm, ipa, simple_penalty, ExpConfig, ExpSubsolver,
    IpmCallRecord, OuterConfig, SolveReport,
};
