//! Sparse linear algebra kernel: CSR storage, banded direct factorizations,
//! right-preconditioned GMRES and the saddle-point preconditioner.

pub mod band;
pub mod gmres;
pub mod saddle;
pub mod sparse;

pub use band::{factorize, BandCholesky, BandLu, FactorKind, Factorization};
pub use gmres::{gmres, FnOperator, GmresResult, LinearOperator};
pub use saddle::{BlockTriangularPreconditioner, SaddleOperator, SaddleSystem};
pub use sparse::CsrMatrix;
