//! Sparse linear-algebra backbone shared by the cell and macro solvers:
//! CSR storage, a flexible restarted GMRES for the nonsymmetric Hall systems,
//! preconditioned CG for the symmetric ones, and a dense LU kept around as a
//! reference solver for small systems.

pub mod csr;
pub mod dense;
pub mod krylov;

pub use csr::{Csr, CsrBuilder};
pub use krylov::{fgmres, pcg, JacobiPrecond, KrylovOpts, Precond, SolveStats};
