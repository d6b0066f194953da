//! Equal-order P1/P1 finite elements on triangles for Darcy and Stokes flow,
//! stabilized by generalized local projection on vertex patches.
//!
//! The crate builds criss-cross triangulations of the unit square, assembles
//! the stabilized saddle-point systems with a zero-mean pressure constraint,
//! solves them with a sparse direct factorization, and verifies convergence
//! against manufactured solutions. A small CLI (`glps-fem`) drives
//! convergence studies, single solves, and discrete inf-sup estimates.

pub mod assembly;
pub mod io;
pub mod mesh;
pub mod problems;
pub mod quadrature;
pub mod solver;
pub mod space;
pub mod stabilization;
pub mod verification;

pub use assembly::{ProblemKind, SaddleSystem};
pub use mesh::TriMesh;
pub use problems::ManufacturedProblem;
pub use solver::DiscreteSolution;
pub use stabilization::StabilizationParams;
pub use verification::{ConvergenceReport, StudyConfig};

/// Errors reported by mesh construction, assembly, solves, and I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A caller-supplied argument is outside its documented domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    /// A mesh invariant failed during construction or validation.
    #[error("mesh invariant violated: {0}")]
    MeshInvariant(String),
    /// The assembled system is (numerically) singular.
    #[error("singular system: {0}")]
    SingularSystem(String),
    /// A solver ran but failed to reach the required accuracy.
    #[error("solver failure: {0}")]
    SolverFailure(String),
    /// A hard size limit was exceeded (e.g. the dense inf-sup path).
    #[error("size limit exceeded: {0}")]
    SizeLimit(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
