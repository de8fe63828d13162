//! Problem ingestion: 1-D elliptic generators and configuration documents.

mod config;
mod elliptic;

pub use crate::nonlinearity::nonlinearity_eval;
pub use config::{load_problem, GeneratorSource, ProblemConfig, ProblemSpec};
pub use elliptic::{discretize_laplacian_1d, first_eigenfunction, Boundary, EllipticSpec1D};
