//! Gaussian PSD probability models: non-negative densities of the form
//! `f(x) = sum_ij A_ij k(x_i, x) k(x_j, x)` with a PSD coefficient matrix
//! `A` and Gaussian kernel `k`, closed under products, marginalization and
//! partial evaluation.

pub mod cli;
pub mod compression;
pub mod error;
pub mod hmm;
pub mod io;
pub mod kernel;
pub mod learning;
pub mod linalg;
pub mod model;
pub mod moments;
pub mod oracle;

pub use error::{PsdError, Result};
pub use kernel::{Hypercube, PointMatrix, Precision};
pub use model::{markov_transition, Domain, GaussianPsdModel, VariableSplit};
