//! Exact asymptotic corrections for maximum-likelihood logistic regression
//! when the number of features grows proportionally with the sample size.

pub mod amp;
pub mod error;
pub mod glm;
pub mod inference;
pub mod linalg;
pub mod normal;
pub mod phase_boundary;
pub mod probe_frontier;
pub mod prox;
pub mod quadrature;
pub mod roots;
mod serde_vec;
pub mod sim;
pub mod state_evolution;

pub use error::{Error, Result};
