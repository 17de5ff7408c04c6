//! Vertex centrality toolkit: exact measures, BTER synthetic networks,
//! pivot-sampling approximation and a Levenberg–Marquardt trained
//! multilayer perceptron that predicts betweenness and closeness ranks from
//! cheap centralities.

pub mod bter;
pub mod centrality;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod features;
pub mod graph;
pub mod neural;
mod parallel;
pub mod sampling;

#[cfg(any(test, feature = "oracles"))]
pub mod oracle;

pub use error::{Error, Result};
pub use parallel::default_threads;
