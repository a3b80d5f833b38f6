//! Spatial vertical regression for synthetic-control style counterfactual estimation.

pub mod baselines;
pub mod dist;
pub mod effects;
pub mod error;
pub mod gp;
pub mod linalg;
pub mod model;
pub mod output;
pub mod panel;
pub mod pipeline;
pub mod sampler;
pub mod scalar;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};

pub type Matrix = linalg::DenseMatrix<f64>;
pub type SymMatrix = linalg::SymMatrix<f64>;
pub type CholFactor = linalg::CholFactor<f64>;
pub type DistanceMatrix = gp::DistanceMatrix<f64>;

pub type MatrixF32 = linalg::DenseMatrix<f32>;
pub type SymMatrixF32 = linalg::SymMatrix<f32>;
pub type CholFactorF32 = linalg::CholFactor<f32>;
pub type DistanceMatrixF32 = gp::DistanceMatrix<f32>;
