//! Detection of machine-generated career trajectories.
//!
//! Genuine resumes are folded into a trusted heterogeneous graph of job
//! titles, companies and job descriptions. Every resume under test becomes a
//! small subgraph that is expanded with nearby trusted structure, then scored
//! by a relational message-passing network with a self-attention readout.
//!
//! Numerical code is generic over [`Scalar`] (`f32` or `f64`); the aliases at
//! the crate root fix it to `f64`, which is what training and gradient
//! checking use.

pub mod augment;
pub mod autodiff;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod generators;
pub mod graph;
pub mod model;
pub mod rng;
pub mod scalar;

pub use error::{Error, ErrorClass, Result};
pub use scalar::Scalar;

pub type Tape<'a> = autodiff::Tape<'a, f64>;
pub type Var = autodiff::Var;
pub type ParamSet = autodiff::ParamSet<f64>;
pub type Adam = autodiff::Adam<f64>;
pub type ModelParams = model::ModelParams<f64>;

/// Version string embedded in every written artifact.
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
