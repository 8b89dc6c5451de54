//! Inductive graph neural network engine: graph storage, heuristic neighbor
//! sampling, the GAIN layer with its autodiff backend, losses, metrics and
//! the training loop.

pub mod graph;
pub mod model;
pub mod objective;
pub mod rng;
pub mod sampler;
pub mod trainer;
pub mod tensor;
