//! Training, pruning, verification and repair of fully-connected ReLU
//! networks with batch normalization.

pub mod cli;
pub mod datasets;
pub mod experiment;
pub mod model_io;
pub mod network;
pub mod pruning;
pub mod repair;
pub mod tensor;
pub mod training;
pub mod verification;
