pub mod cli;
pub mod codec;
pub mod dataset;
pub mod geometry;
pub mod metrics;
pub mod nn;
pub mod training;
pub mod tensor;
