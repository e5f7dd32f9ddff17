//! Layers, analytic forward/backward passes and parameter bookkeeping.
//!
//! There is no general computation graph. A [`Network`] is an ordered list of
//! [`LayerSpec`]s evaluated front to back, and its reverse pass walks the same
//! list back to front using the activations retained in a [`Trace`].

mod layers;
mod network;

pub use layers::{
    conv2d_backward, conv2d_forward, fc_backward, fc_forward, leaky_relu, leaky_relu_backward,
    sigmoid, sigmoid_backward, Conv2dSpec, LayerSpec, DEFAULT_LEAKY_SLOPE,
};
pub use network::{
    xavier_limit, GroupGrad, Gradients, Network, NetworkBuilder, NetworkParameters, ParamGroup,
    Trace,
};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NnError {
    #[error("{op}: dimension mismatch on axis `{axis}`: expected {expected}, found {found}")]
    Dimension {
        op: &'static str,
        axis: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid layer configuration: {0}")]
    Config(String),
    #[error("invalid pass state: {0}")]
    State(String),
}
