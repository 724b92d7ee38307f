//! Reference implementations of the two attention blocks with analytic
//! forward/backward passes.
//!
//! This is a verification substrate, not an inference engine: everything is
//! dense double precision, single threaded, and written so each operator in
//! the block diagrams maps to one named primitive. The analytic gradients are
//! checked against central finite differences by [`grad_check`], which is the
//! load-bearing numerical property of the module.

mod gradcheck;
mod lga;
mod ops;
mod rcm;
mod serialize;
mod tensor;

pub use gradcheck::{grad_check, GradReport, GroupReport, ModuleKind};
pub use lga::{lga_backward, lga_forward, LgaGrads, LgaOverrides, LgaParams};
pub use ops::{Conv2d, ConvGrads, DwConv2d, LinGrads, Linear};
pub use rcm::{rcm_backward, rcm_forward, RcmGrads, RcmParams};
pub use serialize::{load_lga_params, load_rcm_params, save_lga_params, save_rcm_params};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("input tensor contains a non-finite value")]
    NonFiniteInput,
    #[error("tensor shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize, usize),
        got: (usize, usize, usize),
    },
    #[error("channel count must be at least 1")]
    ZeroChannels,
    #[error("parameter file error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Access to named parameter groups as flat f64 slices.
///
/// The group list is the serialization and gradient-checking contract: params
/// and their gradient mirrors expose identical names in identical order.
pub trait ParamGroups {
    fn groups(&self) -> Vec<(&'static str, &[f64])>;
    fn groups_mut(&mut self) -> Vec<(&'static str, &mut [f64])>;
    /// Logical shape per group, used by the parameter file header.
    fn group_shapes(&self) -> Vec<(&'static str, Vec<usize>)>;
}
