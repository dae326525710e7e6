//! Reverse-mode differentiable compute core.
//!
//! Everything the network needs is expressed over [`TemporalTensor`]s
//! (a T×C grid of `f64`, time-major). A forward pass records op entries
//! on a [`Tape`]; replaying the tape in reverse accumulates `∂loss/∂node`
//! into every node exactly once per contributing path. Parameters are
//! registered as leaf nodes so their gradients come out of the same
//! mechanism, and every backward rule is pinned against central finite
//! differences in the tests.

mod params;
mod tape;
mod tensor;

pub use params::{ConvLayerParams, DenseParams, ParamArray};
pub use tape::{NodeId, Tape};
pub use tensor::TemporalTensor;
