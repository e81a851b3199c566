//! Hand-written layers with explicit forward/backward passes.
//!
//! Layers follow one convention: `forward` is the pure evaluation path, `forward_train`
//! returns a cache that `backward` consumes, and `backward` accumulates parameter
//! gradients into [`Param::grad`] while returning the input gradient.

pub mod activation;
pub mod batch_norm;
pub mod conv;
pub mod linear;
pub mod param;
pub mod pool;
pub mod resize;

pub use batch_norm::{BatchNorm2d, BatchNormCache};
pub use conv::Conv3x3;
pub use linear::Linear;
pub use param::{join, Module, Param, ParamKind};

/// Whether batch statistics (training) or running statistics (evaluation) drive normalization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
