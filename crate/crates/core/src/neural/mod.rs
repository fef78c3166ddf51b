//! Minimal 3D neural-network engine for the distance-regression network.
//!
//! Tensors are dense `f64` arrays shaped `[N, C, X, Y, Z]`. Layers are
//! written against the [`Backend`] trait so the same forward code can be
//! recorded on a [`Tape`] for training or run on [`Eager`] for inference at
//! full crop size.

pub mod backend;
pub mod gradcheck;
pub mod kernels;
pub mod layers;
mod tensor;
pub mod train;

pub use backend::{Backend, Eager, Gradients, Mode, RunningStats, Tape, Var};
pub use kernels::ConvSpec;
pub use layers::{predict, Model, Param, ParamSet, SkipBlock, SkipBlockModel, StatsSet, Tsnet, TsnetConfig};
pub use tensor::Tensor;
pub use train::{objective, train_step, LossTerms, DEFAULT_WEIGHT_DECAY};
