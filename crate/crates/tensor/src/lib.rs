//! Desk-scale tensors with reverse-mode automatic differentiation.
//!
//! Tensors are reference-counted graph nodes in NCHW layout. Every op is
//! generic over [`Real`], so the same model code runs in `f32` for training
//! and in `f64` for gradient checks. All reductions use a fixed sequential
//! order, which makes results bitwise reproducible on a given platform.

mod branch;
mod checkpoint;
mod gradcheck;
mod init;
mod optim;
pub mod ops;
mod real;
mod tensor;

use thiserror::Error;

pub use branch::{note_branch, with_branch_recording};
pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, read_checkpoint, write_checkpoint, Checkpoint, CheckpointHeader,
    ParamEntry, CKPT_MAGIC, CKPT_VERSION,
};
pub use gradcheck::{grad_check, grad_check_fn, rel_err, GradCheckOptions, GradCheckReport};
pub use init::{kaiming_normal, seeded_rng};
pub use optim::{AdamHyper, AdamW, LrSchedule};
pub use real::Real;
pub use tensor::{is_grad_enabled, no_grad, BackwardFn, Parameter, Tensor};

#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalar(Vec<usize>),
    #[error("parameter {0} has no gradient")]
    MissingGrad(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("size mismatch: expected {expected} bytes, found {actual}")]
    SizeMismatch { expected: usize, actual: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn shape_err(op: &'static str, detail: impl Into<String>) -> TensorError {
    TensorError::Shape {
        op,
        detail: detail.into(),
    }
}
