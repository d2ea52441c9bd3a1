//! Differentiable operations. Each op checks shapes, computes values in a
//! fixed order and registers its adjoint with the output node.

mod conv;
mod elementwise;
mod norm;
mod pool;
mod shape;

pub use conv::conv2d;
pub use elementwise::{
    abs_diff, add, mean, mul, mul_const, relu, scale, sigmoid, sigmoid_scalar, softplus,
    softplus_scalar, sub, sum,
};
pub use norm::group_norm;
pub use pool::{maxpool2, upsample_nearest2};
pub use shape::concat_channels;

/// `[N, C, H, W]` of a rank-4 tensor.
pub(crate) fn dims4(shape: &[usize], op: &'static str) -> Result<[usize; 4], crate::TensorError> {
    match *shape {
        [n, c, h, w] => Ok([n, c, h, w]),
        _ => Err(crate::shape_err(op, format!("expected rank 4 (N,C,H,W), got {shape:?}"))),
    }
}
