//! Differentiable 3D layers, loss and optimiser.
//!
//! Layers own their parameters and cache what their backward pass needs;
//! networks call `forward` then `backward` in reverse order, and gradients
//! accumulate into each [`Param`] until the optimiser consumes them.

pub mod batchnorm;
pub mod block;
pub mod conv;
pub mod gradcheck;
mod kernel;
pub mod loss;
pub mod ops;
pub mod optim;
pub mod param;
pub mod tensor;

pub use batchnorm::BatchNorm3d;
pub use block::{ConvBlock, ConvBnRelu};
pub use conv::{Conv3d, ConvTranspose3d};
pub use gradcheck::{finite_difference_check, finite_difference_check_at, relative_error, GradCheck};
pub use loss::{dice_ce_loss, one_hot2, LossOutput};
pub use optim::{sgd_momentum_step, OptimizerConfig};
pub use param::{count_parameters, zero_grads, Buffer, HasParams, Param};
pub use tensor::{DiffTensor, Scalar, Shape, Tensor};
