//! Layer kernels with hand-written backward rules, recorded on a [`Tape`].
//!
//! [`Tape`]: crate::autodiff::Tape

mod activation;
mod conv;
mod linear;
mod loss;
mod norm;
mod pool;

pub use activation::{dropout, dropout_with_mask, elu};
pub use conv::{conv1d, ConvSpec};
pub use linear::linear;
pub use loss::{check_soft_labels, one_hot, softmax, softmax_cross_entropy};
pub use norm::{batch_norm, BatchNormState, Mode, DEFAULT_EPS, DEFAULT_MOMENTUM};
pub use pool::{avgpool1d, avgpool_output_len, global_avgpool};
