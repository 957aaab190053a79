//! Layer primitives: each op ships a forward and an exact backward.

pub mod activation;
pub mod batchnorm;
pub mod conv;
pub mod dense;
pub mod pool;

pub use activation::{dropout_backward, dropout_forward, relu_backward, relu_forward, Mode};
pub use batchnorm::{batchnorm_backward, batchnorm_eval, batchnorm_train, BatchNormCache, BatchNormState};
pub use conv::{conv1d_backward, conv1d_forward, conv_out_len, Padding};
pub use dense::{dense_softmax_xent, dense_softmax_xent_backward, DenseSoftmaxOutput};
pub use pool::{global_average_pool, global_average_pool_backward};
