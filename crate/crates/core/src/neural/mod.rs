//! A small 3-D convolutional network on `f64`, trained with plain SGD.

pub mod conv;
pub mod dense;
pub mod dropout;
pub mod format;
pub mod loss;
pub mod model;
pub mod pool;
pub mod tensor;

pub use conv::{conv3d_backward, conv3d_forward, conv3d_preactivation, Conv3dGradients, Conv3dLayer, KernelDims};
pub use dense::{dense_backward, dense_forward, DenseGradients, DenseLayer};
pub use dropout::{dropout, dropout_backward, Mode};
pub use format::{decode_model, encode_model, load_model, save_model};
pub use loss::{argmax, categorical_accuracy, mean_absolute_error, softmax, softmax_cross_entropy, SoftmaxCrossEntropy};
pub use model::{
    backward, forward, init_params, predict_probs, sgd_step, ForwardTrace, LayerParams, LayerSpec, ModelParams,
    ModelSpec, Shape,
};
pub use pool::{maxpool3d_backward, maxpool3d_forward, pool_output_dims};
pub use tensor::Tensor4;
