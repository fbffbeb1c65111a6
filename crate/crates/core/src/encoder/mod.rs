//! Strided convolutional encoder with batch normalization, trained by
//! binary cross-entropy through hand-written backpropagation.

mod layers;
mod loss;
mod model;
mod tensor;
mod train;

pub use layers::{
    batchnorm_forward, conv2d_forward, conv_output_len, leaky_relu, sigmoid, BatchNorm, BatchNormCache, ConvLayer,
    Dense, Mode, LEAKY_SLOPE,
};
pub use loss::{bce_loss, BCE_CLAMP};
pub use model::{encoder_forward, EncoderArch, EncoderGradients, EncoderModel, EncoderTrainMeta};
pub use tensor::Tensor;
pub use train::{kernels_to_tensor, train_encoder, train_on_tensor, EncoderHyper, EpochLog, TrainingLog};
