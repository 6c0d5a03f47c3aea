//! A small neural-network engine: dense, unpadded convolution, batch norm,
//! ReLU, max pooling, dropout and softmax layers over `f64` tensors in
//! channels-last layout, trained with minibatch Adam.

mod anomaly;
mod gradcheck;
mod model;
mod spec;
mod train;

pub use anomaly::{
    argmax, autoencoder_input, choose_threshold, classify_ae, classify_cnn, classify_cnn_batch,
    reconstruction_error, reconstruction_errors, threshold_from_errors, Inference, ThresholdChoice, HUMAN,
    NON_HUMAN,
};
pub use gradcheck::gradient_check;
pub use model::{LayerParams, Mode, TrainedModel, BN_EPSILON, BN_MOMENTUM};
pub use spec::{build_autoencoder, build_cnn2d, LayerSpec, ModelKind, ModelSpec, Shape, AE_WIDTHS};
pub use train::{accuracy, fit, recalibrate_batch_norm, train, Loss, Targets, TrainConfig};
