//! Small convolutional network engine: layers, reverse-mode gradients,
//! Adam, compound scaling and training.

pub mod adam;
pub mod checkpoint;
pub mod layers;
pub mod loss;
pub mod net;
pub mod scaling;
pub mod tensor;
pub mod train;

pub use adam::{AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use layers::{
    Activation, ConvLayer, DenseLayer, Layer, LayerCache, Padding, PoolSpec, SeBlock,
};
pub use loss::{softmax_cross_entropy, softmax_rows};
pub use net::{backward, forward, ActivationTape, BlockKind, BlockSpec, Gradients, LayerStack};
pub use scaling::{compound_scale, standard_architecture, ScaledDims, ScalingConfig};
pub use tensor::Tensor4;
pub use train::{
    adam_step, argmax, evaluate, images_to_tensor, predict_proba, train, Checkpoint, EpochRecord,
    LabeledImage, TrainConfig, TrainState, TrainingLog,
};
