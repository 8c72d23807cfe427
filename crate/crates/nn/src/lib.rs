//! Deterministic double-precision neural network engine: dense, LSTM,
//! 1-D convolution and dropout layers, mean squared error loss, Adam, and
//! early-stopped minibatch training.

pub mod activation;
pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod network;
pub mod params;
pub mod spec;
pub mod tensor;
pub mod train;
pub mod weights;

pub use activation::{relu, Activation};
pub use adam::{adam_step, Adam, AdamConfig};
pub use error::{NnError, Result};
pub use gradcheck::{check_gradients, GradCheck};
pub use layers::conv1d::{conv1d_backward, conv1d_forward, Conv1dGrads};
pub use layers::dense::{dense_backward, dense_forward, DenseGrads};
pub use layers::dropout::dropout;
pub use layers::lstm::{lstm_sequence, lstm_step, LstmState};
pub use loss::mse_loss;
pub use network::{Gradients, Mode, Network, Tape};
pub use params::{init_weights, LayerParams, NetworkParams};
pub use spec::{LayerSpec, NetworkSpec};
pub use tensor::Tensor;
pub use train::{
    early_stopping_trace, evaluate_loss, fit, fit_with, make_batches, stack, Control, EpochRecord,
    FitReport, Sample, TrainConfig,
};
pub use weights::{WeightHeader, WEIGHTS_FORMAT, WEIGHTS_VERSION};
