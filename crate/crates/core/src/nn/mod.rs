//! A small from-scratch neural-network engine: dense and 1-D convolution
//! layers, ReLU, flatten, softmax cross-entropy, Adam, and a plateau
//! learning-rate schedule.

pub mod gradcheck;
pub mod network;
pub mod optim;
pub mod tensor;
pub mod train;

pub use gradcheck::gradient_check;
pub use network::{LayerSpec, Network};
pub use optim::{softmax_cross_entropy, Adam, AdamConfig, Plateau, PlateauConfig};
pub use tensor::Tensor;
pub use train::{argmax, predict, predict_all, train_network, Batch, EpochRecord, History, TrainConfig};
