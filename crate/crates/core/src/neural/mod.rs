//! The 1-D CNN: conv (width 20, 10 channels) -> global max-pool ->
//! FC 500 ReLU6 -> FC K (the penultimate layer) -> sigmoid or softmax head.

mod arch;
pub mod checkpoint;
mod input;
pub mod loss;
mod network;
mod optim;
mod params;
mod train;

pub use arch::{Architecture, HeadKind};
pub use input::SparseInput;
pub use loss::{loss_1vr, loss_posttrain, loss_softmax_ce, Target, LOG_EPS};
pub use network::{Activations, HeadLoss, LossSpec};
pub use optim::{Adam, AdamConfig};
pub use params::ModelParams;
pub use train::{train, TrainConfig, TrainReport, TrainSample, Trainer};
