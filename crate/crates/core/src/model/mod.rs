//! Heteroskedastic sequence-to-point networks and their training.

mod arch;
mod loss;
mod net;
mod train;

pub use arch::{sigmoid, softplus, Activation, Architecture, HeadKind, SIGMA_FLOOR};
pub use loss::{batch_nll, gaussian_nll, nll_loss, BatchLoss, HALF_LN_2PI};
pub use net::{
    Checkpoint, Conv1d, DropoutMask, ForwardCache, Gradients, Head, Linear, LinearGrad, Prediction,
    Seq2PointNet, CHECKPOINT_VERSION,
};
pub use train::{backward, loss, train, TrainConfig, TrainOutcome, TrainingSet};
