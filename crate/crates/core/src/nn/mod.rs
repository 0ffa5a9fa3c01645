//! The trainable network: a fully-connected `input → h1 → h2 → output`
//! classifier with ReLU hidden units and a softmax output.

pub mod data;
pub mod loss;
pub mod mlp;
pub mod optim;
pub mod train;

pub use data::{Dataset, SplitKind, SyntheticSpec};
pub use loss::{cross_entropy, one_hot, softmax_rows};
pub use mlp::{EdgeId, ForwardCache, HiddenLayer, LayerSizes, Mlp, Params};
pub use optim::{sgd_momentum_step, Hyperparams, MomentumMode, MomentumState};
pub use train::{evaluate, train_epoch, EpochMetrics, Trainer};

/// Gradients share the parameter layout of the network they belong to.
pub type GradientSet = Params;
