//! Stage two: an autoencoder trained with a cluster-contrastive objective
//! picks one keyframe per cluster.

mod adam;
mod loss;
mod network;
mod train;

pub use adam::{Adam, AdamConfig};
pub use loss::{
    cosine_sim, infonce_pair, loss_and_grad, pool, recon_loss, total_loss, LossInput, LossSettings,
    LossTerms, LossWeights, Pooling, TrainMode, NORM_GUARD,
};
pub use network::{
    checkpoint_bytes, load_checkpoint, parse_checkpoint, save_checkpoint, Architecture, Autoencoder, Layer,
    Mlp,
};
pub use train::{select_keyframes, train, TrainConfig, TrainOutcome};
