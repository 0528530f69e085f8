//! MLP autoencoder over flat admittance vectors.
//!
//! The encoder applies ReLU after every layer, the latent included. The
//! decoder applies ReLU to its hidden layers and leaves the output layer
//! linear, since z-scored targets take both signs.

mod adam;
mod arch;
mod checkpoint;
mod dense;
mod loss;
mod model;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use arch::{ArchMode, Architecture, GROUPS};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_size, checkpoint_to_bytes, load_checkpoint, save_checkpoint,
};
pub use dense::{relu, Dense, Mlp};
pub use loss::{recon_loss, total_loss, LOSS_EPS};
pub use model::{init_model, AutoencoderModel, Gradients, LatentVector};
pub use train::{
    checkpoint_path, sample_losses, split_for_seed, train, CheckpointPolicy, EpochRecord, Split,
    TrainConfig, TrainHistory, TrainOutcome,
};
