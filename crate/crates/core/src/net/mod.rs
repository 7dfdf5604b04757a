//! Generator / discriminator definitions, adversarial losses, training and
//! key generation.

pub mod checkpoint;
pub mod forward;
pub mod keygen;
pub mod loss;
pub mod spec;
pub mod train;

pub use checkpoint::Checkpoint;
pub use keygen::{generate_key, generate_key_with};
pub use loss::{d_loss, g_loss, GanLosses};
pub use spec::{build_discriminator, build_generator, seeded_init, LayerKind, LayerSpec, NetworkRole, NetworkSpec};
pub use train::{prepare_images, train, train_with, TrainConfig, TrainOutcome, Trainer};
