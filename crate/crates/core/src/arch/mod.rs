//! Pocket U-Net baseline, Double U-Net and the two-member ensemble.

pub mod checkpoint;
pub mod double;
pub mod ensemble;
pub mod gradcheck;
pub mod name;
pub mod network;
pub mod unet;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, TrainedModel};
pub use double::{DoubleUNet, DoubleUNetConfig};
pub use ensemble::{average_probabilities, Ensemble, EnsembleConfig};
pub use gradcheck::network_gradcheck;
pub use name::{published_grid, Family, ModelName};
pub use network::{ArchitectureSpec, Network};
pub use unet::{ChannelScheme, PocketUNet, PocketUNetConfig};

pub use crate::nn::count_parameters;
