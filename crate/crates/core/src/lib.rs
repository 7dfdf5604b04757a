pub mod attack;
pub mod baselines;
pub mod cipher;
pub mod dataset;
pub mod error;
pub mod key;
pub mod metrics;
pub mod net;
pub mod phantom;
pub mod randomness;
pub mod raster;
pub mod report;
pub mod rng;
pub mod sweep;
pub mod tensor;

pub use error::{Error, Result};
pub use cipher::{xor_decrypt, xor_encrypt};
pub use key::{ImageKey, KeySpaceReport};
pub use net::{Checkpoint, NetworkSpec, TrainConfig};
pub use raster::RasterImage;
pub use rng::SplitMix64;

pub type Tensor32 = tensor::Tensor<f32>;
pub type Tensor64 = tensor::Tensor<f64>;
pub type ParamSet32 = tensor::ParamSet<f32>;
pub type ParamSet64 = tensor::ParamSet<f64>;
pub type Tape32 = tensor::Tape<f32>;
pub type Tape64 = tensor::Tape<f64>;
