use super::checkpoint::Checkpoint;
use super::forward::forward;
use super::spec::NetworkSpec;
use crate::error::{Error, Result};
use crate::key::ImageKey;
use crate::raster::RasterImage;
use crate::tensor::{ParamSet, Tape};

/// Run the generator on a seed image and quantize its tanh output to bytes.
pub fn generate_key_with(generator: &NetworkSpec, params: &ParamSet<f32>, resolution: usize, seed_image: &RasterImage) -> Result<ImageKey> {
    if seed_image.width() != resolution || seed_image.height() != resolution {
        return Err(Error::ResolutionMismatch {
            expected: resolution,
            width: seed_image.width(),
            height: seed_image.height(),
        });
    }
    let mut tape = Tape::new();
    let bound = tape.bind_frozen(params)?;
    let x = tape.constant(seed_image.to_rgb().to_tensor::<f32>())?;
    let out = forward(generator, &mut tape, &bound, x)?;
    ImageKey::from_image(&RasterImage::from_tensor(tape.value(out))?)
}

/// `KEY = G(W; x)` for a trained checkpoint. Pure in (checkpoint, seed image).
pub fn generate_key(ckpt: &Checkpoint, seed_image: &RasterImage) -> Result<ImageKey> {
    generate_key_with(&ckpt.generator, &ckpt.g_params, ckpt.config.resolution, seed_image)
}
