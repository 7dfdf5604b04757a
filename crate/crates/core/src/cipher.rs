//! XOR stream cipher with an [`ImageKey`] as the keystream.
//!
//! Encryption and decryption are the same operation. Grayscale inputs are
//! replicated to three channels and remember their origin, so decrypting the
//! ciphertext restores a single-channel image.

use crate::error::{Error, Result};
use crate::key::ImageKey;
use crate::raster::RasterImage;

fn apply(image: &RasterImage, key: &ImageKey) -> Result<RasterImage> {
    let rgb = image.to_rgb();
    if rgb.width() != key.width() || rgb.height() != key.height() {
        return Err(Error::DimensionMismatch(format!(
            "image is {}x{}, key is {}x{}",
            rgb.width(),
            rgb.height(),
            key.width(),
            key.height()
        )));
    }
    let bytes = rgb.bytes().iter().zip(key.bytes()).map(|(p, k)| p ^ k).collect();
    rgb.with_bytes(bytes)
}

/// `c_i = p_i XOR k_i` over the canonical byte layout.
pub fn xor_encrypt(plain: &RasterImage, key: &ImageKey) -> Result<RasterImage> {
    apply(plain, key)
}

/// Inverse of [`xor_encrypt`]; the result drops back to the plaintext's
/// original channel count.
pub fn xor_decrypt(cipher: &RasterImage, key: &ImageKey) -> Result<RasterImage> {
    Ok(apply(cipher, key)?.restore_origin())
}
