//! Image-form private keys.
//!
//! A key is a `W x H x 3` byte grid in the canonical row-major,
//! channel-interleaved layout. Each byte can also be addressed as a
//! quadruple `(value, x, y, channel)`.

use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const KEY_MAGIC: &[u8; 4] = b"DKEY";
pub const KEY_CHANNELS: usize = 3;
const KEY_HEADER_LEN: usize = 4 + 4 + 4 + 1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageKey {
    width: usize,
    height: usize,
    bytes: Vec<u8>,
}

/// One key byte together with its spatial position and channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quadruple {
    pub value: u8,
    pub x: usize,
    pub y: usize,
    pub c: usize,
}

impl ImageKey {
    pub fn new(width: usize, height: usize, bytes: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidKey("key must have at least one pixel".into()));
        }
        if bytes.len() != width * height * KEY_CHANNELS {
            return Err(Error::InvalidKey(format!(
                "{width}x{height} key needs {} bytes, got {}",
                width * height * KEY_CHANNELS,
                bytes.len()
            )));
        }
        Ok(Self { width, height, bytes })
    }

    pub fn from_image(img: &RasterImage) -> Result<Self> {
        let rgb = img.to_rgb();
        Self::new(rgb.width(), rgb.height(), rgb.bytes().to_vec())
    }

    pub fn to_image(&self) -> RasterImage {
        RasterImage::new(self.width, self.height, KEY_CHANNELS, self.bytes.clone()).expect("key dims")
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        KEY_CHANNELS
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn quadruple_view(&self, index: usize) -> Result<Quadruple> {
        if index >= self.bytes.len() {
            return Err(Error::OutOfRange { index, len: self.bytes.len() });
        }
        let pixel = index / KEY_CHANNELS;
        Ok(Quadruple { value: self.bytes[index], x: pixel % self.width, y: pixel / self.width, c: index % KEY_CHANNELS })
    }

    /// Inverse of [`ImageKey::quadruple_view`].
    pub fn byte_index(&self, x: usize, y: usize, c: usize) -> Result<usize> {
        if x >= self.width || y >= self.height || c >= KEY_CHANNELS {
            return Err(Error::OutOfRange { index: (y * self.width + x) * KEY_CHANNELS + c, len: self.bytes.len() });
        }
        Ok((y * self.width + x) * KEY_CHANNELS + c)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(KEY_HEADER_LEN + self.bytes.len() + 4);
        out.extend_from_slice(KEY_MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.push(KEY_CHANNELS as u8);
        out.extend_from_slice(&self.bytes);
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(data: &[u8]) -> Result<Self> {
        if data.len() < 4 || &data[..4] != KEY_MAGIC {
            return Err(Error::Format("not a key file (bad magic)".into()));
        }
        if data.len() < KEY_HEADER_LEN + 4 {
            return Err(Error::Format("key file truncated".into()));
        }
        let width = u32::from_le_bytes(data[4..8].try_into().expect("4 bytes")) as usize;
        let height = u32::from_le_bytes(data[8..12].try_into().expect("4 bytes")) as usize;
        let channels = data[12] as usize;
        if channels != KEY_CHANNELS {
            return Err(Error::Format(format!("key has {channels} channels, expected 3")));
        }
        let payload = width
            .checked_mul(height)
            .and_then(|p| p.checked_mul(KEY_CHANNELS))
            .ok_or_else(|| Error::Format("key dimensions overflow".into()))?;
        if data.len() != KEY_HEADER_LEN + payload + 4 {
            return Err(Error::Format(format!(
                "key file is {} bytes, header implies {}",
                data.len(),
                KEY_HEADER_LEN + payload + 4
            )));
        }
        let (body, trailer) = data.split_at(data.len() - 4);
        if crc32fast::hash(body) != u32::from_le_bytes(trailer.try_into().expect("4 bytes")) {
            return Err(Error::Integrity("key CRC32 mismatch".into()));
        }
        Self::new(width, height, body[KEY_HEADER_LEN..].to_vec())
    }

    /// Write `.dkey` (raw container) or `.png` (lossless export) by extension.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        if is_png(path) {
            return self.to_image().save(path);
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if is_png(path) {
            return Self::from_image(&RasterImage::load(path)?);
        }
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn is_png(path: &Path) -> bool {
    path.extension().and_then(|e| e.to_str()).is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

/// Size of the key space as a power of the byte alphabet.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeySpaceReport {
    pub resolution: usize,
    pub alphabet_size: u32,
    /// Number of key bytes: the key space is `alphabet_size ^ exponent`.
    pub exponent: u64,
    pub keyspace_log2: u64,
}

pub fn keyspace(resolution: usize) -> Result<KeySpaceReport> {
    if resolution == 0 {
        return Err(Error::InvalidResolution(0));
    }
    let exponent = (resolution as u64).pow(2) * KEY_CHANNELS as u64;
    Ok(KeySpaceReport { resolution, alphabet_size: 256, exponent, keyspace_log2: exponent * 8 })
}

/// A single-byte change applied by [`perturb_seed`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelChange {
    pub x: usize,
    pub y: usize,
    pub c: usize,
    pub old: u8,
    pub new: u8,
}

/// Change exactly one byte of `image` to a different, uniformly drawn value.
pub fn perturb_seed(image: &RasterImage, rng: &mut SplitMix64) -> Result<(RasterImage, PixelChange)> {
    if image.is_empty() {
        return Err(Error::EmptyInput);
    }
    let idx = rng.index(image.len());
    let old = image.bytes()[idx];
    // Draw from the 255 values other than `old`.
    let offset = rng.below(255) as u8 + 1;
    let new = old.wrapping_add(offset);
    let mut bytes = image.bytes().to_vec();
    bytes[idx] = new;
    let pixel = idx / image.channels();
    let change = PixelChange { x: pixel % image.width(), y: pixel / image.width(), c: idx % image.channels(), old, new };
    Ok((image.with_bytes(bytes)?, change))
}
