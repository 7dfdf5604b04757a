//! 8-bit raster images and their PNG / PGM / PPM codecs.
//!
//! Pixels are stored row-major with channels interleaved, the same byte
//! layout keys use, so ciphers and metrics can work on raw byte slices.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};
use sha2::{Digest, Sha256};
use std::io::{BufRead, BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

/// tEXt keyword recording how many channels the image had before being
/// widened to RGB for encryption.
pub const ORIGIN_CHANNELS_KEY: &str = "deepkeygen:origin-channels";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RasterImage {
    width: usize,
    height: usize,
    channels: usize,
    bytes: Vec<u8>,
    /// Channel count of the original plaintext (1 when a grayscale image was
    /// replicated to RGB).
    origin_channels: usize,
}

impl RasterImage {
    pub fn new(width: usize, height: usize, channels: usize, bytes: Vec<u8>) -> Result<Self> {
        if !(channels == 1 || channels == 3) {
            return Err(Error::DimensionMismatch(format!("unsupported channel count {channels}")));
        }
        if width == 0 || height == 0 {
            return Err(Error::EmptyInput);
        }
        if bytes.len() != width * height * channels {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height}x{channels} image needs {} bytes, got {}",
                width * height * channels,
                bytes.len()
            )));
        }
        Ok(Self { width, height, channels, bytes, origin_channels: channels })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn origin_channels(&self) -> usize {
        self.origin_channels
    }

    pub fn with_origin_channels(mut self, origin: usize) -> Self {
        self.origin_channels = origin;
        self
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn index(&self, x: usize, y: usize, c: usize) -> usize {
        (y * self.width + x) * self.channels + c
    }

    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.bytes[self.index(x, y, c)]
    }

    /// Same dimensions, different pixel bytes.
    pub fn with_bytes(&self, bytes: Vec<u8>) -> Result<Self> {
        Ok(Self::new(self.width, self.height, self.channels, bytes)?.with_origin_channels(self.origin_channels))
    }

    pub fn same_dims(&self, other: &RasterImage) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Replicate a grayscale image to three channels; RGB passes through.
    pub fn to_rgb(&self) -> RasterImage {
        if self.channels == 3 {
            return self.clone();
        }
        let bytes = self.bytes.iter().flat_map(|&v| [v, v, v]).collect();
        RasterImage { width: self.width, height: self.height, channels: 3, bytes, origin_channels: 1 }
    }

    /// Undo [`RasterImage::to_rgb`] when the image originated as grayscale.
    pub fn restore_origin(&self) -> RasterImage {
        if self.origin_channels == 1 && self.channels == 3 {
            let bytes = self.bytes.chunks_exact(3).map(|p| p[0]).collect();
            RasterImage { width: self.width, height: self.height, channels: 1, bytes, origin_channels: 1 }
        } else {
            self.clone()
        }
    }

    /// Planar `[1, C, H, W]` tensor with bytes mapped to `[-1, 1]`.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        let plane = self.width * self.height;
        let mut data = vec![T::zero(); plane * self.channels];
        for (i, px) in self.bytes.chunks_exact(self.channels).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                data[c * plane + i] = T::from_f64_lossy(v as f64 / 127.5 - 1.0);
            }
        }
        Tensor::new(vec![1, self.channels, self.height, self.width], data).expect("shape")
    }

    /// Inverse of [`RasterImage::to_tensor`] for a single-sample tensor:
    /// `round((t + 1) / 2 * 255)` clamped to the byte range.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self> {
        let [n, c, h, w] = t.dims4()?;
        if n != 1 {
            return Err(Error::InvalidShape(format!("expected one sample, got {n}")));
        }
        let plane = h * w;
        let mut bytes = vec![0u8; plane * c];
        for ch in 0..c {
            for i in 0..plane {
                let v = t.data()[ch * plane + i].as_f64();
                bytes[i * c + ch] = ((v + 1.0) / 2.0 * 255.0).round().clamp(0.0, 255.0) as u8;
            }
        }
        Self::new(w, h, c, bytes)
    }

    /// Lowercase hex SHA-256 of dimensions and pixel bytes.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.width as u64).to_le_bytes());
        h.update((self.height as u64).to_le_bytes());
        h.update((self.channels as u64).to_le_bytes());
        h.update(&self.bytes);
        format!("{:x}", h.finalize())
    }

    /// Bilinear resize to `width x height`. Identity when sizes already match.
    pub fn resize(&self, width: usize, height: usize) -> RasterImage {
        if width == self.width && height == self.height {
            return self.clone();
        }
        use image::imageops::{resize, FilterType};
        let (w, h) = (self.width as u32, self.height as u32);
        let bytes = if self.channels == 1 {
            let buf = image::GrayImage::from_raw(w, h, self.bytes.clone()).expect("dims");
            resize(&buf, width as u32, height as u32, FilterType::Triangle).into_raw()
        } else {
            let buf = image::RgbImage::from_raw(w, h, self.bytes.clone()).expect("dims");
            resize(&buf, width as u32, height as u32, FilterType::Triangle).into_raw()
        };
        RasterImage { width, height, channels: self.channels, bytes, origin_channels: self.origin_channels }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&data).map_err(|e| match e {
            Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Decode PNG or binary PGM/PPM, sniffed from the leading bytes.
    pub fn decode(data: &[u8]) -> Result<Self> {
        if data.starts_with(b"\x89PNG") {
            decode_png(data)
        } else if data.starts_with(b"P5") || data.starts_with(b"P6") {
            decode_pnm(data)
        } else {
            Err(Error::Format("not a PNG, PGM or PPM image".into()))
        }
    }

    /// Save by extension: `.png`, `.pgm` or `.ppm`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        let bytes = match ext.as_deref() {
            Some("png") => self.encode_png()?,
            Some("pgm") | Some("ppm") => self.encode_pnm(),
            _ => return Err(Error::Format(format!("{}: unsupported image extension", path.display()))),
        };
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn encode_png(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        {
            let mut enc = png::Encoder::new(BufWriter::new(&mut out), self.width as u32, self.height as u32);
            enc.set_color(if self.channels == 1 { png::ColorType::Grayscale } else { png::ColorType::Rgb });
            enc.set_depth(png::BitDepth::Eight);
            if self.origin_channels != self.channels {
                enc.add_text_chunk(ORIGIN_CHANNELS_KEY.into(), self.origin_channels.to_string())
                    .map_err(|e| Error::Format(e.to_string()))?;
            }
            let mut w = enc.write_header().map_err(|e| Error::Format(e.to_string()))?;
            w.write_image_data(&self.bytes).map_err(|e| Error::Format(e.to_string()))?;
            w.finish().map_err(|e| Error::Format(e.to_string()))?;
        }
        Ok(out)
    }

    /// Binary P5/P6 with maxval 255; the origin channel count goes in a comment.
    pub fn encode_pnm(&self) -> Vec<u8> {
        let magic = if self.channels == 1 { "P5" } else { "P6" };
        let mut out = Vec::with_capacity(self.bytes.len() + 64);
        write!(out, "{magic}\n").expect("vec write");
        if self.origin_channels != self.channels {
            write!(out, "# {ORIGIN_CHANNELS_KEY} {}\n", self.origin_channels).expect("vec write");
        }
        write!(out, "{} {}\n255\n", self.width, self.height).expect("vec write");
        out.extend_from_slice(&self.bytes);
        out
    }
}

fn decode_png(data: &[u8]) -> Result<RasterImage> {
    let fmt = |e: png::DecodingError| Error::Format(e.to_string());
    let mut dec = png::Decoder::new(Cursor::new(data));
    dec.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = dec.read_info().map_err(fmt)?;
    let origin = reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == ORIGIN_CHANNELS_KEY)
        .and_then(|t| t.text.trim().parse::<usize>().ok());
    let size = reader.output_buffer_size().ok_or_else(|| Error::Format("image too large".into()))?;
    let mut buf = vec![0u8; size];
    let frame = reader.next_frame(&mut buf).map_err(fmt)?;
    buf.truncate(frame.buffer_size());
    let (w, h) = (frame.width as usize, frame.height as usize);
    let bytes: Vec<u8> = match frame.color_type {
        png::ColorType::Grayscale => buf,
        png::ColorType::GrayscaleAlpha => buf.chunks_exact(2).map(|p| p[0]).collect(),
        png::ColorType::Rgb => buf,
        png::ColorType::Rgba => buf.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Indexed => return Err(Error::Format("unexpanded palette image".into())),
    };
    let channels = bytes.len() / (w * h).max(1);
    let img = RasterImage::new(w, h, channels, bytes)?;
    Ok(match origin {
        Some(o @ (1 | 3)) => img.with_origin_channels(o),
        _ => img,
    })
}

fn decode_pnm(data: &[u8]) -> Result<RasterImage> {
    // Header comments may carry the origin channel count.
    let mut origin = None;
    let mut reader = BufReader::new(data);
    let mut tokens: Vec<String> = Vec::new();
    let mut consumed = 0usize;
    while tokens.len() < 4 {
        let mut line = Vec::new();
        let n = reader.read_until(b'\n', &mut line).map_err(|e| Error::Format(e.to_string()))?;
        if n == 0 {
            return Err(Error::Format("truncated PNM header".into()));
        }
        consumed += n;
        let text = String::from_utf8_lossy(&line);
        let (content, comment) = match text.find('#') {
            Some(i) => (&text[..i], Some(&text[i + 1..])),
            None => (&text[..], None),
        };
        if let Some(c) = comment {
            let mut parts = c.split_whitespace();
            if parts.next() == Some(ORIGIN_CHANNELS_KEY) {
                origin = parts.next().and_then(|v| v.parse::<usize>().ok());
            }
        }
        tokens.extend(content.split_whitespace().map(str::to_string));
    }
    if tokens.len() > 4 {
        // Pixel data began on the maxval line; fall back to the generic decoder.
        return decode_pnm_generic(data);
    }
    let channels = match tokens[0].as_str() {
        "P5" => 1,
        "P6" => 3,
        other => return Err(Error::Format(format!("unsupported PNM magic {other}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format(format!("bad PNM header field `{s}`")));
    let (w, h, maxval) = (parse(&tokens[1])?, parse(&tokens[2])?, parse(&tokens[3])?);
    if maxval != 255 {
        return decode_pnm_generic(data);
    }
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes).map_err(|e| Error::Format(e.to_string()))?;
    let need = w * h * channels;
    if bytes.len() < need {
        return Err(Error::Format(format!("PNM payload truncated at byte {}", consumed + bytes.len())));
    }
    bytes.truncate(need);
    let img = RasterImage::new(w, h, channels, bytes)?;
    Ok(match origin {
        Some(o @ (1 | 3)) => img.with_origin_channels(o),
        _ => img,
    })
}

fn decode_pnm_generic(data: &[u8]) -> Result<RasterImage> {
    let dynimg = image::load_from_memory_with_format(data, image::ImageFormat::Pnm)
        .map_err(|e| Error::Format(e.to_string()))?;
    let (w, h) = (dynimg.width() as usize, dynimg.height() as usize);
    if dynimg.color().has_color() {
        RasterImage::new(w, h, 3, dynimg.to_rgb8().into_raw())
    } else {
        RasterImage::new(w, h, 1, dynimg.to_luma8().into_raw())
    }
}
