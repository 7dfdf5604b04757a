//! Image and keystream quality metrics: entropy, histogram, NPCR, UACI,
//! MSE, SSIM and adjacent-pixel correlation.

use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};

pub const DEFAULT_CORRELATION_SAMPLES: usize = 256;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram256 {
    #[serde(with = "counts_serde")]
    pub counts: [u64; 256],
    pub total: u64,
}

mod counts_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(c: &[u64; 256], s: S) -> Result<S::Ok, S::Error> {
        c.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u64; 256], D::Error> {
        let v = Vec::<u64>::deserialize(d)?;
        v.try_into().map_err(|v: Vec<u64>| serde::de::Error::invalid_length(v.len(), &"256 counts"))
    }
}

impl Histogram256 {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        let mut counts = [0u64; 256];
        for &b in bytes {
            counts[b as usize] += 1;
        }
        Self { counts, total: bytes.len() as u64 }
    }

    pub fn frequencies(&self) -> [f64; 256] {
        let n = self.total.max(1) as f64;
        self.counts.map(|c| c as f64 / n)
    }

    /// Shannon entropy in bits per byte.
    pub fn entropy(&self) -> Result<f64> {
        if self.total == 0 {
            return Err(Error::EmptyInput);
        }
        let n = self.total as f64;
        Ok(self
            .counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                -p * p.log2()
            })
            .sum())
    }
}

pub fn entropy(bytes: &[u8]) -> Result<f64> {
    Histogram256::from_bytes(bytes).entropy()
}

fn check_dims(a: &RasterImage, b: &RasterImage) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{}x{} vs {}x{}x{}",
            a.width(),
            a.height(),
            a.channels(),
            b.width(),
            b.height(),
            b.channels()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(())
}

/// Percentage of byte positions at which `a` and `b` differ.
pub fn npcr(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_dims(a, b)?;
    let changed = a.bytes().iter().zip(b.bytes()).filter(|(x, y)| x != y).count();
    Ok(100.0 * changed as f64 / a.len() as f64)
}

pub fn uaci(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_dims(a, b)?;
    let sum: u64 = a.bytes().iter().zip(b.bytes()).map(|(&x, &y)| x.abs_diff(y) as u64).sum();
    Ok(100.0 * sum as f64 / (255.0 * a.len() as f64))
}

pub fn mse(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .bytes()
        .iter()
        .zip(b.bytes())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.len() as f64)
}

/// Global (single-window) SSIM per channel, averaged over channels.
pub fn ssim(a: &RasterImage, b: &RasterImage) -> Result<f64> {
    check_dims(a, b)?;
    let ch = a.channels();
    let n = (a.len() / ch) as f64;
    let mut total = 0.0;
    for c in 0..ch {
        let xs = a.bytes().iter().skip(c).step_by(ch).map(|&v| v as f64);
        let ys = b.bytes().iter().skip(c).step_by(ch).map(|&v| v as f64);
        let (mut sx, mut sy) = (0.0, 0.0);
        for (x, y) in xs.clone().zip(ys.clone()) {
            sx += x;
            sy += y;
        }
        let (mx, my) = (sx / n, sy / n);
        let (mut vx, mut vy, mut cov) = (0.0, 0.0, 0.0);
        for (x, y) in xs.zip(ys) {
            vx += (x - mx) * (x - mx);
            vy += (y - my) * (y - my);
            cov += (x - mx) * (y - my);
        }
        let (vx, vy, cov) = (vx / n, vy / n, cov / n);
        total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cov + SSIM_C2))
            / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
    }
    Ok(total / ch as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffMetrics {
    pub npcr: f64,
    pub uaci: f64,
}

impl DiffMetrics {
    pub fn between(a: &RasterImage, b: &RasterImage) -> Result<Self> {
        Ok(Self { npcr: npcr(a, b)?, uaci: uaci(a, b)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMetrics {
    pub mse: f64,
    pub ssim: f64,
}

impl SimilarityMetrics {
    pub fn between(a: &RasterImage, b: &RasterImage) -> Result<Self> {
        Ok(Self { mse: mse(a, b)?, ssim: ssim(a, b)? })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Horizontal,
    Vertical,
    Diagonal,
}

impl Direction {
    pub const ALL: [Direction; 3] = [Direction::Horizontal, Direction::Vertical, Direction::Diagonal];

    pub fn offset(self) -> (usize, usize) {
        match self {
            Direction::Horizontal => (1, 0),
            Direction::Vertical => (0, 1),
            Direction::Diagonal => (1, 1),
        }
    }
}

/// Pearson correlation with mean and variance taken over the sample.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || xs.len() != ys.len() {
        return Err(Error::EmptyInput);
    }
    let n = xs.len() as f64;
    let ex = xs.iter().sum::<f64>() / n;
    let ey = ys.iter().sum::<f64>() / n;
    let (mut dx, mut dy, mut cov) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        dx += (x - ex) * (x - ex);
        dy += (y - ey) * (y - ey);
        cov += (x - ex) * (y - ey);
    }
    if dx == 0.0 {
        return Err(Error::DegenerateSeries("x"));
    }
    if dy == 0.0 {
        return Err(Error::DegenerateSeries("y"));
    }
    Ok((cov / n) / ((dx / n).sqrt() * (dy / n).sqrt()))
}

/// Draw `samples` anchor bytes uniformly (with replacement) among positions
/// that have a neighbor in `dir`, and correlate each with that neighbor in
/// the same channel.
pub fn adjacent_pairs(img: &RasterImage, dir: Direction, samples: usize, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    if img.width() < 2 || img.height() < 2 {
        return Err(Error::InvalidShape(format!("{}x{} image has no 2x2 neighborhood", img.width(), img.height())));
    }
    if samples == 0 {
        return Err(Error::EmptyInput);
    }
    let (dx, dy) = dir.offset();
    let (aw, ah) = (img.width() - dx, img.height() - dy);
    let mut rng = SplitMix64::new(seed);
    let mut xs = Vec::with_capacity(samples);
    let mut ys = Vec::with_capacity(samples);
    for _ in 0..samples {
        let x = rng.index(aw);
        let y = rng.index(ah);
        let c = rng.index(img.channels());
        xs.push(img.get(x, y, c) as f64);
        ys.push(img.get(x + dx, y + dy, c) as f64);
    }
    Ok((xs, ys))
}

pub fn adjacent_correlation(img: &RasterImage, dir: Direction, samples: usize, seed: u64) -> Result<f64> {
    let (xs, ys) = adjacent_pairs(img, dir, samples, seed)?;
    pearson(&xs, &ys)
}

/// Correlation per direction; `None` marks a constant (degenerate) series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub horizontal: Option<f64>,
    pub vertical: Option<f64>,
    pub diagonal: Option<f64>,
    pub sample_count: usize,
    pub seed: u64,
}

impl CorrelationReport {
    pub fn compute(img: &RasterImage, samples: usize, seed: u64) -> Result<Self> {
        let one = |dir| match adjacent_correlation(img, dir, samples, seed) {
            Ok(r) => Ok(Some(r)),
            Err(Error::DegenerateSeries(_)) => Ok(None),
            Err(e) => Err(e),
        };
        Ok(Self {
            horizontal: one(Direction::Horizontal)?,
            vertical: one(Direction::Vertical)?,
            diagonal: one(Direction::Diagonal)?,
            sample_count: samples,
            seed,
        })
    }

    pub fn get(&self, dir: Direction) -> Option<f64> {
        match dir {
            Direction::Horizontal => self.horizontal,
            Direction::Vertical => self.vertical,
            Direction::Diagonal => self.diagonal,
        }
    }

    /// Largest absolute coefficient; `None` if any direction was degenerate.
    pub fn max_abs(&self) -> Option<f64> {
        Direction::ALL.iter().map(|&d| self.get(d).map(f64::abs)).try_fold(0.0f64, |m, v| v.map(|v| m.max(v)))
    }
}
