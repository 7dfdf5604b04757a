//! Seeded synthetic images with smooth, structured content (ellipses over a
//! gradient background, like a simple radiograph phantom). Useful as seed
//! images and plaintexts when no dataset is at hand.

use crate::error::Result;
use crate::raster::RasterImage;
use crate::rng::SplitMix64;

/// Grayscale-looking phantom stored as 3 channels with a mild per-channel tint.
pub fn phantom(resolution: usize, seed: u64) -> Result<RasterImage> {
    let mut rng = SplitMix64::new(seed);
    let r = resolution as f64;
    let base = 20.0 + 60.0 * rng.next_f64();
    let slope = (rng.next_f64() - 0.5) * 80.0;
    let shapes: Vec<[f64; 6]> = (0..3 + rng.index(4))
        .map(|_| {
            [
                r * (0.2 + 0.6 * rng.next_f64()),
                r * (0.2 + 0.6 * rng.next_f64()),
                r * (0.08 + 0.3 * rng.next_f64()),
                r * (0.08 + 0.3 * rng.next_f64()),
                std::f64::consts::PI * rng.next_f64(),
                40.0 + 120.0 * rng.next_f64(),
            ]
        })
        .collect();
    let tint = [0.0, 6.0 * rng.next_f64(), -6.0 * rng.next_f64()];
    let mut bytes = Vec::with_capacity(resolution * resolution * 3);
    for y in 0..resolution {
        for x in 0..resolution {
            let (fx, fy) = (x as f64 + 0.5, y as f64 + 0.5);
            let mut v = base + slope * fy / r;
            for &[cx, cy, ax, ay, theta, level] in &shapes {
                let (s, c) = theta.sin_cos();
                let u = ((fx - cx) * c + (fy - cy) * s) / ax;
                let w = (-(fx - cx) * s + (fy - cy) * c) / ay;
                let d = u * u + w * w;
                if d < 1.0 {
                    v += level * (1.0 - 0.5 * d);
                }
            }
            v += (rng.next_f64() - 0.5) * 6.0;
            for t in tint {
                bytes.push((v + t).round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RasterImage::new(resolution, resolution, 3, bytes)
}

/// `count` phantoms with seeds `seed, seed + 1, ...`.
pub fn phantom_set(resolution: usize, count: usize, seed: u64) -> Result<Vec<RasterImage>> {
    (0..count as u64).map(|i| phantom(resolution, seed.wrapping_add(i))).collect()
}
