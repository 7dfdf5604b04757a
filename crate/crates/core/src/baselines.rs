//! Conventional keystream generators used as comparison baselines, and the
//! chaotic image encryptor that builds the transformation domain.

use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};

pub const LOGISTIC_R: f64 = 3.99;
pub const CHAOS_BURN_IN: usize = 1000;
pub const LCG_A: u32 = 1664525;
pub const LCG_C: u32 = 1013904223;
pub const MT_DEFAULT_SEED: u32 = 5489;

/// Scale applied to a logistic-map state before taking its low byte.
const CHAOS_BYTE_SCALE: f64 = 1e14;

/// Logistic map `x -> r x (1 - x)` after validation of its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticMap {
    r: f64,
    x: f64,
}

impl LogisticMap {
    pub fn new(r: f64, x0: f64) -> Result<Self> {
        if !(r > 3.57 && r <= 4.0) {
            return Err(Error::InvalidChaosParams(format!("r = {r} outside (3.57, 4]")));
        }
        // At r = 4 these starts land on a fixed point within two steps.
        if !(x0 > 0.0 && x0 < 1.0) || (r == 4.0 && [0.25, 0.5, 0.75].contains(&x0)) {
            return Err(Error::InvalidChaosParams(format!("x0 = {x0} is outside (0, 1) or a degenerate start")));
        }
        Ok(Self { r, x: x0 })
    }

    pub fn state(&self) -> f64 {
        self.x
    }

    pub fn step(&mut self) -> f64 {
        self.x = self.r * self.x * (1.0 - self.x);
        self.x
    }

    pub fn burn(&mut self, n: usize) {
        for _ in 0..n {
            self.step();
        }
    }
}

/// Map a chaotic state in `[0, 1]` to a byte through its fine digits.
pub fn chaos_byte(x: f64) -> u8 {
    ((x * CHAOS_BYTE_SCALE) as u64 % 256) as u8
}

pub fn chaotic_stream(r: f64, x0: f64, burn_in: usize, n: usize) -> Result<Vec<u8>> {
    let mut map = LogisticMap::new(r, x0)?;
    map.burn(burn_in);
    Ok((0..n).map(|_| chaos_byte(map.step())).collect())
}

/// 32-bit LCG modulo 2^32, emitting bits 31..24 of each state.
pub fn lcg_stream(a: u32, c: u32, x0: u32, n: usize) -> Vec<u8> {
    let mut x = x0;
    (0..n)
        .map(|_| {
            x = a.wrapping_mul(x).wrapping_add(c);
            (x >> 24) as u8
        })
        .collect()
}

/// MT19937 tempered words, each serialized little-endian.
pub fn mt_stream(seed: u32, n: usize) -> Vec<u8> {
    let mut mt = rand_mt::Mt::new(seed);
    let mut out = Vec::with_capacity(n + 4);
    while out.len() < n {
        out.extend_from_slice(&mt.next_u32().to_le_bytes());
    }
    out.truncate(n);
    out
}

pub fn rc4_stream(key: &[u8], n: usize) -> Result<Vec<u8>> {
    if key.is_empty() || key.len() > 256 {
        return Err(Error::InvalidKey(format!("RC4 key must be 1..=256 bytes, got {}", key.len())));
    }
    let mut s: [u8; 256] = std::array::from_fn(|i| i as u8);
    let mut j = 0u8;
    for i in 0..256 {
        j = j.wrapping_add(s[i]).wrapping_add(key[i % key.len()]);
        s.swap(i, j as usize);
    }
    let (mut i, mut j) = (0u8, 0u8);
    Ok((0..n)
        .map(|_| {
            i = i.wrapping_add(1);
            j = j.wrapping_add(s[i as usize]);
            s.swap(i as usize, j as usize);
            s[s[i as usize].wrapping_add(s[j as usize]) as usize]
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum KeystreamKind {
    Chaotic { r: f64, x0: f64, burn_in: usize },
    Lcg { a: u32, c: u32, x0: u32 },
    Mt19937 { seed: u32 },
    Rc4 { key: Vec<u8> },
}

impl KeystreamKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Chaotic { .. } => "chaotic",
            Self::Lcg { .. } => "lcg",
            Self::Mt19937 { .. } => "mt19937",
            Self::Rc4 { .. } => "rc4",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeystreamSpec {
    #[serde(flatten)]
    pub kind: KeystreamKind,
    pub length: usize,
}

impl KeystreamSpec {
    pub fn generate(&self) -> Result<Vec<u8>> {
        if self.length == 0 {
            return Err(Error::EmptyInput);
        }
        match &self.kind {
            KeystreamKind::Chaotic { r, x0, burn_in } => chaotic_stream(*r, *x0, *burn_in, self.length),
            KeystreamKind::Lcg { a, c, x0 } => Ok(lcg_stream(*a, *c, *x0, self.length)),
            KeystreamKind::Mt19937 { seed } => Ok(mt_stream(*seed, self.length)),
            KeystreamKind::Rc4 { key } => rc4_stream(key, self.length),
        }
    }

    /// A sibling spec whose seed material is shifted by `i`; `offset(0)` is
    /// the spec itself.
    pub fn offset(&self, i: u64) -> KeystreamSpec {
        let kind = match &self.kind {
            KeystreamKind::Chaotic { r, x0, burn_in } => {
                let shifted = (x0 + i as f64 * 0.618_033_988_749_894_8).fract();
                KeystreamKind::Chaotic { r: *r, x0: if shifted == 0.0 { 0.5 } else { shifted }, burn_in: *burn_in }
            }
            KeystreamKind::Lcg { a, c, x0 } => KeystreamKind::Lcg { a: *a, c: *c, x0: x0.wrapping_add(i as u32) },
            KeystreamKind::Mt19937 { seed } => KeystreamKind::Mt19937 { seed: seed.wrapping_add(i as u32) },
            KeystreamKind::Rc4 { key } => {
                let mut key = key.clone();
                if i > 0 {
                    key.extend_from_slice(&i.to_le_bytes());
                    key.truncate(256);
                }
                KeystreamKind::Rc4 { key }
            }
        };
        KeystreamSpec { kind, length: self.length }
    }

    /// The four comparison generators with their conventional parameters.
    pub fn defaults(length: usize) -> Vec<KeystreamSpec> {
        vec![
            KeystreamSpec { kind: KeystreamKind::Chaotic { r: LOGISTIC_R, x0: 0.3, burn_in: CHAOS_BURN_IN }, length },
            KeystreamSpec { kind: KeystreamKind::Lcg { a: LCG_A, c: LCG_C, x0: 0 }, length },
            KeystreamSpec { kind: KeystreamKind::Mt19937 { seed: MT_DEFAULT_SEED }, length },
            KeystreamSpec { kind: KeystreamKind::Rc4 { key: b"Key".to_vec() }, length },
        ]
    }
}

/// Parameters of the chaotic permutation + XOR image encryptor.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChaosDomainParams {
    pub r: f64,
    pub burn_in: usize,
    pub master_seed: u64,
}

impl Default for ChaosDomainParams {
    fn default() -> Self {
        Self { r: LOGISTIC_R, burn_in: CHAOS_BURN_IN, master_seed: 0 }
    }
}

/// Start values for the permutation map and the XOR map of image `index`.
fn image_starts(params: &ChaosDomainParams, index: usize) -> (f64, f64) {
    let mut rng = SplitMix64::new(params.master_seed ^ (index as u64).wrapping_mul(0xA076_1D64_78BD_642F));
    let mut draw = || loop {
        let x = 0.001 + 0.998 * rng.next_f64();
        if ![0.25, 0.5, 0.75].contains(&x) {
            return x;
        }
    };
    (draw(), draw())
}

/// Pixel order obtained by sorting a chaotic sequence of length `pixels`.
pub fn chaotic_permutation(r: f64, x0: f64, burn_in: usize, pixels: usize) -> Result<Vec<usize>> {
    let mut map = LogisticMap::new(r, x0)?;
    map.burn(burn_in);
    let seq: Vec<f64> = (0..pixels).map(|_| map.step()).collect();
    let mut perm: Vec<usize> = (0..pixels).collect();
    perm.sort_by(|&a, &b| seq[a].total_cmp(&seq[b]).then(a.cmp(&b)));
    Ok(perm)
}

struct ImageCipher {
    perm: Vec<usize>,
    stream: Vec<u8>,
}

impl ImageCipher {
    fn new(img: &RasterImage, params: &ChaosDomainParams, index: usize) -> Result<Self> {
        let (xp, xs) = image_starts(params, index);
        let pixels = img.width() * img.height();
        Ok(Self {
            perm: chaotic_permutation(params.r, xp, params.burn_in, pixels)?,
            stream: chaotic_stream(params.r, xs, params.burn_in, img.len())?,
        })
    }
}

/// Encrypt one source image into the transformation domain: permute pixels,
/// then XOR with a chaotic keystream. Deterministic per `(index, master_seed)`.
pub fn chaos_encrypt_image(img: &RasterImage, params: &ChaosDomainParams, index: usize) -> Result<RasterImage> {
    let ch = img.channels();
    let ImageCipher { perm, stream } = ImageCipher::new(img, params, index)?;
    let mut out = vec![0u8; img.len()];
    for (dst, &src) in perm.iter().enumerate() {
        out[dst * ch..(dst + 1) * ch].copy_from_slice(&img.bytes()[src * ch..(src + 1) * ch]);
    }
    for (b, k) in out.iter_mut().zip(&stream) {
        *b ^= k;
    }
    img.with_bytes(out)
}

pub fn chaos_decrypt_image(img: &RasterImage, params: &ChaosDomainParams, index: usize) -> Result<RasterImage> {
    let ch = img.channels();
    let ImageCipher { perm, stream } = ImageCipher::new(img, params, index)?;
    let mixed: Vec<u8> = img.bytes().iter().zip(&stream).map(|(b, k)| b ^ k).collect();
    let mut out = vec![0u8; img.len()];
    for (dst, &src) in perm.iter().enumerate() {
        out[src * ch..(src + 1) * ch].copy_from_slice(&mixed[dst * ch..(dst + 1) * ch]);
    }
    img.with_bytes(out)
}

pub fn build_transformation_domain(sources: &[RasterImage], params: &ChaosDomainParams) -> Result<Vec<RasterImage>> {
    if sources.is_empty() {
        return Err(Error::EmptyDomain("no source images for the transformation domain".into()));
    }
    sources.iter().enumerate().map(|(i, img)| chaos_encrypt_image(img, params, i)).collect()
}

/// Write domain images as `domain_00000.png`, ... and return the paths.
pub fn write_domain(images: &[RasterImage], out_dir: &std::path::Path) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let p = out_dir.join(format!("domain_{i:05}.png"));
            img.save(&p)?;
            Ok(p)
        })
        .collect()
}
