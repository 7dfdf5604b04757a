//! Machine-readable analysis reports (JSON, with CSV mirrors for tables).
//!
//! Reports contain no wall-clock data unless `SOURCE_DATE_EPOCH` is set, so
//! re-running an analysis on the same inputs reproduces the file exactly.

use crate::baselines::KeystreamSpec;
use crate::error::{Error, Result};
use crate::key::{keyspace, ImageKey, KeySpaceReport};
use crate::metrics::{entropy, CorrelationReport, DiffMetrics, Histogram256, SimilarityMetrics};
use crate::randomness::{run_battery, run_battery_bytes, BatteryReport, NistParams};
use crate::raster::RasterImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputRecord {
    pub path: String,
    pub sha256: String,
}

impl InputRecord {
    pub fn hash_file(path: &Path) -> Result<Self> {
        let data = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self { path: path.display().to_string(), sha256: format!("{:x}", Sha256::digest(&data)) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport<B> {
    pub schema_version: u32,
    pub tool: String,
    pub kind: String,
    /// Every parameter needed to regenerate this report.
    pub config: serde_json::Value,
    pub inputs: Vec<InputRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_date_epoch: Option<u64>,
    pub body: B,
}

impl<B: Serialize> AnalysisReport<B> {
    pub fn new(kind: &str, config: &impl Serialize, inputs: Vec<InputRecord>, body: B) -> Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            tool: format!("deepkeygen {}", env!("CARGO_PKG_VERSION")),
            kind: kind.to_string(),
            config: serde_json::to_value(config)?,
            inputs,
            source_date_epoch: std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()),
            body,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyAnalysis {
    pub width: usize,
    pub height: usize,
    pub entropy: f64,
    pub histogram: Histogram256,
    pub correlation: CorrelationReport,
    pub keyspace: KeySpaceReport,
    pub randomness: BatteryReport,
}

pub fn analyze_key(key: &ImageKey, samples: usize, seed: u64, nist: &NistParams) -> Result<KeyAnalysis> {
    let img = key.to_image();
    Ok(KeyAnalysis {
        width: key.width(),
        height: key.height(),
        entropy: entropy(key.bytes())?,
        histogram: Histogram256::from_bytes(key.bytes()),
        correlation: CorrelationReport::compute(&img, samples, seed)?,
        keyspace: keyspace(key.width().max(key.height()))?,
        randomness: run_battery(key, nist)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageStats {
    pub entropy: f64,
    pub histogram: Histogram256,
    pub correlation: CorrelationReport,
}

impl ImageStats {
    pub fn compute(img: &RasterImage, samples: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            entropy: entropy(img.bytes())?,
            histogram: Histogram256::from_bytes(img.bytes()),
            correlation: CorrelationReport::compute(img, samples, seed)?,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CipherAnalysis {
    pub plain: ImageStats,
    pub cipher: ImageStats,
    pub diff: DiffMetrics,
    pub similarity: SimilarityMetrics,
}

/// Compare a plaintext with its ciphertext. A grayscale plaintext is
/// compared in its 3-channel form.
pub fn analyze_cipher(plain: &RasterImage, cipher: &RasterImage, samples: usize, seed: u64) -> Result<CipherAnalysis> {
    let plain = plain.to_rgb();
    let cipher = cipher.to_rgb();
    Ok(CipherAnalysis {
        plain: ImageStats::compute(&plain, samples, seed)?,
        cipher: ImageStats::compute(&cipher, samples, seed)?,
        diff: DiffMetrics::between(&plain, &cipher)?,
        similarity: SimilarityMetrics::between(&plain, &cipher)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaselineRow {
    pub generator: String,
    pub spec: KeystreamSpec,
    pub entropy: f64,
    pub randomness: BatteryReport,
}

pub fn compare_baselines(specs: &[KeystreamSpec], nist: &NistParams) -> Result<Vec<BaselineRow>> {
    specs
        .iter()
        .map(|spec| {
            let bytes = spec.generate()?;
            Ok(BaselineRow {
                generator: spec.kind.name().to_string(),
                spec: spec.clone(),
                entropy: entropy(&bytes)?,
                randomness: run_battery_bytes(&bytes, nist)?,
            })
        })
        .collect()
}

/// Flat per-row summary for CSV export.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub name: String,
    pub entropy: f64,
    pub template_p: Option<f64>,
    pub rank_p: Option<f64>,
    pub universal_p: Option<f64>,
    pub excursions_p: Option<f64>,
}

impl SummaryRow {
    pub fn new(name: &str, entropy: f64, battery: &BatteryReport) -> Self {
        let p = |i: usize| battery.entries.get(i).and_then(|e| e.result.as_ref()).map(|r| r.p_value);
        Self {
            name: name.to_string(),
            entropy,
            template_p: p(0),
            rank_p: p(1),
            universal_p: p(2),
            excursions_p: p(3),
        }
    }
}

pub fn write_csv<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
