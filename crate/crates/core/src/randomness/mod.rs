//! Four statistical randomness tests over bitstreams extracted from keys:
//! non-overlapping template matching, binary matrix rank, Maurer's universal
//! statistic and the random excursions variant.

mod excursions;
mod maurer;
mod rank;
mod template;

pub use excursions::{random_excursions_variant, EXCURSION_STATES, MIN_CYCLES};
pub use maurer::{maurer_constants, maurers_universal};
pub use rank::{binary_matrix_rank, gf2_rank, rank_probabilities};
pub use template::{aperiodic_templates, non_overlapping_template, template_sweep};

use crate::error::{Error, Result};
use crate::key::ImageKey;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const ALPHA: f64 = 0.01;

/// Upper regularized incomplete gamma function Q(a, x).
pub fn igamc(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    statrs::function::gamma::gamma_ur(a, x).clamp(0.0, 1.0)
}

pub fn erfc(x: f64) -> f64 {
    statrs::function::erf::erfc(x).clamp(0.0, 2.0)
}

/// Packed bit sequence, most significant bit of each byte first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitStream {
    bytes: Vec<u8>,
    len: usize,
    pub provenance: String,
}

impl BitStream {
    pub fn from_bytes(bytes: &[u8], provenance: impl Into<String>) -> Result<Self> {
        if bytes.is_empty() {
            return Err(Error::EmptyInput);
        }
        Ok(Self { bytes: bytes.to_vec(), len: bytes.len() * 8, provenance: provenance.into() })
    }

    /// Build from individual bits (each 0 or 1); the length need not be a
    /// multiple of 8.
    pub fn from_bits(bits: &[u8], provenance: impl Into<String>) -> Result<Self> {
        if bits.is_empty() {
            return Err(Error::EmptyInput);
        }
        let mut bytes = vec![0u8; bits.len().div_ceil(8)];
        for (i, &b) in bits.iter().enumerate() {
            if b != 0 {
                bytes[i / 8] |= 0x80 >> (i % 8);
            }
        }
        Ok(Self { bytes, len: bits.len(), provenance: provenance.into() })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn bit(&self, i: usize) -> u8 {
        (self.bytes[i / 8] >> (7 - i % 8)) & 1
    }

    pub fn bits(&self) -> impl Iterator<Item = u8> + '_ {
        (0..self.len).map(|i| self.bit(i))
    }

    pub fn to_bits(&self) -> Vec<u8> {
        self.bits().collect()
    }

    /// The packed bytes; trailing bits past `len` are zero.
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }
}

/// Canonical row-major byte order, MSB-first bits.
pub fn to_bitstream(bytes: &[u8]) -> Result<BitStream> {
    BitStream::from_bytes(bytes, format!("{} bytes, row-major, MSB first", bytes.len()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PValueResult {
    pub test: String,
    pub parameters: BTreeMap<String, String>,
    pub statistics: BTreeMap<String, f64>,
    /// The p-value the verdict is based on.
    pub p_value: f64,
    /// Per-state p-values for multi-state tests; empty otherwise.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub p_values: Vec<f64>,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl PValueResult {
    fn new(test: &str, p_value: f64) -> Self {
        Self {
            test: test.to_string(),
            parameters: BTreeMap::new(),
            statistics: BTreeMap::new(),
            p_value,
            p_values: Vec::new(),
            pass: p_value >= ALPHA,
            warnings: Vec::new(),
        }
    }

    fn param(mut self, name: &str, value: impl ToString) -> Self {
        self.parameters.insert(name.to_string(), value.to_string());
        self
    }

    fn stat(mut self, name: &str, value: f64) -> Self {
        self.statistics.insert(name.to_string(), value);
        self
    }
}

/// Test parameters; every field can be overridden from a JSON block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NistParams {
    pub template: String,
    pub template_blocks: usize,
    /// Run every aperiodic template of the configured length, not just one.
    pub all_templates: bool,
    pub rank_rows: usize,
    pub rank_cols: usize,
    pub maurer_block: usize,
    pub maurer_init_blocks: usize,
}

impl Default for NistParams {
    fn default() -> Self {
        Self {
            template: "000000001".into(),
            template_blocks: 8,
            all_templates: false,
            rank_rows: 32,
            rank_cols: 32,
            maurer_block: 7,
            maurer_init_blocks: 1280,
        }
    }
}

impl NistParams {
    pub fn template_bits(&self) -> Result<Vec<u8>> {
        if self.template.is_empty() {
            return Err(Error::Config("template must not be empty".into()));
        }
        self.template
            .chars()
            .map(|c| match c {
                '0' => Ok(0),
                '1' => Ok(1),
                other => Err(Error::Config(format!("template contains {other:?}; use 0 and 1 only"))),
            })
            .collect()
    }
}

/// One test's outcome inside a battery: a result or the error it raised.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryEntry {
    pub test: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<PValueResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BatteryEntry {
    fn from(test: &str, r: Result<PValueResult>) -> Self {
        match r {
            Ok(res) => Self { test: test.into(), result: Some(res), error: None },
            Err(e) => Self { test: test.into(), result: None, error: Some(e.to_string()) },
        }
    }

    pub fn passed(&self) -> bool {
        self.result.as_ref().is_some_and(|r| r.pass)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryReport {
    pub bits: usize,
    pub params: NistParams,
    pub entries: Vec<BatteryEntry>,
    /// Present when the full template sweep was requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub template_sweep: Vec<PValueResult>,
}

impl BatteryReport {
    pub fn passed_count(&self) -> usize {
        self.entries.iter().filter(|e| e.passed()).count()
    }
}

/// Run all four tests on a byte sequence.
pub fn run_battery_bytes(bytes: &[u8], params: &NistParams) -> Result<BatteryReport> {
    let bits = to_bitstream(bytes)?;
    let template = params.template_bits()?;
    let entries = vec![
        BatteryEntry::from(
            template::NAME,
            non_overlapping_template(&bits, &template, params.template_blocks),
        ),
        BatteryEntry::from(rank::NAME, binary_matrix_rank(&bits, params.rank_rows, params.rank_cols)),
        BatteryEntry::from(
            maurer::NAME,
            maurers_universal(&bits, params.maurer_block, params.maurer_init_blocks),
        ),
        BatteryEntry::from(excursions::NAME, random_excursions_variant(&bits)),
    ];
    let template_sweep = if params.all_templates {
        template_sweep(&bits, template.len(), params.template_blocks)?
    } else {
        Vec::new()
    };
    Ok(BatteryReport { bits: bits.len(), params: params.clone(), entries, template_sweep })
}

pub fn run_battery(key: &ImageKey, params: &NistParams) -> Result<BatteryReport> {
    run_battery_bytes(key.bytes(), params)
}
