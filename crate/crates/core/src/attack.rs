//! Leakage and traditional-attack experiments over trained key generators.
//!
//! An [`ExperimentPlan`] fixes every input and seed, so a run can be
//! replayed from its plan file. Deterministic identities (exact diagonal of
//! the decryption matrix, `c1 ^ c2 == k1 ^ k2` in differential runs) are
//! checked and raise [`Error::IdentityViolation`]; stochastic expectations
//! such as off-diagonal SSIM are only reported.

use crate::cipher::{xor_decrypt, xor_encrypt};
use crate::dataset::ImageSource;
use crate::error::{Error, Result};
use crate::key::{perturb_seed, ImageKey, PixelChange};
use crate::metrics::{entropy, DiffMetrics, SimilarityMetrics};
use crate::net::{generate_key, train, Checkpoint, GanLosses, TrainConfig};
use crate::raster::RasterImage;
use crate::report::write_csv;
use crate::rng::SplitMix64;
use crate::baselines::{ChaosDomainParams, KeystreamKind, KeystreamSpec};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    DomainLeak,
    StructureLeak,
    BothLeak,
    OneTimePad,
    Sensitivity,
    ChosenPlaintext,
    ChosenCiphertext,
}

impl Scenario {
    pub fn builds_matrix(self) -> bool {
        matches!(self, Scenario::DomainLeak | Scenario::StructureLeak | Scenario::BothLeak | Scenario::OneTimePad)
    }

    pub fn is_differential(self) -> bool {
        !self.builds_matrix()
    }
}

/// One independently trained generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub label: String,
    pub residual_blocks: usize,
    pub seed: u64,
    /// Overrides the plan's transformation domain for this variant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<ImageSource>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub scenario: Scenario,
    /// Base training config; each variant overrides blocks and seed.
    pub train: TrainConfig,
    pub source: ImageSource,
    pub domain: ImageSource,
    pub variants: Vec<VariantSpec>,
    /// Seed images for key generation; the first one drives the matrix.
    pub seed_images: ImageSource,
    pub plaintexts: ImageSource,
    /// Number of one-byte seed perturbations in differential scenarios.
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Drives seed perturbations and correlation sampling.
    pub master_seed: u64,
    /// Use this trained generator instead of training variant 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(default)]
    pub contact_sheet: bool,
}

fn default_trials() -> usize {
    10
}

fn variant(label: &str, residual_blocks: usize, seed: u64) -> VariantSpec {
    VariantSpec { label: label.into(), residual_blocks, seed, domain: None }
}

impl ExperimentPlan {
    /// Laptop-scale plan with synthetic data for `scenario`.
    pub fn desk(scenario: Scenario, master_seed: u64) -> Self {
        let train = TrainConfig { seed: master_seed, ..TrainConfig::desk() };
        let blocks = train.residual_blocks;
        let variants = match scenario {
            Scenario::DomainLeak => vec![variant("A", 3, 1), variant("B", 6, 2), variant("C", 9, 3), variant("D", 12, 4)],
            Scenario::BothLeak | Scenario::OneTimePad => (0..4u64)
                .map(|i| variant(&format!("run{}", i + 1), blocks, master_seed.wrapping_add(i + 1)))
                .collect(),
            Scenario::StructureLeak => vec![
                variant("chaos", blocks, master_seed.wrapping_add(1)),
                VariantSpec {
                    domain: Some(ImageSource::Keystream {
                        count: 32,
                        spec: KeystreamSpec { kind: KeystreamKind::Mt19937 { seed: master_seed as u32 }, length: 1 },
                    }),
                    ..variant("mt19937", blocks, master_seed.wrapping_add(2))
                },
            ],
            _ => vec![variant("main", blocks, master_seed.wrapping_add(1))],
        };
        Self {
            scenario,
            train,
            source: ImageSource::Phantom { count: 32, seed: master_seed.wrapping_add(1000) },
            domain: ImageSource::Chaos {
                from: Box::new(ImageSource::Phantom { count: 32, seed: master_seed.wrapping_add(2000) }),
                params: ChaosDomainParams { master_seed, ..ChaosDomainParams::default() },
            },
            variants,
            seed_images: ImageSource::Phantom { count: 4, seed: master_seed.wrapping_add(3000) },
            plaintexts: ImageSource::Phantom { count: 4, seed: master_seed.wrapping_add(4000) },
            trials: default_trials(),
            master_seed,
            checkpoint: None,
            contact_sheet: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.variants.is_empty() {
            return Err(Error::Config("plan has no variants".into()));
        }
        if self.scenario.builds_matrix() && self.variants.len() < 2 {
            return Err(Error::Config(format!("{:?} needs at least two variants", self.scenario)));
        }
        if self.scenario.is_differential() && self.trials == 0 {
            return Err(Error::Config("differential scenarios need at least one trial".into()));
        }
        Ok(())
    }

    pub fn variant_config(&self, v: &VariantSpec) -> TrainConfig {
        TrainConfig { residual_blocks: v.residual_blocks, seed: v.seed, ..self.train.clone() }
    }
}

/// A trained variant, or the reason it dropped out.
#[derive(Clone, Debug)]
pub struct VariantOutcome {
    pub spec: VariantSpec,
    pub result: std::result::Result<Trained, String>,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub checkpoint: Checkpoint,
    pub final_losses: Option<GanLosses>,
    pub domain_entropy: f64,
}

fn mean_entropy(images: &[RasterImage]) -> Result<f64> {
    let total = images.iter().map(|i| entropy(i.bytes())).sum::<Result<f64>>()?;
    Ok(total / images.len().max(1) as f64)
}

fn train_variant(plan: &ExperimentPlan, v: &VariantSpec, source: &[RasterImage], shared_domain: &[RasterImage]) -> Result<Trained> {
    let res = plan.train.resolution;
    let own;
    let domain = match &v.domain {
        Some(src) => {
            own = src.load(res)?;
            &own[..]
        }
        None => shared_domain,
    };
    let out = train(source, domain, &plan.variant_config(v))?;
    Ok(Trained { final_losses: out.history.last().copied(), checkpoint: out.checkpoint, domain_entropy: mean_entropy(domain)? })
}

/// Train every variant, in parallel up to the available cores. Divergent
/// variants are recorded and dropped; any other error aborts.
pub fn train_variants(plan: &ExperimentPlan) -> Result<Vec<VariantOutcome>> {
    let res = plan.train.resolution;
    let source = plan.source.load(res)?;
    let domain = plan.domain.load(res)?;
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(plan.variants.len()).max(1);
    let mut results: Vec<Option<Result<Trained>>> = (0..plan.variants.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let (source, domain) = (&source, &domain);
                scope.spawn(move || {
                    (w..plan.variants.len())
                        .step_by(workers)
                        .map(|i| (i, train_variant(plan, &plan.variants[i], source, domain)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("training worker panicked") {
                results[i] = Some(r);
            }
        }
    });
    plan.variants
        .iter()
        .zip(results)
        .map(|(spec, r)| match r.expect("every variant trained") {
            Ok(t) => Ok(VariantOutcome { spec: spec.clone(), result: Ok(t) }),
            Err(e) if e.is_numerical() => {
                log::warn!("variant {} dropped: {e}", spec.label);
                Ok(VariantOutcome { spec: spec.clone(), result: Err(e.to_string()) })
            }
            Err(e) => Err(e),
        })
        .collect()
}

/// Cell `(i, j)`: plaintext against `decrypt(encrypt(p, k_i), k_j)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecryptionMatrix {
    pub labels: Vec<String>,
    pub cells: Vec<Vec<SimilarityMetrics>>,
}

impl DecryptionMatrix {
    /// Build the matrix and the decrypted images, row-major.
    pub fn compute(labels: Vec<String>, keys: &[ImageKey], plain: &RasterImage) -> Result<(Self, Vec<RasterImage>)> {
        let mut cells = Vec::with_capacity(keys.len());
        let mut images = Vec::with_capacity(keys.len() * keys.len());
        for (i, ki) in keys.iter().enumerate() {
            let c = xor_encrypt(plain, ki)?;
            let mut row = Vec::with_capacity(keys.len());
            for (j, kj) in keys.iter().enumerate() {
                let d = xor_decrypt(&c, kj)?;
                let m = SimilarityMetrics::between(plain, &d)?;
                if i == j && (m.mse != 0.0 || m.ssim != 1.0 || d != *plain) {
                    return Err(Error::IdentityViolation(format!(
                        "self-decryption of {} is not exact (mse {}, ssim {})",
                        labels[i], m.mse, m.ssim
                    )));
                }
                row.push(m);
                images.push(d);
            }
            cells.push(row);
        }
        Ok((Self { labels, cells }, images))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn max_off_diagonal_ssim(&self) -> Option<f64> {
        let mut best: Option<f64> = None;
        for (i, row) in self.cells.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if i != j {
                    best = Some(best.map_or(c.ssim, |b| b.max(c.ssim)));
                }
            }
        }
        best
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantSummary {
    pub label: String,
    pub residual_blocks: usize,
    pub seed: u64,
    pub status: String,
    pub final_losses: Option<GanLosses>,
    pub key_entropy: Option<f64>,
    pub domain_entropy: Option<f64>,
    pub checkpoint_sha256: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeyPairRow {
    pub a: String,
    pub b: String,
    pub npcr: f64,
    pub uaci: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DifferentialRow {
    pub trial: usize,
    pub seed_index: usize,
    pub plaintext_index: usize,
    pub change: PixelChange,
    /// Between the two keys.
    pub key: DiffMetrics,
    /// Between the two ciphertexts (chosen plaintext) or the two recovered
    /// plaintexts (chosen ciphertext); equals `key` for sensitivity runs.
    pub data: DiffMetrics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub variants: Vec<VariantSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub matrix: Option<DecryptionMatrix>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub key_pairs: Vec<KeyPairRow>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub differential: Vec<DifferentialRow>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub differential_mean: Option<DiffMetrics>,
    pub notes: Vec<String>,
}

/// Everything a run produced, including the images behind the report.
#[derive(Clone, Debug)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub keys: Vec<(String, ImageKey)>,
    pub checkpoints: Vec<(String, Checkpoint)>,
    /// Row-major decryption attempts behind the matrix.
    pub decryptions: Vec<RasterImage>,
}

fn checkpoint_hash(c: &Checkpoint) -> Result<String> {
    Ok(format!("{:x}", Sha256::digest(c.to_bytes()?)))
}

fn as_rgb(img: &RasterImage) -> Result<RasterImage> {
    let rgb = img.to_rgb();
    RasterImage::new(rgb.width(), rgb.height(), 3, rgb.into_bytes())
}

fn xor_bytes(a: &[u8], b: &[u8]) -> Vec<u8> {
    a.iter().zip(b).map(|(x, y)| x ^ y).collect()
}

fn mean_diff(rows: &[DifferentialRow]) -> Option<DiffMetrics> {
    (!rows.is_empty()).then(|| {
        let n = rows.len() as f64;
        DiffMetrics {
            npcr: rows.iter().map(|r| r.data.npcr).sum::<f64>() / n,
            uaci: rows.iter().map(|r| r.data.uaci).sum::<f64>() / n,
        }
    })
}

/// One-byte seed perturbations through one generator.
fn differential(plan: &ExperimentPlan, ckpt: &Checkpoint, seeds: &[RasterImage], plains: &[RasterImage]) -> Result<Vec<DifferentialRow>> {
    let mut rng = SplitMix64::new(plan.master_seed);
    let mut rows = Vec::with_capacity(plan.trials);
    for trial in 0..plan.trials {
        let seed_index = trial % seeds.len();
        let plaintext_index = trial % plains.len();
        let (perturbed, change) = perturb_seed(&seeds[seed_index], &mut rng)?;
        let k1 = generate_key(ckpt, &seeds[seed_index])?;
        let k2 = generate_key(ckpt, &perturbed)?;
        let (i1, i2) = (k1.to_image(), k2.to_image());
        let key = DiffMetrics::between(&i1, &i2)?;
        let key_xor = xor_bytes(k1.bytes(), k2.bytes());
        let p = as_rgb(&plains[plaintext_index])?;
        let (a, b) = match plan.scenario {
            Scenario::ChosenPlaintext => (xor_encrypt(&p, &k1)?, xor_encrypt(&p, &k2)?),
            Scenario::ChosenCiphertext => {
                let c = xor_encrypt(&p, &k1)?;
                (xor_decrypt(&c, &k1)?, xor_decrypt(&c, &k2)?)
            }
            _ => (i1, i2),
        };
        let data = DiffMetrics::between(&a, &b)?;
        if xor_bytes(a.bytes(), b.bytes()) != key_xor || data.npcr != key.npcr {
            return Err(Error::IdentityViolation(format!(
                "trial {trial}: data difference (NPCR {}) does not equal key difference (NPCR {})",
                data.npcr, key.npcr
            )));
        }
        rows.push(DifferentialRow { trial, seed_index, plaintext_index, change, key, data });
    }
    Ok(rows)
}

/// Assemble the report from trained variants (see [`train_variants`]).
pub fn assemble(plan: &ExperimentPlan, outcomes: &[VariantOutcome]) -> Result<ExperimentRun> {
    let res = plan.train.resolution;
    let seeds = plan.seed_images.load(res)?;
    let plains = plan.plaintexts.load(res)?;
    if seeds.is_empty() || plains.is_empty() {
        return Err(Error::EmptyDomain("experiment needs seed images and plaintexts".into()));
    }
    let mut variants = Vec::new();
    let mut keys = Vec::new();
    let mut checkpoints = Vec::new();
    let mut notes = Vec::new();
    for o in outcomes {
        let mut s = VariantSummary {
            label: o.spec.label.clone(),
            residual_blocks: o.spec.residual_blocks,
            seed: o.spec.seed,
            status: "ok".into(),
            final_losses: None,
            key_entropy: None,
            domain_entropy: None,
            checkpoint_sha256: None,
        };
        match &o.result {
            Ok(t) => {
                let key = generate_key(&t.checkpoint, &seeds[0])?;
                s.final_losses = t.final_losses;
                s.key_entropy = Some(entropy(key.bytes())?);
                s.domain_entropy = Some(t.domain_entropy);
                s.checkpoint_sha256 = Some(checkpoint_hash(&t.checkpoint)?);
                keys.push((o.spec.label.clone(), key));
                checkpoints.push((o.spec.label.clone(), t.checkpoint.clone()));
            }
            Err(e) => {
                s.status = format!("dropped: {e}");
                notes.push(format!("variant {} dropped: {e}", o.spec.label));
            }
        }
        variants.push(s);
    }

    let mut report = ExperimentReport {
        scenario: plan.scenario,
        variants,
        matrix: None,
        key_pairs: Vec::new(),
        differential: Vec::new(),
        differential_mean: None,
        notes,
    };
    let mut decryptions = Vec::new();
    if plan.scenario.builds_matrix() {
        if keys.len() < 2 {
            report.notes.push(format!("only {} surviving variants; no matrix", keys.len()));
        } else {
            let p = as_rgb(&plains[0])?;
            let labels = keys.iter().map(|(l, _)| l.clone()).collect();
            let key_list: Vec<ImageKey> = keys.iter().map(|(_, k)| k.clone()).collect();
            let (m, imgs) = DecryptionMatrix::compute(labels, &key_list, &p)?;
            if let Some(s) = m.max_off_diagonal_ssim() {
                let verdict = if s < 0.1 { "below" } else { "NOT below" };
                report.notes.push(format!("max off-diagonal SSIM {s:.4} ({verdict} the 0.1 expectation)"));
            }
            report.matrix = Some(m);
            decryptions = imgs;
            for i in 0..keys.len() {
                for j in i + 1..keys.len() {
                    let d = DiffMetrics::between(&keys[i].1.to_image(), &keys[j].1.to_image())?;
                    report.key_pairs.push(KeyPairRow { a: keys[i].0.clone(), b: keys[j].0.clone(), npcr: d.npcr, uaci: d.uaci });
                }
            }
        }
    } else {
        let ckpt = match &plan.checkpoint {
            Some(path) => Checkpoint::load(path)?,
            None => checkpoints
                .first()
                .map(|(_, c)| c.clone())
                .ok_or_else(|| Error::Config("no trained generator survived".into()))?,
        };
        report.differential = differential(plan, &ckpt, &seeds, &plains)?;
        report.differential_mean = mean_diff(&report.differential);
    }
    Ok(ExperimentRun { report, keys, checkpoints, decryptions })
}

pub fn run(plan: &ExperimentPlan) -> Result<ExperimentRun> {
    plan.validate()?;
    let outcomes = match &plan.checkpoint {
        Some(_) if plan.scenario.is_differential() => Vec::new(),
        Some(path) => {
            let checkpoint = Checkpoint::load(path)?;
            if checkpoint.config.resolution != plan.train.resolution {
                return Err(Error::Config(format!(
                    "checkpoint resolution {} differs from the plan's {}",
                    checkpoint.config.resolution, plan.train.resolution
                )));
            }
            let first = &plan.variants[0];
            let domain = match &first.domain {
                Some(src) => src.load(plan.train.resolution)?,
                None => plan.domain.load(plan.train.resolution)?,
            };
            let reused = Trained { checkpoint, final_losses: None, domain_entropy: mean_entropy(&domain)? };
            let rest = ExperimentPlan { variants: plan.variants[1..].to_vec(), ..plan.clone() };
            let mut outcomes = vec![VariantOutcome { spec: first.clone(), result: Ok(reused) }];
            outcomes.extend(train_variants(&rest)?);
            outcomes
        }
        None => train_variants(plan)?,
    };
    assemble(plan, &outcomes)
}

#[derive(Serialize)]
struct MatrixCsvRow<'a> {
    encrypt_key: &'a str,
    decrypt_key: &'a str,
    mse: f64,
    ssim: f64,
}

#[derive(Serialize)]
struct DifferentialCsvRow {
    trial: usize,
    seed_index: usize,
    plaintext_index: usize,
    x: usize,
    y: usize,
    c: usize,
    key_npcr: f64,
    key_uaci: f64,
    data_npcr: f64,
    data_uaci: f64,
}

/// Tile images into a `cols`-wide grid.
pub fn contact_sheet(images: &[RasterImage], cols: usize) -> Result<RasterImage> {
    let first = images.first().ok_or(Error::EmptyInput)?;
    let (w, h) = (first.width(), first.height());
    let rows = images.len().div_ceil(cols);
    let mut sheet = vec![0u8; cols * w * rows * h * 3];
    for (n, img) in images.iter().enumerate() {
        let img = img.to_rgb();
        let (ox, oy) = ((n % cols) * w, (n / cols) * h);
        for y in 0..h {
            let dst = ((oy + y) * cols * w + ox) * 3;
            sheet[dst..dst + w * 3].copy_from_slice(&img.bytes()[y * w * 3..(y + 1) * w * 3]);
        }
    }
    RasterImage::new(cols * w, rows * h, 3, sheet)
}

/// Write `plan.json`, `report.json`, CSV tables, keys, checkpoints and the
/// optional contact sheet into `dir`.
pub fn write_outputs(plan: &ExperimentPlan, run: &ExperimentRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, text: String| std::fs::write(dir.join(name), text).map_err(|e| Error::io(dir.join(name), e));
    write("plan.json", serde_json::to_string_pretty(plan)? + "\n")?;
    let report = crate::report::AnalysisReport::new("attack-lab", plan, Vec::new(), &run.report)?;
    write("report.json", report.to_json()?)?;
    if let Some(m) = &run.report.matrix {
        let rows: Vec<MatrixCsvRow> = m
            .cells
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter().enumerate().map(move |(j, c)| MatrixCsvRow {
                    encrypt_key: &m.labels[i],
                    decrypt_key: &m.labels[j],
                    mse: c.mse,
                    ssim: c.ssim,
                })
            })
            .collect();
        write_csv(&rows, &dir.join("matrix.csv"))?;
        write_csv(&run.report.key_pairs, &dir.join("key_pairs.csv"))?;
        if plan.contact_sheet && !run.decryptions.is_empty() {
            contact_sheet(&run.decryptions, m.len())?.save(dir.join("contact_sheet.png"))?;
        }
    }
    if !run.report.differential.is_empty() {
        let rows: Vec<DifferentialCsvRow> = run
            .report
            .differential
            .iter()
            .map(|r| DifferentialCsvRow {
                trial: r.trial,
                seed_index: r.seed_index,
                plaintext_index: r.plaintext_index,
                x: r.change.x,
                y: r.change.y,
                c: r.change.c,
                key_npcr: r.key.npcr,
                key_uaci: r.key.uaci,
                data_npcr: r.data.npcr,
                data_uaci: r.data.uaci,
            })
            .collect();
        write_csv(&rows, &dir.join("differential.csv"))?;
    }
    for (label, key) in &run.keys {
        key.save(dir.join(format!("key_{label}.png")))?;
    }
    for (label, ckpt) in &run.checkpoints {
        ckpt.save(dir.join(format!("generator_{label}.dkgn")))?;
    }
    Ok(())
}
