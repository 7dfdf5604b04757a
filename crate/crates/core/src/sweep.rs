//! Hyper-parameter grid over learning rate, batch size and iteration count,
//! scored by the mean entropy of keys generated from held-out seed images.

use crate::dataset::ImageSource;
use crate::error::{Error, Result};
use crate::metrics::entropy;
use crate::net::{generate_key_with, prepare_images, TrainConfig, Trainer};
use crate::raster::RasterImage;
use crate::rng::SplitMix64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPlan {
    pub train: TrainConfig,
    pub source: ImageSource,
    pub domain: ImageSource,
    pub learning_rates: Vec<f64>,
    pub batch_sizes: Vec<usize>,
    /// Checkpoints along one run per (lr, batch) cell, ascending.
    pub iterations: Vec<u64>,
    /// Fraction of the source set held out as key seeds.
    pub val_fraction: f64,
    pub split_seed: u64,
}

impl SweepPlan {
    /// The study's grid scaled to desk size: 3 learning rates x 3 batch sizes,
    /// with iteration checkpoints at `iterations`.
    pub fn desk(train: TrainConfig, source: ImageSource, domain: ImageSource, iterations: Vec<u64>) -> Self {
        Self {
            split_seed: train.seed,
            train,
            source,
            domain,
            learning_rates: vec![0.02, 0.002, 0.0002],
            batch_sizes: vec![1, 6, 10],
            iterations,
            val_fraction: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.learning_rates.is_empty() || self.batch_sizes.is_empty() || self.iterations.is_empty() {
            return Err(Error::Config("sweep grid has an empty axis".into()));
        }
        if !self.iterations.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Config("iteration grid must be strictly ascending".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config(format!("val_fraction {} must lie in [0, 1)", self.val_fraction)));
        }
        Ok(())
    }
}

/// Seeded shuffle, then hold out `round(n * fraction)` images (at least one
/// when the fraction is positive and at least one remains for training).
pub fn split_train_val(images: Vec<RasterImage>, fraction: f64, seed: u64) -> (Vec<RasterImage>, Vec<RasterImage>) {
    let n = images.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    for i in (1..n).rev() {
        order.swap(i, rng.index(i + 1));
    }
    let mut val_n = (n as f64 * fraction).round() as usize;
    if fraction > 0.0 && val_n == 0 && n > 1 {
        val_n = 1;
    }
    val_n = val_n.min(n.saturating_sub(1));
    let mut slots: Vec<Option<RasterImage>> = images.into_iter().map(Some).collect();
    let val = order[..val_n].iter().map(|&i| slots[i].take().expect("index once")).collect();
    let train = order[val_n..].iter().map(|&i| slots[i].take().expect("index once")).collect();
    (train, val)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepCell {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: u64,
    /// Mean key entropy over the validation seeds; `None` once training
    /// has diverged (shown as NaN in tables).
    pub mean_entropy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub train_images: usize,
    pub val_images: usize,
    pub cells: Vec<SweepCell>,
}

pub fn run_sweep(plan: &SweepPlan) -> Result<SweepReport> {
    plan.validate()?;
    let res = plan.train.resolution;
    let (train_imgs, val_imgs) = split_train_val(plan.source.load(res)?, plan.val_fraction, plan.split_seed);
    // With no held-out images, keys are scored on the training seeds.
    let seeds = if val_imgs.is_empty() { train_imgs.clone() } else { val_imgs.clone() };
    let src = prepare_images(&train_imgs, res)?;
    let dom = prepare_images(&plan.domain.load(res)?, res)?;
    let mut cells = Vec::new();
    for &lr in &plan.learning_rates {
        for &bs in &plan.batch_sizes {
            let cfg = TrainConfig { lr, batch_size: bs, iterations: *plan.iterations.last().expect("non-empty"), ..plan.train.clone() };
            let mut trainer = Trainer::new(cfg)?;
            let mut diverged = false;
            for &target in &plan.iterations {
                while !diverged && trainer.iteration < target {
                    match trainer.step(&src, &dom) {
                        Ok(_) => {}
                        Err(e) if e.is_numerical() => {
                            log::warn!("lr {lr} batch {bs} diverged: {e}");
                            diverged = true;
                        }
                        Err(e) => return Err(e),
                    }
                }
                let mean_entropy = if diverged {
                    None
                } else {
                    let mut total = 0.0;
                    for s in &seeds {
                        let key = generate_key_with(&trainer.generator, &trainer.g_params, res, s)?;
                        total += entropy(key.bytes())?;
                    }
                    Some(total / seeds.len() as f64)
                };
                cells.push(SweepCell { learning_rate: lr, batch_size: bs, iterations: target, mean_entropy });
            }
        }
    }
    Ok(SweepReport { train_images: train_imgs.len(), val_images: val_imgs.len(), cells })
}

#[derive(Serialize)]
struct SweepCsvRow {
    learning_rate: f64,
    batch_size: usize,
    iterations: u64,
    mean_entropy: String,
}

pub fn write_sweep_csv(report: &SweepReport, path: &std::path::Path) -> Result<()> {
    let rows: Vec<SweepCsvRow> = report
        .cells
        .iter()
        .map(|c| SweepCsvRow {
            learning_rate: c.learning_rate,
            batch_size: c.batch_size,
            iterations: c.iterations,
            mean_entropy: c.mean_entropy.map_or("NaN".to_string(), |v| format!("{v:.4}")),
        })
        .collect();
    crate::report::write_csv(&rows, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_is_seeded_partition() {
        let imgs: Vec<RasterImage> = (0..20u8).map(|v| RasterImage::filled(1, 1, 1, v).unwrap()).collect();
        let (t, v) = split_train_val(imgs.clone(), 0.1, 3);
        assert_eq!((t.len(), v.len()), (18, 2));
        let mut all: Vec<u8> = t.iter().chain(&v).map(|i| i.bytes()[0]).collect();
        all.sort();
        assert_eq!(all, (0..20).collect::<Vec<u8>>());
        let (t2, _) = split_train_val(imgs, 0.1, 3);
        assert_eq!(t, t2);
    }

    #[test]
    fn tiny_sweep_shape() {
        let train = TrainConfig { resolution: 32, residual_blocks: 1, ..TrainConfig::desk() };
        let mut plan = SweepPlan::desk(
            train,
            ImageSource::Phantom { count: 10, seed: 1 },
            ImageSource::Phantom { count: 4, seed: 2 },
            vec![1, 2],
        );
        plan.learning_rates = vec![0.0002];
        plan.batch_sizes = vec![1, 2];
        let r = run_sweep(&plan).unwrap();
        assert_eq!(r.cells.len(), 4);
        assert_eq!(r.val_images, 1);
        assert!(r.cells.iter().all(|c| c.mean_entropy.is_some()));
    }
}
