use super::checkpoint::Checkpoint;
use super::forward::{discriminator_scores, forward};
use super::loss::{d_loss_on_tape, g_loss_on_tape, GanLosses};
use super::spec::{build_discriminator, build_generator, NetworkSpec};
use crate::error::{Error, Result};
use crate::raster::RasterImage;
use crate::rng::SplitMix64;
use crate::tensor::{adam_step, AdamConfig, AdamState, ParamSet, Tape, Tensor};
use serde::{Deserialize, Serialize};

/// Smallest resolution at which every discriminator layer keeps a spatial
/// extent above 1x1.
pub const MIN_TRAIN_RESOLUTION: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub resolution: usize,
    /// One iteration = one discriminator update and one generator update.
    pub iterations: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub residual_blocks: usize,
    pub non_saturating_g_loss: bool,
    /// Snapshot period in iterations; 0 disables snapshots.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            resolution: 256,
            iterations: 20000,
            lr: 0.0002,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 1,
            seed: 0,
            residual_blocks: 6,
            non_saturating_g_loss: false,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Laptop-sized defaults: 64x64, 2000 iterations.
    pub fn desk() -> Self {
        Self { resolution: 64, iterations: 2000, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolution == 0 || self.resolution % 4 != 0 {
            return Err(Error::InvalidResolution(self.resolution));
        }
        if self.resolution < MIN_TRAIN_RESOLUTION {
            return Err(Error::Config(format!(
                "training needs resolution >= {MIN_TRAIN_RESOLUTION} (the discriminator's normalized layers would shrink to 1x1), got {}",
                self.resolution
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.lr)));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::Config(format!("{name} = {b} must lie in [0, 1)")));
            }
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, beta1: self.beta1, beta2: self.beta2, ..AdamConfig::default() }
    }
}

/// Alternating GAN optimization state. Drive it with [`Trainer::step`].
#[derive(Clone, Debug)]
pub struct Trainer {
    pub config: TrainConfig,
    pub generator: NetworkSpec,
    pub discriminator: NetworkSpec,
    pub g_params: ParamSet<f32>,
    pub d_params: ParamSet<f32>,
    pub g_adam: AdamState<f32>,
    pub d_adam: AdamState<f32>,
    pub iteration: u64,
    rng: SplitMix64,
    pub history: Vec<GanLosses>,
}

impl Trainer {
    /// Build both networks and initialize G, then D, from one seeded stream.
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let generator = build_generator(config.resolution, config.residual_blocks)?;
        let discriminator = build_discriminator();
        let mut rng = SplitMix64::new(config.seed);
        let g_params = generator.seeded_init(&mut rng);
        let d_params = discriminator.seeded_init(&mut rng);
        let g_adam = AdamState::new(&g_params, config.adam());
        let d_adam = AdamState::new(&d_params, config.adam());
        Ok(Self {
            config,
            generator,
            discriminator,
            g_params,
            d_params,
            g_adam,
            d_adam,
            iteration: 0,
            rng,
            history: Vec::new(),
        })
    }

    /// Resume exactly where a checkpoint left off.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self> {
        ckpt.generator.check_params(&ckpt.g_params)?;
        ckpt.discriminator.check_params(&ckpt.d_params)?;
        Ok(Self {
            config: ckpt.config,
            generator: ckpt.generator,
            discriminator: ckpt.discriminator,
            g_params: ckpt.g_params,
            d_params: ckpt.d_params,
            g_adam: ckpt.g_adam,
            d_adam: ckpt.d_adam,
            iteration: ckpt.iteration,
            rng: SplitMix64::new(ckpt.rng_state),
            history: Vec::new(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            generator: self.generator.clone(),
            discriminator: self.discriminator.clone(),
            g_params: self.g_params.clone(),
            d_params: self.d_params.clone(),
            g_adam: self.g_adam.clone(),
            d_adam: self.d_adam.clone(),
            iteration: self.iteration,
            rng_state: self.rng.state(),
        }
    }

    fn sample_batch(&mut self, pool: &[Tensor<f32>]) -> Result<Tensor<f32>> {
        let picks: Vec<&Tensor<f32>> =
            (0..self.config.batch_size).map(|_| &pool[self.rng.index(pool.len())]).collect();
        Tensor::stack_batch(&picks)
    }

    /// One iteration: sample an unpaired (x, y) batch, update D on y vs a
    /// detached G(x), then update G through the freshly updated D.
    pub fn step(&mut self, source: &[Tensor<f32>], domain: &[Tensor<f32>]) -> Result<GanLosses> {
        if source.is_empty() {
            return Err(Error::EmptyDomain("source".into()));
        }
        if domain.is_empty() {
            return Err(Error::EmptyDomain("transformation domain".into()));
        }
        let x = self.sample_batch(source)?;
        let y = self.sample_batch(domain)?;
        let ns = self.config.non_saturating_g_loss;

        // The G activations are kept on their own tape; G's weights do not
        // change during the D update, so reusing them equals a fresh forward.
        let mut g_tape = Tape::new();
        let g_bound = g_tape.bind(&self.g_params)?;
        let x_var = g_tape.constant(x)?;
        let fake = forward(&self.generator, &mut g_tape, &g_bound, x_var).map_err(|e| self.diverged(e))?;
        let fake_detached = g_tape.value(fake).clone();

        // Discriminator update.
        let mut d_tape = Tape::new();
        let d_bound = d_tape.bind(&self.d_params)?;
        let y_var = d_tape.constant(y)?;
        let f_var = d_tape.constant(fake_detached)?;
        let real_scores = discriminator_scores(&self.discriminator, &mut d_tape, &d_bound, y_var)
            .map_err(|e| self.diverged(e))?;
        let fake_scores = discriminator_scores(&self.discriminator, &mut d_tape, &d_bound, f_var)
            .map_err(|e| self.diverged(e))?;
        let d_loss_var = d_loss_on_tape(&mut d_tape, real_scores, fake_scores)?;
        let l_d = d_tape.value(d_loss_var).data()[0] as f64;
        let d_grads = d_tape.backward(d_loss_var).map_err(|e| self.diverged(e))?;
        self.d_params.accumulate(&d_grads, &d_bound)?;
        adam_step(&mut self.d_params, &mut self.d_adam)?;

        // Generator update through the updated, frozen discriminator.
        let d_frozen = g_tape.bind_frozen(&self.d_params)?;
        let scores = discriminator_scores(&self.discriminator, &mut g_tape, &d_frozen, fake)
            .map_err(|e| self.diverged(e))?;
        let g_loss_var = g_loss_on_tape(&mut g_tape, scores, ns)?;
        let l_g = g_tape.value(g_loss_var).data()[0] as f64;
        let g_grads = g_tape.backward(g_loss_var).map_err(|e| self.diverged(e))?;
        self.g_params.accumulate(&g_grads, &g_bound)?;
        adam_step(&mut self.g_params, &mut self.g_adam)?;

        self.iteration += 1;
        let losses = GanLosses::new(l_g, l_d);
        if !losses.is_finite() {
            return Err(Error::Divergence { iteration: self.iteration, l_g, l_d });
        }
        self.history.push(losses);
        Ok(losses)
    }

    fn diverged(&self, e: Error) -> Error {
        match e {
            Error::NonFinite(_) => Error::Divergence { iteration: self.iteration + 1, l_g: f64::NAN, l_d: f64::NAN },
            other => other,
        }
    }
}

/// Normalize a set of images into `[1, 3, r, r]` training tensors.
pub fn prepare_images(images: &[RasterImage], resolution: usize) -> Result<Vec<Tensor<f32>>> {
    images
        .iter()
        .map(|img| {
            let rgb = img.to_rgb();
            if rgb.width() != resolution || rgb.height() != resolution {
                return Err(Error::ResolutionMismatch { expected: resolution, width: rgb.width(), height: rgb.height() });
            }
            Ok(rgb.to_tensor())
        })
        .collect()
}

/// Result of a complete training run.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub history: Vec<GanLosses>,
}

/// Train from scratch for `config.iterations`. `on_snapshot` is called every
/// `checkpoint_every` iterations with the current state.
pub fn train_with(
    source: &[RasterImage],
    domain: &[RasterImage],
    config: &TrainConfig,
    mut on_snapshot: impl FnMut(&Trainer) -> Result<()>,
) -> Result<TrainOutcome> {
    if source.is_empty() {
        return Err(Error::EmptyDomain("source".into()));
    }
    if domain.is_empty() {
        return Err(Error::EmptyDomain("transformation domain".into()));
    }
    let src = prepare_images(source, config.resolution)?;
    let dom = prepare_images(domain, config.resolution)?;
    let mut trainer = Trainer::new(config.clone())?;
    while trainer.iteration < config.iterations {
        let l = trainer.step(&src, &dom)?;
        if trainer.iteration % 100 == 0 {
            log::debug!("iter {} l_g {:.4} l_d {:.4}", trainer.iteration, l.l_g, l.l_d);
        }
        if config.checkpoint_every > 0 && trainer.iteration % config.checkpoint_every == 0 {
            on_snapshot(&trainer)?;
        }
    }
    Ok(TrainOutcome { checkpoint: trainer.checkpoint(), history: std::mem::take(&mut trainer.history) })
}

pub fn train(source: &[RasterImage], domain: &[RasterImage], config: &TrainConfig) -> Result<TrainOutcome> {
    train_with(source, domain, config, |_| Ok(()))
}
