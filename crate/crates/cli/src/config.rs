//! Experiment configuration files for `train --config`.

use deepkeygen::randomness::NistParams;
use deepkeygen::{Error, Result, TrainConfig};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisToggles {
    /// Generate and analyze a key from the first source image after training.
    pub analyze_key: bool,
    pub correlation_samples: usize,
    pub nist: NistParams,
}

impl Default for AnalysisToggles {
    fn default() -> Self {
        Self { analyze_key: true, correlation_samples: deepkeygen::metrics::DEFAULT_CORRELATION_SAMPLES, nist: NistParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub source_dir: PathBuf,
    pub domain_dir: PathBuf,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub analysis: AnalysisToggles,
    pub master_seed: u64,
    pub resolution: usize,
}

impl ExperimentConfig {
    /// Parse and check a config file. Relative paths resolve against the
    /// file's directory. `resolution` and `master_seed` win over the values
    /// inside `train`.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.source_dir, &mut cfg.domain_dir, &mut cfg.output_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.sync();
        cfg.check_paths()?;
        Ok(cfg)
    }

    pub fn sync(&mut self) {
        self.train.resolution = self.resolution;
        self.train.seed = self.master_seed;
    }

    fn check_paths(&self) -> Result<()> {
        for (what, p) in [("source_dir", &self.source_dir), ("domain_dir", &self.domain_dir)] {
            if !p.is_dir() {
                return Err(Error::Config(format!("{what} {} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
