//! Pipeline configuration, read from a single TOML file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::denoise::DenoiseConfig;
use crate::error::{Error, Result};
use crate::neural::{CellKind, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// CSV file, resolved relative to the config file when not absolute.
    pub path: PathBuf,
    pub n_train: usize,
    pub n_test: usize,
    /// Append the third CSV column (load) to each input window.
    pub use_exogenous: bool,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            path: PathBuf::from("data/prices.csv"),
            n_train: 28032,
            n_test: 7008,
            use_exogenous: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaeConfig {
    /// Layer widths, input first. The first entry must equal the window
    /// length (twice that with an exogenous channel).
    pub dims: Vec<usize>,
    pub train: TrainConfig,
}

impl Default for SaeConfig {
    fn default() -> Self {
        SaeConfig {
            dims: vec![24, 16, 12, 8],
            train: TrainConfig {
                epochs: 50,
                batch_size: 64,
                learning_rate: 1e-2,
                ..TrainConfig::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub window: usize,
    pub seq_len: usize,
    pub hidden_dim: usize,
    pub cells: Vec<CellKind>,
    pub horizons: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window: 24,
            seq_len: 8,
            hidden_dim: 32,
            cells: vec![CellKind::Gru, CellKind::Lstm],
            horizons: vec![3, 6, 9, 12],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Resolved relative to the working directory.
    pub dir: PathBuf,
    /// Horizon whose predictions go to the trace file.
    pub trace_horizon: usize,
    /// Number of test samples in the trace file.
    pub trace_len: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("out"),
            trace_horizon: 3,
            trace_len: 168,
        }
    }
}

/// Every setting of a pipeline run. Per-stage `seed` fields are derived
/// from `seed` by [`PipelineConfig::resolved`] and ignored otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub denoise: DenoiseConfig,
    pub sae: SaeConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub output: OutputConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 42,
            data: DataConfig::default(),
            denoise: DenoiseConfig::default(),
            sae: SaeConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

/// Seed offsets of the independent random streams.
const SEED_CEEMDAN: u64 = 0;
const SEED_SAE: u64 = 1;
const SEED_MODEL: u64 = 100;

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let field = e
                .span()
                .map(|s| format!("<toml offset {}..{}>", s.start, s.end))
                .unwrap_or_else(|| "<toml>".into());
            Error::config(field, e.message().to_string())
        })
    }

    /// Reads and validates a config file. A relative data path is taken
    /// relative to the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if cfg.data.path.is_relative() {
            if let Some(dir) = path.parent() {
                cfg.data.path = dir.join(&cfg.data.path);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn sae_input_dim(&self) -> usize {
        if self.data.use_exogenous {
            2 * self.model.window
        } else {
            self.model.window
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.denoise.validate("denoise")?;
        self.sae.train.validate("sae.train")?;
        self.train.validate("train")?;
        if self.data.n_train == 0 {
            return Err(Error::config("data.n_train", "must be >= 1"));
        }
        if self.data.n_test == 0 {
            return Err(Error::config("data.n_test", "must be >= 1"));
        }
        let m = &self.model;
        if m.window == 0 {
            return Err(Error::config("model.window", "must be >= 1"));
        }
        if m.seq_len == 0 {
            return Err(Error::config("model.seq_len", "must be >= 1"));
        }
        if m.hidden_dim == 0 {
            return Err(Error::config("model.hidden_dim", "must be >= 1"));
        }
        if m.cells.is_empty() {
            return Err(Error::config("model.cells", "must name at least one cell kind"));
        }
        if m.horizons.is_empty() || m.horizons.contains(&0) {
            return Err(Error::config("model.horizons", "must be a non-empty list of positive horizons"));
        }
        let mut sorted = m.horizons.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != m.horizons.len() {
            return Err(Error::config("model.horizons", "contains duplicates"));
        }
        let distinct: std::collections::HashSet<_> = m.cells.iter().collect();
        if distinct.len() != m.cells.len() {
            return Err(Error::config("model.cells", "contains duplicates"));
        }
        let dims = &self.sae.dims;
        if dims.len() != 4 || dims.contains(&0) {
            return Err(Error::config("sae.dims", "needs four positive layer widths"));
        }
        if dims[0] != self.sae_input_dim() {
            return Err(Error::config(
                "sae.dims",
                format!(
                    "input width {} does not match the window input size {}",
                    dims[0],
                    self.sae_input_dim()
                ),
            ));
        }
        if !m.horizons.contains(&self.output.trace_horizon) {
            return Err(Error::config("output.trace_horizon", "must be one of model.horizons"));
        }
        if self.output.dir.as_os_str().is_empty() {
            return Err(Error::config("output.dir", "must not be empty"));
        }
        Ok(())
    }

    /// Creates the output directory and checks that it accepts files.
    pub fn prepare_output_dir(&self) -> Result<PathBuf> {
        let dir = &self.output.dir;
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::config("output.dir", format!("{}: {e}", dir.display())))?;
        let probe = dir.join(".write-test");
        std::fs::write(&probe, b"")
            .and_then(|_| std::fs::remove_file(&probe))
            .map_err(|e| Error::config("output.dir", format!("{} is not writable: {e}", dir.display())))?;
        Ok(dir.clone())
    }

    /// Copy with every stage seed derived from the master seed.
    pub fn resolved(&self) -> Self {
        let mut cfg = self.clone();
        cfg.denoise.ceemdan.seed = self.seed.wrapping_add(SEED_CEEMDAN);
        cfg.sae.train.seed = self.seed.wrapping_add(SEED_SAE);
        cfg.train.seed = self.seed.wrapping_add(SEED_MODEL);
        cfg
    }

    /// Training settings for the predictor of `kind` at `horizon`.
    pub fn model_train_config(&self, kind: CellKind, horizon: usize) -> TrainConfig {
        let kind_offset = match kind {
            CellKind::Gru => 0,
            CellKind::Lstm => 1,
        };
        TrainConfig {
            seed: self
                .seed
                .wrapping_add(SEED_MODEL)
                .wrapping_add(1000 * horizon as u64 + kind_offset),
            ..self.train.clone()
        }
    }

    /// SHA-256 of the resolved configuration, excluding file locations.
    pub fn hash(&self) -> String {
        let mut cfg = self.resolved();
        cfg.data.path = PathBuf::new();
        cfg.output.dir = PathBuf::new();
        let digest = Sha256::digest(cfg.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        let back = PipelineConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(cfg.model.horizons, vec![3, 6, 9, 12]);
        assert_eq!(cfg.denoise.ceemdan.ensemble_size, 100);
        assert_eq!(cfg.denoise.pe_threshold, 0.7);
        assert_eq!((cfg.data.n_train, cfg.data.n_test), (28032, 7008));
    }

    #[test]
    fn partial_file_uses_defaults() {
        let cfg = PipelineConfig::from_toml("seed = 7\n[train]\nepochs = 3\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.model.window, 24);
    }

    #[test]
    fn field_paths_in_errors() {
        let cfg = PipelineConfig::from_toml("[train]\nlearning_rate = -0.1\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("train.learning_rate"), "{err}");

        let cfg = PipelineConfig::from_toml("[denoise.ceemdan]\nensemble_size = 0\n").unwrap();
        let err = cfg.validate().unwrap_err().to_string();
        assert!(err.contains("denoise.ceemdan.ensemble_size"), "{err}");

        let cfg = PipelineConfig::from_toml("[model]\nwindow = 12\n").unwrap();
        assert!(cfg.validate().unwrap_err().to_string().contains("sae.dims"));

        assert!(PipelineConfig::from_toml("[model]\nbogus = 1\n").is_err());
        assert!(PipelineConfig::from_toml("[model]\ncells = [\"rnn\"]\n").is_err());
    }

    #[test]
    fn seeds_follow_master_seed() {
        let a = PipelineConfig::default();
        let b = PipelineConfig { seed: 43, ..a.clone() };
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
        assert_eq!(a.hash().len(), 64);
        assert_ne!(
            a.model_train_config(CellKind::Gru, 3).seed,
            a.model_train_config(CellKind::Lstm, 3).seed
        );
        assert_eq!(a.resolved().denoise.ceemdan.seed, 42);
    }

    #[test]
    fn output_dir_is_created() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = PipelineConfig::default();
        cfg.output.dir = tmp.path().join("nested/out");
        assert!(cfg.prepare_output_dir().unwrap().is_dir());
    }
}
