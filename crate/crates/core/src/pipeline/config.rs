use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::FitOptions;
use crate::io;
use crate::masks::{AugmentSpec, BlockSpec, ShoulderRectSpec};
use crate::retarget::RetargetConfigFile;

/// Batch configuration. Relative paths resolve against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: Option<PathBuf>,
    pub fit: FitOptions,
    pub retarget: RetargetConfigFile,
    pub block: BlockSpec,
    pub dilation_radius: usize,
    /// Scale/rotation ranges; the seed inside is ignored in favour of the
    /// invocation seed.
    pub augment: AugmentSpec,
    pub shoulder: ShoulderRectSpec,
    /// Landmarks used to align donor hair; defaults to the topology preset
    /// or, failing that, all landmarks.
    pub stable_indices: Option<Vec<usize>>,
    /// Neutral-frame search stride.
    pub stride: usize,
    pub seed: Option<u64>,
    pub input_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            model: None,
            fit: FitOptions::default(),
            retarget: RetargetConfigFile::default(),
            block: BlockSpec::default(),
            dilation_radius: 15,
            augment: AugmentSpec::default(),
            shoulder: ShoulderRectSpec::default(),
            stable_indices: None,
            stride: 5,
            seed: None,
            input_dir: None,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Loads and validates a config file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg: PipelineConfig = io::read_json(path)?;
        let base = path.parent().unwrap_or(Path::new(""));
        let resolve = |p: &mut Option<PathBuf>| {
            if let Some(rel) = p.as_ref().filter(|p| p.is_relative()) {
                *p = Some(base.join(rel));
            }
        };
        resolve(&mut cfg.model);
        resolve(&mut cfg.input_dir);
        resolve(&mut cfg.output_dir);
        cfg.validate()
            .map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        self.augment.validate()?;
        if self.stride == 0 {
            return Err(Error::InvalidInput("stride must be at least 1".into()));
        }
        if self.block.k_h == 0 || self.block.k_w == 0 {
            return Err(Error::InvalidInput("block dimensions must be positive".into()));
        }
        for p in [&self.model, &self.input_dir].into_iter().flatten() {
            if !p.exists() {
                return Err(Error::InvalidInput(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Seed for randomized stages: CLI value first, then the config.
    pub fn require_seed(&self, cli: Option<u64>) -> Result<u64> {
        cli.or(self.seed)
            .ok_or_else(|| Error::InvalidInput("a seed is required (--seed or config `seed`)".into()))
    }
}
