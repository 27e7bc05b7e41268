use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::nn::ArchConfig;
use crate::ppo::{PpoConfig, Regime};
use crate::pretrain::PretrainConfig;

/// Which environment, regimes, seeds and budgets an experiment uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub env: EnvId,
    pub regimes: Vec<Regime>,
    pub seeds: Vec<u64>,
    /// Expert level as a fraction of the way from the zero-action baseline
    /// to the target return.
    pub c: f64,
    /// Expert demonstration steps, identical for every pretrained regime.
    pub n_exp: u64,
    /// Rollout steps for critic targets (ACP only).
    pub n_rol: u64,
    /// Skips calibration and uses this quality knob.
    pub expert_quality: Option<f64>,
    /// Episodes per seed in each calibration probe.
    pub calibration_episodes: usize,
    pub output_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            env: EnvId::PointReach,
            regimes: Regime::ALL.to_vec(),
            seeds: vec![0, 1, 2],
            c: 0.65,
            n_exp: 5_000,
            n_rol: 5_000,
            expert_quality: None,
            calibration_episodes: 30,
            output_dir: PathBuf::from("results"),
        }
    }
}

/// Grids of the two ablation sweeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub expert_grid: Vec<u64>,
    pub rollout_grid: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { expert_grid: vec![0, 500, 1_000, 2_000, 5_000], rollout_grid: vec![0, 1_000, 5_000, 20_000] }
    }
}

/// Complete experiment description, read from a sectioned TOML file.
///
/// Every key has a default; unknown sections or keys are rejected.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub arch: ArchConfig,
    pub ppo: PpoConfig,
    pub pretrain: PretrainConfig,
    pub sweep: SweepSection,
}

fn unique<T: Ord + Copy>(items: &[T]) -> bool {
    items.iter().copied().collect::<BTreeSet<_>>().len() == items.len()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        let x = &self.experiment;
        if !(x.c > 0.0 && x.c < 1.0) {
            return fail(format!("experiment.c must lie in (0, 1), got {}", x.c));
        }
        if x.seeds.is_empty() || !unique(&x.seeds) {
            return fail("experiment.seeds must be a non-empty list without repeats".into());
        }
        if x.regimes.is_empty() || !unique(&x.regimes) {
            return fail("experiment.regimes must be a non-empty list without repeats".into());
        }
        if x.n_exp == 0 && x.regimes.iter().any(|r| r.needs_pretrained_actor()) {
            return fail("experiment.n_exp must be positive when a pretrained regime is requested".into());
        }
        if let Some(q) = x.expert_quality {
            if !(0.0..=1.0).contains(&q) {
                return fail(format!("experiment.expert_quality must lie in [0, 1], got {q}"));
            }
        }
        if x.calibration_episodes == 0 {
            return fail("experiment.calibration_episodes must be positive".into());
        }
        if self.sweep.expert_grid.is_empty() {
            return fail("sweep.expert_grid must not be empty".into());
        }
        if !self.sweep.rollout_grid.contains(&0) {
            return fail("sweep.rollout_grid must include 0".into());
        }
        self.ppo.validate()?;
        self.pretrain.validate()?;
        if self.pretrain.gamma != self.ppo.gamma {
            return fail(format!(
                "pretrain.gamma ({}) must equal ppo.gamma ({}): rollout returns are the critic's targets",
                self.pretrain.gamma, self.ppo.gamma
            ));
        }
        Ok(())
    }
}
