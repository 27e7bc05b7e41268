use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::nn::{load_checkpoint, save_checkpoint};
use crate::ppo::StartingPoint;

/// Provenance of a saved actor/critic pair, written next to the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointInfo {
    pub format_version: u32,
    pub env: EnvId,
    pub seed: u64,
    pub expert_quality: Option<f64>,
    pub actor_pretrained: bool,
    pub critic_pretrained: bool,
    pub n_exp: u64,
    pub n_rol: u64,
}

/// `<checkpoint>.json`
pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".json");
    PathBuf::from(name)
}

/// Writes the networks and their provenance sidecar.
pub fn save_starting_point(start: &StartingPoint, info: &CheckpointInfo, path: &Path) -> Result<()> {
    if info.actor_pretrained != start.actor_pretrained
        || info.critic_pretrained != start.critic_pretrained
        || info.n_exp != start.n_exp
        || info.n_rol != start.n_rol
    {
        return Err(Error::Checkpoint("provenance does not describe the starting point".into()));
    }
    save_checkpoint(&start.actor, &start.critic, path)?;
    std::fs::write(sidecar_path(path), serde_json::to_string_pretty(info)?)?;
    Ok(())
}

/// Reads a checkpoint and its sidecar back into a starting point.
pub fn load_starting_point(path: &Path) -> Result<(StartingPoint, CheckpointInfo)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side)
        .map_err(|e| Error::Checkpoint(format!("cannot read provenance {}: {e}", side.display())))?;
    let info: CheckpointInfo = serde_json::from_str(&text)?;
    if info.format_version != super::REPORT_FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported provenance format_version {}", info.format_version)));
    }
    let (actor, critic) = load_checkpoint(path)?;
    let start = StartingPoint {
        actor,
        critic,
        actor_pretrained: info.actor_pretrained,
        critic_pretrained: info.critic_pretrained,
        n_exp: info.n_exp,
        n_rol: info.n_rol,
    };
    Ok((start, info))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{fresh_start, ExperimentConfig};

    #[test]
    fn starting_point_round_trips() {
        let cfg = ExperimentConfig::default();
        let start = fresh_start(&cfg, 4).unwrap();
        let info = CheckpointInfo {
            format_version: super::super::REPORT_FORMAT_VERSION,
            env: cfg.experiment.env,
            seed: 4,
            expert_quality: None,
            actor_pretrained: false,
            critic_pretrained: false,
            n_exp: 0,
            n_rol: 0,
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("np.ckpt");
        save_starting_point(&start, &info, &path).unwrap();
        let (back, info2) = load_starting_point(&path).unwrap();
        assert_eq!(info2, info);
        assert_eq!(back.actor, start.actor);
        assert_eq!(back.critic, start.critic);
        let wrong = CheckpointInfo { n_exp: 5, ..info };
        assert!(save_starting_point(&start, &wrong, &path).is_err());
    }
}
