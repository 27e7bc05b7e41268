use super::calibrate::{calibrate_expert, Calibration};
use super::config::ExperimentConfig;
use super::report::{CellResult, ComparisonReport};
use crate::env::ExpertController;
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::nn::{ResidualActor, ValueNet};
use crate::par::{self, Exec};
use crate::ppo::{finetune, FinetuneOutcome, Regime, StartingPoint};
use crate::pretrain::{
    bc_pretrain, collect_expert, collect_rollouts, critic_pretrain, init_actor, init_critic, TransitionDataset,
};

/// Expert quality from the config override or by calibration.
pub fn resolve_quality(cfg: &ExperimentConfig, exec: Exec) -> Result<(f64, Option<Calibration>)> {
    let x = &cfg.experiment;
    match x.expert_quality {
        Some(q) => Ok((q, None)),
        None => {
            let cal = calibrate_expert(x.env, x.c, &x.seeds, x.calibration_episodes, exec)?;
            Ok((cal.quality, Some(cal)))
        }
    }
}

/// Expert data and the behavioral-cloning actor of one seed, shared by
/// every pretrained regime of that seed.
#[derive(Debug, Clone)]
pub struct ActorPretraining {
    pub expert_data: TransitionDataset,
    pub actor: ResidualActor,
}

impl ActorPretraining {
    pub fn run(cfg: &ExperimentConfig, quality: f64, n_exp: u64, seed: u64, exec: Exec) -> Result<Self> {
        let env = cfg.experiment.env;
        let controller = ExpertController::new(env, quality, seed)?;
        let (expert_data, _) = collect_expert(env, &controller, n_exp, cfg.pretrain.gamma, seed, exec)?;
        let mut actor = init_actor(env, &cfg.arch, seed)?;
        bc_pretrain(&mut actor, &expert_data, &cfg.pretrain, seed, exec)?;
        Ok(Self { expert_data, actor })
    }

    /// Critic fitted to returns of `n_rol` rollout steps of the pretrained
    /// actor, with the steps actually taken.
    pub fn pretrained_critic(
        &self,
        cfg: &ExperimentConfig,
        n_rol: u64,
        seed: u64,
        exec: Exec,
    ) -> Result<(ValueNet, u64)> {
        let env = cfg.experiment.env;
        let p = &cfg.pretrain;
        let (data, _) = collect_rollouts(env, &self.actor, n_rol, p.gamma, p.tau_for(env), false, seed, exec)?;
        if data.is_empty() {
            return Err(Error::Config("critic pretraining needs a positive rollout budget".into()));
        }
        let mut critic = init_critic(env, &cfg.arch, seed)?;
        critic_pretrain(&mut critic, &data, p, seed, exec)?;
        Ok((critic, data.total_steps()))
    }

    /// Starting point of `regime` for this seed; `n_rol` only matters for ACP.
    pub fn starting_point(
        &self,
        cfg: &ExperimentConfig,
        regime: Regime,
        n_rol: u64,
        seed: u64,
        exec: Exec,
    ) -> Result<StartingPoint> {
        let env = cfg.experiment.env;
        let n_exp = self.expert_data.total_steps();
        Ok(match regime {
            Regime::Np => fresh_start(cfg, seed)?,
            Regime::Ap | Regime::Pirl => StartingPoint {
                actor: self.actor.clone(),
                critic: init_critic(env, &cfg.arch, seed)?,
                actor_pretrained: true,
                critic_pretrained: false,
                n_exp,
                n_rol: 0,
            },
            Regime::Acp => {
                let (critic, n_rol) = self.pretrained_critic(cfg, n_rol, seed, exec)?;
                StartingPoint {
                    actor: self.actor.clone(),
                    critic,
                    actor_pretrained: true,
                    critic_pretrained: true,
                    n_exp,
                    n_rol,
                }
            }
        })
    }
}

/// Randomly initialized networks for the no-pretraining regime.
pub fn fresh_start(cfg: &ExperimentConfig, seed: u64) -> Result<StartingPoint> {
    let env = cfg.experiment.env;
    Ok(StartingPoint {
        actor: init_actor(env, &cfg.arch, seed)?,
        critic: init_critic(env, &cfg.arch, seed)?,
        actor_pretrained: false,
        critic_pretrained: false,
        n_exp: 0,
        n_rol: 0,
    })
}

/// Runs one (seed, regime) cell from scratch: pretraining as the regime
/// requires, then fine-tuning.
pub fn run_cell(
    cfg: &ExperimentConfig,
    quality: f64,
    seed: u64,
    regime: Regime,
    exec: Exec,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    let x = &cfg.experiment;
    let start = if regime == Regime::Np {
        fresh_start(cfg, seed)?
    } else {
        ActorPretraining::run(cfg, quality, x.n_exp, seed, exec)?.starting_point(cfg, regime, x.n_rol, seed, exec)?
    };
    finetune(x.env, start, regime, &cfg.ppo, seed, exec)
}

fn cell_result(seed: u64, regime: Regime, hash: Option<u64>, outcome: Result<RunMetrics>) -> CellResult {
    match outcome {
        Ok(m) => CellResult { seed, regime, metrics: Some(m), error: None, expert_hash: hash },
        Err(e) => CellResult { seed, regime, metrics: None, error: Some(e.to_string()), expert_hash: hash },
    }
}

/// Runs every configured (seed, regime) cell and assembles the report.
///
/// All pretrained regimes of a seed consume the same expert dataset and
/// start from the same cloned actor. A failing cell is recorded in the
/// report instead of aborting the comparison.
pub fn run_comparison(cfg: &ExperimentConfig, exec: Exec) -> Result<ComparisonReport> {
    cfg.validate()?;
    let x = &cfg.experiment;
    if x.regimes.contains(&Regime::Acp) && x.n_rol == 0 {
        return Err(Error::Config("experiment.n_rol must be positive when ACP is requested".into()));
    }
    let (quality, calibration) = resolve_quality(cfg, exec)?;
    let any_pretrained = x.regimes.iter().any(|r| r.needs_pretrained_actor());
    let pretrained: Vec<Option<Result<ActorPretraining>>> = par::map_indices(exec, x.seeds.len(), |i| {
        any_pretrained.then(|| ActorPretraining::run(cfg, quality, x.n_exp, x.seeds[i], exec))
    });
    let cells: Vec<(u64, Regime)> = x.seeds.iter().flat_map(|&s| x.regimes.iter().map(move |&r| (s, r))).collect();
    let results = par::map_indices(exec, cells.len(), |k| {
        let (seed, regime) = cells[k];
        let i = k / x.regimes.len();
        if regime == Regime::Np {
            let run = fresh_start(cfg, seed).and_then(|s| finetune(x.env, s, regime, &cfg.ppo, seed, exec));
            return cell_result(seed, regime, None, run.map(|o| o.metrics));
        }
        match &pretrained[i] {
            Some(Ok(p)) => {
                let run = p
                    .starting_point(cfg, regime, x.n_rol, seed, exec)
                    .and_then(|s| finetune(x.env, s, regime, &cfg.ppo, seed, exec));
                cell_result(seed, regime, Some(p.expert_data.content_hash()), run.map(|o| o.metrics))
            }
            Some(Err(e)) => cell_result(seed, regime, None, Err(Error::Report(format!("pretraining failed: {e}")))),
            None => unreachable!("pretraining is prepared whenever a pretrained regime is requested"),
        }
    });
    Ok(ComparisonReport::assemble(
        x.env,
        cfg.ppo.target_return.unwrap_or(x.env.spec().target_return),
        cfg.ppo.max_env_steps,
        x.seeds.clone(),
        quality,
        calibration,
        x.n_exp,
        x.n_rol,
        results,
    ))
}
