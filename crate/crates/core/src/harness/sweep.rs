use serde::{Deserialize, Serialize};

use super::compare::ActorPretraining;
use super::config::ExperimentConfig;
use super::report::{median, REPORT_FORMAT_VERSION};
use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::metrics::RunMetrics;
use crate::par::{self, Exec};
use crate::ppo::{evaluate, finetune, Regime};
use crate::pretrain::init_actor;

/// Maps `anchor` (random policy) to 0 and `target` to 1, clamped to [0, 1].
pub fn normalize_return(ret: f64, anchor: f64, target: f64) -> f64 {
    if target <= anchor {
        return if ret >= target { 1.0 } else { 0.0 };
    }
    ((ret - anchor) / (target - anchor)).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedReturn {
    pub seed: u64,
    /// Steps actually collected for this amount.
    pub n_exp: u64,
    pub mean_return: f64,
    pub normalized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSweepPoint {
    pub n_exp: u64,
    pub per_seed: Vec<SeedReturn>,
    /// Seed mean of the normalized return.
    pub normalized: f64,
}

/// Normalized return of the behavioral-cloning actor over expert data amounts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpertSweep {
    pub format_version: u32,
    pub env: EnvId,
    pub expert_quality: f64,
    pub target_return: f64,
    /// Evaluation return of each seed's untrained actor.
    pub random_returns: Vec<f64>,
    pub points: Vec<ExpertSweepPoint>,
}

impl ExpertSweep {
    /// Adjacent grid points where the normalized return decreases.
    pub fn inversions(&self) -> usize {
        self.points.windows(2).filter(|w| w[1].normalized < w[0].normalized).count()
    }

    /// Comma-separated `n_exp,mean,std` table (std across seeds).
    pub fn csv(&self) -> String {
        let mut out = String::from("n_exp,mean,std\n");
        for p in &self.points {
            let n = p.per_seed.len() as f64;
            let var = p.per_seed.iter().map(|s| (s.normalized - p.normalized).powi(2)).sum::<f64>() / n;
            out.push_str(&format!("{},{},{}\n", p.n_exp, p.normalized, var.sqrt()));
        }
        out
    }
}

fn sorted_grid(grid: &[u64]) -> Vec<u64> {
    let mut g = grid.to_vec();
    g.sort_unstable();
    g.dedup();
    g
}

/// For every grid amount and seed: collect expert data, clone it into a
/// fresh actor, evaluate. `n_exp = 0` evaluates the untrained actor, which
/// is the normalization anchor itself.
pub fn sweep_expert_steps(cfg: &ExperimentConfig, quality: f64, exec: Exec) -> Result<ExpertSweep> {
    cfg.validate()?;
    let x = &cfg.experiment;
    let grid = sorted_grid(&cfg.sweep.expert_grid);
    let target = cfg.ppo.target_return.unwrap_or(x.env.spec().target_return);
    let episodes = cfg.ppo.eval_episodes;
    let anchors: Vec<Result<f64>> = par::map_indices(exec, x.seeds.len(), |i| {
        let seed = x.seeds[i];
        Ok(evaluate(x.env, &init_actor(x.env, &cfg.arch, seed)?, episodes, seed, exec)?.0)
    });
    let anchors: Vec<f64> = anchors.into_iter().collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..x.seeds.len()).map(move |s| (g, s))).collect();
    let results = par::map_indices(exec, cells.len(), |k| -> Result<SeedReturn> {
        let (g, s) = cells[k];
        let seed = x.seeds[s];
        if grid[g] == 0 {
            return Ok(SeedReturn { seed, n_exp: 0, mean_return: anchors[s], normalized: 0.0 });
        }
        let p = ActorPretraining::run(cfg, quality, grid[g], seed, exec)?;
        let (mean_return, _) = evaluate(x.env, &p.actor, episodes, seed, exec)?;
        Ok(SeedReturn {
            seed,
            n_exp: p.expert_data.total_steps(),
            mean_return,
            normalized: normalize_return(mean_return, anchors[s], target),
        })
    });
    let mut results = results.into_iter();
    let mut points = Vec::with_capacity(grid.len());
    for &n_exp in &grid {
        let per_seed: Vec<SeedReturn> = results.by_ref().take(x.seeds.len()).collect::<Result<_>>()?;
        let normalized = per_seed.iter().map(|s| s.normalized).sum::<f64>() / per_seed.len() as f64;
        points.push(ExpertSweepPoint { n_exp, per_seed, normalized });
    }
    Ok(ExpertSweep {
        format_version: REPORT_FORMAT_VERSION,
        env: x.env,
        expert_quality: quality,
        target_return: target,
        random_returns: anchors,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRun {
    pub seed: u64,
    pub metrics: Option<RunMetrics>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSweepPoint {
    pub n_rol: u64,
    /// Runs that missed the target keep `n_tot = budget + pretraining` and
    /// `reached_target = false`.
    pub runs: Vec<SweepRun>,
    pub median_n_tot: Option<f64>,
}

/// Total steps to target over rollout amounts at a fixed expert amount.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolloutSweep {
    pub format_version: u32,
    pub env: EnvId,
    pub expert_quality: f64,
    pub n_exp: u64,
    pub points: Vec<RolloutSweepPoint>,
    /// Grid value with the smallest `n_tot` for each seed (first on ties).
    pub minimum_per_seed: Vec<(u64, Option<u64>)>,
    /// Grid value with the smallest median `n_tot` (first on ties).
    pub minimum_median: Option<u64>,
}

impl RolloutSweep {
    /// Comma-separated `n_rol,mean,std` table of `n_tot` across seeds.
    pub fn csv(&self) -> String {
        let mut out = String::from("n_rol,mean,std\n");
        for p in &self.points {
            let v: Vec<f64> = p.runs.iter().filter_map(|r| r.metrics.as_ref()).map(|m| m.n_tot as f64).collect();
            if v.is_empty() {
                continue;
            }
            let mu = v.iter().sum::<f64>() / v.len() as f64;
            let var = v.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / v.len() as f64;
            out.push_str(&format!("{},{},{}\n", p.n_rol, mu, var.sqrt()));
        }
        out
    }
}

fn argmin(values: impl Iterator<Item = (u64, Option<f64>)>) -> Option<u64> {
    let mut best: Option<(u64, f64)> = None;
    for (key, v) in values {
        if let Some(v) = v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((key, v));
            }
        }
    }
    best.map(|(k, _)| k)
}

/// For every rollout amount and seed: the ACP pipeline on the seed's shared
/// expert data and actor, fine-tuned to target. `n_rol = 0` runs as AP.
pub fn sweep_rollout_steps(cfg: &ExperimentConfig, quality: f64, exec: Exec) -> Result<RolloutSweep> {
    cfg.validate()?;
    let x = &cfg.experiment;
    let grid = sorted_grid(&cfg.sweep.rollout_grid);
    let pretrained: Vec<Result<ActorPretraining>> =
        par::map_indices(exec, x.seeds.len(), |i| ActorPretraining::run(cfg, quality, x.n_exp, x.seeds[i], exec));
    let cells: Vec<(usize, usize)> = (0..grid.len()).flat_map(|g| (0..x.seeds.len()).map(move |s| (g, s))).collect();
    let runs = par::map_indices(exec, cells.len(), |k| {
        let (g, s) = cells[k];
        let seed = x.seeds[s];
        let run = || -> Result<RunMetrics> {
            let p = pretrained[s].as_ref().map_err(|e| Error::Report(format!("pretraining failed: {e}")))?;
            let (regime, start) = if grid[g] == 0 {
                (Regime::Ap, p.starting_point(cfg, Regime::Ap, 0, seed, exec)?)
            } else {
                (Regime::Acp, p.starting_point(cfg, Regime::Acp, grid[g], seed, exec)?)
            };
            Ok(finetune(x.env, start, regime, &cfg.ppo, seed, exec)?.metrics)
        };
        match run() {
            Ok(m) => SweepRun { seed, metrics: Some(m), error: None },
            Err(e) => SweepRun { seed, metrics: None, error: Some(e.to_string()) },
        }
    });
    let mut runs = runs.into_iter();
    let points: Vec<RolloutSweepPoint> = grid
        .iter()
        .map(|&n_rol| {
            let runs: Vec<SweepRun> = runs.by_ref().take(x.seeds.len()).collect();
            let totals: Vec<f64> = runs.iter().filter_map(|r| r.metrics.as_ref()).map(|m| m.n_tot as f64).collect();
            RolloutSweepPoint { n_rol, median_n_tot: median(&totals), runs }
        })
        .collect();
    let minimum_per_seed = (0..x.seeds.len())
        .map(|s| {
            let seed = x.seeds[s];
            let best = argmin(points.iter().map(|p| (p.n_rol, p.runs[s].metrics.as_ref().map(|m| m.n_tot as f64))));
            (seed, best)
        })
        .collect();
    let minimum_median = argmin(points.iter().map(|p| (p.n_rol, p.median_n_tot)));
    Ok(RolloutSweep {
        format_version: REPORT_FORMAT_VERSION,
        env: x.env,
        expert_quality: quality,
        n_exp: x.n_exp,
        points,
        minimum_per_seed,
        minimum_median,
    })
}
