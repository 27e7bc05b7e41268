use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::buffer::RolloutBuffer;
use super::loss::{ppo_loss_and_grad, LossTerms, PpoBatch};
use super::{PpoConfig, Regime};
use crate::env::{Env, EnvId};
use crate::error::{Error, Result};
use crate::math::{normalize_advantages, DiscountSpec};
use crate::metrics::{EvalPoint, RunMetrics};
use crate::nn::gaussian::log_prob_unchecked;
use crate::nn::{ActorMask, AdamState, ResidualActor, ValueNet};
use crate::par::{self, Exec};
use crate::seed::{self, Stream};

/// Updates averaged by the smoothed value-loss series of the PIRL schedule.
pub const CHANGE_RATE_WINDOW: usize = 5;

/// Relative change of the trailing-window mean of `history`:
/// `|s_k - s_{k-1}| / max(|s_{k-1}|, 1e-12)` with `s_k` the mean of the last
/// (up to) [`CHANGE_RATE_WINDOW`] entries ending at `k`. `None` until there
/// are two entries.
pub fn pirl_change_rate(history: &[f64]) -> Option<f64> {
    let k = history.len();
    if k < 2 {
        return None;
    }
    let smoothed = |end: usize| {
        let start = end.saturating_sub(CHANGE_RATE_WINDOW);
        history[start..end].iter().sum::<f64>() / (end - start) as f64
    };
    let (cur, prev) = (smoothed(k), smoothed(k - 1));
    Some((cur - prev).abs() / prev.abs().max(1e-12))
}

/// Seed of the `k`-th evaluation of run `seed`. Every evaluation draws its
/// own episodes, so no run is judged on a single fixed sample of states.
pub fn evaluation_seed(seed: u64, k: u64) -> u64 {
    seed::derive(seed, Stream::Evaluation, k)
}

/// Mean and (population) standard deviation of the undiscounted return of
/// the deterministic policy mean over `n_episodes` episodes at the nominal
/// horizon. Episode `i` starts from the reset state for
/// `derive(seed, Evaluation, i)`, so repeated calls see the same states.
pub fn evaluate(env: EnvId, actor: &ResidualActor, n_episodes: usize, seed: u64, exec: Exec) -> Result<(f64, f64)> {
    if n_episodes == 0 {
        return Err(Error::InvalidParameter("evaluation needs at least one episode".into()));
    }
    let horizon = env.spec().nominal_horizon;
    let returns = par::map_indices(exec, n_episodes, |i| -> Result<f64> {
        let mut e = env.make();
        let mut obs = e.reset(seed::derive(seed, Stream::Evaluation, i as u64));
        let mut total = 0.0;
        loop {
            let step = e.step(&actor.mean(&obs)?, horizon)?;
            total += step.reward;
            if step.done() {
                return Ok(total);
            }
            obs = step.next_obs;
        }
    });
    let returns = returns.into_iter().collect::<Result<Vec<f64>>>()?;
    let n = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / n;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// Persistent position of the training environment across buffers.
struct Cursor {
    obs: Vec<f64>,
    episode: u64,
    seed: u64,
}

impl Cursor {
    fn start(env: &mut dyn Env, seed: u64) -> Self {
        let obs = env.reset(seed::derive(seed, Stream::FinetuneEnv, 0));
        Self { obs, episode: 0, seed }
    }

    fn next_episode(&mut self, env: &mut dyn Env) {
        self.episode += 1;
        self.obs = env.reset(seed::derive(self.seed, Stream::FinetuneEnv, self.episode));
    }
}

/// Collects `n_steps` transitions with the stochastic policy at the
/// nominal horizon, recording log-probs and values of the current snapshot.
#[allow(clippy::too_many_arguments)]
fn collect(
    env: &mut dyn Env,
    cursor: &mut Cursor,
    actor: &ResidualActor,
    critic: &ValueNet,
    n_steps: usize,
    version: u64,
    noise: &mut ChaCha8Rng,
) -> Result<RolloutBuffer> {
    let horizon = env.spec().nominal_horizon;
    let mut buf = RolloutBuffer::new(actor.obs_dim(), actor.act_dim(), version);
    let sigma: Vec<f64> = actor.log_sigma.iter().map(|ls| ls.exp()).collect();
    for k in 0..n_steps {
        let mean = actor.mean(&cursor.obs)?;
        let action: Vec<f64> =
            mean.iter().zip(&sigma).map(|(m, s)| m + s * noise.sample::<f64, _>(StandardNormal)).collect();
        let lp = log_prob_unchecked(&mean, &actor.log_sigma, &action);
        let value = critic.value(&cursor.obs)?;
        let step = env.step(&action, horizon)?;
        buf.push(&cursor.obs, &action, lp, value, step.reward);
        if step.terminated {
            buf.end_segment(true, 0.0);
            cursor.next_episode(env);
        } else if step.truncated {
            buf.end_segment(false, critic.value(&step.next_obs)?);
            cursor.next_episode(env);
        } else {
            cursor.obs = step.next_obs;
            if k + 1 == n_steps {
                buf.end_segment(false, critic.value(&cursor.obs)?);
            }
        }
    }
    Ok(buf)
}

/// Standalone rollout collection from fresh episodes (for tests and tools).
pub fn collect_buffer(
    env: EnvId,
    actor: &ResidualActor,
    critic: &ValueNet,
    n_steps: usize,
    seed: u64,
) -> Result<RolloutBuffer> {
    let mut e = env.make();
    let mut cursor = Cursor::start(e.as_mut(), seed);
    let mut noise = seed::rng(seed, Stream::FinetuneNoise, 0);
    collect(e.as_mut(), &mut cursor, actor, critic, n_steps, 0, &mut noise)
}

/// Averages over the minibatch steps of one update.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateStats {
    pub value_loss: f64,
    pub clip: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub minibatches: usize,
}

/// One PPO update: GAE from the buffer's snapshot values, then
/// `epochs_per_update` passes of shuffled minibatch ascent on the composite
/// objective. Blocks excluded by `mask` or a frozen backbone are untouched.
#[allow(clippy::too_many_arguments)]
pub fn ppo_update(
    buffer: &RolloutBuffer,
    policy_version: u64,
    actor: &mut ResidualActor,
    critic: &mut ValueNet,
    adam: &mut AdamState,
    cfg: &PpoConfig,
    mask: ActorMask,
    shuffle_seed: u64,
    exec: Exec,
) -> Result<UpdateStats> {
    if buffer.policy_version != policy_version {
        return Err(Error::InvalidParameter(format!(
            "off-policy buffer: collected by snapshot {}, current snapshot {policy_version}",
            buffer.policy_version
        )));
    }
    if buffer.is_empty() {
        return Err(Error::Empty("rollout buffer"));
    }
    let spec = DiscountSpec::new(cfg.gamma, cfg.lambda)?;
    let (advantages, targets) = buffer.advantages_and_targets(spec)?;
    let (d_s, d_a) = (buffer.obs_dim, buffer.act_dim);
    let with_backbone = mask.backbone && !actor.backbone_frozen;
    let coef = cfg.coefficients();
    let mut order: Vec<usize> = (0..buffer.len()).collect();
    let mut rng = seed::rng(shuffle_seed, Stream::FinetuneShuffle, 0);
    let mut sum = LossTerms::default();
    let mut count = 0usize;
    let (mut obs, mut act, mut old, mut tgt, mut adv) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for _ in 0..cfg.epochs_per_update {
        order.shuffle(&mut rng);
        for mb in order.chunks(cfg.minibatch_size) {
            obs.clear();
            act.clear();
            old.clear();
            tgt.clear();
            adv.clear();
            for &i in mb {
                obs.extend_from_slice(&buffer.obs[i * d_s..(i + 1) * d_s]);
                act.extend_from_slice(&buffer.actions[i * d_a..(i + 1) * d_a]);
                old.push(buffer.log_probs[i]);
                tgt.push(targets[i]);
                adv.push(advantages[i]);
            }
            if cfg.normalize_advantages && adv.len() > 1 {
                adv = normalize_advantages(&adv)?;
            }
            let batch = PpoBatch {
                obs_dim: d_s,
                act_dim: d_a,
                obs: &obs,
                actions: &act,
                old_log_probs: &old,
                value_targets: &tgt,
                advantages: &adv,
            };
            let (terms, mut ga, mut gc) = ppo_loss_and_grad(&batch, actor, critic, coef, with_backbone, exec)?;
            // Ascend the objective: hand the optimizer its negated gradient.
            ga.scale(-1.0);
            for g in &mut gc {
                *g = -*g;
            }
            let [b, h, l] = actor.param_blocks(&ga, mask);
            adam.step(&mut [b, h, l, critic.param_block(&gc, false)])?;
            sum.value += terms.value;
            sum.clip += terms.clip;
            sum.entropy += terms.entropy;
            sum.approx_kl += terms.approx_kl;
            sum.clip_fraction += terms.clip_fraction;
            count += 1;
        }
    }
    let n = count as f64;
    Ok(UpdateStats {
        value_loss: sum.value / n,
        clip: sum.clip / n,
        entropy: sum.entropy / n,
        approx_kl: sum.approx_kl / n,
        clip_fraction: sum.clip_fraction / n,
        minibatches: count,
    })
}

/// Networks a fine-tuning run starts from, with their provenance.
#[derive(Debug, Clone)]
pub struct StartingPoint {
    pub actor: ResidualActor,
    pub critic: ValueNet,
    pub actor_pretrained: bool,
    pub critic_pretrained: bool,
    /// Pretraining steps already spent, carried into the ledger.
    pub n_exp: u64,
    pub n_rol: u64,
}

impl StartingPoint {
    fn check(&self, regime: Regime, env: EnvId) -> Result<()> {
        let spec = env.spec();
        if self.actor.obs_dim() != spec.obs_dim || self.actor.act_dim() != spec.act_dim {
            return Err(Error::Regime(format!(
                "actor shape {}x{} does not fit {env}",
                self.actor.obs_dim(),
                self.actor.act_dim()
            )));
        }
        if self.critic.obs_dim() != spec.obs_dim {
            return Err(Error::Regime(format!("critic input {} does not fit {env}", self.critic.obs_dim())));
        }
        if self.actor_pretrained != regime.needs_pretrained_actor() {
            return Err(Error::Regime(format!(
                "{regime} {} a pretrained actor",
                if regime.needs_pretrained_actor() { "requires" } else { "does not accept" }
            )));
        }
        if self.critic_pretrained != regime.needs_pretrained_critic() {
            return Err(Error::Regime(format!(
                "{regime} {} a pretrained critic",
                if regime.needs_pretrained_critic() { "requires" } else { "does not accept" }
            )));
        }
        if !regime.needs_pretrained_actor() && self.n_exp + self.n_rol > 0 {
            return Err(Error::Regime(format!("{regime} cannot carry pretraining steps")));
        }
        Ok(())
    }
}

/// Result of [`finetune`].
#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    pub metrics: RunMetrics,
    pub actor: ResidualActor,
    pub critic: ValueNet,
    /// Mean value loss of every update.
    pub value_loss_history: Vec<f64>,
    pub updates: Vec<UpdateStats>,
    /// Actor at the moment the PIRL warm-up ended.
    pub actor_at_unfreeze: Option<ResidualActor>,
    /// `step` calls made on the training environment.
    pub env_steps: u64,
}

/// PPO fine-tuning until the evaluation mean reaches the target return or
/// the budget is spent.
///
/// Evaluations happen before training and then every `eval_interval`
/// steps (and when the budget runs out); the stopping rule is only checked
/// there. Evaluation `k` uses the episodes of [`evaluation_seed`]`(seed, k)`.
/// Pretrained regimes keep the backbone fixed when `freeze_backbone`
/// is set. PIRL keeps the whole actor fixed while only the critic learns,
/// until the smoothed per-update value loss changes by less than the
/// threshold; those steps count toward `n_fro`.
pub fn finetune(
    env: EnvId,
    start: StartingPoint,
    regime: Regime,
    cfg: &PpoConfig,
    seed: u64,
    exec: Exec,
) -> Result<FinetuneOutcome> {
    cfg.validate()?;
    start.check(regime, env)?;
    let target = cfg.target_return.unwrap_or(env.spec().target_return);
    let StartingPoint { mut actor, mut critic, n_exp, n_rol, .. } = start;
    actor.backbone_frozen = regime.needs_pretrained_actor() && cfg.freeze_backbone;
    let mut metrics = RunMetrics { n_exp, n_rol, ..RunMetrics::default() };
    let mut e = env.make();
    let mut cursor = Cursor::start(e.as_mut(), seed);
    let mut noise = seed::rng(seed, Stream::FinetuneNoise, 0);
    let mut adam = AdamState::new(cfg.learning_rate);
    let mut history = Vec::new();
    let mut updates = Vec::new();
    let mut actor_at_unfreeze = None;
    let mut frozen = regime == Regime::Pirl;
    let mut version = 0u64;
    let mut steps = 0u64;

    let mut evals = 0u64;
    let (mean, std) = evaluate(env, &actor, cfg.eval_episodes, evaluation_seed(seed, evals), exec)?;
    metrics.eval_curve.push(EvalPoint { step: 0, mean, std });
    if mean >= target {
        metrics.reached_target = true;
        metrics.stop_step = Some(0);
    }
    let mut next_eval = cfg.eval_interval;
    while !metrics.reached_target && steps < cfg.max_env_steps {
        let n = (cfg.max_env_steps - steps).min(cfg.rollout_length as u64) as usize;
        let buffer = collect(e.as_mut(), &mut cursor, &actor, &critic, n, version, &mut noise)?;
        steps += n as u64;
        if frozen {
            metrics.n_fro += n as u64;
        } else {
            metrics.n_fine += n as u64;
        }
        let mask = if frozen { ActorMask::NONE } else { ActorMask::ALL };
        let shuffle_seed = seed::derive(seed, Stream::FinetuneShuffle, version);
        let stats = ppo_update(&buffer, version, &mut actor, &mut critic, &mut adam, cfg, mask, shuffle_seed, exec)?;
        version += 1;
        history.push(stats.value_loss);
        updates.push(stats);
        if frozen && history.len() > CHANGE_RATE_WINDOW {
            if let Some(rate) = pirl_change_rate(&history) {
                if rate < cfg.pirl_change_rate_threshold {
                    frozen = false;
                    metrics.unfreeze_step = Some(steps);
                    actor_at_unfreeze = Some(actor.clone());
                }
            }
        }
        if steps >= next_eval || steps >= cfg.max_env_steps {
            evals += 1;
            let (mean, std) = evaluate(env, &actor, cfg.eval_episodes, evaluation_seed(seed, evals), exec)?;
            metrics.eval_curve.push(EvalPoint { step: steps, mean, std });
            while next_eval <= steps {
                next_eval += cfg.eval_interval;
            }
            if mean >= target {
                metrics.reached_target = true;
                metrics.stop_step = Some(steps);
            }
        }
    }
    metrics.update_total();
    Ok(FinetuneOutcome {
        metrics,
        actor,
        critic,
        value_loss_history: history,
        updates,
        actor_at_unfreeze,
        env_steps: e.total_steps(),
    })
}
