use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::{Origin, RowSet, TransitionDataset};
use super::PretrainConfig;
use crate::error::{Error, Result};
use crate::nn::{ActorGrads, ActorMask, AdamState, ResidualActor, ValueNet};
use crate::par::{self, Exec};
use crate::seed::{self, Stream};

/// Rows per gradient work item. Fixed so the summation order, and hence the
/// result, does not depend on the execution strategy.
pub const GRAD_CHUNK: usize = 16;

/// Per-epoch losses; index 0 is before the first update.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct LossCurve {
    pub train: Vec<f64>,
    pub validation: Vec<f64>,
}

impl LossCurve {
    pub fn final_train(&self) -> Option<f64> {
        self.train.last().copied()
    }

    pub fn final_validation(&self) -> Option<f64> {
        self.validation.last().copied()
    }
}

/// Deterministic train/validation split of `0..n`.
pub fn split_rows(n: usize, validation_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed, Stream::Split, 0));
    let mut n_val = (validation_fraction * n as f64).floor() as usize;
    if n_val >= n {
        n_val = n.saturating_sub(1);
    }
    let train = idx.split_off(n_val);
    (train, idx)
}

fn bc_row(actor: &ResidualActor, obs: &[f64], target: &[f64]) -> Result<f64> {
    let mean = actor.mean(obs)?;
    Ok(mean.iter().zip(target).map(|(m, a)| (a - m) * (a - m)).sum())
}

/// Mean over `rows` of `|a_t - mu(s_t)|^2`.
pub fn bc_objective(actor: &ResidualActor, data: &RowSet, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Empty("behavioral-cloning rows"));
    }
    let mut total = 0.0;
    for &i in rows {
        total += bc_row(actor, data.obs(i), data.action(i))?;
    }
    Ok(total / rows.len() as f64)
}

/// [`bc_objective`] and its gradient with respect to all actor parameters.
pub fn bc_loss_and_grad(actor: &ResidualActor, data: &RowSet, rows: &[usize], exec: Exec) -> Result<(f64, ActorGrads)> {
    if rows.is_empty() {
        return Err(Error::Empty("behavioral-cloning rows"));
    }
    let scale = 1.0 / rows.len() as f64;
    let zero_ls = vec![0.0; actor.act_dim()];
    let parts = par::map_chunks(exec, rows, GRAD_CHUNK, |chunk| -> Result<(f64, ActorGrads)> {
        let mut g = actor.zero_grads();
        let mut loss = 0.0;
        for &i in chunk {
            let tape = actor.forward_tape(data.obs(i))?;
            let diff: Vec<f64> = tape.mean().iter().zip(data.action(i)).map(|(m, a)| m - a).collect();
            loss += diff.iter().map(|d| d * d).sum::<f64>();
            let d_mean: Vec<f64> = diff.iter().map(|d| 2.0 * d * scale).collect();
            actor.backward(&tape, &d_mean, &zero_ls, &mut g, true)?;
        }
        Ok((loss, g))
    });
    let mut grads = actor.zero_grads();
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        grads.add_assign(&g);
    }
    Ok((loss * scale, grads))
}

/// Mean over `rows` of `(v(s_t) - G_t)^2`.
pub fn critic_objective(critic: &ValueNet, data: &RowSet, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Empty("critic rows"));
    }
    let mut total = 0.0;
    for &i in rows {
        let d = critic.value(data.obs(i))? - data.returns[i];
        total += d * d;
    }
    Ok(total / rows.len() as f64)
}

/// [`critic_objective`] and its gradient with respect to the critic parameters.
pub fn critic_loss_and_grad(critic: &ValueNet, data: &RowSet, rows: &[usize], exec: Exec) -> Result<(f64, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::Empty("critic rows"));
    }
    let scale = 1.0 / rows.len() as f64;
    let parts = par::map_chunks(exec, rows, GRAD_CHUNK, |chunk| -> Result<(f64, Vec<f64>)> {
        let mut g = critic.zero_grads();
        let mut loss = 0.0;
        for &i in chunk {
            let tape = critic.net.forward_tape(data.obs(i))?;
            let d = tape.output()[0] - data.returns[i];
            loss += d * d;
            critic.net.backward(&tape, &[2.0 * d * scale], &mut g, false)?;
        }
        Ok((loss, g))
    });
    let mut grads = critic.zero_grads();
    let mut loss = 0.0;
    for p in parts {
        let (l, g) = p?;
        loss += l;
        crate::nn::add(&mut grads, &g);
    }
    Ok((loss * scale, grads))
}

fn epoch_order(train: &[usize], seed: u64, stream: Stream, epoch: usize) -> Vec<usize> {
    let mut order = train.to_vec();
    order.shuffle(&mut seed::rng(seed, stream, epoch as u64));
    order
}

/// Behavioral cloning: minibatch Adam on [`bc_objective`] over backbone and
/// head. `log_sigma` is not trained.
pub fn bc_pretrain(
    actor: &mut ResidualActor,
    data: &TransitionDataset,
    cfg: &PretrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<LossCurve> {
    if data.origin != Origin::Expert {
        return Err(Error::InvalidParameter("behavioral cloning needs an expert dataset".into()));
    }
    if data.num_rows() == 0 {
        return Err(Error::Empty("expert dataset"));
    }
    cfg.validate()?;
    if actor.backbone_frozen {
        return Err(Error::InvalidParameter("behavioral cloning trains the backbone; unfreeze it first".into()));
    }
    let rows = data.rows();
    let (train, val) = split_rows(rows.len(), cfg.validation_fraction, seed);
    let mut adam = AdamState::new(cfg.bc_learning_rate);
    let mask = ActorMask { backbone: true, head: true, log_sigma: false };
    let mut curve = LossCurve::default();
    let record = |actor: &ResidualActor, curve: &mut LossCurve| -> Result<()> {
        curve.train.push(bc_objective(actor, &rows, &train)?);
        if !val.is_empty() {
            curve.validation.push(bc_objective(actor, &rows, &val)?);
        }
        Ok(())
    };
    record(actor, &mut curve)?;
    for epoch in 0..cfg.bc_epochs {
        let order = epoch_order(&train, seed, Stream::BcShuffle, epoch);
        for batch in order.chunks(cfg.bc_batch_size) {
            let (_, grads) = bc_loss_and_grad(actor, &rows, batch, exec)?;
            adam.step(&mut actor.param_blocks(&grads, mask))?;
        }
        record(actor, &mut curve)?;
    }
    Ok(curve)
}

/// Critic regression of rollout returns: minibatch Adam on [`critic_objective`].
pub fn critic_pretrain(
    critic: &mut ValueNet,
    data: &TransitionDataset,
    cfg: &PretrainConfig,
    seed: u64,
    exec: Exec,
) -> Result<LossCurve> {
    if data.origin != Origin::Rollout {
        return Err(Error::InvalidParameter("critic pretraining needs a rollout dataset".into()));
    }
    if data.num_rows() == 0 {
        return Err(Error::Empty("rollout dataset"));
    }
    cfg.validate()?;
    let rows = data.rows();
    let (train, val) = split_rows(rows.len(), cfg.validation_fraction, seed);
    let mut adam = AdamState::new(cfg.critic_learning_rate);
    let mut curve = LossCurve::default();
    let record = |critic: &ValueNet, curve: &mut LossCurve| -> Result<()> {
        curve.train.push(critic_objective(critic, &rows, &train)?);
        if !val.is_empty() {
            curve.validation.push(critic_objective(critic, &rows, &val)?);
        }
        Ok(())
    };
    record(critic, &mut curve)?;
    for epoch in 0..cfg.critic_epochs {
        let order = epoch_order(&train, seed, Stream::CriticShuffle, epoch);
        for batch in order.chunks(cfg.critic_batch_size) {
            let (_, grads) = critic_loss_and_grad(critic, &rows, batch, exec)?;
            adam.step(&mut [critic.param_block(&grads, false)])?;
        }
        record(critic, &mut curve)?;
    }
    Ok(curve)
}
