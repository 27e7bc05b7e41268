use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::gaussian::{entropy, log_prob_grad, log_prob_unchecked};
use crate::nn::{ActorGrads, ResidualActor, ValueNet};
use crate::par::{self, Exec};
use crate::pretrain::GRAD_CHUNK;

/// Aligned per-transition inputs of the PPO objective.
#[derive(Debug, Clone, Copy)]
pub struct PpoBatch<'a> {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: &'a [f64],
    pub actions: &'a [f64],
    pub old_log_probs: &'a [f64],
    pub value_targets: &'a [f64],
    pub advantages: &'a [f64],
}

impl PpoBatch<'_> {
    pub fn len(&self) -> usize {
        self.old_log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.old_log_probs.is_empty()
    }

    fn check(&self) -> Result<()> {
        let n = self.len();
        if n == 0 {
            return Err(Error::Empty("ppo batch"));
        }
        for (what, len, want) in [
            ("ppo batch observations", self.obs.len(), n * self.obs_dim),
            ("ppo batch actions", self.actions.len(), n * self.act_dim),
            ("ppo batch value targets", self.value_targets.len(), n),
            ("ppo batch advantages", self.advantages.len(), n),
        ] {
            if len != want {
                return Err(Error::LengthMismatch { what, left: want, right: len });
            }
        }
        Ok(())
    }

    fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    fn action_row(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }
}

/// Clip range and term weights of the composite objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub clip_epsilon: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Terms of `total = clip - c1 * value + c2 * entropy` (to be maximized).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub clip: f64,
    pub value: f64,
    pub entropy: f64,
    /// Mean of `log pi_old - log pi_new`.
    pub approx_kl: f64,
    /// Fraction of transitions whose ratio left `[1 - eps, 1 + eps]`.
    pub clip_fraction: f64,
}

#[derive(Default)]
struct Partial {
    clip: f64,
    value: f64,
    kl: f64,
    clipped: usize,
}

/// Whether the unclipped branch of `min(rho A, clip(rho) A)` is the active one.
fn surrogate_active(ratio: f64, adv: f64, eps: f64) -> bool {
    if adv >= 0.0 {
        ratio < 1.0 + eps
    } else {
        ratio > 1.0 - eps
    }
}

fn finish(p: Partial, n: usize, log_sigma: &[f64], coef: LossCoefficients) -> Result<LossTerms> {
    let nf = n as f64;
    let clip = p.clip / nf;
    let value = p.value / nf;
    let ent = entropy(log_sigma);
    let total = clip - coef.c1 * value + coef.c2 * ent;
    let terms =
        LossTerms { total, clip, value, entropy: ent, approx_kl: p.kl / nf, clip_fraction: p.clipped as f64 / nf };
    if ![total, clip, value, ent].iter().all(|x| x.is_finite()) {
        return Err(Error::NonFinite(format!(
            "ppo loss terms: clip={clip} value={value} entropy={ent} over {n} transitions"
        )));
    }
    Ok(terms)
}

/// Evaluates the composite PPO objective.
pub fn ppo_loss(
    batch: &PpoBatch<'_>,
    actor: &ResidualActor,
    critic: &ValueNet,
    coef: LossCoefficients,
) -> Result<LossTerms> {
    batch.check()?;
    let eps = coef.clip_epsilon;
    let mut p = Partial::default();
    for i in 0..batch.len() {
        let mean = actor.mean(batch.obs_row(i))?;
        let lp = log_prob_unchecked(&mean, &actor.log_sigma, batch.action_row(i));
        let ratio = (lp - batch.old_log_probs[i]).exp();
        let adv = batch.advantages[i];
        p.clip += (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv);
        let d = critic.value(batch.obs_row(i))? - batch.value_targets[i];
        p.value += d * d;
        p.kl += batch.old_log_probs[i] - lp;
        p.clipped += ((ratio - 1.0).abs() > eps) as usize;
    }
    finish(p, batch.len(), &actor.log_sigma, coef)
}

/// [`ppo_loss`] together with its gradient (of `total`, the ascent
/// direction) for the actor and the critic. Backbone gradients are skipped
/// when `with_backbone` is false.
pub fn ppo_loss_and_grad(
    batch: &PpoBatch<'_>,
    actor: &ResidualActor,
    critic: &ValueNet,
    coef: LossCoefficients,
    with_backbone: bool,
    exec: Exec,
) -> Result<(LossTerms, ActorGrads, Vec<f64>)> {
    batch.check()?;
    let n = batch.len();
    let scale = 1.0 / n as f64;
    let eps = coef.clip_epsilon;
    let idx: Vec<usize> = (0..n).collect();
    let parts = par::map_chunks(exec, &idx, GRAD_CHUNK, |chunk| -> Result<(Partial, ActorGrads, Vec<f64>)> {
        let mut p = Partial::default();
        let mut ga = actor.zero_grads();
        let mut gc = critic.zero_grads();
        for &i in chunk {
            let obs = batch.obs_row(i);
            let action = batch.action_row(i);
            let tape = actor.forward_tape(obs)?;
            let mean = tape.mean();
            let lp = log_prob_unchecked(mean, &actor.log_sigma, action);
            let ratio = (lp - batch.old_log_probs[i]).exp();
            let adv = batch.advantages[i];
            p.clip += (ratio * adv).min(ratio.clamp(1.0 - eps, 1.0 + eps) * adv);
            p.kl += batch.old_log_probs[i] - lp;
            p.clipped += ((ratio - 1.0).abs() > eps) as usize;
            if surrogate_active(ratio, adv, eps) && adv != 0.0 {
                let w = ratio * adv * scale;
                let (d_mean, d_ls) = log_prob_grad(mean, &actor.log_sigma, action);
                let d_mean: Vec<f64> = d_mean.iter().map(|g| g * w).collect();
                let d_ls: Vec<f64> = d_ls.iter().map(|g| g * w).collect();
                actor.backward(&tape, &d_mean, &d_ls, &mut ga, with_backbone)?;
            }
            let ct = critic.net.forward_tape(obs)?;
            let d = ct.output()[0] - batch.value_targets[i];
            p.value += d * d;
            critic.net.backward(&ct, &[-coef.c1 * 2.0 * d * scale], &mut gc, false)?;
        }
        Ok((p, ga, gc))
    });
    let mut total = Partial::default();
    let mut ga = actor.zero_grads();
    let mut gc = critic.zero_grads();
    for part in parts {
        let (p, a, c) = part?;
        total.clip += p.clip;
        total.value += p.value;
        total.kl += p.kl;
        total.clipped += p.clipped;
        ga.add_assign(&a);
        crate::nn::add(&mut gc, &c);
    }
    for g in &mut ga.log_sigma {
        *g += coef.c2;
    }
    let terms = finish(total, n, &actor.log_sigma, coef)?;
    let finite = ga.backbone.iter().chain(&ga.head).chain(&ga.log_sigma).chain(&gc).all(|g| g.is_finite());
    if !finite {
        return Err(Error::NonFinite(format!("ppo gradient (loss terms {terms:?})")));
    }
    Ok((terms, ga, gc))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ArchConfig, MlpNet};
    use crate::seed::{self, Stream};
    use rand::Rng;

    const COEF: LossCoefficients = LossCoefficients { clip_epsilon: 0.2, c1: 0.5, c2: 0.0 };

    fn linear_actor(bias: f64) -> (ResidualActor, ValueNet) {
        // Backbone outputs a single zero latent; head is `mean = bias`.
        let backbone = MlpNet::zeros(&[1, 1]).unwrap();
        let mut head = MlpNet::zeros(&[2, 1]).unwrap();
        head.layer_mut(0).1[0] = bias;
        let actor = ResidualActor::from_parts(backbone, head, vec![0.0], false).unwrap();
        let critic = ValueNet::from_net(MlpNet::zeros(&[1, 1]).unwrap()).unwrap();
        (actor, critic)
    }

    #[test]
    fn clip_term_hand_example() {
        // log pi_new(a=0) with mean 0, sigma 1; pick old so that rho = 1.5.
        let (actor, critic) = linear_actor(0.0);
        let lp = -0.5 * (2.0 * std::f64::consts::PI).ln();
        let old = [lp - 1.5f64.ln()];
        let batch = PpoBatch {
            obs_dim: 1,
            act_dim: 1,
            obs: &[0.0],
            actions: &[0.0],
            old_log_probs: &old,
            value_targets: &[0.0],
            advantages: &[1.0],
        };
        let t = ppo_loss(&batch, &actor, &critic, COEF).unwrap();
        assert!((t.clip - 1.2).abs() < 1e-12);
        assert_eq!(t.value, 0.0);
        assert_eq!(t.clip_fraction, 1.0);
        let (t2, ga, _) = ppo_loss_and_grad(&batch, &actor, &critic, COEF, true, Exec::default()).unwrap();
        assert_eq!(t, t2);
        // Clipped branch active: no policy gradient.
        assert!(ga.head.iter().chain(&ga.log_sigma).all(|&g| g == 0.0));
    }

    #[test]
    fn identical_policy_gives_unit_ratio() {
        let arch = ArchConfig {
            backbone_hidden: vec![4],
            latent_dim: 2,
            head_hidden: vec![4],
            critic_hidden: vec![4],
            init_log_sigma: -0.5,
        };
        let mut rng = seed::rng(0, Stream::ActorInit, 0);
        let actor = ResidualActor::new(3, 2, &arch, &mut rng).unwrap();
        let critic = ValueNet::new(3, &arch, &mut rng).unwrap();
        let n = 10;
        let obs: Vec<f64> = (0..3 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let actions: Vec<f64> = (0..2 * n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let old: Vec<f64> = (0..n)
            .map(|i| {
                let m = actor.mean(&obs[3 * i..3 * i + 3]).unwrap();
                log_prob_unchecked(&m, &actor.log_sigma, &actions[2 * i..2 * i + 2])
            })
            .collect();
        let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let adv = crate::math::normalize_advantages(&raw).unwrap();
        let targets: Vec<f64> = (0..n).map(|i| critic.value(&obs[3 * i..3 * i + 3]).unwrap()).collect();
        let batch = PpoBatch {
            obs_dim: 3,
            act_dim: 2,
            obs: &obs,
            actions: &actions,
            old_log_probs: &old,
            value_targets: &targets,
            advantages: &adv,
        };
        let t = ppo_loss(&batch, &actor, &critic, COEF).unwrap();
        assert!(t.clip.abs() < 1e-12);
        assert_eq!(t.value, 0.0);
        assert_eq!(t.approx_kl, 0.0);
    }

    #[test]
    fn nan_inputs_are_rejected() {
        let (actor, critic) = linear_actor(0.0);
        let batch = PpoBatch {
            obs_dim: 1,
            act_dim: 1,
            obs: &[0.0],
            actions: &[0.0],
            old_log_probs: &[0.0],
            value_targets: &[f64::NAN],
            advantages: &[1.0],
        };
        assert!(matches!(ppo_loss(&batch, &actor, &critic, COEF), Err(Error::NonFinite(_))));
    }
}
