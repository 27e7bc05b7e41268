//! Random small configurations for comparing analytic gradients with
//! central differences. Each case returns the worst relative error.

use rand::Rng;
use rand_distr::StandardNormal;
use warmstart::nn::gaussian::log_prob;
use warmstart::par::Exec;
use warmstart::ppo::{ppo_loss, ppo_loss_and_grad, LossCoefficients, PpoBatch};
use warmstart::pretrain::{bc_loss_and_grad, bc_objective, critic_loss_and_grad, critic_objective, RowSet};

use super::{actor_params, central_differences, max_rel_error, random_nets, rng, set_actor_params};

pub const STEP: f64 = 1e-6;
/// Denominator floor: gradients below this are compared absolutely.
pub const FLOOR: f64 = 1e-4;

fn normal<R: Rng>(rng: &mut R) -> f64 {
    rng.sample(StandardNormal)
}

/// Composite PPO objective over actor and critic parameters.
pub fn ppo_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (d_s, d_a) = (r.random_range(1..4), r.random_range(1..3));
    let (actor, critic) = random_nets(&mut r, d_s, d_a);
    let n = r.random_range(4..9);
    let obs: Vec<f64> = (0..n * d_s).map(|_| normal(&mut r)).collect();
    let actions: Vec<f64> = (0..n * d_a).map(|_| normal(&mut r)).collect();
    let old: Vec<f64> = (0..n)
        .map(|i| {
            let m = actor.mean(&obs[i * d_s..(i + 1) * d_s]).unwrap();
            log_prob(&m, &actor.log_sigma, &actions[i * d_a..(i + 1) * d_a]).unwrap() + 0.3 * normal(&mut r)
        })
        .collect();
    let targets: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let adv: Vec<f64> = (0..n).map(|_| normal(&mut r)).collect();
    let coef = LossCoefficients { clip_epsilon: 0.2, c1: r.random_range(0.0..1.0), c2: r.random_range(0.0..0.1) };
    let batch = PpoBatch {
        obs_dim: d_s,
        act_dim: d_a,
        obs: &obs,
        actions: &actions,
        old_log_probs: &old,
        value_targets: &targets,
        advantages: &adv,
    };
    let (_, ga, gc) = ppo_loss_and_grad(&batch, &actor, &critic, coef, true, Exec::default()).unwrap();
    let mut analytic = ga.backbone.clone();
    analytic.extend_from_slice(&ga.head);
    analytic.extend_from_slice(&ga.log_sigma);
    let x = actor_params(&actor);
    let mut a = actor.clone();
    let numeric_actor = central_differences(&x, STEP, |p| {
        set_actor_params(&mut a, p);
        ppo_loss(&batch, &a, &critic, coef).unwrap().total
    });
    let mut c = critic.clone();
    let xc = critic.net.params().to_vec();
    let numeric_critic = central_differences(&xc, STEP, |p| {
        c.net.params_mut().copy_from_slice(p);
        ppo_loss(&batch, &actor, &c, coef).unwrap().total
    });
    max_rel_error(&analytic, &numeric_actor, FLOOR).max(max_rel_error(&gc, &numeric_critic, FLOOR))
}

/// Behavioral-cloning objective over all actor parameters.
pub fn bc_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (d_s, d_a) = (r.random_range(1..4), r.random_range(1..3));
    let (actor, _) = random_nets(&mut r, d_s, d_a);
    let n = r.random_range(3..40);
    let rows = RowSet {
        obs_dim: d_s,
        act_dim: d_a,
        obs: (0..n * d_s).map(|_| normal(&mut r)).collect(),
        actions: (0..n * d_a).map(|_| normal(&mut r)).collect(),
        returns: vec![0.0; n],
    };
    let idx: Vec<usize> = (0..n).collect();
    let (_, g) = bc_loss_and_grad(&actor, &rows, &idx, Exec::default()).unwrap();
    let mut analytic = g.backbone.clone();
    analytic.extend_from_slice(&g.head);
    analytic.extend_from_slice(&g.log_sigma);
    let mut a = actor.clone();
    let numeric = central_differences(&actor_params(&actor), STEP, |p| {
        set_actor_params(&mut a, p);
        bc_objective(&a, &rows, &idx).unwrap()
    });
    max_rel_error(&analytic, &numeric, FLOOR)
}

/// Critic regression objective over the critic parameters.
pub fn critic_case(seed: u64) -> f64 {
    let mut r = rng(seed);
    let d_s = r.random_range(1..5);
    let (_, critic) = random_nets(&mut r, d_s, 1);
    let n = r.random_range(3..40);
    let rows = RowSet {
        obs_dim: d_s,
        act_dim: 1,
        obs: (0..n * d_s).map(|_| normal(&mut r)).collect(),
        actions: vec![0.0; n],
        returns: (0..n).map(|_| 3.0 * normal(&mut r)).collect(),
    };
    let idx: Vec<usize> = (0..n).collect();
    let (_, g) = critic_loss_and_grad(&critic, &rows, &idx, Exec::default()).unwrap();
    let mut c = critic.clone();
    let numeric = central_differences(critic.net.params(), STEP, |p| {
        c.net.params_mut().copy_from_slice(p);
        critic_objective(&c, &rows, &idx).unwrap()
    });
    max_rel_error(&g, &numeric, FLOOR)
}
