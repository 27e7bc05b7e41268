//! Definition-literal oracles and finite-difference helpers shared by the
//! integration suites.
#![allow(dead_code)]

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use warmstart::nn::{ArchConfig, MlpNet, ResidualActor, ValueNet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `G_t = sum_{k >= t} gamma^(k - t) r_k`, summed term by term.
pub fn returns_oracle(rewards: &[f64], gamma: f64) -> Vec<f64> {
    (0..rewards.len()).map(|t| (t..rewards.len()).map(|k| gamma.powi((k - t) as i32) * rewards[k]).sum()).collect()
}

/// `A_t = sum_l (gamma lambda)^l delta_{t+l}` with every residual spelled out.
pub fn gae_oracle(
    rewards: &[f64],
    values: &[f64],
    bootstrap: f64,
    terminated: bool,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let n = rewards.len();
    let next = |t: usize| {
        if t + 1 < n {
            values[t + 1]
        } else if terminated {
            0.0
        } else {
            bootstrap
        }
    };
    let delta: Vec<f64> = (0..n).map(|t| rewards[t] + gamma * next(t) - values[t]).collect();
    (0..n).map(|t| (t..n).map(|k| (gamma * lambda).powi((k - t) as i32) * delta[k]).sum()).collect()
}

/// Forward pass written directly against the flat parameter layout.
pub fn mlp_oracle(net: &MlpNet, input: &[f64]) -> Vec<f64> {
    let dims = net.dims();
    let p = net.params();
    let mut x = input.to_vec();
    let mut off = 0;
    for l in 0..dims.len() - 1 {
        let (n_in, n_out) = (dims[l], dims[l + 1]);
        let mut y = vec![0.0; n_out];
        for (o, yo) in y.iter_mut().enumerate() {
            let mut z = p[off + n_in * n_out + o];
            for i in 0..n_in {
                z += p[off + o * n_in + i] * x[i];
            }
            *yo = if l + 2 < dims.len() { z.max(0.0) } else { z };
        }
        off += n_in * n_out + n_out;
        x = y;
    }
    x
}

/// `head([backbone(obs); obs])` via [`mlp_oracle`].
pub fn actor_mean_oracle(actor: &ResidualActor, obs: &[f64]) -> Vec<f64> {
    let mut joined = mlp_oracle(&actor.backbone, obs);
    joined.extend_from_slice(obs);
    mlp_oracle(&actor.head, &joined)
}

/// Diagonal Gaussian log-density, term by term.
pub fn log_prob_oracle(mean: &[f64], log_sigma: &[f64], action: &[f64]) -> f64 {
    let mut lp = 0.0;
    for i in 0..mean.len() {
        let s = log_sigma[i].exp();
        let z = (action[i] - mean[i]) / s;
        lp += -0.5 * z * z - log_sigma[i] - 0.5 * (2.0 * std::f64::consts::PI).ln();
    }
    lp
}

pub fn small_arch<R: Rng>(rng: &mut R) -> ArchConfig {
    ArchConfig {
        backbone_hidden: vec![rng.random_range(2..6)],
        latent_dim: rng.random_range(1..4),
        head_hidden: vec![rng.random_range(2..6)],
        critic_hidden: vec![rng.random_range(2..6), rng.random_range(2..5)],
        init_log_sigma: rng.random_range(-1.0..0.0),
    }
}

/// Actor and critic with every parameter drawn uniformly, so no unit sits
/// exactly at a ReLU kink and the output head is not near zero.
pub fn random_nets<R: Rng>(rng: &mut R, obs_dim: usize, act_dim: usize) -> (ResidualActor, ValueNet) {
    let arch = small_arch(rng);
    let mut actor = ResidualActor::new(obs_dim, act_dim, &arch, rng).unwrap();
    let mut critic = ValueNet::new(obs_dim, &arch, rng).unwrap();
    for p in actor
        .backbone
        .params_mut()
        .iter_mut()
        .chain(actor.head.params_mut().iter_mut())
        .chain(critic.net.params_mut().iter_mut())
    {
        *p = rng.random_range(-1.0..1.0);
    }
    for s in &mut actor.log_sigma {
        *s = rng.random_range(-1.0..0.5);
    }
    (actor, critic)
}

pub fn actor_params(actor: &ResidualActor) -> Vec<f64> {
    let mut v = actor.backbone.params().to_vec();
    v.extend_from_slice(actor.head.params());
    v.extend_from_slice(&actor.log_sigma);
    v
}

pub fn set_actor_params(actor: &mut ResidualActor, p: &[f64]) {
    let nb = actor.backbone.num_params();
    let nh = actor.head.num_params();
    actor.backbone.params_mut().copy_from_slice(&p[..nb]);
    actor.head.params_mut().copy_from_slice(&p[nb..nb + nh]);
    actor.log_sigma.copy_from_slice(&p[nb + nh..]);
}

/// Central differences of `f` at `x`.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + h;
            let up = f(&p);
            p[i] = x[i] - h;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest `|a - n| / max(|a|, |n|, floor)` over the coordinates.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic.iter().zip(numeric).map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor)).fold(0.0, f64::max)
}

pub mod gradcheck;
