//! Property tests of the numerical core, the environments and training.

mod common;

use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;
use warmstart::env::{EnvId, ExpertController};
use warmstart::math::{
    discounted_returns_of, extended_step_limit, gae_advantages, value_targets, DiscountSpec, StepLimitSpec,
};
use warmstart::nn::{ActorMask, AdamState, ArchConfig};
use warmstart::par::Exec;
use warmstart::ppo::{
    collect_buffer, finetune, ppo_loss_and_grad, ppo_update, LossCoefficients, PpoBatch, PpoConfig, Regime,
    StartingPoint,
};
use warmstart::pretrain::{
    bc_objective, bc_pretrain, collect_expert, collect_rollouts, critic_pretrain, init_actor, init_critic,
    PretrainConfig,
};

use common::*;

fn arch() -> ArchConfig {
    ArchConfig {
        backbone_hidden: vec![16],
        latent_dim: 8,
        head_hidden: vec![16],
        critic_hidden: vec![16],
        init_log_sigma: -0.5,
    }
}

fn quick_ppo() -> PpoConfig {
    PpoConfig {
        rollout_length: 128,
        minibatch_size: 32,
        epochs_per_update: 2,
        eval_interval: 256,
        eval_episodes: 4,
        max_env_steps: 1024,
        ..PpoConfig::default()
    }
}

fn fresh(env: EnvId, seed: u64) -> StartingPoint {
    StartingPoint {
        actor: init_actor(env, &arch(), seed).unwrap(),
        critic: init_critic(env, &arch(), seed).unwrap(),
        actor_pretrained: false,
        critic_pretrained: false,
        n_exp: 0,
        n_rol: 0,
    }
}

fn pretrained(env: EnvId, seed: u64) -> StartingPoint {
    let cfg = PretrainConfig { bc_epochs: 3, ..PretrainConfig::default() };
    let expert = ExpertController::new(env, 0.8, seed).unwrap();
    let (data, _) = collect_expert(env, &expert, 400, cfg.gamma, seed, Exec::default()).unwrap();
    let mut actor = init_actor(env, &arch(), seed).unwrap();
    bc_pretrain(&mut actor, &data, &cfg, seed, Exec::default()).unwrap();
    StartingPoint {
        actor,
        critic: init_critic(env, &arch(), seed).unwrap(),
        actor_pretrained: true,
        critic_pretrained: false,
        n_exp: data.total_steps(),
        n_rol: 0,
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn returns_follow_the_recursion(rewards in prop::collection::vec(-5.0f64..5.0, 1..40), gamma in 0.01f64..=1.0) {
        let g = discounted_returns_of(&rewards, gamma).unwrap();
        prop_assert!(close(&g, &returns_oracle(&rewards, gamma), 1e-9));
        let n = rewards.len();
        prop_assert_eq!(g[n - 1], rewards[n - 1]);
        for t in 0..n - 1 {
            prop_assert!((g[t] - (rewards[t] + gamma * g[t + 1])).abs() <= 1e-12 * (1.0 + g[t].abs()));
        }
    }

    #[test]
    fn gae_matches_its_definition(
        pairs in prop::collection::vec((-2.0f64..2.0, -3.0f64..3.0), 1..30),
        bootstrap in -3.0f64..3.0,
        terminated: bool,
        gamma in 0.5f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        let (rewards, values): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let spec = DiscountSpec::new(gamma, lambda).unwrap();
        let adv = gae_advantages(&rewards, &values, bootstrap, terminated, spec).unwrap();
        prop_assert!(close(&adv, &gae_oracle(&rewards, &values, bootstrap, terminated, gamma, lambda), 1e-9));
        let targets = value_targets(&adv, &values).unwrap();
        if terminated && lambda == 1.0 {
            // With lambda = 1 the targets are the Monte Carlo returns.
            prop_assert!(close(&targets, &returns_oracle(&rewards, gamma), 1e-9));
        }
    }

    #[test]
    fn constant_reward_tail_is_within_tolerance(
        horizon in 1usize..300,
        gamma in 0.5f64..0.999,
        r_max in 0.1f64..10.0,
        tau_fraction in 1e-4f64..1.0,
    ) {
        let tau = tau_fraction * r_max / (1.0 - gamma);
        let spec = StepLimitSpec { nominal_horizon: horizon, r_max, tau };
        let t_ext = extended_step_limit(spec, gamma).unwrap();
        prop_assert!(t_ext >= horizon);
        // Worst case: every reward at the bound, continuing forever. The
        // return from row `horizon - 1` loses the geometric tail past t_ext.
        let truncated = r_max * (1.0 - gamma.powi((t_ext - horizon + 1) as i32)) / (1.0 - gamma);
        let infinite = r_max / (1.0 - gamma);
        prop_assert!(infinite - truncated <= tau * (1.0 + 1e-9));
        // Minimality: one step shorter would exceed the tolerance.
        if t_ext > horizon {
            prop_assert!(spec.tail_bound(gamma, t_ext - horizon - 1) > tau);
        }
    }

    #[test]
    fn bc_objective_matches_oracle_forward(seed in any::<u64>(), n in 1usize..30) {
        let mut r = rng(seed);
        let (d_s, d_a) = (r.random_range(1..5), r.random_range(1..3));
        let (actor, _) = random_nets(&mut r, d_s, d_a);
        let rows = warmstart::pretrain::RowSet {
            obs_dim: d_s,
            act_dim: d_a,
            obs: (0..n * d_s).map(|_| r.sample(StandardNormal)).collect(),
            actions: (0..n * d_a).map(|_| r.sample(StandardNormal)).collect(),
            returns: vec![0.0; n],
        };
        let idx: Vec<usize> = (0..n).collect();
        let oracle = (0..n)
            .map(|i| {
                let m = actor_mean_oracle(&actor, rows.obs(i));
                m.iter().zip(rows.action(i)).map(|(m, a)| (a - m) * (a - m)).sum::<f64>()
            })
            .sum::<f64>()
            / n as f64;
        let got = bc_objective(&actor, &rows, &idx).unwrap();
        prop_assert!((got - oracle).abs() <= 1e-9 * (1.0 + oracle.abs()));
    }

    #[test]
    fn gaussian_log_density_matches_oracle(seed in any::<u64>()) {
        let mut r = rng(seed);
        let d = r.random_range(1..5);
        let mean: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..2.0)).collect();
        let ls: Vec<f64> = (0..d).map(|_| r.random_range(-2.0..1.0)).collect();
        let a: Vec<f64> = (0..d).map(|_| r.random_range(-3.0..3.0)).collect();
        let got = warmstart::nn::gaussian::log_prob(&mean, &ls, &a).unwrap();
        prop_assert!((got - log_prob_oracle(&mean, &ls, &a)).abs() <= 1e-9);
    }
}

#[test]
fn rewards_stay_within_r_max() {
    for env in EnvId::ALL {
        let spec = env.spec();
        let mut e = env.make();
        let mut r = rng(7);
        let mut obs = e.reset(0);
        let mut episode = 0;
        for _ in 0..10_000 {
            let a: Vec<f64> = (0..spec.act_dim).map(|_| r.random_range(-20.0..20.0)).collect();
            let step = e.step(&a, spec.nominal_horizon).unwrap();
            assert!(step.reward.abs() <= spec.r_max, "{env}: |{}| > {}", step.reward, spec.r_max);
            assert_eq!(step.next_obs.len(), obs.len());
            obs = step.next_obs.clone();
            if step.done() {
                episode += 1;
                obs = e.reset(episode);
            }
        }
    }
}

#[test]
fn dataset_returns_recompute_from_traces() {
    for env in EnvId::ALL {
        let actor = init_actor(env, &arch(), 3).unwrap();
        let gamma = 0.97;
        let tau = env.spec().default_tau();
        let (ds, stats) = collect_rollouts(env, &actor, 600, gamma, tau, false, 3, Exec::default()).unwrap();
        ds.validate().unwrap();
        assert_eq!(stats.env_steps, ds.total_steps());
        for ep in &ds.episodes {
            assert!(ep.rows() <= env.spec().nominal_horizon);
            let full = returns_oracle(&ep.rewards, gamma);
            assert!(close(&ep.returns, &full[..ep.rows()], 1e-9));
        }
    }
}

#[test]
fn cartpole_rollout_truncation_error_is_within_tolerance() {
    // Balanced episodes are cut at the extended limit; their first-T returns
    // must be within tau of the returns of a much longer play-out.
    let env = EnvId::CartpoleCont;
    let gamma = 0.97;
    let tau = env.spec().default_tau();
    let expert = ExpertController::new(env, 1.0, 0).unwrap();
    let mut actor = init_actor(env, &arch(), 0).unwrap();
    let (data, _) = collect_expert(env, &expert, 2000, gamma, 0, Exec::default()).unwrap();
    let cfg = PretrainConfig { gamma, bc_epochs: 30, ..PretrainConfig::default() };
    bc_pretrain(&mut actor, &data, &cfg, 0, Exec::default()).unwrap();
    let (ds, _) = collect_rollouts(env, &actor, 2000, gamma, tau, true, 0, Exec::default()).unwrap();
    let t = env.spec().nominal_horizon;
    let cut: Vec<_> = ds.episodes.iter().filter(|e| !e.terminated).collect();
    assert!(!cut.is_empty(), "no rollout reached the extended limit");
    for ep in cut {
        assert_eq!(ep.trace_len(), ds.step_limit);
        // Worst-case continuation: every further reward at r_max.
        let mut longer = ep.rewards.clone();
        longer.extend(std::iter::repeat_n(env.spec().r_max, 5000));
        let full = returns_oracle(&longer, gamma);
        for (row, (&want, &got)) in full.iter().zip(&ep.returns).enumerate().take(t) {
            assert!((want - got).abs() <= tau, "row {row}");
        }
    }
}

#[test]
fn pretraining_leaves_datasets_untouched() {
    let env = EnvId::PointReach;
    let cfg = PretrainConfig { bc_epochs: 2, critic_epochs: 2, ..PretrainConfig::default() };
    let expert = ExpertController::new(env, 0.7, 1).unwrap();
    let (data, _) = collect_expert(env, &expert, 500, cfg.gamma, 1, Exec::default()).unwrap();
    let before = data.clone();
    let mut actor = init_actor(env, &arch(), 1).unwrap();
    bc_pretrain(&mut actor, &data, &cfg, 1, Exec::default()).unwrap();
    assert_eq!(data, before);
    let (rollouts, _) =
        collect_rollouts(env, &actor, 500, cfg.gamma, cfg.tau_for(env), false, 1, Exec::default()).unwrap();
    let before = rollouts.clone();
    let mut critic = init_critic(env, &arch(), 1).unwrap();
    critic_pretrain(&mut critic, &rollouts, &cfg, 1, Exec::default()).unwrap();
    assert_eq!(rollouts, before);
}

#[test]
fn wide_clip_without_entropy_is_the_score_gradient() {
    for seed in 0..50 {
        let mut r = rng(1000 + seed);
        let (d_s, d_a) = (r.random_range(1..4), r.random_range(1..3));
        let (actor, critic) = random_nets(&mut r, d_s, d_a);
        let n = r.random_range(2..10);
        let obs: Vec<f64> = (0..n * d_s).map(|_| r.sample(StandardNormal)).collect();
        let actions: Vec<f64> = (0..n * d_a).map(|_| r.sample(StandardNormal)).collect();
        let adv: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
        let row = |v: &[f64], d: usize, i: usize| v[i * d..(i + 1) * d].to_vec();
        // On-policy: old log-probabilities equal the current ones, so ratio = 1.
        let old: Vec<f64> = (0..n)
            .map(|i| {
                log_prob_oracle(
                    &actor_mean_oracle(&actor, &row(&obs, d_s, i)),
                    &actor.log_sigma,
                    &row(&actions, d_a, i),
                )
            })
            .collect();
        let targets = vec![0.0; n];
        let batch = PpoBatch {
            obs_dim: d_s,
            act_dim: d_a,
            obs: &obs,
            actions: &actions,
            old_log_probs: &old,
            value_targets: &targets,
            advantages: &adv,
        };
        let coef = LossCoefficients { clip_epsilon: 1e12, c1: 0.0, c2: 0.0 };
        let (_, g, _) = ppo_loss_and_grad(&batch, &actor, &critic, coef, true, Exec::default()).unwrap();
        let mut analytic = g.backbone.clone();
        analytic.extend_from_slice(&g.head);
        analytic.extend_from_slice(&g.log_sigma);
        // Score-function estimator: mean of A_i * grad log pi(a_i | s_i).
        let mut a = actor.clone();
        let score = central_differences(&actor_params(&actor), 1e-5, |p| {
            set_actor_params(&mut a, p);
            (0..n)
                .map(|i| {
                    adv[i]
                        * log_prob_oracle(
                            &actor_mean_oracle(&a, &row(&obs, d_s, i)),
                            &a.log_sigma,
                            &row(&actions, d_a, i),
                        )
                })
                .sum::<f64>()
                / n as f64
        });
        let err = max_rel_error(&analytic, &score, 1e-2);
        assert!(err <= 1e-6, "case {seed}: {err:e}");
    }
}

#[test]
fn critic_only_updates_reduce_value_loss() {
    let env = EnvId::LinQuad;
    let start = fresh(env, 4);
    let (mut actor, mut critic) = (start.actor, start.critic);
    let cfg = PpoConfig {
        minibatch_size: 32,
        epochs_per_update: 1,
        rollout_length: 1600,
        learning_rate: 1e-3,
        ..PpoConfig::default()
    };
    let buffer = collect_buffer(env, &actor, &critic, cfg.rollout_length, 4).unwrap();
    let (_, targets) = buffer.advantages_and_targets(DiscountSpec::new(cfg.gamma, cfg.lambda).unwrap()).unwrap();
    let loss = |c: &warmstart::nn::ValueNet| {
        (0..buffer.len()).map(|i| (c.value(&buffer.obs[i * 2..(i + 1) * 2]).unwrap() - targets[i]).powi(2)).sum::<f64>()
            / buffer.len() as f64
    };
    let actor_before = actor.clone();
    let initial = loss(&critic);
    let mut adam = AdamState::new(cfg.learning_rate);
    // 1600 / 32 = 50 minibatch passes with the actor masked out.
    let stats =
        ppo_update(&buffer, 0, &mut actor, &mut critic, &mut adam, &cfg, ActorMask::NONE, 9, Exec::default()).unwrap();
    assert_eq!(stats.minibatches, 50);
    assert!(loss(&critic) < initial, "{} !< {initial}", loss(&critic));
    assert_eq!(actor.backbone, actor_before.backbone);
    assert_eq!(actor.head, actor_before.head);
    assert_eq!(actor.log_sigma, actor_before.log_sigma);
}

#[test]
fn pirl_unfreezes_once_after_frozen_steps() {
    let env = EnvId::PointReach;
    let cfg = PpoConfig { max_env_steps: 4096, target_return: Some(1e9), ..quick_ppo() };
    let start = pretrained(env, 2);
    let initial = start.actor.clone();
    let out = finetune(env, start, Regime::Pirl, &cfg, 2, Exec::default()).unwrap();
    let m = &out.metrics;
    assert!(m.n_fro > 0);
    assert!(m.ledger_balances());
    match m.unfreeze_step {
        Some(step) => {
            assert_eq!(step, m.n_fro);
            let at = out.actor_at_unfreeze.as_ref().unwrap();
            assert_eq!(actor_params(at), actor_params(&initial));
        }
        None => {
            assert_eq!(m.n_fine, 0);
            assert_eq!(actor_params(&out.actor), actor_params(&initial));
        }
    }
    // Non-PIRL regimes never spend frozen steps.
    let ap = finetune(env, pretrained(env, 2), Regime::Ap, &cfg, 2, Exec::default()).unwrap();
    assert_eq!(ap.metrics.n_fro, 0);
    assert_eq!(ap.metrics.unfreeze_step, None);
}

#[test]
fn sequential_and_parallel_runs_are_bit_identical() {
    for (env, regime) in [(EnvId::LinQuad, Regime::Np), (EnvId::PointReach, Regime::Ap)] {
        let start = |seed| if regime == Regime::Np { fresh(env, seed) } else { pretrained(env, seed) };
        let a = finetune(env, start(5), regime, &quick_ppo(), 5, Exec::Sequential).unwrap();
        let b = finetune(env, start(5), regime, &quick_ppo(), 5, Exec::Parallel).unwrap();
        assert_eq!(a.metrics, b.metrics);
        assert_eq!(actor_params(&a.actor), actor_params(&b.actor));
        assert_eq!(a.critic.net.params(), b.critic.net.params());
        assert_eq!(a.value_loss_history, b.value_loss_history);
    }
}
