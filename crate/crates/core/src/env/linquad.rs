use std::sync::OnceLock;

use rand::Rng;

use super::riccati::{closed_loop, dlqr, feedback_cost, finite_horizon_cost};
use super::{clip, Env, EnvId, EnvSpec, EpisodeClock, StepResult};
use crate::error::Result;
use crate::seed::{self, Stream};

/// Damped double integrator with tick 0.1 s.
pub const A: [f64; 4] = [1.0, 0.1, 0.0, 0.9];
pub const B: [f64; 2] = [0.005, 0.1];
pub const Q: [f64; 4] = [1.0, 0.0, 0.0, 0.1];
pub const R: f64 = 0.1;
pub const STATE_BOUND: f64 = 4.0;
pub const ACTION_BOUND: f64 = 5.0;
pub const INIT_HALF_WIDTH: f64 = 1.0;
pub const HORIZON: usize = 50;
/// The target return allows this much excess cost over the optimal gain.
pub const TARGET_SLACK: f64 = 0.05;

/// Optimal (undiscounted, infinite-horizon) LQR gain and its Riccati matrix.
pub fn optimal_gain() -> &'static (Vec<f64>, Vec<f64>) {
    static GAIN: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    GAIN.get_or_init(|| dlqr(&A, &B, &Q, R, 1e-13).expect("linquad is stabilizable"))
}

/// Expected nominal-horizon return of the feedback law `u = -K x` from the
/// initial distribution, ignoring clipping: `-tr(P_T Sigma_0)` with
/// `Sigma_0 = I / 3`.
pub fn expected_return(k: &[f64]) -> f64 {
    let f = closed_loop(&A, &B, k);
    let c = feedback_cost(&Q, R, k);
    let p = finite_horizon_cost(&f, &c, HORIZON);
    let var = INIT_HALF_WIDTH * INIT_HALF_WIDTH / 3.0;
    -(p[0] + p[3]) * var
}

pub fn optimal_return() -> f64 {
    expected_return(&optimal_gain().0)
}

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        id: EnvId::LinQuad,
        obs_dim: 2,
        act_dim: 1,
        nominal_horizon: HORIZON,
        r_max: STATE_BOUND * STATE_BOUND * (Q[0] + Q[3]) + R * ACTION_BOUND * ACTION_BOUND,
        target_return: (1.0 + TARGET_SLACK) * optimal_return(),
        baseline_return: expected_return(&[0.0, 0.0]),
        supports_extension: true,
    }
}

/// Linear system `x' = A x + B u` with quadratic cost.
///
/// Reward for a tick is `-(x^T Q x + R u^2)` evaluated at the pre-step state
/// and the clipped action. States are clamped to `[-STATE_BOUND,
/// STATE_BOUND]^2` and actions to `[-ACTION_BOUND, ACTION_BOUND]`, which
/// bounds the reward; neither clamp is reached by stabilizing feedback from
/// the initial distribution (uniform on `[-1, 1]^2`). Episodes never
/// terminate, only truncate.
#[derive(Debug, Clone)]
pub struct LinQuad {
    spec: EnvSpec,
    x: [f64; 2],
    clock: EpisodeClock,
}

impl LinQuad {
    pub fn new() -> Self {
        Self { spec: spec(), x: [0.0; 2], clock: EpisodeClock::default() }
    }

    pub fn set_state(&mut self, x: [f64; 2]) -> Vec<f64> {
        self.x = x;
        self.clock.reset();
        x.to_vec()
    }
}

impl Default for LinQuad {
    fn default() -> Self {
        Self::new()
    }
}

pub fn cost(x: &[f64], u: f64) -> f64 {
    Q[0] * x[0] * x[0] + (Q[1] + Q[2]) * x[0] * x[1] + Q[3] * x[1] * x[1] + R * u * u
}

impl Env for LinQuad {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed, Stream::EnvReset, 0);
        self.set_state([
            rng.random_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH),
            rng.random_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH),
        ])
    }

    fn step(&mut self, action: &[f64], step_limit: usize) -> Result<StepResult> {
        self.clock.begin_step(EnvId::LinQuad, action, 1, step_limit)?;
        let u = clip(action[0], ACTION_BOUND);
        let reward = -cost(&self.x, u);
        let [x0, x1] = self.x;
        self.x =
            [clip(A[0] * x0 + A[1] * x1 + B[0] * u, STATE_BOUND), clip(A[2] * x0 + A[3] * x1 + B[1] * u, STATE_BOUND)];
        let (terminated, truncated) = self.clock.finish_step(false, step_limit);
        Ok(StepResult { next_obs: self.x.to_vec(), reward, terminated, truncated })
    }

    fn elapsed(&self) -> usize {
        self.clock.elapsed
    }

    fn total_steps(&self) -> u64 {
        self.clock.total
    }

    fn describe(&self) -> Vec<(&'static str, f64)> {
        let k = &optimal_gain().0;
        vec![
            ("a11", A[0]),
            ("a12", A[1]),
            ("a21", A[2]),
            ("a22", A[3]),
            ("b1", B[0]),
            ("b2", B[1]),
            ("q11", Q[0]),
            ("q22", Q[3]),
            ("r", R),
            ("state_bound", STATE_BOUND),
            ("action_bound", ACTION_BOUND),
            ("lqr_k1", k[0]),
            ("lqr_k2", k[1]),
            ("optimal_return", optimal_return()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reward_is_the_quadratic_form() {
        let mut env = LinQuad::new();
        env.set_state([1.0, 0.0]);
        let r = env.step(&[0.0], HORIZON).unwrap();
        assert_eq!(r.reward, -1.0);
        assert_eq!(r.next_obs, vec![1.0, 0.0]);
        env.set_state([0.5, -2.0]);
        let r = env.step(&[1.5], HORIZON).unwrap();
        assert!((r.reward + (0.25 + 0.1 * 4.0 + 0.1 * 2.25)).abs() < 1e-15);
    }

    #[test]
    fn truncates_at_limit_only() {
        let mut env = LinQuad::new();
        env.reset(3);
        for k in 1..=7 {
            let r = env.step(&[0.0], 7).unwrap();
            assert!(!r.terminated);
            assert_eq!(r.truncated, k == 7);
        }
    }

    #[test]
    fn target_sits_between_baseline_and_optimum() {
        let s = spec();
        assert!(s.baseline_return < s.target_return);
        assert!(s.target_return < optimal_return());
        let k = &optimal_gain().0;
        // Stabilizing feedback stays inside the clamps from every initial corner.
        for corner in [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]] {
            let mut x = corner;
            for _ in 0..HORIZON {
                let u = -(k[0] * x[0] + k[1] * x[1]);
                assert!(u.abs() < ACTION_BOUND);
                x = [A[0] * x[0] + A[1] * x[1] + B[0] * u, A[2] * x[0] + A[3] * x[1] + B[1] * u];
                assert!(x[0].abs() < STATE_BOUND && x[1].abs() < STATE_BOUND);
            }
        }
    }
}
