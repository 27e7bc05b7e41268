use rand::Rng;

use super::{clip, Env, EnvId, EnvSpec, EpisodeClock, StepResult};
use crate::error::Result;
use crate::seed::{self, Stream};

pub const DT: f64 = 0.02;
pub const ACCEL_GAIN: f64 = 5.0;
pub const CONTROL_PENALTY: f64 = 0.05;
pub const ARENA_HALF_WIDTH: f64 = 2.0;
pub const INIT_HALF_WIDTH: f64 = 1.0;
pub const GOAL_RADIUS: f64 = 0.05;
pub const SETTLE_SPEED: f64 = 0.1;
pub const SETTLE_STEPS: usize = 10;
pub const HORIZON: usize = 100;
pub const TARGET_RETURN: f64 = -22.0;

/// `E|p|` for `p` uniform on `[-1, 1]^2`, times the horizon: the return of
/// standing still.
pub fn zero_action_return() -> f64 {
    let mean_dist = (std::f64::consts::SQRT_2 + (1.0 + std::f64::consts::SQRT_2).ln()) / 3.0;
    -(HORIZON as f64) * mean_dist * INIT_HALF_WIDTH
}

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        id: EnvId::PointReach,
        obs_dim: 4,
        act_dim: 2,
        nominal_horizon: HORIZON,
        r_max: std::f64::consts::SQRT_2 * ARENA_HALF_WIDTH + 2.0 * CONTROL_PENALTY,
        target_return: TARGET_RETURN,
        baseline_return: zero_action_return(),
        supports_extension: false,
    }
}

/// Planar point mass steered toward the origin.
///
/// Observation `[p_x, p_y, v_x, v_y]` is the goal-relative position and the
/// velocity. Actions are clipped to `[-1, 1]^2` and scaled by
/// [`ACCEL_GAIN`]; explicit Euler with tick [`DT`]. The position is held
/// inside the square arena of half-width [`ARENA_HALF_WIDTH`] (the velocity
/// component into a wall is zeroed). Reward after each tick is
/// `-|p| - CONTROL_PENALTY * |u|^2`. The episode terminates once the mass has
/// stayed within [`GOAL_RADIUS`] below [`SETTLE_SPEED`] for [`SETTLE_STEPS`]
/// consecutive ticks. Initial positions are uniform on `[-1, 1]^2`, at rest.
#[derive(Debug, Clone)]
pub struct PointReach {
    spec: EnvSpec,
    pos: [f64; 2],
    vel: [f64; 2],
    settled: usize,
    clock: EpisodeClock,
}

impl PointReach {
    pub fn new() -> Self {
        Self { spec: spec(), pos: [0.0; 2], vel: [0.0; 2], settled: 0, clock: EpisodeClock::default() }
    }

    /// Places the mass at an arbitrary state and starts an episode from it.
    pub fn set_state(&mut self, pos: [f64; 2], vel: [f64; 2]) -> Vec<f64> {
        self.pos = pos;
        self.vel = vel;
        self.settled = 0;
        self.clock.reset();
        self.obs()
    }

    fn obs(&self) -> Vec<f64> {
        vec![self.pos[0], self.pos[1], self.vel[0], self.vel[1]]
    }
}

impl Default for PointReach {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for PointReach {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed, Stream::EnvReset, 0);
        let pos =
            [rng.random_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH), rng.random_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH)];
        self.set_state(pos, [0.0; 2])
    }

    fn step(&mut self, action: &[f64], step_limit: usize) -> Result<StepResult> {
        self.clock.begin_step(EnvId::PointReach, action, 2, step_limit)?;
        let u = [clip(action[0], 1.0), clip(action[1], 1.0)];
        #[allow(clippy::needless_range_loop)]
        for i in 0..2 {
            self.pos[i] += DT * self.vel[i];
            self.vel[i] += DT * ACCEL_GAIN * u[i];
            if self.pos[i].abs() > ARENA_HALF_WIDTH {
                self.pos[i] = clip(self.pos[i], ARENA_HALF_WIDTH);
                self.vel[i] = 0.0;
            }
        }
        let dist = self.pos[0].hypot(self.pos[1]);
        let speed = self.vel[0].hypot(self.vel[1]);
        let reward = -dist - CONTROL_PENALTY * (u[0] * u[0] + u[1] * u[1]);
        if dist < GOAL_RADIUS && speed < SETTLE_SPEED {
            self.settled += 1;
        } else {
            self.settled = 0;
        }
        let (terminated, truncated) = self.clock.finish_step(self.settled >= SETTLE_STEPS, step_limit);
        Ok(StepResult { next_obs: self.obs(), reward, terminated, truncated })
    }

    fn elapsed(&self) -> usize {
        self.clock.elapsed
    }

    fn total_steps(&self) -> u64 {
        self.clock.total
    }

    fn describe(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("dt", DT),
            ("accel_gain", ACCEL_GAIN),
            ("control_penalty", CONTROL_PENALTY),
            ("arena_half_width", ARENA_HALF_WIDTH),
            ("init_half_width", INIT_HALF_WIDTH),
            ("goal_radius", GOAL_RADIUS),
            ("settle_speed", SETTLE_SPEED),
            ("settle_steps", SETTLE_STEPS as f64),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_at_goal() {
        let mut env = PointReach::new();
        env.set_state([0.0, 0.0], [0.0, 0.0]);
        let r = env.step(&[0.0, 0.0], 100).unwrap();
        assert_eq!(r.reward, 0.0);
        assert!(!r.terminated && !r.truncated);
    }

    #[test]
    fn settling_terminates() {
        let mut env = PointReach::new();
        env.set_state([0.0, 0.0], [0.0, 0.0]);
        for k in 1..=SETTLE_STEPS {
            let r = env.step(&[0.0, 0.0], 100).unwrap();
            assert_eq!(r.terminated, k == SETTLE_STEPS);
        }
        assert!(env.step(&[0.0, 0.0], 100).is_err());
    }

    #[test]
    fn zero_action_return_matches_simulation() {
        let mut env = PointReach::new();
        let n = 4000;
        let mut total = 0.0;
        for s in 0..n {
            env.reset(s);
            loop {
                let r = env.step(&[0.0, 0.0], HORIZON).unwrap();
                total += r.reward;
                if r.done() {
                    break;
                }
            }
        }
        let mean = total / n as f64;
        assert!((mean - zero_action_return()).abs() < 1.5, "{mean}");
    }
}
