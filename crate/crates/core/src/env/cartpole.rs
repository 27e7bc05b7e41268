use rand::Rng;

use super::{clip, Env, EnvId, EnvSpec, EpisodeClock, StepResult};
use crate::error::Result;
use crate::seed::{self, Stream};

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const POLE_HALF_LENGTH: f64 = 0.5;
pub const FORCE_MAG: f64 = 10.0;
pub const DT: f64 = 0.02;
pub const ANGLE_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const POSITION_LIMIT: f64 = 2.4;
pub const INIT_HALF_WIDTH: f64 = 0.05;
pub const HORIZON: usize = 200;
pub const TARGET_RETURN: f64 = 195.0;

pub(super) fn spec() -> EnvSpec {
    EnvSpec {
        id: EnvId::CartpoleCont,
        obs_dim: 4,
        act_dim: 1,
        nominal_horizon: HORIZON,
        r_max: 1.0,
        target_return: TARGET_RETURN,
        baseline_return: 0.0,
        supports_extension: true,
    }
}

/// Cart-pole balancing with a continuous force.
///
/// State `[x, x_dot, theta, theta_dot]`, action in `[-1, 1]` scaled by
/// [`FORCE_MAG`] newtons, explicit Euler with tick [`DT`]. Reward `+1` for
/// every tick (the falling tick included); the episode terminates when
/// `|theta| > ANGLE_LIMIT` or `|x| > POSITION_LIMIT`. Initial state uniform on
/// `[-0.05, 0.05]^4`.
#[derive(Debug, Clone)]
pub struct CartPole {
    spec: EnvSpec,
    state: [f64; 4],
    clock: EpisodeClock,
}

/// One Euler tick of the cart-pole equations of motion under `force`.
pub fn integrate(state: [f64; 4], force: f64) -> [f64; 4] {
    let [x, x_dot, theta, theta_dot] = state;
    let total_mass = CART_MASS + POLE_MASS;
    let pole_ml = POLE_MASS * POLE_HALF_LENGTH;
    let (sin, cos) = theta.sin_cos();
    let temp = (force + pole_ml * theta_dot * theta_dot * sin) / total_mass;
    let theta_acc =
        (GRAVITY * sin - cos * temp) / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
    let x_acc = temp - pole_ml * theta_acc * cos / total_mass;
    [x + DT * x_dot, x_dot + DT * x_acc, theta + DT * theta_dot, theta_dot + DT * theta_acc]
}

/// Euler discretization of the dynamics linearized about the upright
/// equilibrium, with the normalized action as input.
pub fn linearized() -> ([f64; 16], [f64; 4]) {
    let total_mass = CART_MASS + POLE_MASS;
    let denom = POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS / total_mass);
    // theta_acc = (g theta - F / M) / denom
    // x_acc = F / M - m l theta_acc / M
    let th_theta = GRAVITY / denom;
    let th_force = -1.0 / (total_mass * denom);
    let pole_ml = POLE_MASS * POLE_HALF_LENGTH;
    let x_theta = -pole_ml * th_theta / total_mass;
    let x_force = 1.0 / total_mass - pole_ml * th_force / total_mass;
    let a = [
        1.0,
        DT,
        0.0,
        0.0, //
        0.0,
        1.0,
        DT * x_theta,
        0.0, //
        0.0,
        0.0,
        1.0,
        DT, //
        0.0,
        0.0,
        DT * th_theta,
        1.0,
    ];
    let b = [0.0, DT * x_force * FORCE_MAG, 0.0, DT * th_force * FORCE_MAG];
    (a, b)
}

impl CartPole {
    pub fn new() -> Self {
        Self { spec: spec(), state: [0.0; 4], clock: EpisodeClock::default() }
    }

    pub fn set_state(&mut self, state: [f64; 4]) -> Vec<f64> {
        self.state = state;
        self.clock.reset();
        state.to_vec()
    }
}

impl Default for CartPole {
    fn default() -> Self {
        Self::new()
    }
}

impl Env for CartPole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed, Stream::EnvReset, 0);
        let mut s = [0.0; 4];
        for v in &mut s {
            *v = rng.random_range(-INIT_HALF_WIDTH..INIT_HALF_WIDTH);
        }
        self.set_state(s)
    }

    fn step(&mut self, action: &[f64], step_limit: usize) -> Result<StepResult> {
        self.clock.begin_step(EnvId::CartpoleCont, action, 1, step_limit)?;
        self.state = integrate(self.state, FORCE_MAG * clip(action[0], 1.0));
        let fell = self.state[2].abs() > ANGLE_LIMIT || self.state[0].abs() > POSITION_LIMIT;
        let (terminated, truncated) = self.clock.finish_step(fell, step_limit);
        Ok(StepResult { next_obs: self.state.to_vec(), reward: 1.0, terminated, truncated })
    }

    fn elapsed(&self) -> usize {
        self.clock.elapsed
    }

    fn total_steps(&self) -> u64 {
        self.clock.total
    }

    fn describe(&self) -> Vec<(&'static str, f64)> {
        vec![
            ("gravity", GRAVITY),
            ("cart_mass", CART_MASS),
            ("pole_mass", POLE_MASS),
            ("pole_half_length", POLE_HALF_LENGTH),
            ("force_mag", FORCE_MAG),
            ("dt", DT),
            ("angle_limit_rad", ANGLE_LIMIT),
            ("position_limit", POSITION_LIMIT),
            ("alive_reward", 1.0),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_rest_is_an_equilibrium() {
        let mut env = CartPole::new();
        env.set_state([0.0; 4]);
        for _ in 0..HORIZON - 1 {
            let r = env.step(&[0.0], HORIZON).unwrap();
            assert_eq!(r.reward, 1.0);
            assert!(!r.done());
            assert_eq!(r.next_obs, vec![0.0; 4]);
        }
        assert!(env.step(&[0.0], HORIZON).unwrap().truncated);
    }

    #[test]
    fn small_tilt_falls_when_an_independent_simulation_says_so() {
        // Semi-analytic oracle: integrate the same equations written out
        // separately and find the first tick past the angle limit.
        let oracle_fall = |theta0: f64| {
            let (mut x, mut xd, mut th, mut thd) = (0.0f64, 0.0f64, theta0, 0.0f64);
            for k in 1..=1000 {
                let m = CART_MASS + POLE_MASS;
                let ml = POLE_MASS * POLE_HALF_LENGTH;
                let t = (ml * thd * thd * th.sin()) / m;
                let tha = (GRAVITY * th.sin() - th.cos() * t)
                    / (POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * th.cos().powi(2) / m));
                let xa = t - ml * tha * th.cos() / m;
                x += DT * xd;
                xd += DT * xa;
                th += DT * thd;
                thd += DT * tha;
                if th.abs() > ANGLE_LIMIT || x.abs() > POSITION_LIMIT {
                    return k;
                }
            }
            usize::MAX
        };
        for theta0 in [0.01, -0.03, 0.05] {
            let mut env = CartPole::new();
            env.set_state([0.0, 0.0, theta0, 0.0]);
            let mut alive = 0;
            loop {
                let r = env.step(&[0.0], 10_000).unwrap();
                assert_eq!(r.reward, 1.0);
                alive += 1;
                if r.terminated {
                    break;
                }
            }
            assert_eq!(alive, oracle_fall(theta0));
            assert!(alive > 10, "the pole should stay up for a short window");
        }
    }
}
