use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::riccati::{closed_loop, discounted_lyapunov, dlqr, feedback_cost, quad_form};
use super::{cartpole, linquad, EnvId};
use crate::error::{Error, Result};
use crate::seed::{self, Stream};

/// Point-reach PD gains at full quality.
pub const POINT_KP: f64 = 4.0;
pub const POINT_KD: f64 = 1.8;
pub const POINT_NOISE: f64 = 0.3;
pub const CARTPOLE_NOISE: f64 = 0.5;

fn cartpole_gain() -> &'static [f64] {
    static GAIN: OnceLock<Vec<f64>> = OnceLock::new();
    GAIN.get_or_init(|| {
        let (a, b) = cartpole::linearized();
        let q = [
            1.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, 0.0, 0.0, //
            0.0, 0.0, 10.0, 0.0, //
            0.0, 0.0, 0.0, 1.0,
        ];
        dlqr(&a, &b, &q, 1.0, 1e-11).expect("linearized cart-pole is stabilizable").0
    })
}

/// Scripted expert for one environment.
///
/// `quality` in `[0, 1]` detunes the feedback gains toward zero and adds
/// seeded Gaussian action noise of scale `(1 - quality) * noise_scale`:
/// - `point-reach`: PD law `u = -q K_p p - sqrt(q) K_d v` (constant damping ratio);
/// - `cartpole-cont`: state feedback `u = -q K x` with `K` from the LQR of
///   the linearized upright dynamics;
/// - `linquad`: `u = -q K* x` with `K*` the optimal LQR gain, noise-free so
///   the analytic value of the expert is exact.
#[derive(Debug, Clone)]
pub struct ExpertController {
    env: EnvId,
    quality: f64,
    noise_scale: f64,
    rng: ChaCha8Rng,
}

impl ExpertController {
    pub fn new(env: EnvId, quality: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&quality) {
            return Err(Error::InvalidParameter(format!("quality knob must lie in [0, 1], got {quality}")));
        }
        let noise_scale = match env {
            EnvId::PointReach => POINT_NOISE,
            EnvId::CartpoleCont => CARTPOLE_NOISE,
            EnvId::LinQuad => 0.0,
        };
        Ok(Self { env, quality, noise_scale, rng: seed::rng(seed, Stream::ExpertNoise, 0) })
    }

    pub fn env(&self) -> EnvId {
        self.env
    }

    pub fn quality(&self) -> f64 {
        self.quality
    }

    /// Restarts the perturbation stream, e.g. at the start of an episode.
    pub fn reseed(&mut self, seed: u64) {
        self.rng = seed::rng(seed, Stream::ExpertNoise, 0);
    }

    /// Row gain of the linear law for `linquad` and `cartpole-cont`.
    pub fn linear_gain(&self) -> Option<Vec<f64>> {
        match self.env {
            EnvId::LinQuad => Some(linquad::optimal_gain().0.iter().map(|k| self.quality * k).collect()),
            EnvId::CartpoleCont => Some(cartpole_gain().iter().map(|k| self.quality * k).collect()),
            EnvId::PointReach => None,
        }
    }

    /// Noise-free control law.
    pub fn nominal_action(&self, obs: &[f64]) -> Vec<f64> {
        let q = self.quality;
        match self.env {
            EnvId::PointReach => {
                let (kp, kd) = (q * POINT_KP, q.sqrt() * POINT_KD);
                (0..2).map(|i| (-kp * obs[i] - kd * obs[i + 2]).clamp(-1.0, 1.0)).collect()
            }
            EnvId::CartpoleCont | EnvId::LinQuad => {
                let k = self.linear_gain().unwrap();
                vec![-k.iter().zip(obs).map(|(k, x)| k * x).sum::<f64>()]
            }
        }
    }

    /// Control law plus the quality-scaled perturbation.
    pub fn act(&mut self, obs: &[f64]) -> Vec<f64> {
        let mut a = self.nominal_action(obs);
        let scale = (1.0 - self.quality) * self.noise_scale;
        if scale > 0.0 {
            for ai in &mut a {
                *ai += scale * self.rng.sample::<f64, _>(StandardNormal);
            }
        }
        a
    }
}

/// `V(x) = -x^T P x` for the `linquad` expert, with `P` solving
/// `P = Q + K^T R K + gamma (A - B K)^T P (A - B K)` for the expert's gain.
pub fn analytic_value(controller: &ExpertController, obs: &[f64], gamma: f64) -> Result<f64> {
    if controller.env() != EnvId::LinQuad {
        return Err(Error::NotLinQuad(controller.env().to_string()));
    }
    if obs.len() != 2 {
        return Err(Error::DimensionMismatch { what: "linquad observation", expected: 2, got: obs.len() });
    }
    let p = value_matrix(&controller.linear_gain().unwrap(), gamma)?;
    Ok(-quad_form(&p, obs))
}

pub fn value_matrix(k: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let f = closed_loop(&linquad::A, &linquad::B, k);
    let c = feedback_cost(&linquad::Q, linquad::R, k);
    discounted_lyapunov(&f, &c, gamma, 1e-10)
}
