use rand::Rng;
use serde::{Deserialize, Serialize};

use super::adam::ParamBlock;
use super::mlp::{MlpNet, Tape};
use crate::error::{Error, Result};

/// Layer sizes for the actor and critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub backbone_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub head_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    /// Initial (and behavioral-cloning) value of every `log_sigma` entry.
    pub init_log_sigma: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            backbone_hidden: vec![64, 64],
            latent_dim: 64,
            head_hidden: vec![64],
            critic_hidden: vec![64, 64],
            init_log_sigma: -2.0,
        }
    }
}

fn dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut d = Vec::with_capacity(hidden.len() + 2);
    d.push(input);
    d.extend_from_slice(hidden);
    d.push(output);
    d
}

/// Gaussian policy whose mean is `head([backbone(obs); obs])`.
///
/// The backbone's last layer is linear and produces the latent features.
/// `log_sigma` is a state-independent vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualActor {
    pub backbone: MlpNet,
    pub head: MlpNet,
    pub log_sigma: Vec<f64>,
    pub backbone_frozen: bool,
}

/// Cached forward pass of a [`ResidualActor`].
#[derive(Debug, Clone)]
pub struct ActorTape {
    backbone: Tape,
    head: Tape,
}

impl ActorTape {
    pub fn mean(&self) -> &[f64] {
        self.head.output()
    }
}

/// Gradient buffers matching the three actor partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct ActorGrads {
    pub backbone: Vec<f64>,
    pub head: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl ActorGrads {
    pub fn add_assign(&mut self, other: &ActorGrads) {
        add(&mut self.backbone, &other.backbone);
        add(&mut self.head, &other.head);
        add(&mut self.log_sigma, &other.log_sigma);
    }

    pub fn scale(&mut self, s: f64) {
        for g in self.backbone.iter_mut().chain(&mut self.head).chain(&mut self.log_sigma) {
            *g *= s;
        }
    }
}

pub(crate) fn add(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Which actor partitions an optimizer step may change.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActorMask {
    pub backbone: bool,
    pub head: bool,
    pub log_sigma: bool,
}

impl ActorMask {
    pub const ALL: ActorMask = ActorMask { backbone: true, head: true, log_sigma: true };
    pub const NONE: ActorMask = ActorMask { backbone: false, head: false, log_sigma: false };
}

impl ResidualActor {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        let gain = std::f64::consts::SQRT_2;
        let backbone = MlpNet::orthogonal(&dims(obs_dim, &arch.backbone_hidden, arch.latent_dim), gain, gain, rng)?;
        let head = MlpNet::orthogonal(&dims(arch.latent_dim + obs_dim, &arch.head_hidden, act_dim), gain, 0.01, rng)?;
        Ok(Self { backbone, head, log_sigma: vec![arch.init_log_sigma; act_dim], backbone_frozen: false })
    }

    pub fn from_parts(backbone: MlpNet, head: MlpNet, log_sigma: Vec<f64>, backbone_frozen: bool) -> Result<Self> {
        let obs_dim = backbone.input_dim();
        if head.input_dim() != backbone.output_dim() + obs_dim {
            return Err(Error::DimensionMismatch {
                what: "residual head input",
                expected: backbone.output_dim() + obs_dim,
                got: head.input_dim(),
            });
        }
        if head.output_dim() != log_sigma.len() {
            return Err(Error::DimensionMismatch {
                what: "log_sigma",
                expected: head.output_dim(),
                got: log_sigma.len(),
            });
        }
        Ok(Self { backbone, head, log_sigma, backbone_frozen })
    }

    pub fn obs_dim(&self) -> usize {
        self.backbone.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.head.output_dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.backbone.output_dim()
    }

    /// Action mean and the (state-independent) log standard deviation.
    pub fn forward(&self, obs: &[f64]) -> Result<(Vec<f64>, &[f64])> {
        Ok((self.mean(obs)?, &self.log_sigma))
    }

    pub fn mean(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let mut latent = self.backbone.forward(obs)?;
        latent.extend_from_slice(obs);
        self.head.forward(&latent)
    }

    pub fn forward_tape(&self, obs: &[f64]) -> Result<ActorTape> {
        let backbone = self.backbone.forward_tape(obs)?;
        let mut joined = backbone.output().to_vec();
        joined.extend_from_slice(obs);
        let head = self.head.forward_tape(&joined)?;
        Ok(ActorTape { backbone, head })
    }

    pub fn zero_grads(&self) -> ActorGrads {
        ActorGrads {
            backbone: vec![0.0; self.backbone.num_params()],
            head: vec![0.0; self.head.num_params()],
            log_sigma: vec![0.0; self.log_sigma.len()],
        }
    }

    /// Accumulates parameter gradients given `dL/dmean` and `dL/dlog_sigma`.
    /// The backbone pass is skipped when `with_backbone` is false.
    pub fn backward(
        &self,
        tape: &ActorTape,
        d_mean: &[f64],
        d_log_sigma: &[f64],
        grads: &mut ActorGrads,
        with_backbone: bool,
    ) -> Result<()> {
        if d_log_sigma.len() != self.log_sigma.len() {
            return Err(Error::DimensionMismatch {
                what: "log_sigma gradient",
                expected: self.log_sigma.len(),
                got: d_log_sigma.len(),
            });
        }
        add(&mut grads.log_sigma, d_log_sigma);
        let d_joined = self.head.backward(&tape.head, d_mean, &mut grads.head, with_backbone)?;
        if with_backbone {
            let d_latent = &d_joined[..self.latent_dim()];
            self.backbone.backward(&tape.backbone, d_latent, &mut grads.backbone, false)?;
        }
        Ok(())
    }

    /// Optimizer blocks in fixed order: backbone, head, log_sigma. A block is
    /// frozen when `mask` excludes it or, for the backbone, when
    /// `backbone_frozen` is set.
    pub fn param_blocks<'a>(&'a mut self, grads: &'a ActorGrads, mask: ActorMask) -> [ParamBlock<'a>; 3] {
        let backbone_frozen = self.backbone_frozen || !mask.backbone;
        [
            ParamBlock {
                name: "backbone",
                params: self.backbone.params_mut(),
                grads: &grads.backbone,
                frozen: backbone_frozen,
            },
            ParamBlock { name: "head", params: self.head.params_mut(), grads: &grads.head, frozen: !mask.head },
            ParamBlock {
                name: "log_sigma",
                params: &mut self.log_sigma,
                grads: &grads.log_sigma,
                frozen: !mask.log_sigma,
            },
        ]
    }

    pub fn is_finite(&self) -> bool {
        self.backbone.is_finite() && self.head.is_finite() && self.log_sigma.iter().all(|x| x.is_finite())
    }
}

/// Scalar state-value network.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNet {
    pub net: MlpNet,
}

impl ValueNet {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, arch: &ArchConfig, rng: &mut R) -> Result<Self> {
        let net = MlpNet::orthogonal(&dims(obs_dim, &arch.critic_hidden, 1), std::f64::consts::SQRT_2, 1.0, rng)?;
        Ok(Self { net })
    }

    pub fn from_net(net: MlpNet) -> Result<Self> {
        if net.output_dim() != 1 {
            return Err(Error::DimensionMismatch { what: "critic output", expected: 1, got: net.output_dim() });
        }
        Ok(Self { net })
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn value(&self, obs: &[f64]) -> Result<f64> {
        Ok(self.net.forward(obs)?[0])
    }

    pub fn zero_grads(&self) -> Vec<f64> {
        vec![0.0; self.net.num_params()]
    }

    pub fn param_block<'a>(&'a mut self, grads: &'a [f64], frozen: bool) -> ParamBlock<'a> {
        ParamBlock { name: "critic", params: self.net.params_mut(), grads, frozen }
    }
}
