use crate::error::{Error, Result};

/// One named, separately optimized slice of parameters.
///
/// Freezing is expressed here: a frozen block is skipped entirely, its
/// moment accumulators are left untouched.
pub struct ParamBlock<'a> {
    pub name: &'static str,
    pub params: &'a mut [f64],
    pub grads: &'a [f64],
    pub frozen: bool,
}

#[derive(Debug, Clone, PartialEq)]
struct Moments {
    name: &'static str,
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

/// Adam with bias correction over a fixed list of parameter blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    moments: Vec<Moments>,
}

impl AdamState {
    pub fn new(learning_rate: f64) -> Self {
        Self { step_count: 0, learning_rate, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, moments: Vec::new() }
    }

    /// Number of updates applied to the block `name` so far.
    pub fn block_steps(&self, name: &str) -> Option<u64> {
        self.moments.iter().find(|m| m.name == name).map(|m| m.steps)
    }

    /// Descends along `grads`. Blocks must be passed in the same order and
    /// with the same shapes on every call.
    pub fn step(&mut self, blocks: &mut [ParamBlock<'_>]) -> Result<()> {
        if self.moments.is_empty() {
            self.moments = blocks
                .iter()
                .map(|b| Moments {
                    name: b.name,
                    first: vec![0.0; b.params.len()],
                    second: vec![0.0; b.params.len()],
                    steps: 0,
                })
                .collect();
        }
        if self.moments.len() != blocks.len() {
            return Err(Error::LengthMismatch { what: "adam blocks", left: self.moments.len(), right: blocks.len() });
        }
        for (m, b) in self.moments.iter().zip(blocks.iter()) {
            if m.name != b.name || m.first.len() != b.params.len() || b.grads.len() != b.params.len() {
                return Err(Error::InvalidParameter(format!("adam block `{}` does not match its accumulator", b.name)));
            }
            if !b.frozen && b.grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of block `{}`", b.name)));
            }
        }
        self.step_count += 1;
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        for (m, b) in self.moments.iter_mut().zip(blocks.iter_mut()) {
            if b.frozen {
                continue;
            }
            m.steps += 1;
            let c1 = 1.0 - b1.powi(m.steps as i32);
            let c2 = 1.0 - b2.powi(m.steps as i32);
            for ((p, g), (f, s)) in b.params.iter_mut().zip(b.grads).zip(m.first.iter_mut().zip(m.second.iter_mut())) {
                *f = b1 * *f + (1.0 - b1) * g;
                *s = b2 * *s + (1.0 - b2) * g * g;
                *p -= lr * (*f / c1) / ((*s / c2).sqrt() + eps);
            }
            if b.params.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite(format!("parameters of block `{}`", b.name)));
            }
        }
        Ok(())
    }
}
