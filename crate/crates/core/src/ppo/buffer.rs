use crate::error::{Error, Result};
use crate::math::{gae_advantages, value_targets, DiscountSpec};

/// End of a contiguous episode piece inside a rollout buffer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    /// One past the last transition of the piece.
    pub end: usize,
    pub terminated: bool,
    /// `v_old` of the state after the last transition; ignored when terminated.
    pub bootstrap_value: f64,
}

/// On-policy transitions collected by one parameter snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Snapshot that generated every transition.
    pub policy_version: u64,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub segments: Vec<Segment>,
}

impl RolloutBuffer {
    pub fn new(obs_dim: usize, act_dim: usize, policy_version: u64) -> Self {
        Self {
            obs_dim,
            act_dim,
            policy_version,
            obs: Vec::new(),
            actions: Vec::new(),
            log_probs: Vec::new(),
            values: Vec::new(),
            rewards: Vec::new(),
            segments: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], log_prob: f64, value: f64, reward: f64) {
        self.obs.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
        self.log_probs.push(log_prob);
        self.values.push(value);
        self.rewards.push(reward);
    }

    /// Closes the current episode piece at the latest transition.
    pub fn end_segment(&mut self, terminated: bool, bootstrap_value: f64) {
        self.segments.push(Segment { end: self.len(), terminated, bootstrap_value });
    }

    /// GAE advantages and value targets, computed per segment with the
    /// snapshot values.
    pub fn advantages_and_targets(&self, spec: DiscountSpec) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.segments.last().map(|s| s.end) != Some(self.len()) {
            return Err(Error::InvalidParameter("rollout buffer has an unterminated segment".into()));
        }
        let mut adv = Vec::with_capacity(self.len());
        let mut start = 0;
        for s in &self.segments {
            if s.end <= start {
                return Err(Error::InvalidParameter("empty rollout segment".into()));
            }
            adv.extend(gae_advantages(
                &self.rewards[start..s.end],
                &self.values[start..s.end],
                s.bootstrap_value,
                s.terminated,
                spec,
            )?);
            start = s.end;
        }
        let targets = value_targets(&adv, &self.values)?;
        Ok((adv, targets))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segments_bootstrap_independently() {
        let mut b = RolloutBuffer::new(1, 1, 0);
        for r in [1.0, 2.0] {
            b.push(&[0.0], &[0.0], 0.0, 0.5, r);
        }
        b.end_segment(true, 99.0);
        b.push(&[0.0], &[0.0], 0.0, 0.5, 3.0);
        b.end_segment(false, 4.0);
        let spec = DiscountSpec::new(0.9, 1.0).unwrap();
        let (adv, tgt) = b.advantages_and_targets(spec).unwrap();
        // Terminated piece: Monte-Carlo returns 1 + 0.9 * 2 and 2.
        assert!((tgt[0] - 2.8).abs() < 1e-12);
        assert!((tgt[1] - 2.0).abs() < 1e-12);
        // Truncated piece bootstraps: 3 + 0.9 * 4.
        assert!((tgt[2] - 6.6).abs() < 1e-12);
        assert!((adv[2] - 6.1).abs() < 1e-12);
    }

    #[test]
    fn open_segment_is_an_error() {
        let mut b = RolloutBuffer::new(1, 1, 0);
        b.push(&[0.0], &[0.0], 0.0, 0.0, 1.0);
        assert!(b.advantages_and_targets(DiscountSpec::new(0.9, 0.9).unwrap()).is_err());
    }
}
