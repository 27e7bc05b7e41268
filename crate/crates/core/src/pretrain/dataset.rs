//! Episode datasets and their columnar binary file format.
//!
//! ```text
//! magic          4 bytes "WSDS"
//! version        u32 = 1
//! env id         u16 length + UTF-8
//! origin         u8 (0 expert, 1 rollout)
//! gamma, tau     f64 x 2
//! step_limit     u64
//! d_s, d_a       u32 x 2
//! episodes       u64
//! total_steps    u64
//! per episode    rows u64, trace_len u64, terminated u8,
//!                observations (rows x d_s), actions (rows x d_a),
//!                rewards (trace_len), returns (rows), all f64
//! ```
//! All integers and floats are little-endian.

use std::collections::hash_map::DefaultHasher;
use std::fs;
use std::hash::Hasher;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvId;
use crate::error::{Error, Result};
use crate::math::discounted_returns_of;

pub const MAGIC: &[u8; 4] = b"WSDS";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    Expert,
    Rollout,
}

/// One episode. `observations`/`actions` hold the retained training rows;
/// `rewards` holds the whole trace, which may run past the retained rows when
/// the episode was played under an extended step limit. `returns[t]` is the
/// discounted return from row `t` over the whole trace.
#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub observations: Vec<f64>,
    pub actions: Vec<f64>,
    pub rewards: Vec<f64>,
    pub returns: Vec<f64>,
    pub terminated: bool,
}

impl Episode {
    pub fn rows(&self) -> usize {
        self.returns.len()
    }

    /// Environment steps the episode took, tail included.
    pub fn trace_len(&self) -> usize {
        self.rewards.len()
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.rewards.iter().sum()
    }
}

/// Episodes collected from one environment by one behavior policy.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionDataset {
    pub env: EnvId,
    pub origin: Origin,
    pub gamma: f64,
    /// Tolerance of the extended step limit; 0 when episodes ran at the
    /// nominal horizon.
    pub tau: f64,
    pub step_limit: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub episodes: Vec<Episode>,
}

/// Flattened retained rows of a dataset.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RowSet {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub obs: Vec<f64>,
    pub actions: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RowSet {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }
}

impl TransitionDataset {
    pub fn empty(env: EnvId, origin: Origin, gamma: f64, tau: f64, step_limit: usize) -> Self {
        let spec = env.spec();
        Self { env, origin, gamma, tau, step_limit, obs_dim: spec.obs_dim, act_dim: spec.act_dim, episodes: Vec::new() }
    }

    pub fn num_rows(&self) -> usize {
        self.episodes.iter().map(Episode::rows).sum()
    }

    /// Environment steps consumed to collect the dataset.
    pub fn total_steps(&self) -> u64 {
        self.episodes.iter().map(|e| e.trace_len() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    pub fn rows(&self) -> RowSet {
        let mut out = RowSet { obs_dim: self.obs_dim, act_dim: self.act_dim, ..RowSet::default() };
        for e in &self.episodes {
            out.obs.extend_from_slice(&e.observations);
            out.actions.extend_from_slice(&e.actions);
            out.returns.extend_from_slice(&e.returns);
        }
        out
    }

    /// Checks array shapes and that stored returns are the discounted
    /// returns of the stored traces.
    pub fn validate(&self) -> Result<()> {
        for (i, e) in self.episodes.iter().enumerate() {
            let rows = e.rows();
            let bad = |what: String| Err(Error::DatasetFormat(format!("episode {i}: {what}")));
            if rows == 0 {
                return bad("no rows".into());
            }
            if e.observations.len() != rows * self.obs_dim {
                return bad(format!("{} observation values for {rows} rows", e.observations.len()));
            }
            if e.actions.len() != rows * self.act_dim {
                return bad(format!("{} action values for {rows} rows", e.actions.len()));
            }
            if e.trace_len() < rows {
                return bad(format!("trace of {} steps shorter than {rows} rows", e.trace_len()));
            }
            let full = discounted_returns_of(&e.rewards, self.gamma)?;
            if full[..rows] != e.returns[..] {
                return bad("returns disagree with the reward trace".into());
            }
        }
        Ok(())
    }

    /// Mean undiscounted return over the stored traces.
    pub fn mean_return(&self) -> Option<f64> {
        if self.episodes.is_empty() {
            return None;
        }
        Some(self.episodes.iter().map(Episode::undiscounted_return).sum::<f64>() / self.episodes.len() as f64)
    }

    /// 64-bit digest of the encoded bytes; equal datasets hash equally.
    pub fn content_hash(&self) -> u64 {
        let mut h = DefaultHasher::new();
        h.write(&self.encode());
        h.finish()
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let id = self.env.as_str().as_bytes();
        buf.extend_from_slice(&(id.len() as u16).to_le_bytes());
        buf.extend_from_slice(id);
        buf.push(match self.origin {
            Origin::Expert => 0,
            Origin::Rollout => 1,
        });
        buf.extend_from_slice(&self.gamma.to_le_bytes());
        buf.extend_from_slice(&self.tau.to_le_bytes());
        buf.extend_from_slice(&(self.step_limit as u64).to_le_bytes());
        buf.extend_from_slice(&(self.obs_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.act_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.episodes.len() as u64).to_le_bytes());
        buf.extend_from_slice(&self.total_steps().to_le_bytes());
        for e in &self.episodes {
            buf.extend_from_slice(&(e.rows() as u64).to_le_bytes());
            buf.extend_from_slice(&(e.trace_len() as u64).to_le_bytes());
            buf.push(e.terminated as u8);
            for column in [&e.observations, &e.actions, &e.rewards, &e.returns] {
                for v in column {
                    buf.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::DatasetFormat("bad magic".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::DatasetFormat(format!("unsupported version {version}")));
        }
        let id_len = r.u16()? as usize;
        let id =
            std::str::from_utf8(r.take(id_len)?).map_err(|_| Error::DatasetFormat("env id is not UTF-8".into()))?;
        let env: EnvId = id.parse()?;
        let origin = match r.u8()? {
            0 => Origin::Expert,
            1 => Origin::Rollout,
            x => return Err(Error::DatasetFormat(format!("invalid origin tag {x}"))),
        };
        let gamma = r.f64()?;
        let tau = r.f64()?;
        let step_limit = r.u64()? as usize;
        let obs_dim = r.u32()? as usize;
        let act_dim = r.u32()? as usize;
        let spec = env.spec();
        if obs_dim != spec.obs_dim || act_dim != spec.act_dim {
            return Err(Error::DatasetFormat(format!(
                "dimensions {obs_dim}x{act_dim} do not match {env} ({}x{})",
                spec.obs_dim, spec.act_dim
            )));
        }
        let n_episodes = r.u64()? as usize;
        let total_steps = r.u64()?;
        let mut episodes = Vec::with_capacity(n_episodes.min(1 << 20));
        for _ in 0..n_episodes {
            let rows = r.u64()? as usize;
            let trace_len = r.u64()? as usize;
            let terminated = match r.u8()? {
                0 => false,
                1 => true,
                x => return Err(Error::DatasetFormat(format!("invalid terminated flag {x}"))),
            };
            let observations = r.f64s(rows.saturating_mul(obs_dim))?;
            let actions = r.f64s(rows.saturating_mul(act_dim))?;
            let rewards = r.f64s(trace_len)?;
            let returns = r.f64s(rows)?;
            episodes.push(Episode { observations, actions, rewards, returns, terminated });
        }
        if r.pos != bytes.len() {
            return Err(Error::DatasetFormat(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        let ds = Self { env, origin, gamma, tau, step_limit, obs_dim, act_dim, episodes };
        if ds.total_steps() != total_steps {
            return Err(Error::DatasetFormat(format!(
                "header records {total_steps} steps, episodes hold {}",
                ds.total_steps()
            )));
        }
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("partial");
        fs::write(&tmp, self.encode())?;
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::DatasetFormat(format!("truncated at offset {}", self.pos)));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let len = n.checked_mul(8).ok_or_else(|| Error::DatasetFormat("size overflow".into()))?;
        Ok(self.take(len)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> TransitionDataset {
        let gamma = 0.9;
        let rewards = vec![1.0, -0.5, 2.0, 0.25];
        let full = discounted_returns_of(&rewards, gamma).unwrap();
        let mut ds = TransitionDataset::empty(EnvId::LinQuad, Origin::Rollout, gamma, 0.04, 4);
        ds.episodes.push(Episode {
            observations: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            actions: vec![1.0, 2.0, 3.0],
            rewards,
            returns: full[..3].to_vec(),
            terminated: false,
        });
        ds
    }

    #[test]
    fn round_trip_is_exact() {
        let ds = sample();
        ds.validate().unwrap();
        let bytes = ds.encode();
        let back = TransitionDataset::decode(&bytes).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.content_hash(), ds.content_hash());
        assert_eq!(back.total_steps(), 4);
        assert_eq!(back.num_rows(), 3);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = sample().encode();
        for cut in [0, 3, 10, 30, bytes.len() - 1] {
            assert!(TransitionDataset::decode(&bytes[..cut]).is_err(), "cut {cut}");
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(TransitionDataset::decode(&extra).is_err());
        let mut bad_return = sample();
        bad_return.episodes[0].returns[1] += 1e-12;
        assert!(TransitionDataset::decode(&bad_return.encode()).is_err());
    }

    #[test]
    fn hash_tracks_content() {
        let a = sample();
        let mut b = sample();
        b.episodes[0].actions[0] = 1.5;
        assert_ne!(a.content_hash(), b.content_hash());
    }
}
