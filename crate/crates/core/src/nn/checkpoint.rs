//! Versioned binary checkpoint holding an actor and a critic.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic            8 bytes  "WSCKPT\0\0"
//! format_version   u32      = 1
//! d_s, d_a, d_z    u32 x 3
//! backbone dims    u32 count, then count x u32
//! head dims        u32 count, then count x u32
//! critic dims      u32 count, then count x u32
//! backbone_frozen  u8       0 or 1
//! block count      u32
//! per block        u16 name length, name (UTF-8), u64 value count, values as f64
//! ```
//!
//! Blocks appear in a fixed order: `backbone.{l}.weight`, `backbone.{l}.bias`
//! for every layer, the same for `head`, then `log_sigma`, then the critic
//! layers as `critic.{l}.weight` / `critic.{l}.bias`.

use std::fs;
use std::path::Path;

use super::actor::{ResidualActor, ValueNet};
use super::mlp::MlpNet;
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"WSCKPT\0\0";
pub const FORMAT_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_dims(buf: &mut Vec<u8>, dims: &[usize]) {
    put_u32(buf, dims.len() as u32);
    for &d in dims {
        put_u32(buf, d as u32);
    }
}

fn put_block(buf: &mut Vec<u8>, name: &str, values: &[f64]) {
    buf.extend_from_slice(&(name.len() as u16).to_le_bytes());
    buf.extend_from_slice(name.as_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn net_blocks<'a>(prefix: &str, net: &'a MlpNet) -> Vec<(String, &'a [f64])> {
    (0..net.num_layers())
        .flat_map(|l| {
            let (w, b) = net.layer(l);
            [(format!("{prefix}.{l}.weight"), w), (format!("{prefix}.{l}.bias"), b)]
        })
        .collect()
}

/// Serializes actor and critic into checkpoint bytes.
pub fn encode(actor: &ResidualActor, critic: &ValueNet) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    put_u32(&mut buf, FORMAT_VERSION);
    put_u32(&mut buf, actor.obs_dim() as u32);
    put_u32(&mut buf, actor.act_dim() as u32);
    put_u32(&mut buf, actor.latent_dim() as u32);
    put_dims(&mut buf, actor.backbone.dims());
    put_dims(&mut buf, actor.head.dims());
    put_dims(&mut buf, critic.net.dims());
    buf.push(actor.backbone_frozen as u8);
    let mut blocks = net_blocks("backbone", &actor.backbone);
    blocks.extend(net_blocks("head", &actor.head));
    blocks.push(("log_sigma".to_string(), &actor.log_sigma));
    blocks.extend(net_blocks("critic", &critic.net));
    put_u32(&mut buf, blocks.len() as u32);
    for (name, values) in &blocks {
        put_block(&mut buf, name, values);
    }
    buf
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!(
                "truncated: needed {n} bytes at offset {}, {} remain",
                self.pos,
                self.bytes.len() - self.pos
            )));
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

    fn dims(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        if n > 64 {
            return Err(Error::Checkpoint(format!("implausible layer count {n}")));
        }
        (0..n).map(|_| Ok(self.u32()? as usize)).collect()
    }

    fn block(&mut self, expected_name: &str, expected_len: usize) -> Result<Vec<f64>> {
        let name_len = self.u16()? as usize;
        let name = std::str::from_utf8(self.take(name_len)?)
            .map_err(|_| Error::Checkpoint("block name is not UTF-8".into()))?;
        if name != expected_name {
            return Err(Error::Checkpoint(format!("expected block `{expected_name}`, found `{name}`")));
        }
        let count = self.u64()? as usize;
        if count != expected_len {
            return Err(Error::Checkpoint(format!(
                "block `{name}` holds {count} values, shape requires {expected_len}"
            )));
        }
        let raw = self.take(count.checked_mul(8).ok_or_else(|| Error::Checkpoint("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }

    fn net(&mut self, prefix: &str, dims: &[usize]) -> Result<MlpNet> {
        let template = MlpNet::zeros(dims).map_err(|e| Error::Checkpoint(format!("{prefix} dims: {e}")))?;
        let mut params = Vec::with_capacity(template.num_params());
        for l in 0..template.num_layers() {
            params.extend(self.block(&format!("{prefix}.{l}.weight"), dims[l] * dims[l + 1])?);
            params.extend(self.block(&format!("{prefix}.{l}.bias"), dims[l + 1])?);
        }
        MlpNet::from_params(dims, params).map_err(|e| Error::Checkpoint(format!("{prefix}: {e}")))
    }
}

/// Parses checkpoint bytes. Nothing is returned unless the whole document is valid.
pub fn decode(bytes: &[u8]) -> Result<(ResidualActor, ValueNet)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version} (expected {FORMAT_VERSION})")));
    }
    let (d_s, d_a, d_z) = (r.u32()? as usize, r.u32()? as usize, r.u32()? as usize);
    let backbone_dims = r.dims()?;
    let head_dims = r.dims()?;
    let critic_dims = r.dims()?;
    let consistent = backbone_dims.first() == Some(&d_s)
        && backbone_dims.last() == Some(&d_z)
        && head_dims.first() == Some(&(d_z + d_s))
        && head_dims.last() == Some(&d_a)
        && critic_dims.first() == Some(&d_s)
        && critic_dims.last() == Some(&1);
    if !consistent {
        return Err(Error::Checkpoint(format!(
            "header shapes disagree: d_s={d_s} d_a={d_a} d_z={d_z} backbone={backbone_dims:?} head={head_dims:?} critic={critic_dims:?}"
        )));
    }
    let frozen = match r.u8()? {
        0 => false,
        1 => true,
        x => return Err(Error::Checkpoint(format!("invalid frozen flag {x}"))),
    };
    let block_count = r.u32()? as usize;
    let expected_blocks = 2 * (backbone_dims.len() - 1 + head_dims.len() - 1 + critic_dims.len() - 1) + 1;
    if block_count != expected_blocks {
        return Err(Error::Checkpoint(format!("expected {expected_blocks} blocks, header says {block_count}")));
    }
    let backbone = r.net("backbone", &backbone_dims)?;
    let head = r.net("head", &head_dims)?;
    let log_sigma = r.block("log_sigma", d_a)?;
    let critic = r.net("critic", &critic_dims)?;
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if log_sigma.iter().any(|x| !x.is_finite()) {
        return Err(Error::Checkpoint("non-finite log_sigma".into()));
    }
    let actor =
        ResidualActor::from_parts(backbone, head, log_sigma, frozen).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let critic = ValueNet::from_net(critic).map_err(|e| Error::Checkpoint(e.to_string()))?;
    Ok((actor, critic))
}

pub fn save_checkpoint(actor: &ResidualActor, critic: &ValueNet, path: &Path) -> Result<()> {
    let tmp = path.with_extension("partial");
    fs::write(&tmp, encode(actor, critic))?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ResidualActor, ValueNet)> {
    decode(&fs::read(path)?)
}
