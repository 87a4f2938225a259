//! Binary checkpoints.
//!
//! Layout (little endian):
//! `magic[8] | version u32 | config_len u32 | config utf-8 | count u64 | f32 x count`.
//! The config is the key-value text of the model description; the payload
//! is the persistent state in declaration order.

use std::io::Write;
use std::path::Path;

use super::{KvConfig, ModelConfig, Network, Profile};
use crate::error::{Error, Result};
use crate::tensor::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"TNETCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode_checkpoint<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let config = net.config().to_kv().to_text();
    let state = net.state_vec();
    let mut out = Vec::with_capacity(32 + config.len() + 4 * state.len());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(config.as_bytes());
    out.extend_from_slice(&(state.len() as u64).to_le_bytes());
    for v in state {
        out.extend_from_slice(&(v.to_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Network<T>> {
    let mut cursor = bytes;
    let mut take = |n: usize| -> Result<&[u8]> {
        if cursor.len() < n {
            return Err(Error::Checkpoint("truncated file".into()));
        }
        let (head, rest) = cursor.split_at(n);
        cursor = rest;
        Ok(head)
    };
    if take(8)? != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic header".into()));
    }
    let version = u32::from_le_bytes(take(4)?.try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let config_len = u32::from_le_bytes(take(4)?.try_into().unwrap()) as usize;
    let config = std::str::from_utf8(take(config_len)?)
        .map_err(|_| Error::Checkpoint("config is not utf-8".into()))?;
    let cfg = ModelConfig::from_kv(&KvConfig::parse(config)?, Profile::Paper)?;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let payload = take(count.checked_mul(4).ok_or_else(|| Error::Checkpoint("bad count".into()))?)?;
    let values: Vec<T> = payload
        .chunks_exact(4)
        .map(|c| T::of(f32::from_le_bytes(c.try_into().unwrap()) as f64))
        .collect();
    if !cursor.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", cursor.len())));
    }
    let mut net = Network::build(&cfg, 0)?;
    net.set_state(&values)?;
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    let bytes = encode_checkpoint(net);
    let tmp = path.with_extension("tmp");
    let mut f = std::fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: &Path) -> Result<Network<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
