//! `OSRK` checkpoint files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "OSRK" | version u32 = 1
//! tensor count u32, then per tensor:
//!     name length u16 | UTF-8 name | rank u8 | extents u32[rank] | f64 payload
//! head:       gamma f64 | lambda f64
//! optimizer:  learning rate f64 | momentum f64 | epoch u64 | step u64 |
//!             buffer count u32, then per buffer: length u64 | f64 payload
//! rng:        seed [u8; 32] | stream u64 | word position u128
//! config:     length u32 | UTF-8 key = value text
//! CRC32 of every preceding byte (u32)
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use osrk_core::config::KvConfig;
use osrk_core::network::NetworkConfig;
use osrk_core::train::{Checkpoint, NamedTensor, RngState, TrainConfig};

use crate::binio::{put_f64s, Cursor};
use crate::error::{Error, FormatError, Result};
use crate::fsio::{atomic_write, read_file};

pub const CKPT_MAGIC: &[u8; 4] = b"OSRK";
pub const CKPT_VERSION: u32 = 1;
const META_PREFIX: &str = "meta.";

/// A checkpoint plus free-form string metadata (class names, threshold, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct CheckpointFile {
    pub checkpoint: Checkpoint,
    pub meta: BTreeMap<String, String>,
}

pub fn encode_checkpoint(file: &CheckpointFile) -> std::result::Result<Vec<u8>, FormatError> {
    let ck = &file.checkpoint;
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&CKPT_VERSION.to_le_bytes());
    out.extend_from_slice(&(ck.tensors.len() as u32).to_le_bytes());
    for t in &ck.tensors {
        let name = t.name.as_bytes();
        let offset = out.len();
        let bad = |reason: &str| FormatError::Malformed { offset, reason: format!("tensor `{}`: {reason}", t.name) };
        let name_len = u16::try_from(name.len()).map_err(|_| bad("name too long"))?;
        let rank = u8::try_from(t.shape.len()).map_err(|_| bad("rank too large"))?;
        if t.shape.iter().product::<usize>() != t.values.len() {
            return Err(bad("shape does not match payload"));
        }
        out.extend_from_slice(&name_len.to_le_bytes());
        out.extend_from_slice(name);
        out.push(rank);
        for &e in &t.shape {
            let e = u32::try_from(e).map_err(|_| bad("extent too large"))?;
            out.extend_from_slice(&e.to_le_bytes());
        }
        put_f64s(&mut out, &t.values);
    }
    put_f64s(&mut out, &[ck.gamma, ck.lambda]);
    put_f64s(&mut out, &[ck.train_config.learning_rate, ck.train_config.momentum]);
    out.extend_from_slice(&ck.epoch.to_le_bytes());
    out.extend_from_slice(&ck.step.to_le_bytes());
    out.extend_from_slice(&(ck.velocity.len() as u32).to_le_bytes());
    for v in &ck.velocity {
        out.extend_from_slice(&(v.len() as u64).to_le_bytes());
        put_f64s(&mut out, v);
    }
    out.extend_from_slice(&ck.rng.seed);
    out.extend_from_slice(&ck.rng.stream.to_le_bytes());
    out.extend_from_slice(&ck.rng.word_pos.to_le_bytes());
    let mut text = ck.network_config.to_kv_text();
    text.push_str(&ck.train_config.to_kv_text());
    for (k, v) in &file.meta {
        if k.contains(['=', '\n', '#']) || v.contains(['\n', '#']) {
            return Err(FormatError::Malformed { offset: out.len(), reason: format!("metadata `{k}` cannot be stored as text") });
        }
        text.push_str(&format!("{META_PREFIX}{k} = {v}\n"));
    }
    out.extend_from_slice(&(text.len() as u32).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<CheckpointFile> {
    let mut c = Cursor::new(bytes);
    c.magic(CKPT_MAGIC)?;
    c.version(CKPT_VERSION)?;
    let n = c.u32()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..n {
        let len = c.u16()? as usize;
        let name = std::str::from_utf8(c.take(len)?).map_err(|_| c.malformed("tensor name is not UTF-8"))?.to_string();
        let rank = c.u8()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.u32()? as usize);
        }
        let count = shape.iter().try_fold(1usize, |a, &e| a.checked_mul(e)).ok_or_else(|| c.malformed("extent overflow"))?;
        let values = c.f64_vec(count)?;
        tensors.push(NamedTensor { name, shape, values });
    }
    let gamma = c.f64()?;
    let lambda = c.f64()?;
    let lr = c.f64()?;
    let momentum = c.f64()?;
    let epoch = c.u64()?;
    let step = c.u64()?;
    let nv = c.u32()? as usize;
    let mut velocity = Vec::new();
    for _ in 0..nv {
        let len = usize::try_from(c.u64()?).map_err(|_| c.malformed("buffer length overflow"))?;
        velocity.push(c.f64_vec(len)?);
    }
    let seed: [u8; 32] = c.take(32)?.try_into().expect("32 bytes");
    let stream = c.u64()?;
    let word_pos = c.u128()?;
    let text_len = c.u32()? as usize;
    let text = std::str::from_utf8(c.take(text_len)?).map_err(|_| c.malformed("config block is not UTF-8"))?.to_string();
    let body_end = c.pos();
    let stored = c.u32()?;
    if c.remaining() != 0 {
        return Err(c.malformed(format!("{} trailing bytes", c.remaining())).into());
    }
    let computed = crc32fast::hash(&bytes[..body_end]);
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed }.into());
    }

    let mut meta = BTreeMap::new();
    let mut cfg_text = String::new();
    for line in text.lines() {
        match line.strip_prefix(META_PREFIX).and_then(|l| l.split_once('=')) {
            Some((k, v)) => {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            None => {
                cfg_text.push_str(line);
                cfg_text.push('\n');
            }
        }
    }
    let kv = KvConfig::parse(&cfg_text)?;
    let mut errors = Vec::new();
    let network_config = NetworkConfig::from_kv(&kv, &mut errors);
    let train_config = TrainConfig::from_kv(&kv, &mut errors);
    osrk_core::Error::collect(errors)?;
    if train_config.learning_rate.to_bits() != lr.to_bits() || train_config.momentum.to_bits() != momentum.to_bits() {
        return Err(Error::Format(FormatError::Malformed {
            offset: body_end,
            reason: "optimizer block disagrees with the config block".into(),
        }));
    }
    Ok(CheckpointFile {
        checkpoint: Checkpoint {
            network_config,
            train_config,
            tensors,
            gamma,
            lambda,
            velocity,
            epoch,
            step,
            rng: RngState { seed, stream, word_pos },
        },
        meta,
    })
}

pub fn save_checkpoint(path: &Path, file: &CheckpointFile) -> Result<()> {
    atomic_write(path, &encode_checkpoint(file)?)
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointFile> {
    decode_checkpoint(&read_file(path)?)
}
