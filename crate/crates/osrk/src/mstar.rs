//! MSTAR Phoenix-format chips.
//!
//! An ASCII header of `key= value` lines opens with a line containing
//! `PhoenixHeaderVer` and closes with `[EndofPhoenixHeader]`. The payload that
//! follows holds `rows * cols` big-endian `f32` magnitudes and then as many
//! phases, both row-major.

use std::collections::BTreeMap;
use std::path::Path;

use osrk_core::data::{SarSample, META_AZIMUTH, META_DEPRESSION, META_SERIAL};
use osrk_core::matrix::RealMatrix;

use crate::error::{MstarError, Result};
use crate::fsio::read_file;

pub const HEADER_MARK: &str = "PhoenixHeaderVer";
pub const HEADER_END: &str = "[EndofPhoenixHeader]";
pub const META_TARGET_TYPE: &str = "target_type";

/// Header entries with the byte offset of their line.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoenixHeader {
    pub entries: BTreeMap<String, (String, usize)>,
    /// Offset of the first payload byte.
    pub header_end: usize,
}

impl PhoenixHeader {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(v, _)| v.as_str())
    }

    fn dimension(&self, key: &str) -> std::result::Result<usize, MstarError> {
        let (v, off) = self
            .entries
            .get(key)
            .ok_or_else(|| MstarError::MissingKey { key: key.into(), header_end: self.header_end })?;
        v.parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| MstarError::BadValue { key: key.into(), offset: *off, value: v.clone() })
    }
}

pub fn parse_header(bytes: &[u8]) -> std::result::Result<PhoenixHeader, MstarError> {
    let mut entries = BTreeMap::new();
    let mut pos = 0usize;
    let mut first = true;
    while pos < bytes.len() {
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map(|i| pos + i);
        let line_end = end.unwrap_or(bytes.len());
        let line = String::from_utf8_lossy(&bytes[pos..line_end]);
        let line = line.trim_end_matches('\r').trim();
        if first {
            if !line.contains(HEADER_MARK) {
                return Err(MstarError::NotPhoenix);
            }
            first = false;
        } else if line == HEADER_END {
            return Ok(PhoenixHeader { entries, header_end: end.map_or(bytes.len(), |e| e + 1) });
        } else if let Some((k, v)) = line.split_once('=') {
            entries.entry(k.trim().to_string()).or_insert((v.trim().to_string(), pos));
        }
        match end {
            Some(e) => pos = e + 1,
            None => break,
        }
    }
    if first {
        return Err(MstarError::NotPhoenix);
    }
    Err(MstarError::MissingTerminator { scanned: bytes.len() })
}

pub fn parse_mstar_bytes(bytes: &[u8]) -> std::result::Result<SarSample, MstarError> {
    let header = parse_header(bytes)?;
    let rows = header.dimension("NumberOfRows")?;
    let cols = header.dimension("NumberOfColumns")?;
    let n = rows * cols;
    let expected = 2 * n * 4;
    let payload = &bytes[header.header_end..];
    if payload.len() < expected {
        return Err(MstarError::Truncated { payload_offset: header.header_end, expected, found: payload.len() });
    }
    let decode = |block: &[u8]| -> Vec<f64> {
        block.chunks_exact(4).map(|c| f32::from_be_bytes(c.try_into().expect("4 bytes")) as f64).collect()
    };
    let magnitude = RealMatrix::from_vec(rows, cols, decode(&payload[..4 * n])).expect("exact size");
    let phase = RealMatrix::from_vec(rows, cols, decode(&payload[4 * n..8 * n])).expect("exact size");
    let mut sample = SarSample::new(magnitude, None);
    sample.phase = Some(phase);
    for (key, meta) in [
        ("TargetAz", META_AZIMUTH),
        ("DesiredDepression", META_DEPRESSION),
        ("TargetSerNum", META_SERIAL),
        ("TargetType", META_TARGET_TYPE),
    ] {
        if let Some(v) = header.get(key) {
            sample.metadata.insert(meta.to_string(), v.to_string());
        }
    }
    Ok(sample)
}

pub fn parse_mstar(path: &Path) -> Result<SarSample> {
    Ok(parse_mstar_bytes(&read_file(path)?)?)
}

/// True when the first line carries the Phoenix marker.
pub fn looks_like_mstar(prefix: &[u8]) -> bool {
    let end = prefix.iter().position(|&b| b == b'\n').unwrap_or(prefix.len());
    String::from_utf8_lossy(&prefix[..end]).contains(HEADER_MARK)
}

/// Phoenix file for `magnitude` and `phase` with the given extra header entries.
pub fn encode_mstar(extra: &[(&str, String)], magnitude: &RealMatrix, phase: &RealMatrix) -> Vec<u8> {
    let mut out = format!("[PhoenixHeaderVer01.04]\nNumberOfRows= {}\nNumberOfColumns= {}\n", magnitude.rows(), magnitude.cols());
    for (k, v) in extra {
        out.push_str(&format!("{k}= {v}\n"));
    }
    out.push_str(HEADER_END);
    out.push('\n');
    let mut bytes = out.into_bytes();
    for v in magnitude.as_slice().iter().chain(phase.as_slice()) {
        bytes.extend_from_slice(&(*v as f32).to_be_bytes());
    }
    bytes
}
