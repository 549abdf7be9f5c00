//! `ASCB` kernel-bank files and their `bank_meta.csv` sidecar.
//!
//! Layout (little-endian): magic `ASCB`, version `u32 = 1`, `r: u32`,
//! `count: u32`, then `count * r * r` `f32` values, row-major per kernel in
//! bank order.

use std::path::{Path, PathBuf};

use osrk_core::asc::KernelBank;

use crate::binio::Cursor;
use crate::error::{Error, FormatError, Result};
use crate::fsio::{atomic_write, read_file};

pub const BANK_MAGIC: &[u8; 4] = b"ASCB";
pub const BANK_VERSION: u32 = 1;
pub const META_FILE: &str = "bank_meta.csv";

pub fn encode_bank(bank: &KernelBank) -> Vec<u8> {
    let r = bank.kernel_size();
    let mut out = Vec::with_capacity(16 + bank.len() * r * r * 4);
    out.extend_from_slice(BANK_MAGIC);
    out.extend_from_slice(&BANK_VERSION.to_le_bytes());
    out.extend_from_slice(&(r as u32).to_le_bytes());
    out.extend_from_slice(&(bank.len() as u32).to_le_bytes());
    for k in bank.kernels() {
        for v in k {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    out
}

/// Kernel size and kernels (widened from `f32`).
pub fn decode_bank(bytes: &[u8]) -> std::result::Result<(usize, Vec<Vec<f64>>), FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(BANK_MAGIC)?;
    c.version(BANK_VERSION)?;
    let r = c.u32()? as usize;
    let count = c.u32()? as usize;
    if r == 0 {
        return Err(c.malformed("kernel size 0"));
    }
    let mut kernels = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        let mut k = Vec::with_capacity(r * r);
        for _ in 0..r * r {
            k.push(c.f32()? as f64);
        }
        kernels.push(k);
    }
    if c.remaining() != 0 {
        return Err(c.malformed(format!("{} trailing bytes", c.remaining())));
    }
    Ok((r, kernels))
}

pub fn meta_csv(bank: &KernelBank) -> String {
    let mut s = String::from("index,L_m,phi_bar_deg\n");
    for (i, (l, o)) in bank.meta().iter().enumerate() {
        s.push_str(&format!("{i},{l},{o}\n"));
    }
    s
}

pub fn parse_meta_csv(text: &str, path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Csv { path: path.to_path_buf(), source: e })?;
        let field = |j: usize| rec.get(j).and_then(|v| v.trim().parse::<f64>().ok());
        match (field(0), field(1), field(2)) {
            (Some(idx), Some(l), Some(o)) if idx as usize == i => out.push((l, o)),
            _ => return Err(Error::Data(format!("{}: bad row {}", path.display(), i + 1))),
        }
    }
    Ok(out)
}

pub fn meta_path(bank_path: &Path) -> PathBuf {
    bank_path.parent().unwrap_or(Path::new(".")).join(META_FILE)
}

/// Writes the bank and its metadata sidecar next to it.
pub fn write_bank(path: &Path, bank: &KernelBank) -> Result<()> {
    atomic_write(path, &encode_bank(bank))?;
    atomic_write(&meta_path(path), meta_csv(bank).as_bytes())
}

pub fn read_bank(path: &Path) -> Result<KernelBank> {
    let (r, kernels) = decode_bank(&read_file(path)?)?;
    let mp = meta_path(path);
    let meta = match std::fs::read_to_string(&mp) {
        Ok(text) => parse_meta_csv(&text, &mp)?,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => vec![(f64::NAN, f64::NAN); kernels.len()],
        Err(e) => return Err(Error::io(mp, e)),
    };
    Ok(KernelBank::new(r, kernels, meta)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bank() -> KernelBank {
        KernelBank::new(3, vec![vec![0.5; 9], (0..9).map(|i| i as f64 * 0.25).collect()], vec![(0.3, 0.0), (0.3, 10.0)]).unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bank.ascb");
        write_bank(&p, &bank()).unwrap();
        let back = read_bank(&p).unwrap();
        assert_eq!(back, bank());
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"ASCB");
        assert_eq!(bytes.len(), 16 + 2 * 9 * 4);
        assert_eq!(std::fs::read_to_string(dir.path().join(META_FILE)).unwrap(), "index,L_m,phi_bar_deg\n0,0.3,0\n1,0.3,10\n");
    }

    #[test]
    fn errors() {
        let b = encode_bank(&bank());
        assert!(matches!(decode_bank(&b[..20]), Err(FormatError::Truncated { .. })));
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(matches!(decode_bank(&bad), Err(FormatError::BadMagic { .. })));
        let mut v2 = b;
        v2[4] = 2;
        assert!(matches!(decode_bank(&v2), Err(FormatError::Version { found: 2, .. })));
    }
}
