//! Dataset directories: PNG, MSTAR and `OSRT` sample files plus manifests.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use osrk_core::data::{SarSample, SynthDataset, META_AZIMUTH, META_DEPRESSION};
use osrk_core::matrix::RealMatrix;

use crate::binio::{put_f64s, Cursor};
use crate::error::{Error, FormatError, Result};
use crate::fsio::{atomic_write, read_file};
use crate::mstar::{looks_like_mstar, parse_mstar_bytes};

pub const TENSOR_MAGIC: &[u8; 4] = b"OSRT";
pub const TENSOR_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.csv";
pub const META_SPLIT: &str = "split";

/// One magnitude image: magic `OSRT`, version `u32 = 1`, rows `u32`, cols `u32`,
/// then `f64` values row-major, little-endian.
pub fn encode_tensor_file(m: &RealMatrix) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + m.as_slice().len() * 8);
    out.extend_from_slice(TENSOR_MAGIC);
    out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
    out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
    out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
    put_f64s(&mut out, m.as_slice());
    out
}

pub fn decode_tensor_file(bytes: &[u8]) -> std::result::Result<RealMatrix, FormatError> {
    let mut c = Cursor::new(bytes);
    c.magic(TENSOR_MAGIC)?;
    c.version(TENSOR_VERSION)?;
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let values = c.f64_vec(rows * cols)?;
    if c.remaining() != 0 {
        return Err(c.malformed(format!("{} trailing bytes", c.remaining())));
    }
    RealMatrix::from_vec(rows, cols, values).map_err(|e| c.malformed(e.to_string()))
}

fn load_png(path: &Path) -> Result<RealMatrix> {
    let img = image::open(path).map_err(|e| Error::Image { path: path.into(), source: e })?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let values: Vec<f64> = if img.color().bytes_per_pixel() / img.color().channel_count() >= 2 {
        img.into_luma16().into_raw().into_iter().map(f64::from).collect()
    } else {
        img.into_luma8().into_raw().into_iter().map(f64::from).collect()
    };
    Ok(RealMatrix::from_vec(h, w, values)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Png,
    Tensor,
    Mstar,
}

/// Kind by extension, falling back to the Phoenix marker for MSTAR files.
pub fn detect_kind(path: &Path) -> Option<SampleKind> {
    match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
        Some("png") => Some(SampleKind::Png),
        Some("osrt") => Some(SampleKind::Tensor),
        Some("csv" | "json" | "txt" | "md" | "ascb" | "osrk") => None,
        _ => {
            use std::io::Read;
            let mut buf = [0u8; 256];
            let n = std::fs::File::open(path).and_then(|mut f| f.read(&mut buf)).ok()?;
            looks_like_mstar(&buf[..n]).then_some(SampleKind::Mstar)
        }
    }
}

/// Reads one sample file of any supported kind. The label is left empty.
pub fn load_sample_file(path: &Path) -> Result<SarSample> {
    let kind = detect_kind(path).ok_or_else(|| Error::Data(format!("{}: unsupported file type", path.display())))?;
    let sample = match kind {
        SampleKind::Png => SarSample::new(load_png(path)?, None),
        SampleKind::Tensor => SarSample::new(decode_tensor_file(&read_file(path)?)?, None),
        SampleKind::Mstar => parse_mstar_bytes(&read_file(path)?)?,
    };
    sample.validate().map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
    Ok(sample)
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// CSV with columns `path,label,split` and optional `depression_deg,azimuth_deg`.
    pub manifest: Option<PathBuf>,
    /// Fail on the first unreadable file instead of warning.
    pub strict: bool,
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub samples: Vec<SarSample>,
    pub paths: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

impl LoadedDataset {
    /// Sorted distinct labels.
    pub fn class_names(&self) -> Vec<String> {
        let mut v: Vec<String> = self.samples.iter().filter_map(|s| s.label.clone()).collect();
        v.sort();
        v.dedup();
        v
    }
}

struct ManifestRow {
    path: PathBuf,
    label: Option<String>,
    meta: Vec<(&'static str, String)>,
}

fn read_manifest(path: &Path, root: &Path) -> Result<Vec<ManifestRow>> {
    let csv_err = |e| Error::Csv { path: path.into(), source: e };
    let mut rdr = csv::Reader::from_path(path).map_err(csv_err)?;
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(pc), Some(lc), Some(sc)) = (col("path"), col("label"), col("split")) else {
        return Err(Error::Data(format!("{}: manifest needs path,label,split columns", path.display())));
    };
    let optional = [(META_DEPRESSION, col("depression_deg")), (META_AZIMUTH, col("azimuth_deg"))];
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let get = |i: usize| rec.get(i).unwrap_or("").trim().to_string();
        let label = get(lc);
        let mut meta = vec![(META_SPLIT, get(sc))];
        for (k, c) in optional {
            if let Some(c) = c {
                let v = get(c);
                if !v.is_empty() {
                    meta.push((k, v));
                }
            }
        }
        rows.push(ManifestRow {
            path: root.join(get(pc)),
            label: (!label.is_empty() && label != "UNKNOWN").then_some(label),
            meta,
        });
    }
    Ok(rows)
}

/// Loads every sample under `root` in lexicographic path order, labelled by
/// the name of its parent directory, or exactly the files listed in a manifest.
pub fn load_dataset_dir(root: &Path, opts: &LoadOptions) -> Result<LoadedDataset> {
    if !root.is_dir() {
        return Err(Error::Data(format!("{} is not a directory", root.display())));
    }
    let mut out = LoadedDataset { samples: Vec::new(), paths: Vec::new(), warnings: Vec::new() };
    let fail = |out: &mut LoadedDataset, e: Error| -> Result<()> {
        if opts.strict {
            return Err(e);
        }
        out.warnings.push(e.to_string());
        Ok(())
    };
    match &opts.manifest {
        Some(m) => {
            for row in read_manifest(m, root)? {
                match load_sample_file(&row.path) {
                    Ok(mut s) => {
                        s.label = row.label;
                        for (k, v) in row.meta {
                            s.metadata.insert(k.to_string(), v);
                        }
                        out.samples.push(s);
                        out.paths.push(row.path);
                    }
                    Err(e) => fail(&mut out, e)?,
                }
            }
        }
        None => {
            let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
                .min_depth(1)
                .into_iter()
                .filter_map(|e| e.ok())
                .filter(|e| e.file_type().is_file())
                .map(|e| e.into_path())
                .collect();
            files.sort();
            for path in files {
                if detect_kind(&path).is_none() {
                    continue;
                }
                match load_sample_file(&path) {
                    Ok(mut s) => {
                        s.label = path
                            .parent()
                            .and_then(|p| p.file_name())
                            .map(|n| n.to_string_lossy().into_owned());
                        out.samples.push(s);
                        out.paths.push(path);
                    }
                    Err(e) => fail(&mut out, e)?,
                }
            }
        }
    }
    if out.samples.is_empty() {
        return Err(Error::Data(format!("no samples found under {}", root.display())));
    }
    Ok(out)
}

/// Writes `split/class/NNNNN.osrt` files plus `manifest.csv`. Returns the file list.
pub fn write_synth_dataset(ds: &SynthDataset, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut manifest = String::from("path,label,split\n");
    let mut written = Vec::new();
    let mut counters: BTreeMap<(&str, String), usize> = BTreeMap::new();
    for (split, samples) in [("train", &ds.train), ("test", &ds.test)] {
        for s in samples {
            let label = s.label.clone().unwrap_or_else(|| "UNKNOWN".into());
            let n = counters.entry((split, label.clone())).or_default();
            let rel = format!("{split}/{label}/{n:05}.osrt");
            *n += 1;
            let path = out_dir.join(&rel);
            atomic_write(&path, &encode_tensor_file(&s.magnitude))?;
            manifest.push_str(&format!("{rel},{label},{split}\n"));
            written.push(path);
        }
    }
    let mpath = out_dir.join(MANIFEST_FILE);
    atomic_write(&mpath, manifest.as_bytes())?;
    written.push(mpath);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mstar::encode_mstar;

    fn png(path: &Path, w: u32, h: u32) {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        image::GrayImage::from_fn(w, h, |x, y| image::Luma([(x + y) as u8])).save(path).unwrap();
    }

    #[test]
    fn directory_labels_and_order() {
        let dir = tempfile::tempdir().unwrap();
        for i in 0..3 {
            png(&dir.path().join(format!("a/{i}.png")), 4, 3);
        }
        for i in 0..2 {
            png(&dir.path().join(format!("b/{i}.png")), 4, 3);
        }
        std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
        let ds = load_dataset_dir(dir.path(), &LoadOptions::default()).unwrap();
        assert_eq!(ds.samples.len(), 5);
        let labels: Vec<_> = ds.samples.iter().map(|s| s.label.clone().unwrap()).collect();
        assert_eq!(labels, ["a", "a", "a", "b", "b"]);
        assert_eq!(ds.samples[0].magnitude.rows(), 3);
        assert_eq!(*ds.samples[0].magnitude.get(2, 3), 5.0);
    }

    #[test]
    fn manifest_overrides_and_mixed_formats() {
        let dir = tempfile::tempdir().unwrap();
        png(&dir.path().join("x/one.png"), 2, 2);
        let m = RealMatrix::from_fn(2, 2, |r, c| (r + c) as f64);
        std::fs::create_dir_all(dir.path().join("y")).unwrap();
        std::fs::write(dir.path().join("y/chip.015"), encode_mstar(&[], &m, &m)).unwrap();
        let all = load_dataset_dir(dir.path(), &LoadOptions::default()).unwrap();
        assert_eq!(all.samples.len(), 2);

        let mp = dir.path().join("m.csv");
        std::fs::write(&mp, "path,label,split,depression_deg\nx/one.png,tank,train,17\ny/chip.015,truck,test,15\n").unwrap();
        let ds = load_dataset_dir(dir.path(), &LoadOptions { manifest: Some(mp), strict: false }).unwrap();
        assert_eq!(ds.samples[0].label.as_deref(), Some("tank"));
        assert_eq!(ds.samples[1].label.as_deref(), Some("truck"));
        assert_eq!(ds.samples[1].depression_deg(), Some(15.0));
        assert_eq!(ds.samples[0].metadata.get(META_SPLIT).map(String::as_str), Some("train"));
    }

    #[test]
    fn strict_mode_and_empty() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a")).unwrap();
        std::fs::write(dir.path().join("a/bad.png"), b"not a png").unwrap();
        png(&dir.path().join("a/good.png"), 2, 2);
        let lax = load_dataset_dir(dir.path(), &LoadOptions::default()).unwrap();
        assert_eq!((lax.samples.len(), lax.warnings.len()), (1, 1));
        assert!(load_dataset_dir(dir.path(), &LoadOptions { manifest: None, strict: true }).is_err());
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_dataset_dir(empty.path(), &LoadOptions::default()), Err(Error::Data(_))));
    }

    #[test]
    fn tensor_file_round_trip() {
        let m = RealMatrix::from_fn(3, 5, |r, c| r as f64 * 0.1 + c as f64);
        assert_eq!(decode_tensor_file(&encode_tensor_file(&m)).unwrap(), m);
    }
}
