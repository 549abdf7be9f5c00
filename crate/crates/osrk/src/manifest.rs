//! Run manifests: a JSON record of how each output was produced.

use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::error::Result;
use crate::fsio::{atomic_write, read_file, sha256_hex};

#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    pub deterministic: bool,
    pub threads: usize,
    /// Effective configuration as `key = value` text.
    pub config_text: String,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub extra: Map<String, Value>,
}

impl RunManifest {
    pub fn new(command: &str, seed: u64, deterministic: bool, threads: usize) -> Self {
        RunManifest {
            command: command.into(),
            args: std::env::args().skip(1).collect(),
            seed,
            deterministic,
            threads,
            config_text: String::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            extra: Map::new(),
        }
    }

    fn digests(paths: &[PathBuf]) -> Result<Value> {
        let mut out = Vec::new();
        for p in paths {
            let entry = if p.is_file() {
                json!({ "path": p.display().to_string(), "sha256": sha256_hex(&read_file(p)?) })
            } else {
                json!({ "path": p.display().to_string() })
            };
            out.push(entry);
        }
        Ok(Value::Array(out))
    }

    pub fn to_json(&self) -> Result<Value> {
        Ok(json!({
            "tool": env!("CARGO_PKG_NAME"),
            "version": env!("CARGO_PKG_VERSION"),
            "command": self.command,
            "args": self.args,
            "seed": self.seed,
            "deterministic": self.deterministic,
            "threads": self.threads,
            "config": self.config_text,
            "inputs": Self::digests(&self.inputs)?,
            "outputs": Self::digests(&self.outputs)?,
            "extra": self.extra,
        }))
    }

    /// Writes next to `output`: `DIR/run_manifest.json` for a directory,
    /// otherwise `<output>.manifest.json`.
    pub fn write_for(&self, output: &Path) -> Result<PathBuf> {
        let path = if output.is_dir() {
            output.join("run_manifest.json")
        } else {
            let mut s = output.as_os_str().to_owned();
            s.push(".manifest.json");
            PathBuf::from(s)
        };
        let text = serde_json::to_string_pretty(&self.to_json()?).expect("JSON values always serialize");
        atomic_write(&path, format!("{text}\n").as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn records_digests() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.csv");
        std::fs::write(&out, "abc").unwrap();
        let mut m = RunManifest::new("eval", 7, true, 1);
        m.outputs.push(out.clone());
        let path = m.write_for(&out).unwrap();
        assert!(path.ends_with("x.csv.manifest.json"));
        let v: Value = serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap();
        assert_eq!(v["seed"], 7);
        assert_eq!(
            v["outputs"][0]["sha256"],
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert!(m.write_for(dir.path()).unwrap().ends_with("run_manifest.json"));
    }
}
