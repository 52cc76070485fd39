//! Run manifests: one JSON sidecar per output file, `<output>.manifest.json`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use photoxform::Result;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub subcommand: &'static str,
    /// Fully resolved configuration, defaults included.
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub version: String,
    pub wall_time_s: f64,
    pub threads: usize,
}

pub fn version_string() -> String {
    match option_env!("PHOTOXFORM_GIT_REV") {
        Some(rev) => format!("{} ({rev})", env!("CARGO_PKG_VERSION")),
        None => env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Collects what a subcommand read and wrote, then emits the manifest.
pub struct Recorder {
    subcommand: &'static str,
    start: Instant,
    seed: Option<u64>,
    inputs: Vec<PathBuf>,
    outputs: Vec<PathBuf>,
}

impl Recorder {
    pub fn new(subcommand: &'static str, seed: Option<u64>) -> Self {
        Self {
            subcommand,
            start: Instant::now(),
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn finish(self, config: impl Serialize) -> Result<RunManifest> {
        let manifest = RunManifest {
            subcommand: self.subcommand,
            config: serde_json::to_value(config)?,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self.outputs,
            version: version_string(),
            wall_time_s: self.start.elapsed().as_secs_f64(),
            threads: rayon::current_num_threads(),
        };
        if manifest.outputs.is_empty() {
            // Nothing to sit next to: report on stderr instead.
            eprintln!("{}", serde_json::to_string(&manifest)?);
        }
        for out in &manifest.outputs {
            let mut w = BufWriter::new(File::create(manifest_path(out))?);
            serde_json::to_writer_pretty(&mut w, &manifest)?;
            w.write_all(b"\n")?;
            w.flush()?;
        }
        Ok(manifest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_name_keeps_the_extension() {
        assert_eq!(
            manifest_path(Path::new("out/a.fmap")),
            PathBuf::from("out/a.fmap.manifest.json")
        );
        assert_eq!(manifest_path(Path::new("ckpt")), PathBuf::from("ckpt.manifest.json"));
    }

    #[test]
    fn manifest_is_written_next_to_each_output() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let mut rec = Recorder::new("test", Some(3));
        rec.input(Path::new("in.bin"));
        rec.output(&a);
        rec.output(&b);
        rec.finish(serde_json::json!({"k": 1})).unwrap();
        for out in [&a, &b] {
            let text = std::fs::read_to_string(manifest_path(out)).unwrap();
            let v: serde_json::Value = serde_json::from_str(&text).unwrap();
            assert_eq!(v["subcommand"], "test");
            assert_eq!(v["seed"], 3);
            assert_eq!(v["config"]["k"], 1);
            assert_eq!(v["outputs"].as_array().unwrap().len(), 2);
        }
    }
}
