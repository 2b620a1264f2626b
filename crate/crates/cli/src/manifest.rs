use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Record of one invocation: enough to replay it and to audit what it did.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, as given.
    pub args: Vec<String>,
    pub parameters: Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    /// Seconds per stage.
    pub timings: BTreeMap<String, f64>,
    pub counters: BTreeMap<String, Value>,
    pub threads: usize,
    pub versions: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}

/// Collects manifest entries while a command runs and tracks the files it
/// writes so they can be removed if it fails.
#[derive(Debug, Default)]
pub struct Recorder {
    pub manifest: RunManifest,
}

impl Recorder {
    pub fn new(command: &str, args: Vec<String>, parameters: Value) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("nugget".to_string(), env!("CARGO_PKG_VERSION").to_string());
        Self {
            manifest: RunManifest {
                command: command.to_string(),
                args,
                parameters,
                threads: rayon::current_num_threads(),
                versions,
                ..RunManifest::default()
            },
        }
    }

    pub fn seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    pub fn input(&mut self, path: &Path) {
        self.manifest.inputs.push(path.to_path_buf());
    }

    /// Opens `path` for writing and records it as an output.
    pub fn create(&mut self, path: &Path) -> Result<BufWriter<File>> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        self.manifest.outputs.push(path.to_path_buf());
        Ok(BufWriter::new(file))
    }

    pub fn time<R>(&mut self, stage: &str, f: impl FnOnce() -> R) -> R {
        let started = Instant::now();
        let out = f();
        *self.manifest.timings.entry(stage.to_string()).or_default() += started.elapsed().as_secs_f64();
        out
    }

    pub fn counter(&mut self, key: &str, value: impl Serialize) {
        self.manifest.counters.insert(key.to_string(), serde_json::to_value(value).unwrap_or(Value::Null));
    }

    /// Removes every output written so far.
    pub fn discard(&mut self) {
        for path in self.manifest.outputs.drain(..) {
            let _ = std::fs::remove_file(path);
        }
    }
}
