//! Run manifests: what was run, on which inputs, and how it ended.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use proxyfactor::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub flags: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub library_version: String,
    pub threads: usize,
    pub started_unix: u64,
    pub wall_clock_secs: Option<f64>,
    /// `running`, `ok` or `failed: <message>`.
    pub status: String,
    pub outputs: Vec<PathBuf>,
    #[serde(skip)]
    clock: Option<Instant>,
    #[serde(skip)]
    path: PathBuf,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let mut file = fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| io_error(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

pub fn io_error(path: &Path, source: std::io::Error) -> Error {
    if source.kind() == std::io::ErrorKind::NotFound {
        Error::MissingFile(path.to_path_buf())
    } else {
        Error::Io { path: path.to_path_buf(), source }
    }
}

impl RunManifest {
    /// Digest every input and write the manifest with status `running`.
    pub fn begin(
        command: &str,
        flags: &impl Serialize,
        inputs: &[&Path],
        seed: Option<u64>,
        out_dir: &Path,
    ) -> Result<Self> {
        fs::create_dir_all(out_dir).map_err(|e| io_error(out_dir, e))?;
        let inputs = inputs
            .iter()
            .map(|p| Ok(InputDigest { path: p.to_path_buf(), sha256: sha256_file(p)? }))
            .collect::<Result<Vec<_>>>()?;
        let started_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let manifest = RunManifest {
            command: command.to_string(),
            flags: serde_json::to_value(flags).map_err(|e| Error::Config(e.to_string()))?,
            inputs,
            seed,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            threads: rayon::current_num_threads(),
            started_unix,
            wall_clock_secs: None,
            status: "running".into(),
            outputs: Vec::new(),
            clock: Some(Instant::now()),
            path: out_dir.join("manifest.json"),
        };
        manifest.write()?;
        Ok(manifest)
    }

    fn write(&self) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(&self.path, text + "\n").map_err(|e| io_error(&self.path, e))
    }

    pub fn finish(mut self, outcome: std::result::Result<&[PathBuf], &Error>) -> Result<()> {
        self.wall_clock_secs = self.clock.map(|c| c.elapsed().as_secs_f64());
        match outcome {
            Ok(outputs) => {
                self.status = "ok".into();
                self.outputs = outputs.to_vec();
            }
            Err(e) => self.status = format!("failed: {e}"),
        }
        self.write()
    }
}
