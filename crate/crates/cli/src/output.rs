use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use oufutures::{ModelParams, Result};
use sha2::{Digest, Sha256};

/// First 16 hex digits of the SHA-256 of the parameter file text.
pub fn theta_hash(theta: &ModelParams) -> String {
    let digest = Sha256::digest(theta.to_string().as_bytes());
    digest[..8].iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Provenance line written at the top of every output file (without `# `).
pub fn header(seed: Option<u64>, theta: Option<&ModelParams>) -> String {
    let seed = seed.map_or_else(|| "none".to_string(), |s| s.to_string());
    let theta = theta.map_or_else(|| "none".to_string(), theta_hash);
    format!(
        "oufutures {} seed={seed} theta=sha256:{theta}",
        env!("CARGO_PKG_VERSION")
    )
}

/// Ten significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn theta_lines(theta: &ModelParams) -> String {
    ModelParams::NAMES
        .iter()
        .zip(theta.to_array())
        .map(|(name, v)| format!("{name}={}\n", num(v)))
        .collect()
}

pub struct OutputDir(PathBuf);

impl OutputDir {
    pub fn create(path: &Path) -> Result<Self> {
        std::fs::create_dir_all(path)?;
        Ok(Self(path.to_path_buf()))
    }

    /// Writes `# header` followed by `body`.
    pub fn write(&self, name: &str, header: &str, body: &str) -> Result<PathBuf> {
        let path = self.0.join(name);
        std::fs::write(&path, format!("# {header}\n{body}"))?;
        println!("wrote {}", path.display());
        Ok(path)
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.0.join(name)
    }
}
