use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mclab_core::experiment::ExperimentConfig;
use mclab_core::synth::GridSpec;
use serde::{Deserialize, Serialize};

pub const CACHE_ENV: &str = "MCLAB_CACHE";

/// Service configuration. Every field has a default, so `{}` is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub port: u16,
    pub cache_dir: PathBuf,
    pub sessions_dir: PathBuf,
    /// Stimulus sampling for new sessions.
    pub grid: GridSpec,
    pub experiment: ExperimentConfig,
    /// Master seed from which session seeds are derived.
    pub seed: u64,
}

impl Default for AppConfig {
    fn default() -> Self {
        Self {
            port: 8080,
            cache_dir: PathBuf::from("mclab-cache"),
            sessions_dir: PathBuf::from("mclab-sessions"),
            grid: GridSpec::new(256, 256, 32.0, 100.0),
            experiment: ExperimentConfig::default(),
            seed: 0,
        }
    }
}

impl AppConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => read_json(p)?,
            None => Self::default(),
        };
        if let Some(dir) = std::env::var_os(CACHE_ENV) {
            cfg.cache_dir = PathBuf::from(dir);
        }
        Ok(cfg)
    }

    /// Checks the grid and protocol and makes sure both directories exist
    /// and accept writes.
    pub fn prepare(&self) -> Result<()> {
        self.grid.validate()?;
        self.experiment.validate()?;
        for dir in [&self.cache_dir, &self.sessions_dir] {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let probe = dir.join(format!(".probe-{}", std::process::id()));
            fs::write(&probe, b"").with_context(|| format!("{} is not writable", dir.display()))?;
            fs::remove_file(&probe)?;
        }
        Ok(())
    }
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    let mut body = serde_json::to_vec_pretty(value)?;
    body.push(b'\n');
    fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

/// Writes through a unique temporary sibling and renames into place, so
/// concurrent writers of the same content never expose a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let Some(name) = path.file_name() else {
        bail!("{} has no file name", path.display());
    };
    let tmp = path.with_file_name(format!(".{}.{}.tmp", name.to_string_lossy(), uuid::Uuid::new_v4().simple()));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_is_default() {
        let cfg: AppConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, AppConfig::default());
        assert!(serde_json::from_str::<AppConfig>(r#"{"prot": 1}"#).is_err());
    }

    #[test]
    fn prepare_creates_directories() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = AppConfig {
            cache_dir: dir.path().join("c"),
            sessions_dir: dir.path().join("s"),
            ..Default::default()
        };
        cfg.prepare().unwrap();
        assert!(cfg.cache_dir.is_dir() && cfg.sessions_dir.is_dir());
    }

    #[test]
    fn atomic_write_leaves_no_temporaries() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.bin");
        write_atomic(&p, b"abc").unwrap();
        write_atomic(&p, b"abc").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"abc");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}
