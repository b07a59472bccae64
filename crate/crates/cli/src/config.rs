use std::fs;
use std::path::{Path, PathBuf};

use nesua_core::experiment::RunConfig;
use nesua_core::{Error, Result};
use sha2::{Digest, Sha256};

pub const EFFECTIVE_CONFIG: &str = "config.toml";

/// Reads `path` (or the defaults), applies flag overrides and validates.
pub fn load(path: Option<&Path>, seed: Option<u64>, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    if cfg.out_dir.as_os_str().is_empty() {
        cfg.out_dir = PathBuf::from("out");
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn to_toml(cfg: &RunConfig) -> Result<String> {
    toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))
}

pub fn defaults_toml() -> String {
    let mut cfg = RunConfig::default();
    cfg.out_dir = PathBuf::from("out");
    to_toml(&cfg).unwrap_or_else(|e| format!("<unavailable: {e}>"))
}

/// Creates `out_dir` and writes the merged configuration into it.
pub fn write_effective(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir)?;
    fs::write(cfg.out_dir.join(EFFECTIVE_CONFIG), to_toml(cfg)?)?;
    Ok(())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Digest of everything that determines the generated scenarios.
pub fn dataset_digest(cfg: &RunConfig) -> Result<String> {
    let key = serde_json::json!({
        "scenario": cfg.scenario,
        "seed": cfg.seed,
        "size": cfg.train.dataset_size,
    });
    Ok(sha256_hex(serde_json::to_string(&key)?.as_bytes()))
}

/// Digest of the parts of a configuration a resumed training run must share
/// with the original; the epoch budget and checkpoint cadence may change.
pub fn training_digest(cfg: &RunConfig) -> Result<String> {
    let mut c = cfg.clone();
    c.out_dir = PathBuf::new();
    c.train.epochs = 0;
    c.train.checkpoint_every = 0;
    c.eval = Default::default();
    Ok(sha256_hex(serde_json::to_string(&c)?.as_bytes()))
}
