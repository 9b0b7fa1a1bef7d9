//! Reproducibility manifest: every command drops a `manifest.json` next to
//! its outputs holding the fully resolved configuration, its hash, every
//! seed in play, and the toolchain versions. Re-running any command with
//! `--config manifest.json` replays the embedded configuration and must
//! reproduce the numeric outputs byte for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliResult;

pub fn sha256_hex(data: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(data);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Build the manifest document for a command about to run with `cfg`.
pub fn manifest_json(command: &str, cfg: &PipelineConfig) -> serde_json::Value {
    let config_toml = cfg.to_toml();
    json!({
        "command": command,
        "config_toml": config_toml,
        "config_sha256": sha256_hex(config_toml.as_bytes()),
        "seeds": {
            "synth": cfg.synth.seed,
            "sketch": cfg.identify.seed,
            "stage1": cfg.cluster.seed,
            "bench_record": cfg.bench.seed,
            "bench_sketch": cfg.bench.rsvd_seed,
            "rankscan_record": cfg.rankscan.record_seed,
            "rankscan_sketch": cfg.rankscan.rsvd_seed,
        },
        "versions": {
            "omar-core": omar_core::VERSION,
            "omar-cli": env!("CARGO_PKG_VERSION"),
        },
    })
}

/// Write the manifest into `out_dir` and return its path.
pub fn write_manifest(out_dir: &Path, command: &str, cfg: &PipelineConfig) -> CliResult<PathBuf> {
    let path = out_dir.join("manifest.json");
    let doc = manifest_json(command, cfg);
    let mut text = serde_json::to_string_pretty(&doc).expect("manifest serializes");
    text.push('\n');
    fs::write(&path, text)?;
    Ok(path)
}
