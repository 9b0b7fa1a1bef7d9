//! Command-line front end for the identification library: configuration
//! parsing, the record → grid → modes orchestration, output documents,
//! and run manifests. The binary in `main.rs` is a thin argument layer
//! over this crate so integration tests can call commands directly.

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod pipeline;

pub use commands::{
    cmd_bench, cmd_identify, cmd_rankscan, cmd_synth, cmd_track, load_reference, resolve_inputs,
    run_bench, run_rankscan, truth_modes, BenchRow, RankscanRow, TrackOutcome,
};
pub use config::{load_config, PipelineConfig};
pub use error::{CliError, CliResult};
pub use manifest::{manifest_json, sha256_hex, write_manifest};
pub use pipeline::{
    anchor_to_truth, cluster_matches, identify_from_toeplitz, identify_record, preprocess,
    IdentifyArtifacts,
};
