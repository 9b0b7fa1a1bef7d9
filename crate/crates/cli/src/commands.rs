//! Subcommand implementations. Each `cmd_*` takes a validated
//! configuration plus the output directory, writes its documents, and
//! returns what the caller needs for a summary line. The heavy lifting
//! (`run_bench`, `run_rankscan`, identification) is exposed separately so
//! harnesses can reuse it without touching the filesystem.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use ndarray::Array1;
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use omar_core::cluster::{clusters_to_json, ModeCluster};
use omar_core::memtrack;
use omar_core::randla::{full_svd_into, min_rank_percent, rsvd_oversampled, sample_count};
use omar_core::signal::{assemble_toeplitz, correlations, load_record, save_record};
use omar_core::ssi::{grid_to_json, lag_of_step};
use omar_core::synth::{analytic_modes, build_matrices, simulate, ModeTruth, ShearFrameSpec};
use omar_core::track::{success_ratio, track_session, ReferenceMode, ReferenceModeSet, TrackedHistory};

use crate::config::{parse_record_format, InputConfig, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::write_manifest;
use crate::pipeline::{
    anchor_to_truth, cluster_matches, identify_from_toeplitz, identify_record, preprocess,
    IdentifyArtifacts,
};

/// Expand the configured paths/globs into a sorted, deduplicated file list.
pub fn resolve_inputs(input: &InputConfig) -> CliResult<Vec<PathBuf>> {
    let mut set = BTreeSet::new();
    for pat in &input.paths {
        let entries = glob::glob(pat)
            .map_err(|e| CliError::Config(format!("bad glob {pat:?}: {e}")))?;
        for entry in entries {
            let p = entry.map_err(|e| CliError::Data(format!("glob {pat:?}: {e}")))?;
            if p.is_file() {
                set.insert(p);
            }
        }
    }
    Ok(set.into_iter().collect())
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "record".into())
}

/// Integer-like floats print without a trailing `.0` (for file names).
fn fmt_num(v: f64) -> String {
    if v.is_finite() && v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}

fn shear_frame_spec(cfg: &PipelineConfig, duration_s: f64, snr_db: f64, seed: u64) -> ShearFrameSpec {
    let sy = &cfg.synth;
    ShearFrameSpec {
        stories: sy.stories,
        story_mass: sy.story_mass,
        story_stiffness: sy.story_stiffness,
        xi_target: sy.xi_target,
        rayleigh_modes: sy.rayleigh_modes,
        fs: sy.fs,
        duration_s,
        snr_db,
        seed,
        process_noise_std: sy.process_noise_std,
    }
}

/// Exact modal parameters of the configured shear frame.
pub fn truth_modes(cfg: &PipelineConfig) -> CliResult<Vec<ModeTruth>> {
    let spec = shear_frame_spec(cfg, cfg.synth.duration_s, cfg.synth.snr_db[0], cfg.synth.seed);
    let (m, k, c) = build_matrices(&spec)?;
    Ok(analytic_modes(&m, &k, &c)?)
}

// ---------------------------------------------------------------------------
// synth

/// Synthesize one record per configured SNR, all from the same seed so
/// they differ only in measurement-noise amplitude.
pub fn cmd_synth(cfg: &PipelineConfig, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let format = parse_record_format(&cfg.synth.format)?;
    let ext = match cfg.synth.format.as_str() {
        "csv" => "csv",
        _ => "bin",
    };
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for &snr in &cfg.synth.snr_db {
        let spec = shear_frame_spec(cfg, cfg.synth.duration_s, snr, cfg.synth.seed);
        let rec = simulate(&spec)?;
        let path = out_dir.join(format!("record_snr{}.{ext}", fmt_num(snr)));
        save_record(&rec, &path, format)?;
        written.push(path);
    }
    write_manifest(out_dir, "synth", cfg)?;
    Ok(written)
}

// ---------------------------------------------------------------------------
// identify

fn load_and_identify(path: &Path, cfg: &PipelineConfig) -> CliResult<IdentifyArtifacts> {
    let format = parse_record_format(&cfg.input.format)?;
    let rec = load_record(path, format)?;
    let rec = preprocess(rec, cfg)?;
    identify_record(&rec, cfg)
}

fn write_identify_outputs(
    out_dir: &Path,
    stem: &str,
    art: &IdentifyArtifacts,
) -> CliResult<Vec<PathBuf>> {
    let mut grid_doc = grid_to_json(&art.grid);
    grid_doc["ranks_used"] = json!(art.ranks_used);
    grid_doc["warnings"] = json!(art.warnings);
    let grid_path = out_dir.join(format!("{stem}.grid.json"));
    fs::write(&grid_path, pretty(&grid_doc))?;

    let memberships: Vec<Vec<f64>> = art.memberships.rows().into_iter().map(|r| r.to_vec()).collect();
    let centroids: Vec<Vec<f64>> = art.centroids.rows().into_iter().map(|r| r.to_vec()).collect();
    let clusters_doc = json!({
        "f0": art.f0,
        "stage1": {
            "memberships": memberships,
            "centroids": centroids,
            "physical_cluster": art.physical_cluster,
            "vacuous": art.vacuous,
            "retained_pole_indices": art.retained,
        },
        "clusters": clusters_to_json(&art.clusters),
    });
    let clusters_path = out_dir.join(format!("{stem}.clusters.json"));
    fs::write(&clusters_path, pretty(&clusters_doc))?;

    let mut csv = String::from("f,order,tau,flag\n");
    for p in &art.grid.poles {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            p.f,
            p.order,
            lag_of_step(p.j_b, art.grid.lag_plan.fs),
            p.stability_flag.as_str()
        ));
    }
    let csv_path = out_dir.join(format!("{stem}.stabilization.csv"));
    fs::write(&csv_path, csv)?;

    Ok(vec![grid_path, clusters_path, csv_path])
}

fn pretty(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serializes");
    s.push('\n');
    s
}

/// Identify every matched record, writing a stabilization grid document,
/// a cluster document, and a plot-ready CSV per record.
pub fn cmd_identify(cfg: &PipelineConfig, out_dir: &Path) -> CliResult<Vec<PathBuf>> {
    let inputs = resolve_inputs(&cfg.input)?;
    if inputs.is_empty() {
        return Err(CliError::Data(
            "no input records match [input].paths".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;

    let artifacts: CliResult<Vec<IdentifyArtifacts>> = inputs
        .par_iter()
        .map(|path| load_and_identify(path, cfg))
        .collect();
    let artifacts = artifacts?;

    let mut written = Vec::new();
    for (path, art) in inputs.iter().zip(&artifacts) {
        written.extend(write_identify_outputs(out_dir, &file_stem(path), art)?);
    }
    write_manifest(out_dir, "identify", cfg)?;
    Ok(written)
}

// ---------------------------------------------------------------------------
// track

/// Parse a clusters document (as written by `identify`) into a reference
/// mode catalog, labeling modes in ascending frequency order.
pub fn load_reference(path: &Path) -> CliResult<ReferenceModeSet> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let doc: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("bad reference {}: {e}", path.display())))?;
    let items = doc
        .get("clusters")
        .or(Some(&doc))
        .and_then(|v| v.as_array())
        .ok_or_else(|| {
            CliError::Data(format!(
                "{}: expected a clusters array or a document with one",
                path.display()
            ))
        })?;

    let mut modes = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let f = item.get("f").and_then(|v| v.as_f64());
        let xi = item.get("xi").and_then(|v| v.as_f64());
        let shape = item.get("shape").and_then(|v| v.as_array());
        let (Some(f), Some(xi), Some(shape)) = (f, xi, shape) else {
            return Err(CliError::Data(format!(
                "{}: cluster {i} is missing f, xi, or shape",
                path.display()
            )));
        };
        let values: Option<Vec<f64>> = shape.iter().map(|v| v.as_f64()).collect();
        let values = values.ok_or_else(|| {
            CliError::Data(format!("{}: cluster {i} has a non-numeric shape", path.display()))
        })?;
        if values.len() % 2 != 0 || values.is_empty() {
            return Err(CliError::Data(format!(
                "{}: cluster {i} shape must interleave re/im pairs",
                path.display()
            )));
        }
        let shape: Array1<Complex64> = values
            .chunks_exact(2)
            .map(|p| Complex64::new(p[0], p[1]))
            .collect();
        modes.push(ReferenceMode {
            f,
            xi,
            shape,
            label: String::new(),
        });
    }
    modes.sort_by(|a, b| a.f.partial_cmp(&b.f).unwrap());
    for (i, m) in modes.iter_mut().enumerate() {
        m.label = format!("mode{:02}", i + 1);
    }
    ReferenceModeSet::new(modes).map_err(|e| CliError::Data(e.to_string()))
}

#[derive(Debug)]
pub struct TrackOutcome {
    pub reference_len: usize,
    pub tracked_sessions: usize,
    /// (mode label, success ratio in percent), frequency-ascending.
    pub ratios: Vec<(String, f64)>,
    pub outputs: Vec<PathBuf>,
}

/// Identify every session, then match each against the reference catalog
/// (an explicit document, or the first session when none is given).
pub fn cmd_track(cfg: &PipelineConfig, out_dir: &Path) -> CliResult<TrackOutcome> {
    let sessions = resolve_inputs(&cfg.input)?;
    if sessions.is_empty() {
        return Err(CliError::Data(
            "zero sessions match [input].paths; tracking needs input records".into(),
        ));
    }
    fs::create_dir_all(out_dir)?;

    let artifacts: CliResult<Vec<IdentifyArtifacts>> = sessions
        .par_iter()
        .map(|path| load_and_identify(path, cfg))
        .collect();
    let artifacts = artifacts?;

    let (reference, first_tracked) = if cfg.track.reference.is_empty() {
        if sessions.len() < 2 {
            return Err(CliError::Data(
                "tracking without [track].reference needs at least two sessions \
                 (the first becomes the reference)"
                    .into(),
            ));
        }
        let set = ReferenceModeSet::from_clusters(&artifacts[0].clusters)
            .map_err(|e| CliError::Numeric(format!("building reference from first session: {e}")))?;
        (set, 1usize)
    } else {
        (load_reference(Path::new(&cfg.track.reference))?, 0usize)
    };

    let mut history = TrackedHistory::new(&reference);
    let mut rows = String::from("session,label,matched,f,xi,mac\n");
    for (path, art) in sessions.iter().zip(&artifacts).skip(first_tracked) {
        let name = file_stem(path);
        let report = track_session(&reference, &art.clusters, cfg.track.df_max, cfg.track.macd_max);
        for (label, entry) in history.labels.iter().zip(&report.entries) {
            match entry {
                Some(e) => rows.push_str(&format!(
                    "{name},{label},1,{},{},{}\n",
                    e.f, e.xi, e.mac
                )),
                None => rows.push_str(&format!("{name},{label},0,,,\n")),
            }
        }
        history
            .push(name, report)
            .map_err(|e| CliError::Numeric(e.to_string()))?;
    }

    let ratios = success_ratio(&history).map_err(|e| CliError::Numeric(e.to_string()))?;
    let tracking_path = out_dir.join("tracking.csv");
    fs::write(&tracking_path, rows)?;

    let mut summary = String::from("label,sessions,matches,success_ratio_percent\n");
    let total = history.session_count();
    for (m, (label, ratio)) in history.labels.iter().zip(&ratios).enumerate() {
        let hits = history
            .sessions
            .iter()
            .filter(|(_, entries)| entries[m].is_some())
            .count();
        summary.push_str(&format!("{label},{total},{hits},{ratio}\n"));
    }
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, summary)?;
    write_manifest(out_dir, "track", cfg)?;

    Ok(TrackOutcome {
        reference_len: reference.len(),
        tracked_sessions: total,
        ratios: history
            .labels
            .iter()
            .cloned()
            .zip(ratios.iter().copied())
            .collect(),
        outputs: vec![tracking_path, summary_path],
    })
}

// ---------------------------------------------------------------------------
// bench

#[derive(Debug, Clone)]
pub struct BenchRow {
    pub side: usize,
    pub j_b: usize,
    pub rank_percent: f64,
    pub rank_k: usize,
    pub svd_seconds: f64,
    pub rsvd_seconds: f64,
    pub svd_peak_bytes: usize,
    pub rsvd_peak_bytes: usize,
}

/// Time and memory-profile both decomposers on correlation matrices of
/// the configured sizes. The randomized arm runs first (it borrows the
/// matrix); the dense arm then consumes it, which also keeps the peak
/// footprint of the largest sizes inside small-machine budgets.
pub fn run_bench(cfg: &PipelineConfig) -> CliResult<Vec<BenchRow>> {
    let be = &cfg.bench;
    let spec = shear_frame_spec(cfg, be.duration_s, be.snr_db, be.seed);
    let rec = simulate(&spec)?;
    let l = rec.channels();

    let mut rows = Vec::new();
    for &size in &be.sizes {
        let j_b = (size / l).max(1);
        let corrs = correlations(&rec, j_b)?;
        let toeplitz = assemble_toeplitz(&corrs);
        let side = toeplitz.side();
        let rank_percent = min_rank_percent(side);
        let rank_k = sample_count(rank_percent, side)?;

        memtrack::reset_peak();
        let base = memtrack::current_bytes();
        let t0 = Instant::now();
        let low = rsvd_oversampled(&toeplitz.data, rank_k, be.rsvd_seed, be.oversample)?;
        let rsvd_seconds = t0.elapsed().as_secs_f64();
        let rsvd_peak_bytes = memtrack::peak_bytes().saturating_sub(base);
        drop(low);

        memtrack::reset_peak();
        let base = memtrack::current_bytes();
        let t0 = Instant::now();
        let full = full_svd_into(toeplitz.data)?;
        let svd_seconds = t0.elapsed().as_secs_f64();
        let svd_peak_bytes = memtrack::peak_bytes().saturating_sub(base);
        drop(full);

        rows.push(BenchRow {
            side,
            j_b,
            rank_percent,
            rank_k,
            svd_seconds,
            rsvd_seconds,
            svd_peak_bytes,
            rsvd_peak_bytes,
        });
    }
    Ok(rows)
}

pub fn cmd_bench(cfg: &PipelineConfig, out_dir: &Path) -> CliResult<(Vec<BenchRow>, PathBuf)> {
    let rows = run_bench(cfg)?;
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from(
        "side,j_b,advisory_rank_percent,rank_k,svd_seconds,rsvd_seconds,speedup,\
         svd_peak_bytes,rsvd_peak_bytes\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.side,
            r.j_b,
            r.rank_percent,
            r.rank_k,
            r.svd_seconds,
            r.rsvd_seconds,
            r.svd_seconds / r.rsvd_seconds,
            r.svd_peak_bytes,
            r.rsvd_peak_bytes
        ));
    }
    let path = out_dir.join("bench.csv");
    fs::write(&path, csv)?;
    write_manifest(out_dir, "bench", cfg)?;
    Ok((rows, path))
}

// ---------------------------------------------------------------------------
// rankscan

#[derive(Debug, Clone)]
pub struct RankscanRow {
    pub j_b: usize,
    pub side: usize,
    pub snr_db: f64,
    pub fraction: f64,
    pub rank_percent: f64,
    pub rank_k: usize,
    /// Dense-baseline clusters anchored to an exact structural mode.
    pub svd_modes: usize,
    /// How many of those the randomized arm reproduced.
    pub matched: usize,
}

/// How close a dense-baseline cluster must sit to an exact mode to count
/// as "the baseline found this mode".
const ANCHOR_DF: f64 = 0.05;
const ANCHOR_MAC: f64 = 0.90;

/// Sweep sketch ranks over records and matrix sizes: identify with the
/// dense decomposer as the baseline, then with the randomized one at each
/// fraction of the advisory rank, counting reproduced baseline modes.
pub fn run_rankscan(cfg: &PipelineConfig) -> CliResult<Vec<RankscanRow>> {
    let rs = &cfg.rankscan;
    let truth = truth_modes(cfg)?;
    let max_j_b = *rs.j_b_sizes.iter().max().expect("validated nonempty");

    let mut rows = Vec::new();
    for &snr in &rs.snr_db {
        let spec = shear_frame_spec(cfg, rs.duration_s, snr, rs.record_seed);
        let rec = simulate(&spec)?;
        let rec = preprocess(rec, cfg)?;
        let f0 = omar_core::signal::estimate_f0(&rec)?;
        let corrs_full = correlations(&rec, max_j_b)?;

        for &j_b in &rs.j_b_sizes {
            let corrs = corrs_full.truncated(j_b)?;
            let toeplitz = assemble_toeplitz(&corrs);
            let side = toeplitz.side();

            let baseline = identify_from_toeplitz(
                &toeplitz,
                f0,
                omar_core::ssi::Decomposer::Svd,
                None,
                cfg,
            )?;
            let anchored: Vec<&ModeCluster> =
                anchor_to_truth(&baseline.clusters, &truth, ANCHOR_DF, ANCHOR_MAC)
                    .into_iter()
                    .flatten()
                    .map(|i| &baseline.clusters[i])
                    .collect();

            for &fraction in &rs.fractions {
                let rank_percent = fraction * min_rank_percent(side);
                let rank_k = sample_count(rank_percent, side)?;
                let arm = identify_from_toeplitz(
                    &toeplitz,
                    f0,
                    omar_core::ssi::Decomposer::Rsvd {
                        seed: rs.rsvd_seed,
                        oversample: rs.oversample,
                    },
                    Some(rank_percent),
                    cfg,
                )?;
                let matched = anchored
                    .iter()
                    .filter(|b| {
                        cluster_matches(b, &arm.clusters, rs.df_max, rs.dxi_max, rs.mac_min)
                    })
                    .count();
                rows.push(RankscanRow {
                    j_b,
                    side,
                    snr_db: snr,
                    fraction,
                    rank_percent,
                    rank_k,
                    svd_modes: anchored.len(),
                    matched,
                });
            }
        }
    }
    Ok(rows)
}

pub fn cmd_rankscan(cfg: &PipelineConfig, out_dir: &Path) -> CliResult<(Vec<RankscanRow>, PathBuf)> {
    let rows = run_rankscan(cfg)?;
    fs::create_dir_all(out_dir)?;
    let mut csv = String::from(
        "j_b,side,snr_db,fraction,rank_percent,rank_k,svd_modes_found,rsvd_modes_matched,all_matched\n",
    );
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.j_b,
            r.side,
            r.snr_db,
            r.fraction,
            r.rank_percent,
            r.rank_k,
            r.svd_modes,
            r.matched,
            u8::from(r.matched == r.svd_modes)
        ));
    }
    let path = out_dir.join("rankscan.csv");
    fs::write(&path, csv)?;
    write_manifest(out_dir, "rankscan", cfg)?;
    Ok((rows, path))
}
