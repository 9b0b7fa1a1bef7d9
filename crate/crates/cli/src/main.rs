use std::path::PathBuf;
use std::process;

use clap::{Parser, Subcommand};

use omar_cli::commands::{cmd_bench, cmd_identify, cmd_rankscan, cmd_synth, cmd_track};
use omar_cli::config::load_config;
use omar_cli::error::{CliError, CliResult};

/// Operational modal analysis from ambient vibration records:
/// covariance-driven subspace identification with randomized
/// decompositions, stabilization analysis, mode clustering, and
/// cross-session tracking.
#[derive(Parser)]
#[command(name = "omar", version, propagate_version = true)]
struct Cli {
    /// Configuration file: TOML, or a manifest.json from a previous run
    /// (which re-runs that run's exact configuration).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Worker threads for per-record parallelism (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// Override every random seed in the configuration (record synthesis,
    /// sketching, and fuzzy partition) with one value.
    #[arg(long, global = true, value_name = "SEED")]
    seed: Option<u64>,

    /// Output directory; overrides [output] dir.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate shear-frame ambient acceleration records, one per
    /// configured SNR, and write them with a run manifest.
    Synth,
    /// Identify modes in every input record: stabilization grid JSON,
    /// cluster JSON, and a plot-ready CSV per record.
    Identify,
    /// Identify each session record and track reference modes across the
    /// campaign (tracking.csv + summary.csv).
    Track,
    /// Time and memory-profile the dense and randomized decomposers on
    /// correlation matrices of configured sizes (bench.csv).
    Bench,
    /// Scan sketch ranks against the dense baseline across matrix sizes
    /// and noise levels (rankscan.csv).
    Rankscan,
}

fn run(cli: Cli) -> CliResult<()> {
    let mut cfg = load_config(cli.config.as_deref())?;
    if let Some(seed) = cli.seed {
        cfg.synth.seed = seed;
        cfg.identify.seed = seed;
        cfg.cluster.seed = seed;
        cfg.bench.seed = seed;
        cfg.rankscan.record_seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.display().to_string();
    }
    cfg.validate()?;

    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
            .map_err(|e| CliError::Config(format!("cannot size thread pool: {e}")))?;
    }

    let out_dir = PathBuf::from(&cfg.output.dir);
    match cli.command {
        Command::Synth => {
            let files = cmd_synth(&cfg, &out_dir)?;
            println!("synth: wrote {} record(s) to {}", files.len(), out_dir.display());
        }
        Command::Identify => {
            let files = cmd_identify(&cfg, &out_dir)?;
            println!(
                "identify: wrote {} file(s) to {}",
                files.len(),
                out_dir.display()
            );
        }
        Command::Track => {
            let outcome = cmd_track(&cfg, &out_dir)?;
            println!(
                "track: {} reference mode(s), {} session(s) tracked",
                outcome.reference_len, outcome.tracked_sessions
            );
            for (label, ratio) in &outcome.ratios {
                println!("  {label}: {ratio:.1}% of sessions");
            }
        }
        Command::Bench => {
            let (rows, path) = cmd_bench(&cfg, &out_dir)?;
            println!(
                "{:>6} {:>5} {:>6} {:>9} {:>9} {:>8} {:>10} {:>10}",
                "side", "j_b", "k", "svd_s", "rsvd_s", "speedup", "svd_MB", "rsvd_MB"
            );
            for r in &rows {
                println!(
                    "{:>6} {:>5} {:>6} {:>9.3} {:>9.3} {:>8.2} {:>10.1} {:>10.1}",
                    r.side,
                    r.j_b,
                    r.rank_k,
                    r.svd_seconds,
                    r.rsvd_seconds,
                    r.svd_seconds / r.rsvd_seconds,
                    r.svd_peak_bytes as f64 / 1.048_576e6,
                    r.rsvd_peak_bytes as f64 / 1.048_576e6,
                );
            }
            println!("bench: wrote {}", path.display());
        }
        Command::Rankscan => {
            let (rows, path) = cmd_rankscan(&cfg, &out_dir)?;
            for r in &rows {
                println!(
                    "j_b={} side={} snr={}dB fraction={:.2} k={}: matched {}/{}",
                    r.j_b, r.side, r.snr_db, r.fraction, r.rank_k, r.matched, r.svd_modes
                );
            }
            println!("rankscan: wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() {
    match run(Cli::parse()) {
        Ok(()) => {}
        Err(e) => {
            eprintln!("{e}");
            process::exit(e.exit_code());
        }
    }
}
