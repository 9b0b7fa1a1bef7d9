//! Shared orchestration: load → preprocess → identify → two-stage
//! clustering, producing everything a command (or a test harness) needs to
//! write its output documents.

use ndarray::Array2;

use omar_core::cluster::{
    default_min_cluster_size, feature_matrix, fuzzy_cmeans, hierarchical_cluster, pole_features,
    select_physical, ModeCluster,
};
use omar_core::randla::sample_count;
use omar_core::signal::{
    assemble_toeplitz, correlations, decimate, detrend, estimate_f0, BlockToeplitz,
    TimeSeriesRecord,
};
use omar_core::ssi::{
    lag_grid, sweep, sweep_3d, time_lag_step, Decomposer, LagPlan, OrderRange, Pole,
    StabilizationGrid,
};
use omar_core::stab::{apply_hard, flag_stable_2d, flag_stable_3d, mac, rel_f_dist, rel_xi_dist};
use omar_core::synth::ModeTruth;

use crate::config::PipelineConfig;
use crate::error::{CliError, CliResult};

/// Everything produced by identifying one record.
#[derive(Debug, Clone)]
pub struct IdentifyArtifacts {
    /// Fundamental-frequency estimate the lag rules used, Hz.
    pub f0: f64,
    /// The flagged stabilization grid (after hard gates and stability
    /// flagging; before the physical/spurious partition).
    pub grid: StabilizationGrid,
    /// Per-lag (lag step, decomposition rank actually used).
    pub ranks_used: Vec<(usize, usize)>,
    /// Sweep warnings (order truncations, skipped orders).
    pub warnings: Vec<String>,
    /// Stage-I fuzzy memberships, one row per stable pole (grid order).
    pub memberships: Array2<f64>,
    /// Stage-I centroids (2 × 5).
    pub centroids: Array2<f64>,
    /// Which of the two stage-I clusters was selected as physical.
    pub physical_cluster: usize,
    /// True when stage I found no certainly-unphysical population (both
    /// centroids near the origin) and therefore retained every pole.
    pub vacuous: bool,
    /// Indices into `grid.poles` of the poles the partition retained.
    pub retained: Vec<usize>,
    /// The extracted mode alignments, ordered by frequency.
    pub clusters: Vec<ModeCluster>,
}

/// Apply the configured preprocessing steps to a freshly loaded record.
pub fn preprocess(rec: TimeSeriesRecord, cfg: &PipelineConfig) -> CliResult<TimeSeriesRecord> {
    let mut rec = rec;
    if cfg.preprocess.detrend {
        rec = detrend(&rec);
    }
    let target = cfg.preprocess.target_fs;
    if target > 0.0 && target < rec.fs {
        rec = decimate(&rec, target)?;
    }
    Ok(rec)
}

fn decomposer_of(cfg: &PipelineConfig) -> Decomposer {
    match cfg.identify.decomposer.as_str() {
        "svd" => Decomposer::Svd,
        _ => Decomposer::Rsvd {
            seed: cfg.identify.seed,
            oversample: cfg.identify.oversample,
        },
    }
}

fn rank_override(cfg: &PipelineConfig) -> Option<f64> {
    (cfg.identify.rank_percent > 0.0).then_some(cfg.identify.rank_percent)
}

/// Enforce the documented invariant on explicit rank overrides: the
/// sketch must keep at least `order_max` directions at the smallest
/// matrix the sweep will decompose.
fn check_rank_override(cfg: &PipelineConfig, min_side: usize) -> CliResult<()> {
    if let Some(pct) = rank_override(cfg) {
        let k = sample_count(pct, min_side)?;
        if k < cfg.identify.order_max {
            return Err(CliError::Config(format!(
                "identify.rank_percent = {pct} keeps only {k} of {min_side} directions, \
                 below order_max = {}",
                cfg.identify.order_max
            )));
        }
    }
    Ok(())
}

/// Run the full single-record identification: order sweep (over one lag
/// or a lag grid), hard gates, stability flagging, fuzzy physical/spurious
/// partition, and hierarchical clustering into modes.
pub fn identify_record(
    rec: &TimeSeriesRecord,
    cfg: &PipelineConfig,
) -> CliResult<IdentifyArtifacts> {
    let id = &cfg.identify;
    let f0 = if id.f0 > 0.0 {
        id.f0
    } else {
        estimate_f0(rec)?
    };
    let orders = OrderRange::new(id.order_min, id.order_max, id.order_step)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let dec = decomposer_of(cfg);
    let three_d = id.lag_mode == "3d";
    let hc = cfg.hard_criteria();
    let sc = cfg.resolve_soft(three_d)?;

    let (grid, warnings, ranks_used) = if three_d {
        let plan = lag_grid(rec.fs, f0, id.beta, id.grid_count)?;
        check_rank_override(cfg, plan.j_b_values[0] * rec.channels())?;
        let corrs = correlations(rec, plan.max_j_b())?;
        let out = sweep_3d(&corrs, dec, rank_override(cfg), &orders, &plan)?;
        let (kept, _) = apply_hard(out.grid.poles, &hc);
        let grid = flag_stable_3d(
            StabilizationGrid {
                poles: kept,
                order_range: out.grid.order_range,
                lag_plan: out.grid.lag_plan,
                l: out.grid.l,
            },
            &sc,
        );
        (grid, out.warnings, out.ranks_used)
    } else {
        let j_b = if id.j_b > 0 {
            id.j_b
        } else {
            time_lag_step(rec.fs, f0)?
        };
        let plan = LagPlan::single(rec.fs, f0, j_b)?;
        let corrs = correlations(rec, j_b)?;
        let toeplitz = assemble_toeplitz(&corrs);
        check_rank_override(cfg, toeplitz.side())?;
        let out = sweep(&toeplitz, dec, rank_override(cfg), &orders)?;
        let (kept, _) = apply_hard(out.poles, &hc);
        let flagged = flag_stable_2d(kept, &sc);
        let grid = StabilizationGrid {
            poles: flagged,
            order_range: orders,
            lag_plan: plan,
            l: rec.channels(),
        };
        (grid, out.warnings, vec![(j_b, out.rank_used)])
    };

    cluster_grid(grid, warnings, ranks_used, f0, cfg)
}

/// Two-stage clustering of an already-flagged grid. Split out so callers
/// that build grids differently (rank scans, comparisons) reuse it.
pub fn cluster_grid(
    grid: StabilizationGrid,
    warnings: Vec<String>,
    ranks_used: Vec<(usize, usize)>,
    f0: f64,
    cfg: &PipelineConfig,
) -> CliResult<IdentifyArtifacts> {
    let features = pole_features(&grid);
    if features.len() < 2 {
        return Err(CliError::Numeric(format!(
            "only {} stable pole(s); cannot partition physical vs spurious",
            features.len()
        )));
    }
    let points = feature_matrix(&features);
    let cl = &cfg.cluster;
    let (memberships, centroids) =
        fuzzy_cmeans(&points, 2, cl.fuzzifier, cl.tol, cl.max_iter, cl.seed)
            .map_err(|e| CliError::Numeric(format!("stage-1 partition: {e}")))?;
    let selection = select_physical(&memberships, &centroids)
        .map_err(|e| CliError::Numeric(format!("stage-1 partition: {e}")))?;

    let retained: Vec<usize> = selection
        .retained
        .iter()
        .map(|&row| features[row].0)
        .collect();
    let pole_set: Vec<Pole> = retained.iter().map(|&i| grid.poles[i].clone()).collect();

    let min_size = if cl.min_size > 0 {
        cl.min_size
    } else {
        default_min_cluster_size(grid.order_range.count(), grid.lag_plan.j_b_values.len())
    };
    let clusters = hierarchical_cluster(pole_set, cl.cutoff, min_size)?;

    Ok(IdentifyArtifacts {
        f0,
        grid,
        ranks_used,
        warnings,
        memberships,
        centroids,
        physical_cluster: selection.cluster,
        vacuous: selection.vacuous,
        retained,
        clusters,
    })
}

/// Identify from an already-assembled correlation matrix (single lag)
/// with an explicit decomposer and optional rank override. Rank scans and
/// decomposer comparisons use this to reuse one correlation estimate.
pub fn identify_from_toeplitz(
    toeplitz: &BlockToeplitz,
    f0: f64,
    dec: Decomposer,
    rank_percent: Option<f64>,
    cfg: &PipelineConfig,
) -> CliResult<IdentifyArtifacts> {
    let id = &cfg.identify;
    let orders = OrderRange::new(id.order_min, id.order_max, id.order_step)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let out = sweep(toeplitz, dec, rank_percent, &orders)?;
    let (kept, _) = apply_hard(out.poles, &cfg.hard_criteria());
    let flagged = flag_stable_2d(kept, &cfg.resolve_soft(false)?);
    let plan = LagPlan::single(toeplitz.fs, f0, toeplitz.j_b)?;
    let grid = StabilizationGrid {
        poles: flagged,
        order_range: orders,
        lag_plan: plan,
        l: toeplitz.l,
    };
    cluster_grid(grid, out.warnings, vec![(toeplitz.j_b, out.rank_used)], f0, cfg)
}

/// For each exact structural mode, the best-matching cluster — one-to-one,
/// highest MAC first — within a relative frequency window.
pub fn anchor_to_truth(
    clusters: &[ModeCluster],
    truth: &[ModeTruth],
    df_max: f64,
    mac_min: f64,
) -> Vec<Option<usize>> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (t, tm) in truth.iter().enumerate() {
        for (c, cl) in clusters.iter().enumerate() {
            if rel_f_dist(cl.f, tm.f) > df_max {
                continue;
            }
            let Ok(m) = mac(&cl.shape.view(), &tm.shape.view()) else {
                continue;
            };
            if m >= mac_min {
                pairs.push((m, t, c));
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap()
            .then(a.1.cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let mut out = vec![None; truth.len()];
    let mut used = vec![false; clusters.len()];
    for (_, t, c) in pairs {
        if out[t].is_none() && !used[c] {
            out[t] = Some(c);
            used[c] = true;
        }
    }
    out
}

/// Whether some cluster in `list` reproduces `target` within the given
/// frequency, damping, and shape tolerances.
pub fn cluster_matches(
    target: &ModeCluster,
    list: &[ModeCluster],
    df_max: f64,
    dxi_max: f64,
    mac_min: f64,
) -> bool {
    list.iter().any(|c| {
        rel_f_dist(c.f, target.f) <= df_max
            && rel_xi_dist(c.xi, target.xi) <= dxi_max
            && mac(&c.shape.view(), &target.shape.view()).is_ok_and(|m| m >= mac_min)
    })
}
