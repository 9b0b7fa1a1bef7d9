//! Pipeline configuration: one TOML document drives every subcommand.
//!
//! Every field has an embedded default, so an empty file (or no `--config`
//! at all) is a complete, runnable configuration. Numeric fields use `0` as
//! the documented "derive it from the data / use the built-in rule"
//! sentinel where a rule exists; the schema comments below spell out each
//! case.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use omar_core::signal::RecordFormat;
use omar_core::ssi::OrderRange;
use omar_core::stab::{HardCriteria, SoftCriteria};

use crate::error::{CliError, CliResult};

/// Which records to read and how they are encoded.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    /// Paths or glob patterns; matches are deduplicated and sorted.
    pub paths: Vec<String>,
    /// `binary` (packed little-endian, the synth default) or `csv`.
    pub format: String,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            paths: Vec::new(),
            format: "binary".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    /// Remove the per-channel linear trend before anything else.
    pub detrend: bool,
    /// Decimate to this rate when positive and below the native rate;
    /// 0 keeps the native rate.
    pub target_fs: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            detrend: true,
            target_fs: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct IdentifyConfig {
    /// Fundamental frequency in Hz; 0 estimates it from the record's
    /// spectral peak.
    pub f0: f64,
    /// Model-order sweep: even orders `order_min..=order_max` in steps of
    /// `order_step`.
    pub order_min: usize,
    pub order_max: usize,
    pub order_step: usize,
    /// `svd` (dense) or `rsvd` (randomized sketch).
    pub decomposer: String,
    /// Sketch seed for the randomized decomposer.
    pub seed: u64,
    /// Sketch rank as a percentage of the matrix side; 0 applies the
    /// built-in size-dependent rule. When set explicitly, the resulting
    /// rank must reach `order_max`.
    pub rank_percent: f64,
    /// Extra sketch columns beyond the target rank.
    pub oversample: usize,
    /// `fixed` (one lag step, classical diagram) or `3d` (a grid of lag
    /// steps as a third stabilization axis).
    pub lag_mode: String,
    /// Lag step for `fixed` mode; 0 derives it from fs and f0.
    pub j_b: usize,
    /// Lag-grid span multiplier for `3d` mode (j_max = beta · j_min).
    pub beta: f64,
    /// Number of lag-grid points for `3d` mode.
    pub grid_count: usize,
}

impl Default for IdentifyConfig {
    fn default() -> Self {
        Self {
            f0: 0.0,
            order_min: 2,
            order_max: 30,
            order_step: 2,
            decomposer: "rsvd".into(),
            seed: 7,
            rank_percent: 0.0,
            oversample: 10,
            lag_mode: "fixed".into(),
            j_b: 0,
            beta: 1.5,
            grid_count: 5,
        }
    }
}

/// Absolute validity gates applied to every pole before stabilization.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HardConfig {
    pub xi_max: f64,
    pub mpc_min: f64,
    pub mpd_max: f64,
}

impl Default for HardConfig {
    fn default() -> Self {
        let hc = HardCriteria::default();
        Self {
            xi_max: hc.xi_max,
            mpc_min: hc.mpc_min,
            mpd_max: hc.mpd_max,
        }
    }
}

/// Neighbor-agreement tolerances for stability flags. 0 picks the
/// lag-mode default (fixed: 2% / 2% / 5%; 3d: 1% / 3% / 2%).
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SoftConfig {
    pub alpha_f: f64,
    pub alpha_xi: f64,
    pub alpha_mac: f64,
}

impl Default for SoftConfig {
    fn default() -> Self {
        Self {
            alpha_f: 0.0,
            alpha_xi: 0.0,
            alpha_mac: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterConfig {
    /// Dendrogram cut distance (relative-f + relative-ξ + (1 − MAC)).
    pub cutoff: f64,
    /// Minimum members per retained mode alignment; 0 applies the rule
    /// 20% of (order steps × lag steps).
    pub min_size: usize,
    /// Fuzzy C-means fuzzifier m (> 1).
    pub fuzzifier: f64,
    /// Fuzzy C-means centroid-movement convergence tolerance.
    pub tol: f64,
    /// Fuzzy C-means iteration cap.
    pub max_iter: usize,
    /// Fuzzy C-means initialization seed.
    pub seed: u64,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            cutoff: 0.10,
            min_size: 0,
            fuzzifier: 2.0,
            tol: 1e-6,
            max_iter: 300,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct TrackConfig {
    /// Maximum relative frequency distance for a candidate match.
    pub df_max: f64,
    /// Maximum (1 − MAC) for a candidate match.
    pub macd_max: f64,
    /// Path to a clusters JSON to use as the reference catalog; empty
    /// promotes the first session (path-sorted) to reference and tracks
    /// the rest against it.
    pub reference: String,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            df_max: 0.05,
            macd_max: 0.15,
            reference: String::new(),
        }
    }
}

/// Shear-frame synthesis: one record per `snr_db` entry, all sharing the
/// same seed so they differ only in measurement-noise amplitude.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub stories: usize,
    pub story_mass: f64,
    pub story_stiffness: f64,
    pub xi_target: f64,
    pub rayleigh_modes: (usize, usize),
    pub fs: f64,
    pub duration_s: f64,
    pub snr_db: Vec<f64>,
    pub seed: u64,
    pub process_noise_std: f64,
    /// Output encoding: `binary` or `csv`.
    pub format: String,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            stories: 10,
            story_mass: 100.0,
            story_stiffness: 5e6,
            xi_target: 0.01,
            rayleigh_modes: (1, 4),
            fs: 200.0,
            duration_s: 300.0,
            snr_db: vec![10.0, 15.0, 20.0, 25.0],
            seed: 1,
            process_noise_std: 1.0,
            format: "binary".into(),
        }
    }
}

/// Decomposition benchmark: one synthetic record, one correlation matrix
/// per requested side, both decomposers timed and memory-profiled on it.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Target matrix sides T; the lag step is T / channel-count, so the
    /// realized side is the nearest multiple of the channel count.
    pub sizes: Vec<usize>,
    pub duration_s: f64,
    pub snr_db: f64,
    pub seed: u64,
    /// Sketch seed for the randomized arm.
    pub rsvd_seed: u64,
    pub oversample: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            sizes: vec![1000, 2000, 4000],
            duration_s: 60.0,
            snr_db: 20.0,
            seed: 1,
            rsvd_seed: 7,
            oversample: 10,
        }
    }
}

/// Sketch-rank sweep: identify with the dense decomposer, then with the
/// randomized one at several fractions of the advisory rank, and count
/// how many dense-baseline modes each fraction reproduces.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct RankscanConfig {
    /// Lag steps to test; each gives a Toeplitz side of j_b × channels.
    pub j_b_sizes: Vec<usize>,
    pub snr_db: Vec<f64>,
    /// Fractions of the advisory rank percentage to sweep.
    pub fractions: Vec<f64>,
    pub duration_s: f64,
    /// Seed of the synthesized records.
    pub record_seed: u64,
    /// Sketch seed for the randomized arm.
    pub rsvd_seed: u64,
    pub oversample: usize,
    /// Match tolerances against the dense baseline.
    pub df_max: f64,
    pub dxi_max: f64,
    pub mac_min: f64,
}

impl Default for RankscanConfig {
    fn default() -> Self {
        Self {
            j_b_sizes: vec![100, 189, 200, 250],
            snr_db: vec![20.0, 25.0],
            fractions: vec![1.0, 0.6],
            duration_s: 300.0,
            record_seed: 11,
            rsvd_seed: 7,
            oversample: 10,
            df_max: 0.01,
            dxi_max: 0.01,
            mac_min: 0.98,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: String,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

/// The complete pipeline configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub input: InputConfig,
    pub preprocess: PreprocessConfig,
    pub identify: IdentifyConfig,
    pub hard: HardConfig,
    pub soft: SoftConfig,
    pub cluster: ClusterConfig,
    pub track: TrackConfig,
    pub synth: SynthConfig,
    pub bench: BenchConfig,
    pub rankscan: RankscanConfig,
    pub output: OutputConfig,
}

fn cfg_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

fn require_finite(name: &str, v: f64) -> CliResult<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(format!("{name} must be finite, got {v}")))
    }
}

pub fn parse_record_format(s: &str) -> CliResult<RecordFormat> {
    match s {
        "binary" => Ok(RecordFormat::Binary),
        "csv" => Ok(RecordFormat::Csv),
        other => Err(cfg_err(format!(
            "unknown record format {other:?}; expected \"binary\" or \"csv\""
        ))),
    }
}

impl PipelineConfig {
    /// Parse a TOML document, falling back to defaults for absent keys.
    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| cfg_err(format!("bad config: {e}")))
    }

    /// Canonical serialization used for hashing and for embedding in the
    /// reproducibility manifest.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Check every cross-field rule that does not need the data. Returns
    /// the config itself so loading chains into validation.
    pub fn validate(&self) -> CliResult<()> {
        parse_record_format(&self.input.format)?;

        require_finite("preprocess.target_fs", self.preprocess.target_fs)?;
        if self.preprocess.target_fs < 0.0 {
            return Err(cfg_err("preprocess.target_fs must be ≥ 0"));
        }

        let id = &self.identify;
        require_finite("identify.f0", id.f0)?;
        if id.f0 < 0.0 {
            return Err(cfg_err("identify.f0 must be ≥ 0 (0 = estimate)"));
        }
        OrderRange::new(id.order_min, id.order_max, id.order_step)
            .map_err(|e| cfg_err(e.to_string()))?;
        match id.decomposer.as_str() {
            "svd" | "rsvd" => {}
            other => {
                return Err(cfg_err(format!(
                    "unknown decomposer {other:?}; expected \"svd\" or \"rsvd\""
                )))
            }
        }
        require_finite("identify.rank_percent", id.rank_percent)?;
        if !(0.0..=100.0).contains(&id.rank_percent) {
            return Err(cfg_err("identify.rank_percent must lie in [0, 100]"));
        }
        match id.lag_mode.as_str() {
            "fixed" => {}
            "3d" => {
                require_finite("identify.beta", id.beta)?;
                if !(id.beta > 1.0) {
                    return Err(cfg_err("identify.beta must exceed 1 in 3d lag mode"));
                }
                if id.grid_count < 2 {
                    return Err(cfg_err("identify.grid_count must be ≥ 2 in 3d lag mode"));
                }
            }
            other => {
                return Err(cfg_err(format!(
                    "unknown lag mode {other:?}; expected \"fixed\" or \"3d\""
                )))
            }
        }

        HardCriteria::new(self.hard.xi_max, self.hard.mpc_min, self.hard.mpd_max)
            .map_err(|e| cfg_err(e.to_string()))?;
        self.resolve_soft(id.lag_mode == "3d")?;

        let cl = &self.cluster;
        require_finite("cluster.cutoff", cl.cutoff)?;
        if !(cl.cutoff > 0.0) {
            return Err(cfg_err("cluster.cutoff must be positive"));
        }
        if !(cl.fuzzifier > 1.0) {
            return Err(cfg_err("cluster.fuzzifier must exceed 1"));
        }
        if !(cl.tol > 0.0) || cl.max_iter < 1 {
            return Err(cfg_err("cluster.tol must be positive and max_iter ≥ 1"));
        }

        let tr = &self.track;
        if !(tr.df_max > 0.0 && tr.df_max.is_finite()) {
            return Err(cfg_err("track.df_max must be positive"));
        }
        if !(tr.macd_max > 0.0 && tr.macd_max <= 1.0) {
            return Err(cfg_err("track.macd_max must lie in (0, 1]"));
        }

        let sy = &self.synth;
        parse_record_format(&sy.format)?;
        if sy.stories < 1 {
            return Err(cfg_err("synth.stories must be ≥ 1"));
        }
        if !(sy.duration_s > 0.0) {
            return Err(cfg_err("synth.duration_s must be positive"));
        }
        if !(sy.fs > 0.0) {
            return Err(cfg_err("synth.fs must be positive"));
        }
        if sy.snr_db.is_empty() {
            return Err(cfg_err("synth.snr_db needs at least one entry"));
        }

        let be = &self.bench;
        if be.sizes.is_empty() {
            return Err(cfg_err("bench.sizes needs at least one entry"));
        }
        if !(be.duration_s > 0.0) {
            return Err(cfg_err("bench.duration_s must be positive"));
        }

        let rs = &self.rankscan;
        if rs.j_b_sizes.is_empty() || rs.snr_db.is_empty() || rs.fractions.is_empty() {
            return Err(cfg_err(
                "rankscan.j_b_sizes, snr_db, and fractions all need at least one entry",
            ));
        }
        if rs.fractions.iter().any(|&f| !(f > 0.0 && f.is_finite())) {
            return Err(cfg_err("rankscan.fractions must all be positive"));
        }
        if !(rs.duration_s > 0.0) {
            return Err(cfg_err("rankscan.duration_s must be positive"));
        }
        if !(rs.df_max > 0.0 && rs.dxi_max > 0.0 && (0.0..=1.0).contains(&rs.mac_min)) {
            return Err(cfg_err(
                "rankscan tolerances must be positive with mac_min in [0, 1]",
            ));
        }

        if self.output.dir.is_empty() {
            return Err(cfg_err("output.dir must not be empty"));
        }
        Ok(())
    }

    /// The soft criteria with 0-valued fields replaced by the lag-mode
    /// defaults.
    pub fn resolve_soft(&self, three_d: bool) -> CliResult<SoftCriteria> {
        let base = if three_d {
            SoftCriteria::default_3d()
        } else {
            SoftCriteria::default_2d()
        };
        let pick = |name: &str, v: f64, dflt: f64| -> CliResult<f64> {
            require_finite(name, v)?;
            if v < 0.0 {
                return Err(cfg_err(format!("{name} must be ≥ 0 (0 = default)")));
            }
            Ok(if v > 0.0 { v } else { dflt })
        };
        let f = pick("soft.alpha_f", self.soft.alpha_f, base.alpha_f)?;
        let xi = pick("soft.alpha_xi", self.soft.alpha_xi, base.alpha_xi)?;
        let mac = pick("soft.alpha_mac", self.soft.alpha_mac, base.alpha_mac)?;
        SoftCriteria::new(f, xi, mac).map_err(|e| cfg_err(e.to_string()))
    }

    pub fn hard_criteria(&self) -> HardCriteria {
        // validate() already proved these in range.
        HardCriteria::new(self.hard.xi_max, self.hard.mpc_min, self.hard.mpd_max)
            .expect("validated hard criteria")
    }
}

/// Load a configuration: `None` gives the embedded defaults; a `.json`
/// path is read as a reproducibility manifest with the config extracted
/// from it; anything else parses as TOML. The result is validated.
pub fn load_config(path: Option<&Path>) -> CliResult<PipelineConfig> {
    let cfg = match path {
        None => PipelineConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .map_err(|e| CliError::Data(format!("cannot read {}: {e}", p.display())))?;
            if p.extension().is_some_and(|e| e == "json") {
                let manifest: serde_json::Value = serde_json::from_str(&text)
                    .map_err(|e| cfg_err(format!("bad manifest {}: {e}", p.display())))?;
                let embedded = manifest
                    .get("config_toml")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| {
                        cfg_err(format!(
                            "{} has no config_toml field; not a manifest",
                            p.display()
                        ))
                    })?;
                PipelineConfig::from_toml(embedded)?
            } else {
                PipelineConfig::from_toml(&text)?
            }
        }
    };
    cfg.validate()?;
    Ok(cfg)
}
