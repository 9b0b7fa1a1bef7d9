//! Covariance-driven stochastic subspace identification.
//!
//! From a truncated SVD of the block-Toeplitz correlation matrix the
//! observability matrix is formed, the discrete state matrix is recovered
//! from its shift structure, and each eigenpair is converted to a modal
//! pole (frequency, damping ratio, shape). Sweeping the model order builds
//! a classical stabilization diagram; sweeping the correlation time lag as
//! well builds a three-dimensional one.

use ndarray::{s, Array1};
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::json;

use crate::error::{Error, Result};
use crate::linalg::{eig_general, lstsq_svd, normalize_shape};
use crate::randla::{self, LowRankSvd};
use crate::signal::{assemble_toeplitz, BlockToeplitz, CorrelationSequence};
use crate::stab;

/// Relative singular-value cutoff below which the available model order is
/// considered exhausted.
const SV_UNDERFLOW: f64 = 1e-12;
/// Relative cutoff for the pseudo-inverse inside the shift solve.
const PINV_RCOND: f64 = 1e-10;
/// Per-lag seed decorrelation stride (golden-ratio multiplier).
const SEED_STRIDE: u64 = 0x9E3779B97F4A7C15;

/// Which factorization of the Toeplitz matrix drives the identification.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decomposer {
    /// Dense deterministic SVD (the classical path).
    Svd,
    /// Randomized SVD with the given sketch seed and extra sketch columns.
    Rsvd { seed: u64, oversample: usize },
}

/// Even model orders `min..=max` in steps of `step`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OrderRange {
    pub min: usize,
    pub max: usize,
    pub step: usize,
}

impl OrderRange {
    pub fn new(min: usize, max: usize, step: usize) -> Result<Self> {
        if min < 2 || min % 2 != 0 || max % 2 != 0 || step < 2 || step % 2 != 0 {
            return Err(Error::InvalidArg(format!(
                "order range [{min}, {max}, {step}] must be even with min ≥ 2 and step ≥ 2"
            )));
        }
        if max < min {
            return Err(Error::InvalidArg(format!(
                "order range max {max} below min {min}"
            )));
        }
        Ok(Self { min, max, step })
    }

    pub fn orders(&self) -> impl Iterator<Item = usize> + '_ {
        (self.min..=self.max).step_by(self.step)
    }

    pub fn count(&self) -> usize {
        (self.max - self.min) / self.step + 1
    }
}

/// The time-lag axis of a three-dimensional stabilization analysis.
#[derive(Debug, Clone)]
pub struct LagPlan {
    pub fs: f64,
    /// Fundamental-frequency estimate the lag rule was evaluated at, Hz.
    pub f0: f64,
    /// Lag steps j_b, strictly increasing.
    pub j_b_values: Vec<usize>,
    /// τ = (2·j_b − 1)/fs for each entry, seconds.
    pub taus: Vec<f64>,
    pub beta: f64,
    /// Effective number of grid points (after rounding collisions).
    pub grid_count: usize,
}

impl LagPlan {
    /// A single-lag plan: the degenerate case that reduces the 3D analysis
    /// to a classical stabilization diagram.
    pub fn single(fs: f64, f0: f64, j_b: usize) -> Result<Self> {
        if j_b < 1 {
            return Err(Error::InvalidArg("lag step must be ≥ 1".into()));
        }
        Ok(Self {
            fs,
            f0,
            j_b_values: vec![j_b],
            taus: vec![lag_of_step(j_b, fs)],
            beta: 1.0,
            grid_count: 1,
        })
    }

    pub fn max_j_b(&self) -> usize {
        *self.j_b_values.last().unwrap()
    }
}

/// Base lag-step rule: j_b = ceil(10·fs / (2·f0)), i.e. ten periods of the
/// fundamental mode expressed in half-samples.
pub fn time_lag_step(fs: f64, f0: f64) -> Result<usize> {
    if !(f0 > 0.0) || !(fs > 2.0 * f0) {
        return Err(Error::InvalidArg(format!(
            "need fs > 2·f0 > 0, got fs = {fs}, f0 = {f0}"
        )));
    }
    Ok((10.0 * fs / (2.0 * f0)).ceil() as usize)
}

/// Maximum correlation lag in seconds for a given lag step: (2·j_b − 1)/fs.
pub fn lag_of_step(j_b: usize, fs: f64) -> f64 {
    (2.0 * j_b as f64 - 1.0) / fs
}

/// Build the lag axis: j_min = ceil(9·fs/(2·f0)), j_max = round(β·j_min),
/// `grid_count` evenly spaced integer steps between them (deduplicated).
pub fn lag_grid(fs: f64, f0: f64, beta: f64, grid_count: usize) -> Result<LagPlan> {
    if !(beta > 1.0) {
        return Err(Error::InvalidArg("beta must exceed 1".into()));
    }
    if grid_count < 2 {
        return Err(Error::InvalidArg("grid_count must be at least 2".into()));
    }
    if !(f0 > 0.0) || !(fs > 2.0 * f0) {
        return Err(Error::InvalidArg(format!(
            "need fs > 2·f0 > 0, got fs = {fs}, f0 = {f0}"
        )));
    }
    let j_min = (9.0 * fs / (2.0 * f0)).ceil() as usize;
    let j_max = (beta * j_min as f64).round() as usize;
    if j_max <= j_min {
        return Err(Error::InvalidArg(format!(
            "degenerate lag range: j_max = {j_max} ≤ j_min = {j_min}"
        )));
    }
    let mut j_b_values = Vec::with_capacity(grid_count);
    for i in 0..grid_count {
        let x = j_min as f64
            + (j_max - j_min) as f64 * i as f64 / (grid_count as f64 - 1.0);
        let v = x.round() as usize;
        if j_b_values.last() != Some(&v) {
            j_b_values.push(v);
        }
    }
    let taus: Vec<f64> = j_b_values.iter().map(|&j| lag_of_step(j, fs)).collect();
    let grid_count = j_b_values.len();
    Ok(LagPlan {
        fs,
        f0,
        j_b_values,
        taus,
        beta,
        grid_count,
    })
}

/// How a pole fared in the stabilization analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StabilityFlag {
    New,
    Stable,
    Rejected,
}

impl StabilityFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            StabilityFlag::New => "new",
            StabilityFlag::Stable => "stable",
            StabilityFlag::Rejected => "rejected",
        }
    }
}

/// Distances to the best-matching neighbor found during stability
/// flagging; feeds the clustering feature vector.
#[derive(Debug, Clone, Copy)]
pub struct NeighborLink {
    pub d_f: f64,
    pub d_xi: f64,
    pub mac: f64,
}

/// One physical-candidate pole: the positive-imaginary eigenvalue of a
/// conjugate pair, converted to modal parameters.
#[derive(Debug, Clone)]
pub struct Pole {
    /// Natural frequency, Hz.
    pub f: f64,
    /// Damping ratio in (0, 1).
    pub xi: f64,
    /// Mode shape (unit norm, canonical rotation), length = channel count.
    pub shape: Array1<Complex64>,
    /// Model order the pole was identified at.
    pub order: usize,
    /// Lag step of the Toeplitz matrix it came from.
    pub j_b: usize,
    pub mpc: f64,
    pub mpd: f64,
    pub stability_flag: StabilityFlag,
    /// Best-matching neighbor from stability flagging, if one was sought.
    pub neighbor: Option<NeighborLink>,
}

/// Result of identification at a single model order.
#[derive(Debug, Clone)]
pub struct Identified {
    pub poles: Vec<Pole>,
    /// Order actually used; lower than requested when trailing singular
    /// values underflow.
    pub effective_order: usize,
}

/// Recover modal poles at model order `n2` from a Toeplitz factorization.
///
/// The observability matrix is O = U₁·S₁^{1/2} over the leading `n2`
/// singular triplets; the output matrix C is its first `l` rows; the state
/// matrix solves the one-block-shift least squares between the first and
/// last l·(j_b−1) rows of O. Eigenvalues μ with positive imaginary part
/// are mapped through λ = ln(μ)/dt to f = |λ|/2π and ξ = −Re(λ)/|λ|;
/// poles outside (0, Nyquist) or with ξ outside (0, 1) are dropped, as are
/// poles whose shape has degenerate phase geometry.
pub fn identify(
    svd: &LowRankSvd,
    n2: usize,
    dt: f64,
    l: usize,
    j_b: usize,
) -> Result<Identified> {
    if n2 < 2 || n2 % 2 != 0 {
        return Err(Error::InvalidArg(format!("model order {n2} must be even and ≥ 2")));
    }
    if n2 > svd.rank_k {
        return Err(Error::InvalidArg(format!(
            "model order {n2} exceeds decomposition rank {}",
            svd.rank_k
        )));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArg("sample interval must be positive".into()));
    }
    if l < 1 || j_b < 2 || svd.u.nrows() != j_b * l {
        return Err(Error::InvalidArg(format!(
            "factor rows {} incompatible with j_b = {j_b}, l = {l}",
            svd.u.nrows()
        )));
    }

    // Truncate the order where singular values underflow.
    let s0 = svd.s[0];
    let avail = svd.s.iter().take(n2).filter(|&&x| x > SV_UNDERFLOW * s0).count();
    let eff = avail - avail % 2;
    if eff < 2 {
        return Err(Error::Numeric(
            "all singular values underflow at this order".into(),
        ));
    }

    // O = U₁ S₁^{1/2}.
    let sqrt_s = svd.s.slice(s![..eff]).mapv(f64::sqrt);
    let obs = &svd.u.slice(s![.., ..eff]) * &sqrt_s; // broadcast over columns
    let c_out = obs.slice(s![..l, ..]).to_owned();

    // Shift solve: O^top · A = O^bot in the least-squares sense.
    let rows = l * (j_b - 1);
    let top = obs.slice(s![..rows, ..]).to_owned();
    let bot = obs.slice(s![l.., ..]).to_owned();
    let a = lstsq_svd(&top, &bot, PINV_RCOND)?;

    let (mu, psi) = eig_general(&a)?;
    let c_complex = c_out.mapv(|x| Complex64::new(x, 0.0));
    let phi = c_complex.dot(&psi); // l × eff, column per eigenvalue

    let nyquist = 0.5 / dt;
    let mut poles = Vec::new();
    for (idx, m) in mu.iter().enumerate() {
        if m.im <= 0.0 {
            continue;
        }
        let lam = m.ln() / dt;
        let mag = lam.norm();
        if mag == 0.0 {
            continue;
        }
        let f = mag / (2.0 * std::f64::consts::PI);
        let xi = -lam.re / mag;
        if !(f > 0.0 && f < nyquist) || !(xi > 0.0 && xi < 1.0) {
            continue;
        }
        let shape = match normalize_shape(phi.column(idx).to_owned()) {
            Ok(s) => s,
            Err(_) => continue,
        };
        // Degenerate phase geometry (constant shape, zero vector) marks a
        // numerical artifact, not a structural mode.
        let (mpc, mpd) = match (stab::mpc(&shape.view()), stab::mpd(&shape.view())) {
            (Ok(a), Ok(b)) => (a, b),
            _ => continue,
        };
        poles.push(Pole {
            f,
            xi,
            shape,
            order: eff,
            j_b,
            mpc,
            mpd,
            stability_flag: StabilityFlag::New,
            neighbor: None,
        });
    }
    poles.sort_by(|a, b| (a.f, a.xi).partial_cmp(&(b.f, b.xi)).unwrap());
    Ok(Identified {
        poles,
        effective_order: eff,
    })
}

/// Poles collected over a full model-order sweep at one lag, plus
/// human-readable diagnostics (order truncations and the like).
#[derive(Debug, Clone)]
pub struct SweepOutcome {
    pub poles: Vec<Pole>,
    pub warnings: Vec<String>,
    /// Rank actually used by the decomposition.
    pub rank_used: usize,
}

/// Decompose one Toeplitz matrix and identify across the order range. The
/// factorization is computed once and reused for every order.
///
/// For the randomized path the sketch rank defaults to the advisory rule
/// (`rank_percent = None`) and is floored at the maximum model order.
pub fn sweep(
    toeplitz: &BlockToeplitz,
    decomposer: Decomposer,
    rank_percent: Option<f64>,
    orders: &OrderRange,
) -> Result<SweepOutcome> {
    let t_side = toeplitz.side();
    if orders.max > t_side {
        return Err(Error::InvalidArg(format!(
            "maximum order {} exceeds Toeplitz side {t_side}",
            orders.max
        )));
    }
    let svd = match decomposer {
        Decomposer::Svd => randla::full_svd(&toeplitz.data)?,
        Decomposer::Rsvd { seed, oversample } => {
            let pct = rank_percent.unwrap_or_else(|| randla::min_rank_percent(t_side));
            let k = randla::sample_count(pct, t_side)?
                .max(orders.max)
                .min(t_side);
            randla::rsvd_oversampled(&toeplitz.data, k, seed, oversample)?
        }
    };
    let dt = 1.0 / toeplitz.fs;

    let mut poles = Vec::new();
    let mut warnings = Vec::new();
    for n2 in orders.orders() {
        match identify(&svd, n2, dt, toeplitz.l, toeplitz.j_b) {
            Ok(mut ident) => {
                if ident.effective_order < n2 {
                    warnings.push(format!(
                        "lag {}: order {} truncated to {} (singular values underflow)",
                        toeplitz.j_b, n2, ident.effective_order
                    ));
                }
                poles.append(&mut ident.poles);
            }
            Err(Error::Numeric(msg)) => {
                warnings.push(format!("lag {}: order {} skipped: {msg}", toeplitz.j_b, n2));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(SweepOutcome {
        poles,
        warnings,
        rank_used: svd.rank_k,
    })
}

/// A stabilization analysis over model order and (optionally) time lag.
#[derive(Debug, Clone)]
pub struct StabilizationGrid {
    /// All poles; each knows its (j_b, order) cell.
    pub poles: Vec<Pole>,
    pub order_range: OrderRange,
    pub lag_plan: LagPlan,
    /// Channel count.
    pub l: usize,
}

impl StabilizationGrid {
    /// Poles identified at a given lag step.
    pub fn at_lag(&self, j_b: usize) -> impl Iterator<Item = &Pole> {
        self.poles.iter().filter(move |p| p.j_b == j_b)
    }
}

/// Outcome of a full (order × lag) sweep.
#[derive(Debug, Clone)]
pub struct Sweep3dOutcome {
    pub grid: StabilizationGrid,
    pub warnings: Vec<String>,
    /// (j_b, rank) actually used per lag slice.
    pub ranks_used: Vec<(usize, usize)>,
}

/// Sweep model orders at every lag of the plan. One Toeplitz assembly,
/// decomposition, and order sweep per lag; for the randomized path each
/// lag derives its own sketch seed so slices stay statistically
/// independent yet reproducible. Lag slices run in parallel; results are
/// merged in plan order so parallel and serial runs agree bit-for-bit.
pub fn sweep_3d(
    corrs: &CorrelationSequence,
    decomposer: Decomposer,
    rank_percent: Option<f64>,
    orders: &OrderRange,
    plan: &LagPlan,
) -> Result<Sweep3dOutcome> {
    if plan.j_b_values.is_empty() {
        return Err(Error::InvalidArg("empty lag plan".into()));
    }
    if plan.max_j_b() > corrs.j_b {
        return Err(Error::InvalidArg(format!(
            "lag plan needs j_b ≤ {} but correlations stop at {}",
            plan.max_j_b(),
            corrs.j_b
        )));
    }
    if (plan.fs - corrs.fs).abs() > 1e-9 * corrs.fs {
        return Err(Error::InvalidArg(
            "lag plan and correlations disagree on fs".into(),
        ));
    }

    let slices: Result<Vec<(usize, SweepOutcome)>> = plan
        .j_b_values
        .par_iter()
        .enumerate()
        .map(|(i, &j_b)| {
            let sub = corrs.truncated(j_b)?;
            let toeplitz = assemble_toeplitz(&sub);
            let dec = match decomposer {
                Decomposer::Svd => Decomposer::Svd,
                Decomposer::Rsvd { seed, oversample } => Decomposer::Rsvd {
                    seed: seed ^ (i as u64 + 1).wrapping_mul(SEED_STRIDE),
                    oversample,
                },
            };
            let out = sweep(&toeplitz, dec, rank_percent, orders)?;
            Ok((j_b, out))
        })
        .collect();
    let slices = slices?;

    let mut poles = Vec::new();
    let mut warnings = Vec::new();
    let mut ranks_used = Vec::new();
    for (j_b, mut out) in slices {
        poles.append(&mut out.poles);
        warnings.append(&mut out.warnings);
        ranks_used.push((j_b, out.rank_used));
    }
    Ok(Sweep3dOutcome {
        grid: StabilizationGrid {
            poles,
            order_range: *orders,
            lag_plan: plan.clone(),
            l: corrs.channels(),
        },
        warnings,
        ranks_used,
    })
}

/// Serialize a grid to JSON: metadata plus one record per pole with the
/// shape as an interleaved [re, im, re, im, …] array.
pub fn grid_to_json(grid: &StabilizationGrid) -> serde_json::Value {
    let poles: Vec<serde_json::Value> = grid
        .poles
        .iter()
        .map(|p| {
            let shape: Vec<f64> = p
                .shape
                .iter()
                .flat_map(|z| [z.re, z.im])
                .collect();
            json!({
                "f": p.f,
                "xi": p.xi,
                "order": p.order,
                "j_b": p.j_b,
                "tau": lag_of_step(p.j_b, grid.lag_plan.fs),
                "mpc": p.mpc,
                "mpd": p.mpd,
                "stability_flag": p.stability_flag.as_str(),
                "shape": shape,
            })
        })
        .collect();
    json!({
        "fs": grid.lag_plan.fs,
        "f0": grid.lag_plan.f0,
        "channels": grid.l,
        "order_range": [grid.order_range.min, grid.order_range.max, grid.order_range.step],
        "lag_steps": grid.lag_plan.j_b_values,
        "taus": grid.lag_plan.taus,
        "beta": grid.lag_plan.beta,
        "poles": poles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;

    /// Exact correlation sequence R_j = C·A^{j−1}·G for a synthetic
    /// state-space model: the noiseless oracle for the whole subspace
    /// chain. G is an arbitrary full-rank coupling; the factorization only
    /// relies on the Toeplitz having the C·A^{j}·G structure.
    fn analytic_corrs(
        a_d: &Array2<f64>,
        c_out: &Array2<f64>,
        g: &Array2<f64>,
        j_b: usize,
        fs: f64,
    ) -> CorrelationSequence {
        let mut matrices = Vec::with_capacity(2 * j_b - 1);
        let mut a_pow_g = g.clone(); // A^{j-1}·G starting at j = 1
        for _ in 1..=(2 * j_b - 1) {
            matrices.push(c_out.dot(&a_pow_g));
            a_pow_g = a_d.dot(&a_pow_g);
        }
        CorrelationSequence { matrices, j_b, fs }
    }

    /// Two-story frame, its exact discrete model, and analytic modes.
    fn two_dof_fixture(
        fs: f64,
        j_b: usize,
    ) -> (CorrelationSequence, Vec<synth::ModeTruth>) {
        let spec = synth::ShearFrameSpec {
            stories: 2,
            fs,
            rayleigh_modes: (1, 2),
            ..Default::default()
        };
        let (m, k, c) = synth::build_matrices(&spec).unwrap();
        let modes = synth::analytic_modes(&m, &k, &c).unwrap();
        let (a_d, c_out) = synth::discrete_model(&m, &k, &c, fs).unwrap();
        // Any fixed full-rank G works; values are arbitrary but pinned.
        let g = Array2::from_shape_fn((4, 2), |(i, j)| {
            ((i * 2 + j + 1) as f64 * 0.37).sin() + 0.1 * (i as f64)
        });
        (analytic_corrs(&a_d, &c_out, &g, j_b, fs), modes)
    }

    #[test]
    fn lag_step_rule_anchors() {
        assert_eq!(time_lag_step(200.0, 5.319).unwrap(), 189);
        assert_eq!(time_lag_step(40.0, 2.64).unwrap(), 76);
        assert_eq!(time_lag_step(200.0, 10.0).unwrap(), 100);
        assert!(time_lag_step(10.0, 5.0).is_err()); // f0 at Nyquist
    }

    #[test]
    fn lag_duration_anchors() {
        assert_abs_diff_eq!(lag_of_step(189, 200.0), 1.885, epsilon = 1e-12);
        assert_abs_diff_eq!(lag_of_step(76, 40.0), 3.775, epsilon = 1e-12);
        assert_abs_diff_eq!(lag_of_step(1, 64.0), 1.0 / 64.0, epsilon = 1e-15);
    }

    #[test]
    fn lag_grid_spans_published_ranges() {
        let plan = lag_grid(40.0, 2.64, 1.5, 8).unwrap();
        assert_eq!(*plan.j_b_values.first().unwrap(), 69);
        assert_eq!(*plan.j_b_values.last().unwrap(), 104);
        assert_eq!(plan.j_b_values.len(), 8);
        assert_abs_diff_eq!(plan.taus[0], 3.425, epsilon = 1e-12);
        assert_abs_diff_eq!(*plan.taus.last().unwrap(), 5.175, epsilon = 1e-12);
        assert!(plan.taus.windows(2).all(|w| w[1] > w[0]));

        let plan = lag_grid(200.0, 5.319, 1.5, 11).unwrap();
        assert_eq!(*plan.j_b_values.first().unwrap(), 170);
        assert_eq!(*plan.j_b_values.last().unwrap(), 255);

        // Two-point plan via a barely-super-unity multiplier.
        let plan = lag_grid(40.0, 2.64, 1.02, 2).unwrap();
        assert_eq!(plan.j_b_values.len(), 2);
        assert_eq!(plan.j_b_values[1], plan.j_b_values[0] + 1);

        assert!(lag_grid(40.0, 2.64, 1.0, 8).is_err());
        // Rounding collisions deduplicate and shrink the effective count.
        let tight = lag_grid(40.0, 2.64, 1.05, 30).unwrap();
        assert_eq!(tight.grid_count, tight.j_b_values.len());
        assert!(tight.j_b_values.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn conversion_roundtrip_is_exact() {
        // λ = −ξω + iω√(1−ξ²) → μ = exp(λ·dt) → back through identify's
        // conversion must recover f and ξ to near machine precision.
        let cases = [(5.319, 0.01), (0.5, 0.2), (70.381, 0.01786), (15.0, 0.001)];
        let dt = 1.0 / 200.0;
        for (f, xi) in cases {
            let w = 2.0 * std::f64::consts::PI * f;
            let lam = Complex64::new(-xi * w, w * (1.0 - xi * xi).sqrt());
            let mu = (lam * dt).exp();
            let back = mu.ln() / dt;
            let f_back = back.norm() / (2.0 * std::f64::consts::PI);
            let xi_back = -back.re / back.norm();
            assert_abs_diff_eq!(f_back, f, epsilon = 1e-12 * f);
            assert_abs_diff_eq!(xi_back, xi, epsilon = 1e-12);
        }
    }

    #[test]
    fn analytic_two_dof_poles_match_truth() {
        let fs = 200.0;
        let (corrs, modes) = two_dof_fixture(fs, 6);
        let toeplitz = assemble_toeplitz(&corrs);
        let svd = randla::full_svd(&toeplitz.data).unwrap();
        let ident = identify(&svd, 4, 1.0 / fs, 2, 6).unwrap();
        assert_eq!(ident.effective_order, 4);
        assert_eq!(ident.poles.len(), 2);
        for (pole, truth) in ident.poles.iter().zip(modes.iter()) {
            assert_abs_diff_eq!(pole.f, truth.f, epsilon = 1e-6 * truth.f);
            assert_abs_diff_eq!(pole.xi, truth.xi, epsilon = 1e-6);
            let mac = stab::mac(&pole.shape.view(), &truth.shape.view()).unwrap();
            assert!(mac > 1.0 - 1e-9, "MAC {mac}");
        }
    }

    #[test]
    fn randomized_path_matches_truth_on_exact_rank() {
        let fs = 200.0;
        let (corrs, modes) = two_dof_fixture(fs, 6);
        let toeplitz = assemble_toeplitz(&corrs);
        for seed in [1u64, 7, 911] {
            let svd = randla::rsvd(&toeplitz.data, 4, seed).unwrap();
            let ident = identify(&svd, 4, 1.0 / fs, 2, 6).unwrap();
            assert_eq!(ident.poles.len(), 2);
            for (pole, truth) in ident.poles.iter().zip(modes.iter()) {
                assert_abs_diff_eq!(pole.f, truth.f, epsilon = 1e-6 * truth.f);
                assert_abs_diff_eq!(pole.xi, truth.xi, epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn poles_invariant_under_toeplitz_scaling() {
        let fs = 200.0;
        let (corrs, _) = two_dof_fixture(fs, 6);
        let toeplitz = assemble_toeplitz(&corrs);
        let scaled = BlockToeplitz {
            data: &toeplitz.data * 7.31,
            ..toeplitz.clone()
        };
        let i1 = identify(&randla::full_svd(&toeplitz.data).unwrap(), 4, 1.0 / fs, 2, 6).unwrap();
        let i2 = identify(&randla::full_svd(&scaled.data).unwrap(), 4, 1.0 / fs, 2, 6).unwrap();
        assert_eq!(i1.poles.len(), i2.poles.len());
        for (a, b) in i1.poles.iter().zip(i2.poles.iter()) {
            assert_abs_diff_eq!(a.f, b.f, epsilon = 1e-9 * a.f);
            assert_abs_diff_eq!(a.xi, b.xi, epsilon = 1e-9);
            let mac = stab::mac(&a.shape.view(), &b.shape.view()).unwrap();
            assert!(mac > 1.0 - 1e-9);
        }
    }

    #[test]
    fn sweep_truncates_orders_beyond_system_rank() {
        // Exact rank-4 Toeplitz with room for order 30: every requested
        // order above 4 collapses to 4 and is reported.
        let fs = 200.0;
        let (corrs, modes) = two_dof_fixture(fs, 16); // side 32
        let toeplitz = assemble_toeplitz(&corrs);
        let orders = OrderRange::new(2, 30, 2).unwrap();
        let out = sweep(&toeplitz, Decomposer::Svd, None, &orders).unwrap();
        assert!(!out.warnings.is_empty());
        assert!(out.warnings.iter().all(|w| w.contains("truncated to 4")));
        // Orders ≥ 4 all land on the same effective order 4 with both
        // physical poles present.
        let at4: Vec<_> = out.poles.iter().filter(|p| p.order == 4).collect();
        assert!(at4.len() >= 2 * 14); // orders 4..=30 → 14 sweeps
        for pole in &at4 {
            let close = modes
                .iter()
                .any(|m| (pole.f - m.f).abs() < 1e-5 * m.f);
            assert!(close, "pole at {} Hz", pole.f);
        }
    }

    #[test]
    fn sweep_order_grid_arithmetic() {
        let orders = OrderRange::new(2, 30, 2).unwrap();
        assert_eq!(orders.count(), 15);
        assert_eq!(orders.orders().count(), 15);
        assert!(OrderRange::new(3, 30, 2).is_err());
        assert!(OrderRange::new(2, 29, 2).is_err());
        assert!(OrderRange::new(2, 30, 3).is_err());
        assert!(OrderRange::new(4, 2, 2).is_err());
    }

    #[test]
    fn three_dimensional_sweep_is_lag_invariant_on_exact_models() {
        let fs = 200.0;
        let (corrs, modes) = two_dof_fixture(fs, 8);
        let plan = LagPlan {
            fs,
            f0: modes[0].f,
            j_b_values: vec![6, 8],
            taus: vec![lag_of_step(6, fs), lag_of_step(8, fs)],
            beta: 1.5,
            grid_count: 2,
        };
        let orders = OrderRange::new(4, 4, 2).unwrap();
        let out = sweep_3d(&corrs, Decomposer::Svd, None, &orders, &plan).unwrap();
        let lag6: Vec<_> = out.grid.at_lag(6).collect();
        let lag8: Vec<_> = out.grid.at_lag(8).collect();
        assert_eq!(lag6.len(), 2);
        assert_eq!(lag8.len(), 2);
        for (a, b) in lag6.iter().zip(lag8.iter()) {
            assert_abs_diff_eq!(a.f, b.f, epsilon = 1e-6 * a.f);
            assert_abs_diff_eq!(a.xi, b.xi, epsilon = 1e-6);
        }
        assert_eq!(out.ranks_used.len(), 2);
    }

    #[test]
    fn single_lag_sweep_equals_plain_sweep() {
        let fs = 200.0;
        let (corrs, modes) = two_dof_fixture(fs, 6);
        let plan = LagPlan::single(fs, modes[0].f, 6).unwrap();
        let orders = OrderRange::new(2, 4, 2).unwrap();
        let out3d = sweep_3d(&corrs, Decomposer::Svd, None, &orders, &plan).unwrap();
        let toeplitz = assemble_toeplitz(&corrs);
        let out2d = sweep(&toeplitz, Decomposer::Svd, None, &orders).unwrap();
        assert_eq!(out3d.grid.poles.len(), out2d.poles.len());
        for (a, b) in out3d.grid.poles.iter().zip(out2d.poles.iter()) {
            assert_eq!(a.f.to_bits(), b.f.to_bits());
            assert_eq!(a.xi.to_bits(), b.xi.to_bits());
        }
    }

    #[test]
    fn grid_json_has_complete_pole_records() {
        let fs = 200.0;
        let (corrs, modes) = two_dof_fixture(fs, 6);
        let plan = LagPlan::single(fs, modes[0].f, 6).unwrap();
        let orders = OrderRange::new(4, 4, 2).unwrap();
        let out = sweep_3d(&corrs, Decomposer::Svd, None, &orders, &plan).unwrap();
        let doc = grid_to_json(&out.grid);
        assert_eq!(doc["channels"], 2);
        let poles = doc["poles"].as_array().unwrap();
        assert_eq!(poles.len(), 2);
        for p in poles {
            assert!(p["f"].as_f64().unwrap() > 0.0);
            assert_eq!(p["shape"].as_array().unwrap().len(), 4); // 2 channels × (re, im)
            assert_eq!(p["stability_flag"], "new");
            assert_abs_diff_eq!(
                p["tau"].as_f64().unwrap(),
                lag_of_step(6, fs),
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn identify_rejects_bad_arguments() {
        let fs = 200.0;
        let (corrs, _) = two_dof_fixture(fs, 6);
        let toeplitz = assemble_toeplitz(&corrs);
        let svd = randla::full_svd(&toeplitz.data).unwrap();
        assert!(identify(&svd, 3, 1.0 / fs, 2, 6).is_err()); // odd order
        assert!(identify(&svd, 14, 1.0 / fs, 2, 6).is_err()); // beyond rank_k = 12
        // Requesting more order than the exact model supports truncates to
        // the underflow boundary instead of failing.
        let out = identify(&svd, 10, 1.0 / fs, 2, 6).unwrap();
        assert_eq!(out.effective_order, 4);
        assert!(identify(&svd, 10, 1.0 / fs, 3, 6).is_err()); // wrong l
        assert!(identify(&svd, 0, 1.0 / fs, 2, 6).is_err());
    }
}
