//! Pole quality indicators and stabilization flagging.
//!
//! Hard criteria discard poles that cannot be structural (excessive
//! damping, scattered phase); soft criteria compare each pole against its
//! neighbors along the model-order axis — and, for three-dimensional
//! grids, along the time-lag axis as well — and flag the ones that
//! persist.

use ndarray::ArrayView1;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::ssi::{NeighborLink, Pole, StabilityFlag, StabilizationGrid};

/// Absolute thresholds a pole must satisfy on its own.
#[derive(Debug, Clone, Copy)]
pub struct HardCriteria {
    /// Maximum damping ratio (kept when ξ ≤ xi_max).
    pub xi_max: f64,
    /// Minimum phase collinearity (kept when MPC > mpc_min, strict).
    pub mpc_min: f64,
    /// Maximum phase deviation (kept when MPD < mpd_max, strict).
    pub mpd_max: f64,
}

impl Default for HardCriteria {
    fn default() -> Self {
        Self {
            xi_max: 0.10,
            mpc_min: 0.60,
            mpd_max: 0.50,
        }
    }
}

impl HardCriteria {
    pub fn new(xi_max: f64, mpc_min: f64, mpd_max: f64) -> Result<Self> {
        for (name, v) in [("xi_max", xi_max), ("mpc_min", mpc_min), ("mpd_max", mpd_max)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::InvalidArg(format!("{name} = {v} outside (0, 1]")));
            }
        }
        Ok(Self {
            xi_max,
            mpc_min,
            mpd_max,
        })
    }
}

/// Relative tolerances for neighbor agreement. `alpha_mac` bounds
/// (1 − MAC), so smaller is stricter for all three.
#[derive(Debug, Clone, Copy)]
pub struct SoftCriteria {
    pub alpha_f: f64,
    pub alpha_xi: f64,
    pub alpha_mac: f64,
}

impl SoftCriteria {
    pub fn new(alpha_f: f64, alpha_xi: f64, alpha_mac: f64) -> Result<Self> {
        for (name, v) in [
            ("alpha_f", alpha_f),
            ("alpha_xi", alpha_xi),
            ("alpha_mac", alpha_mac),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::InvalidArg(format!("{name} = {v} outside (0, 1)")));
            }
        }
        Ok(Self {
            alpha_f,
            alpha_xi,
            alpha_mac,
        })
    }

    /// Defaults for a classical order-only stabilization diagram:
    /// 2% frequency, 2% damping, 5% on (1 − MAC).
    pub fn default_2d() -> Self {
        Self {
            alpha_f: 0.02,
            alpha_xi: 0.02,
            alpha_mac: 0.05,
        }
    }

    /// Defaults for the order×lag grid: 1% frequency, 3% damping,
    /// 2% on (1 − MAC).
    pub fn default_3d() -> Self {
        Self {
            alpha_f: 0.01,
            alpha_xi: 0.03,
            alpha_mac: 0.02,
        }
    }
}

/// Modal assurance criterion |aᴴb|² / (‖a‖²‖b‖²) ∈ [0, 1].
pub fn mac(a: &ArrayView1<Complex64>, b: &ArrayView1<Complex64>) -> Result<f64> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::InvalidArg(format!(
            "mac needs equal nonzero lengths, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    let na: f64 = a.iter().map(|z| z.norm_sqr()).sum();
    let nb: f64 = b.iter().map(|z| z.norm_sqr()).sum();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::InvalidArg("mac of a zero vector".into()));
    }
    let dot: Complex64 = a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum();
    Ok((dot.norm_sqr() / (na * nb)).clamp(0.0, 1.0))
}

/// Eigenvalues λ₁ ≥ λ₂ of the symmetric 2×2 matrix [[sxx, sxy], [sxy, syy]].
fn sym2_eigenvalues(sxx: f64, syy: f64, sxy: f64) -> (f64, f64) {
    let half_trace = 0.5 * (sxx + syy);
    let disc = (0.25 * (sxx - syy).powi(2) + sxy * sxy).sqrt();
    (half_trace + disc, half_trace - disc)
}

/// Modal phase collinearity: how well the component phasors align on a
/// line in the complex plane. From the mean-centered covariance of the
/// (Re, Im) parts with eigenvalues λ₁ ≥ λ₂: MPC = ((λ₁−λ₂)/(λ₁+λ₂))².
/// A shape whose components are all identical carries no phase geometry
/// at all and is reported as degenerate.
pub fn mpc(shape: &ArrayView1<Complex64>) -> Result<f64> {
    if shape.is_empty() || shape.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(Error::InvalidArg("mpc of a zero vector".into()));
    }
    let n = shape.len() as f64;
    let mean_re = shape.iter().map(|z| z.re).sum::<f64>() / n;
    let mean_im = shape.iter().map(|z| z.im).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    for z in shape.iter() {
        let x = z.re - mean_re;
        let y = z.im - mean_im;
        sxx += x * x;
        syy += y * y;
        sxy += x * y;
    }
    let trace = sxx + syy;
    if trace == 0.0 {
        return Err(Error::Numeric(
            "degenerate shape: all components identical".into(),
        ));
    }
    let (l1, l2) = sym2_eigenvalues(sxx, syy, sxy);
    Ok((((l1 - l2) / trace).powi(2)).clamp(0.0, 1.0))
}

/// Modal phase deviation: magnitude-weighted RMS angular distance of the
/// component phasors from the best-fit (total-least-squares) phase line
/// through the origin, normalized by π/2 into [0, 1]. Real shapes give 0;
/// an isotropic phase cloud (no preferred line) gives 1.
pub fn mpd(shape: &ArrayView1<Complex64>) -> Result<f64> {
    if shape.is_empty() {
        return Err(Error::InvalidArg("mpd of an empty vector".into()));
    }
    // Weighted scatter of unit phasors; weight = component magnitude.
    let mut sxx = 0.0;
    let mut syy = 0.0;
    let mut sxy = 0.0;
    let mut total_w = 0.0;
    for z in shape.iter() {
        let w = z.norm();
        if w == 0.0 {
            continue;
        }
        let ux = z.re / w;
        let uy = z.im / w;
        sxx += w * ux * ux;
        syy += w * uy * uy;
        sxy += w * ux * uy;
        total_w += w;
    }
    if total_w == 0.0 {
        return Err(Error::InvalidArg("mpd of a zero vector".into()));
    }
    let (l1, l2) = sym2_eigenvalues(sxx, syy, sxy);
    // No dominant direction: phases spread isotropically.
    if l1 - l2 <= 1e-12 * (l1 + l2) {
        return Ok(1.0);
    }
    // Dominant eigenvector = the phase line.
    let (ex, ey) = {
        let v1 = (sxy, l1 - sxx);
        let v2 = (l1 - syy, sxy);
        let (vx, vy) = if v1.0 * v1.0 + v1.1 * v1.1 >= v2.0 * v2.0 + v2.1 * v2.1 {
            v1
        } else {
            v2
        };
        let norm = (vx * vx + vy * vy).sqrt();
        (vx / norm, vy / norm)
    };
    let mut acc = 0.0;
    for z in shape.iter() {
        let w = z.norm();
        if w == 0.0 {
            continue;
        }
        let ux = z.re / w;
        let uy = z.im / w;
        // |sin of angle to the line|, folded so a phasor and its negation
        // measure the same distance.
        let cross = (ux * ey - uy * ex).abs().clamp(0.0, 1.0);
        let delta = cross.asin();
        acc += w * delta * delta;
    }
    let rms = (acc / total_w).sqrt();
    Ok((rms / std::f64::consts::FRAC_PI_2).clamp(0.0, 1.0))
}

/// The first hard criterion a rejected pole violated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HardViolation {
    Damping,
    Mpc,
    Mpd,
}

/// Partition poles into kept and rejected. Kept requires ξ ≤ xi_max,
/// MPC > mpc_min, and MPD < mpd_max; rejections carry the first violated
/// criterion (checked in that order) and are flagged `rejected`.
pub fn apply_hard(poles: Vec<Pole>, hc: &HardCriteria) -> (Vec<Pole>, Vec<(Pole, HardViolation)>) {
    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for mut pole in poles {
        let violation = if pole.xi > hc.xi_max {
            Some(HardViolation::Damping)
        } else if pole.mpc <= hc.mpc_min {
            Some(HardViolation::Mpc)
        } else if pole.mpd >= hc.mpd_max {
            Some(HardViolation::Mpd)
        } else {
            None
        };
        match violation {
            Some(v) => {
                pole.stability_flag = StabilityFlag::Rejected;
                rejected.push((pole, v));
            }
            None => kept.push(pole),
        }
    }
    (kept, rejected)
}

/// Relative frequency distance |f_i − f_j| / max(f_i, f_j).
pub fn rel_f_dist(fi: f64, fj: f64) -> f64 {
    (fi - fj).abs() / fi.max(fj)
}

/// Relative damping distance |ξ_i − ξ_j| / max(ξ_i, ξ_j).
pub fn rel_xi_dist(xi_i: f64, xi_j: f64) -> f64 {
    (xi_i - xi_j).abs() / xi_i.max(xi_j)
}

/// Distances from `pole` to `other` plus the summed score used to rank
/// neighbor candidates.
fn link_to(pole: &Pole, other: &Pole) -> (NeighborLink, f64) {
    let d_f = rel_f_dist(pole.f, other.f);
    let d_xi = rel_xi_dist(pole.xi, other.xi);
    let mac_v = mac(&pole.shape.view(), &other.shape.view()).unwrap_or(0.0);
    let score = d_f + d_xi + (1.0 - mac_v);
    (NeighborLink { d_f, d_xi, mac: mac_v }, score)
}

/// Pick the best neighbor among `candidates` (slices of candidate lists
/// are searched in the given order): lowest summed distance, ties broken
/// by lower d_f, then by candidate position.
fn best_neighbor(pole: &Pole, candidates: &[&Pole]) -> Option<NeighborLink> {
    let mut best: Option<(NeighborLink, f64)> = None;
    for other in candidates {
        let (link, score) = link_to(pole, other);
        let better = match &best {
            None => true,
            Some((b_link, b_score)) => {
                score < *b_score || (score == *b_score && link.d_f < b_link.d_f)
            }
        };
        if better {
            best = Some((link, score));
        }
    }
    best.map(|(link, _)| link)
}

fn passes(link: &NeighborLink, sc: &SoftCriteria) -> bool {
    link.d_f <= sc.alpha_f && link.d_xi <= sc.alpha_xi && (1.0 - link.mac) <= sc.alpha_mac
}

/// Flag stability along the model-order axis: a pole is `stable` iff its
/// best neighbor at the previous (present) order meets all three soft
/// criteria. Poles at the lowest order are `new`. The best-neighbor link
/// is recorded on every pole that has a predecessor order.
pub fn flag_stable_2d(poles: Vec<Pole>, sc: &SoftCriteria) -> Vec<Pole> {
    let mut orders: Vec<usize> = poles
        .iter()
        .filter(|p| p.stability_flag != StabilityFlag::Rejected)
        .map(|p| p.order)
        .collect();
    orders.sort_unstable();
    orders.dedup();

    let mut out = poles;
    for idx in 0..out.len() {
        if out[idx].stability_flag == StabilityFlag::Rejected {
            continue;
        }
        let order = out[idx].order;
        let pos = orders.iter().position(|&o| o == order).unwrap();
        if pos == 0 {
            out[idx].stability_flag = StabilityFlag::New;
            continue;
        }
        let prev_order = orders[pos - 1];
        let candidates: Vec<&Pole> = out
            .iter()
            .filter(|p| p.order == prev_order && p.stability_flag != StabilityFlag::Rejected)
            .collect();
        let link = best_neighbor(&out[idx], &candidates);
        let flag = match &link {
            Some(l) if passes(l, sc) => StabilityFlag::Stable,
            _ => StabilityFlag::New,
        };
        out[idx].neighbor = link;
        out[idx].stability_flag = flag;
    }
    out
}

/// Flag stability on an order×lag grid: a pole is `stable` iff its best
/// neighbor — searched at the previous order within the same lag AND at
/// the previous lag within the same order (axis-aligned only) — meets all
/// three criteria. A single-lag grid reduces exactly to [`flag_stable_2d`].
pub fn flag_stable_3d(grid: StabilizationGrid, sc: &SoftCriteria) -> StabilizationGrid {
    let lags = grid.lag_plan.j_b_values.clone();
    let mut orders: Vec<usize> = grid
        .poles
        .iter()
        .filter(|p| p.stability_flag != StabilityFlag::Rejected)
        .map(|p| p.order)
        .collect();
    orders.sort_unstable();
    orders.dedup();

    let mut poles = grid.poles;
    for idx in 0..poles.len() {
        if poles[idx].stability_flag == StabilityFlag::Rejected {
            continue;
        }
        let (order, j_b) = (poles[idx].order, poles[idx].j_b);
        let order_pos = orders.iter().position(|&o| o == order).unwrap();
        let lag_pos = lags.iter().position(|&j| j == j_b).unwrap();

        // Previous order in the same lag slice first, then previous lag at
        // the same order — a fixed, documented candidate order so score
        // ties resolve deterministically.
        let mut candidates: Vec<&Pole> = Vec::new();
        if order_pos > 0 {
            let prev_order = orders[order_pos - 1];
            candidates.extend(poles.iter().filter(|p| {
                p.j_b == j_b
                    && p.order == prev_order
                    && p.stability_flag != StabilityFlag::Rejected
            }));
        }
        if lag_pos > 0 {
            let prev_lag = lags[lag_pos - 1];
            candidates.extend(poles.iter().filter(|p| {
                p.j_b == prev_lag
                    && p.order == order
                    && p.stability_flag != StabilityFlag::Rejected
            }));
        }
        if candidates.is_empty() {
            poles[idx].stability_flag = StabilityFlag::New;
            continue;
        }
        let link = best_neighbor(&poles[idx], &candidates);
        let flag = match &link {
            Some(l) if passes(l, sc) => StabilityFlag::Stable,
            _ => StabilityFlag::New,
        };
        poles[idx].neighbor = link;
        poles[idx].stability_flag = flag;
    }
    StabilizationGrid { poles, ..grid }
}
