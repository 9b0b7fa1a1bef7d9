//! Mode tracking across monitoring sessions.
//!
//! Each session's extracted mode alignments are matched one-to-one against
//! a fixed reference set (typically the modes identified from the first
//! acquisition); matches and misses accumulate into per-mode success
//! ratios and parameter histories.

use ndarray::Array1;
use num_complex::Complex64;

use crate::cluster::ModeCluster;
use crate::error::{Error, Result};
use crate::linalg::normalize_shape;
use crate::stab::{mac, rel_f_dist};

/// One reference mode the campaign tracks.
#[derive(Debug, Clone)]
pub struct ReferenceMode {
    pub f: f64,
    pub xi: f64,
    /// Unit-norm shape (normalized on construction).
    pub shape: Array1<Complex64>,
    pub label: String,
}

/// The fixed catalog of modes to track, ordered by frequency.
#[derive(Debug, Clone)]
pub struct ReferenceModeSet {
    pub modes: Vec<ReferenceMode>,
}

impl ReferenceModeSet {
    pub fn new(mut modes: Vec<ReferenceMode>) -> Result<Self> {
        if modes.is_empty() {
            return Err(Error::InvalidArg("reference set cannot be empty".into()));
        }
        for w in modes.windows(2) {
            if w[1].f <= w[0].f {
                return Err(Error::InvalidArg(format!(
                    "reference frequencies must be strictly increasing ({} then {})",
                    w[0].f, w[1].f
                )));
            }
        }
        for mode in &mut modes {
            mode.shape = normalize_shape(mode.shape.clone())?;
        }
        Ok(Self { modes })
    }

    /// Build a reference from extracted mode alignments, labeling them
    /// mode01, mode02, … in frequency order.
    pub fn from_clusters(clusters: &[ModeCluster]) -> Result<Self> {
        let modes = clusters
            .iter()
            .enumerate()
            .map(|(i, c)| ReferenceMode {
                f: c.f,
                xi: c.xi,
                shape: c.shape.clone(),
                label: format!("mode{:02}", i + 1),
            })
            .collect();
        Self::new(modes)
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// A successful per-session match for one reference mode.
#[derive(Debug, Clone, Copy)]
pub struct MatchEntry {
    pub f: f64,
    pub xi: f64,
    /// MAC between the matched shape and the reference shape.
    pub mac: f64,
    /// Index of the matched cluster in the session's cluster list.
    pub cluster_index: usize,
}

/// The outcome of matching one session: entry i corresponds to reference
/// mode i (`None` = miss).
#[derive(Debug, Clone)]
pub struct SessionReport {
    pub entries: Vec<Option<MatchEntry>>,
}

/// Match one session's mode alignments against the reference.
///
/// A (reference, candidate) pair is admissible when the relative frequency
/// distance is at most `df_max` and (1 − MAC) at most `macd_max`.
/// Admissible pairs are assigned greedily in ascending order of combined
/// score (relative frequency distance + (1 − MAC)), one-to-one; ties
/// resolve by reference index, then candidate index.
pub fn track_session(
    reference: &ReferenceModeSet,
    found: &[ModeCluster],
    df_max: f64,
    macd_max: f64,
) -> SessionReport {
    let mut pairs: Vec<(f64, usize, usize, MatchEntry)> = Vec::new();
    for (r, rm) in reference.modes.iter().enumerate() {
        for (c, cand) in found.iter().enumerate() {
            let d_f = rel_f_dist(cand.f, rm.f);
            if d_f > df_max {
                continue;
            }
            // Differing channel layouts simply produce no admissible pair.
            let Ok(m) = mac(&cand.shape.view(), &rm.shape.view()) else {
                continue;
            };
            if 1.0 - m > macd_max {
                continue;
            }
            pairs.push((
                d_f + (1.0 - m),
                r,
                c,
                MatchEntry {
                    f: cand.f,
                    xi: cand.xi,
                    mac: m,
                    cluster_index: c,
                },
            ));
        }
    }
    pairs.sort_by(|a, b| (a.0, a.1, a.2).partial_cmp(&(b.0, b.1, b.2)).unwrap());

    let mut entries: Vec<Option<MatchEntry>> = vec![None; reference.len()];
    let mut used_candidate = vec![false; found.len()];
    for (_, r, c, entry) in pairs {
        if entries[r].is_none() && !used_candidate[c] {
            entries[r] = Some(entry);
            used_candidate[c] = true;
        }
    }
    SessionReport { entries }
}

/// Accumulated per-mode match history over a campaign.
#[derive(Debug, Clone)]
pub struct TrackedHistory {
    pub labels: Vec<String>,
    /// One (timestamp, per-mode entries) row per session.
    pub sessions: Vec<(String, Vec<Option<MatchEntry>>)>,
}

impl TrackedHistory {
    pub fn new(reference: &ReferenceModeSet) -> Self {
        Self {
            labels: reference.modes.iter().map(|m| m.label.clone()).collect(),
            sessions: Vec::new(),
        }
    }

    pub fn push(&mut self, timestamp: impl Into<String>, report: SessionReport) -> Result<()> {
        if report.entries.len() != self.labels.len() {
            return Err(Error::InvalidArg(format!(
                "report covers {} modes, history tracks {}",
                report.entries.len(),
                self.labels.len()
            )));
        }
        self.sessions.push((timestamp.into(), report.entries));
        Ok(())
    }

    pub fn session_count(&self) -> usize {
        self.sessions.len()
    }
}

/// Per-mode identification success: 100 × matches / sessions.
pub fn success_ratio(history: &TrackedHistory) -> Result<Vec<f64>> {
    let total = history.sessions.len();
    if total == 0 {
        return Err(Error::InvalidArg(
            "success ratio needs at least one session".into(),
        ));
    }
    Ok((0..history.labels.len())
        .map(|m| {
            let hits = history
                .sessions
                .iter()
                .filter(|(_, entries)| entries[m].is_some())
                .count();
            100.0 * hits as f64 / total as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn shape_from(parts: &[f64]) -> Array1<Complex64> {
        parts.iter().map(|&x| Complex64::new(x, 0.0)).collect()
    }

    /// A cluster whose MAC against `base_shape`-like references is tunable
    /// through the mixing parameter.
    fn cluster(f: f64, xi: f64, shape: Array1<Complex64>) -> ModeCluster {
        ModeCluster {
            members: Vec::new(),
            f,
            xi,
            shape,
            size: 10,
            f_iqr: 0.0,
        }
    }

    fn reference_two_modes() -> ReferenceModeSet {
        ReferenceModeSet::new(vec![
            ReferenceMode {
                f: 2.628,
                xi: 0.01,
                shape: shape_from(&[1.0, 0.6, 0.2]),
                label: "mode01".into(),
            },
            ReferenceMode {
                f: 5.1,
                xi: 0.015,
                shape: shape_from(&[0.4, -0.9, 0.3]),
                label: "mode02".into(),
            },
        ])
        .unwrap()
    }

    /// Blend two unit vectors to hit a target MAC (approximately).
    fn blended_shape(base: &[f64], other: &[f64], t: f64) -> Array1<Complex64> {
        base.iter()
            .zip(other)
            .map(|(&a, &b)| Complex64::new((1.0 - t) * a + t * b, 0.0))
            .collect()
    }

    #[test]
    fn close_candidate_matches() {
        let reference = reference_two_modes();
        // Candidate at 2.65 Hz whose shape is slightly perturbed: MAC ≈ 0.95.
        let shape = blended_shape(&[1.0, 0.6, 0.2], &[0.0, 0.25, -0.6], 0.25);
        let m = mac(&shape.view(), &reference.modes[0].shape.view()).unwrap();
        assert!(m > 0.85 && m < 1.0, "fixture MAC {m}");
        let found = vec![cluster(2.65, 0.012, shape)];
        let report = track_session(&reference, &found, 0.05, 0.15);
        let entry = report.entries[0].expect("mode 1 should match");
        assert_abs_diff_eq!(entry.f, 2.65, epsilon = 1e-12);
        assert_eq!(entry.cluster_index, 0);
        assert!(report.entries[1].is_none());
    }

    #[test]
    fn dissimilar_shape_misses() {
        let reference = reference_two_modes();
        // Frequency is close (2.80 vs 2.628 → 6.1%? No: |2.8−2.628|/2.8 =
        // 6.1% > 5% — keep it inside the window at 2.70) but the shape is
        // nearly orthogonal, so 1−MAC > 0.15 rejects it.
        let shape = shape_from(&[0.2, -0.25, 0.95]);
        let m = mac(&shape.view(), &reference.modes[0].shape.view()).unwrap();
        assert!(1.0 - m > 0.15, "fixture 1−MAC = {}", 1.0 - m);
        let found = vec![cluster(2.70, 0.012, shape)];
        let report = track_session(&reference, &found, 0.05, 0.15);
        assert!(report.entries[0].is_none());
    }

    #[test]
    fn frequency_window_boundary() {
        let reference = reference_two_modes();
        let shape = shape_from(&[1.0, 0.6, 0.2]);
        // |2.76 − 2.628| / 2.76 = 4.78% ≤ 5% → match.
        let report = track_session(&reference, &[cluster(2.76, 0.01, shape.clone())], 0.05, 0.15);
        assert!(report.entries[0].is_some());
        // |2.80 − 2.628| / 2.80 = 6.1% > 5% → miss.
        let report = track_session(&reference, &[cluster(2.80, 0.01, shape)], 0.05, 0.15);
        assert!(report.entries[0].is_none());
    }

    #[test]
    fn competing_candidates_resolve_by_score() {
        let reference = ReferenceModeSet::new(vec![ReferenceMode {
            f: 5.0,
            xi: 0.01,
            shape: shape_from(&[1.0, 0.5]),
            label: "m1".into(),
        }])
        .unwrap();
        let shape = shape_from(&[1.0, 0.5]);
        let found = vec![
            cluster(5.2, 0.01, shape.clone()), // d_f = 3.85%
            cluster(5.05, 0.01, shape),        // d_f = 0.99% ← lower score
        ];
        let report = track_session(&reference, &found, 0.05, 0.15);
        assert_eq!(report.entries[0].unwrap().cluster_index, 1);
    }

    #[test]
    fn assignment_is_one_to_one() {
        let reference = reference_two_modes();
        let s1 = shape_from(&[1.0, 0.6, 0.2]);
        // One candidate admissible for both references (wide df window):
        // it must be assigned to exactly one.
        let found = vec![cluster(3.8, 0.01, s1)];
        let report = track_session(&reference, &found, 0.5, 0.9);
        let matched: Vec<_> = report.entries.iter().flatten().collect();
        assert_eq!(matched.len(), 1);
    }

    /// Independent re-implementation of the assignment rule: exhaustively
    /// pick the globally lowest-score admissible pair, remove both sides,
    /// repeat. Must agree with the module's sorted-greedy implementation.
    fn exhaustive_greedy(
        reference: &ReferenceModeSet,
        found: &[ModeCluster],
        df_max: f64,
        macd_max: f64,
    ) -> Vec<Option<usize>> {
        let mut admissible: Vec<(f64, usize, usize)> = Vec::new();
        for (r, rm) in reference.modes.iter().enumerate() {
            for (c, cand) in found.iter().enumerate() {
                let d_f = rel_f_dist(cand.f, rm.f);
                let m = mac(&cand.shape.view(), &rm.shape.view()).unwrap();
                if d_f <= df_max && 1.0 - m <= macd_max {
                    admissible.push((d_f + (1.0 - m), r, c));
                }
            }
        }
        let mut out = vec![None; reference.len()];
        let mut used_c = vec![false; found.len()];
        loop {
            let best = admissible
                .iter()
                .filter(|(_, r, c)| out[*r].is_none() && !used_c[*c])
                .min_by(|a, b| a.partial_cmp(b).unwrap())
                .copied();
            match best {
                Some((_, r, c)) => {
                    out[r] = Some(c);
                    used_c[c] = true;
                }
                None => break,
            }
        }
        out
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn greedy_matches_exhaustive_oracle(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_ref = rng.gen_range(1..=4);
            let n_cand = rng.gen_range(0..=4);
            let mut f = 1.0;
            let mut modes = Vec::new();
            for i in 0..n_ref {
                f += rng.gen_range(0.5..3.0);
                modes.push(ReferenceMode {
                    f,
                    xi: 0.01,
                    shape: shape_from(&[1.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]),
                    label: format!("m{i}"),
                });
            }
            let reference = ReferenceModeSet::new(modes).unwrap();
            let found: Vec<ModeCluster> = (0..n_cand)
                .map(|_| {
                    cluster(
                        rng.gen_range(1.0..12.0),
                        0.01,
                        shape_from(&[1.0, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]),
                    )
                })
                .collect();
            let report = track_session(&reference, &found, 0.10, 0.30);
            let oracle = exhaustive_greedy(&reference, &found, 0.10, 0.30);
            for (entry, want) in report.entries.iter().zip(oracle.iter()) {
                prop_assert_eq!(entry.map(|e| e.cluster_index), *want);
            }
        }

        /// With well-separated references (spacing beyond twice the
        /// frequency window) each reference competes for its own candidates
        /// only, and loosening the thresholds can then never lose a match.
        #[test]
        fn widening_thresholds_is_monotone_for_separated_modes(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let modes: Vec<ReferenceMode> = (0..3)
                .map(|i| ReferenceMode {
                    f: 2.0 * 2f64.powi(i), // 2, 4, 8 Hz: > 2×5% apart
                    xi: 0.01,
                    shape: shape_from(&[1.0, 0.5 * i as f64, -0.2]),
                    label: format!("m{i}"),
                })
                .collect();
            let reference = ReferenceModeSet::new(modes).unwrap();
            let found: Vec<ModeCluster> = (0..4)
                .map(|_| {
                    let base = rng.gen_range(0..3);
                    let f0 = 2.0 * 2f64.powi(base);
                    cluster(
                        f0 * (1.0 + rng.gen_range(-0.06..0.06)),
                        0.01,
                        shape_from(&[1.0, 0.5 * base as f64 + rng.gen_range(-0.1..0.1), -0.2]),
                    )
                })
                .collect();
            let tight = track_session(&reference, &found, 0.03, 0.10);
            let loose = track_session(&reference, &found, 0.05, 0.20);
            for (t, l) in tight.entries.iter().zip(loose.entries.iter()) {
                if t.is_some() {
                    prop_assert!(l.is_some());
                }
            }
        }
    }

    #[test]
    fn history_accumulates_and_ratios_compute() {
        let reference = reference_two_modes();
        let mut history = TrackedHistory::new(&reference);
        let shape = shape_from(&[1.0, 0.6, 0.2]);
        // 3 sessions: mode 1 matches in 2 of them, mode 2 never.
        for (i, f) in [2.63, 9.9, 2.64].iter().enumerate() {
            let report = track_session(&reference, &[cluster(*f, 0.01, shape.clone())], 0.05, 0.15);
            history.push(format!("session-{i}"), report).unwrap();
        }
        let ratios = success_ratio(&history).unwrap();
        assert_abs_diff_eq!(ratios[0], 100.0 * 2.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(ratios[1], 0.0, epsilon = 1e-12);

        // Arithmetic anchors.
        assert_abs_diff_eq!(100.0 * 384.0 / 384.0, 100.0, epsilon = 1e-12);
        let r: f64 = 100.0 * 304.0 / 384.0;
        assert!((r - 79.17).abs() < 0.005);

        let empty = TrackedHistory::new(&reference);
        assert!(success_ratio(&empty).is_err());
    }

    #[test]
    fn reference_set_validates_ordering() {
        let good = reference_two_modes();
        for m in &good.modes {
            let norm: f64 = m.shape.iter().map(|z| z.norm_sqr()).sum();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-12);
        }
        let bad = ReferenceModeSet::new(vec![
            ReferenceMode {
                f: 5.0,
                xi: 0.01,
                shape: shape_from(&[1.0]),
                label: "a".into(),
            },
            ReferenceMode {
                f: 5.0,
                xi: 0.01,
                shape: shape_from(&[1.0]),
                label: "b".into(),
            },
        ]);
        assert!(bad.is_err());
    }

    #[test]
    fn tracking_is_deterministic() {
        let reference = reference_two_modes();
        let shape = shape_from(&[1.0, 0.6, 0.2]);
        let found = vec![
            cluster(2.64, 0.011, shape.clone()),
            cluster(5.05, 0.014, shape_from(&[0.4, -0.9, 0.3])),
            cluster(2.66, 0.013, shape),
        ];
        let a = track_session(&reference, &found, 0.05, 0.15);
        let b = track_session(&reference, &found, 0.05, 0.15);
        for (x, y) in a.entries.iter().zip(b.entries.iter()) {
            assert_eq!(x.map(|e| e.cluster_index), y.map(|e| e.cluster_index));
        }
    }
}
