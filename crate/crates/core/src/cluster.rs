//! Two-stage extraction of physical modes from the stable-pole cloud.
//!
//! Stage I embeds every stable pole in a five-dimensional feature space
//! (distances to its best stabilization neighbor plus its own phase
//! indicators) and runs fuzzy C-means with two clusters; the cluster whose
//! centroid sits nearer the origin holds the possibly-physical poles.
//! Stage II agglomerates the retained poles by modal distance and cuts the
//! dendrogram into mode alignments, each summarized by a representative
//! frequency, damping ratio, and shape.

use kodama::{linkage, Method};
use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::{Error, Result};
use crate::ssi::{Pole, StabilityFlag, StabilizationGrid};
use crate::stab::{mac, rel_f_dist, rel_xi_dist};

/// Per-pole feature vector for stage I, all components dimensionless and
/// in [0, 1]: distances to the best flagging neighbor plus the pole's own
/// phase indicators.
#[derive(Debug, Clone, Copy)]
pub struct PoleFeatures {
    pub d_f: f64,
    pub d_xi: f64,
    pub one_minus_mac: f64,
    pub one_minus_mpc: f64,
    pub mpd: f64,
}

impl PoleFeatures {
    pub fn to_array(self) -> [f64; 5] {
        [
            self.d_f,
            self.d_xi,
            self.one_minus_mac,
            self.one_minus_mpc,
            self.mpd,
        ]
    }
}

/// Feature vectors for every stable pole of a flagged grid, keyed by the
/// pole's index into `grid.poles`.
pub fn pole_features(grid: &StabilizationGrid) -> Vec<(usize, PoleFeatures)> {
    grid.poles
        .iter()
        .enumerate()
        .filter(|(_, p)| p.stability_flag == StabilityFlag::Stable)
        .filter_map(|(i, p)| {
            // Stable poles always carry the link that made them stable.
            p.neighbor.map(|link| {
                (
                    i,
                    PoleFeatures {
                        d_f: link.d_f,
                        d_xi: link.d_xi,
                        one_minus_mac: (1.0 - link.mac).max(0.0),
                        one_minus_mpc: (1.0 - p.mpc).max(0.0),
                        mpd: p.mpd,
                    },
                )
            })
        })
        .collect()
}

/// Stack features into the points matrix fuzzy C-means consumes.
pub fn feature_matrix(features: &[(usize, PoleFeatures)]) -> Array2<f64> {
    let mut points = Array2::zeros((features.len(), 5));
    for (row, (_, f)) in features.iter().enumerate() {
        points.row_mut(row).assign(&Array1::from(f.to_array().to_vec()));
    }
    points
}

/// Fuzzy C-means: returns (memberships n×c with rows summing to 1,
/// centroids c×d). Deterministic for a fixed seed.
///
/// The alternation is the standard one: centroids as membership^m-weighted
/// means, memberships from inverse-distance ratios with exponent
/// 2/(m−1); iteration stops when no centroid moves more than `tol` or
/// after `max_iter` rounds. A point exactly on a centroid takes full
/// membership there (split equally if it sits on several).
pub fn fuzzy_cmeans(
    points: &Array2<f64>,
    c: usize,
    fuzzifier: f64,
    tol: f64,
    max_iter: usize,
    seed: u64,
) -> Result<(Array2<f64>, Array2<f64>)> {
    let (n, d) = points.dim();
    if c < 1 {
        return Err(Error::InvalidArg("cluster count must be ≥ 1".into()));
    }
    if !(fuzzifier > 1.0) {
        return Err(Error::InvalidArg("fuzzifier must exceed 1".into()));
    }
    if !(tol > 0.0) || max_iter < 1 {
        return Err(Error::InvalidArg("need tol > 0 and max_iter ≥ 1".into()));
    }
    // Count distinct rows; fewer distinct points than clusters cannot
    // support c distinct centroids.
    let mut distinct: Vec<usize> = Vec::new();
    'outer: for i in 0..n {
        for &j in &distinct {
            if points.row(i) == points.row(j) {
                continue 'outer;
            }
        }
        distinct.push(i);
        if distinct.len() >= c {
            break;
        }
    }
    if distinct.len() < c {
        return Err(Error::InvalidArg(format!(
            "{} distinct points cannot form {c} clusters",
            distinct.len()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u = Array2::from_shape_fn((n, c), |_| rng.gen::<f64>());
    for mut row in u.axis_iter_mut(Axis(0)) {
        let s = row.sum();
        if s > 0.0 {
            row.mapv_inplace(|x| x / s);
        } else {
            row.fill(1.0 / c as f64);
        }
    }

    let mut centroids = Array2::<f64>::zeros((c, d));
    for iter in 0..max_iter {
        // Centroid update.
        let prev = centroids.clone();
        for j in 0..c {
            let mut num = Array1::<f64>::zeros(d);
            let mut den = 0.0;
            for i in 0..n {
                let w = u[[i, j]].powf(fuzzifier);
                num.scaled_add(w, &points.row(i));
                den += w;
            }
            if den > 0.0 {
                centroids.row_mut(j).assign(&(num / den));
            }
        }
        if iter > 0 {
            let movement = (0..c)
                .map(|j| {
                    (&centroids.row(j) - &prev.row(j))
                        .iter()
                        .map(|x| x * x)
                        .sum::<f64>()
                        .sqrt()
                })
                .fold(0.0, f64::max);
            if movement < tol {
                break;
            }
        }

        // Membership update.
        let exponent = 2.0 / (fuzzifier - 1.0);
        let mut row = vec![0.0; c];
        for i in 0..n {
            let dists: Vec<f64> = (0..c)
                .map(|j| {
                    (&points.row(i) - &centroids.row(j))
                        .iter()
                        .map(|x| x * x)
                        .sum::<f64>()
                        .sqrt()
                })
                .collect();
            membership_row(&dists, exponent, &mut row);
            for j in 0..c {
                u[[i, j]] = row[j];
            }
        }
    }
    Ok((u, centroids))
}

/// Memberships of one point given its distances to every centroid. A point
/// sitting exactly on one or more centroids splits its full membership
/// evenly among them.
fn membership_row(dists: &[f64], exponent: f64, out: &mut [f64]) {
    let c = dists.len();
    let zeros: Vec<usize> = (0..c).filter(|&j| dists[j] == 0.0).collect();
    if !zeros.is_empty() {
        out.fill(0.0);
        for &j in &zeros {
            out[j] = 1.0 / zeros.len() as f64;
        }
        return;
    }
    for j in 0..c {
        let denom: f64 = (0..c).map(|k| (dists[j] / dists[k]).powf(exponent)).sum();
        out[j] = 1.0 / denom;
    }
}

/// Centroid norm below which a cluster still sits "very close to the
/// origin" and therefore cannot be the certainly-unphysical group. The
/// neighbor-distance features of stable poles are already bounded by the
/// soft criteria (each ≲ 0.01–0.03), so a genuinely unphysical cluster
/// must stand out through its phase indicators, well above this level.
pub const VACUOUS_PARTITION_NORM: f64 = 0.05;

/// Outcome of the stage-I physical/unphysical split.
#[derive(Debug, Clone)]
pub struct PhysicalSelection {
    /// Index of the physical cluster (the centroid nearer the origin).
    pub cluster: usize,
    /// Indices of the points retained (membership ≥ 0.5 in that cluster).
    pub retained: Vec<usize>,
    /// True when both centroids sat near the origin: no certainly-unphysical
    /// population exists, so the partition retained every pole.
    pub vacuous: bool,
}

/// Choose the physical cluster of a two-cluster partition — the one whose
/// centroid is nearer the origin, physical poles having small distances
/// and indicators — and keep the points with membership ≥ 0.5 in it.
///
/// The split is meaningful only when the rejected cluster's centroid sits
/// far from the origin. When even the farther centroid lies within
/// [`VACUOUS_PARTITION_NORM`], the pole cloud holds no certainly-unphysical
/// population and forcing a two-way cut would discard physical poles, so
/// every point is retained and the selection is marked vacuous.
pub fn select_physical(
    memberships: &Array2<f64>,
    centroids: &Array2<f64>,
) -> Result<PhysicalSelection> {
    if centroids.nrows() != 2 || memberships.ncols() != 2 {
        return Err(Error::InvalidArg(
            "physical selection expects exactly two clusters".into(),
        ));
    }
    let norm = |j: usize| {
        centroids
            .row(j)
            .iter()
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    };
    let (n0, n1) = (norm(0), norm(1));
    if n0.max(n1) < VACUOUS_PARTITION_NORM {
        return Ok(PhysicalSelection {
            cluster: if n0 <= n1 { 0 } else { 1 },
            retained: (0..memberships.nrows()).collect(),
            vacuous: true,
        });
    }
    if (n0 - n1).abs() <= 1e-12 * (n0 + n1).max(1.0) {
        return Err(Error::Numeric(
            "cluster centroids equidistant from the origin; partition needs manual review".into(),
        ));
    }
    let cluster = if n0 < n1 { 0 } else { 1 };
    let retained = (0..memberships.nrows())
        .filter(|&i| memberships[[i, cluster]] >= 0.5)
        .collect();
    Ok(PhysicalSelection {
        cluster,
        retained,
        vacuous: false,
    })
}

/// A mode alignment extracted from the stable-pole cloud.
#[derive(Debug, Clone)]
pub struct ModeCluster {
    pub members: Vec<Pole>,
    /// Representative frequency: lower median of member frequencies.
    pub f: f64,
    /// Representative damping ratio: lower median of member ratios.
    pub xi: f64,
    /// Shape of the medoid member (minimum summed modal distance).
    pub shape: Array1<Complex64>,
    pub size: usize,
    /// Nearest-rank interquartile range of member frequencies.
    pub f_iqr: f64,
}

/// Modal distance used for agglomeration and for the medoid:
/// d = d_f + d_ξ + (1 − MAC).
fn pole_distance(a: &Pole, b: &Pole) -> f64 {
    let m = mac(&a.shape.view(), &b.shape.view()).unwrap_or(0.0);
    rel_f_dist(a.f, b.f) + rel_xi_dist(a.xi, b.xi) + (1.0 - m)
}

fn lower_median(sorted: &[f64]) -> f64 {
    sorted[(sorted.len() - 1) / 2]
}

/// Nearest-rank quartile: the ceil(q·n)-th smallest value.
fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

/// Reasonable floor for mode-alignment size: 20% of the number of grid
/// cells (order steps × lag steps), at least 1.
pub fn default_min_cluster_size(order_count: usize, lag_count: usize) -> usize {
    ((0.2 * (order_count * lag_count) as f64).ceil() as usize).max(1)
}

/// Average-linkage agglomeration of the retained poles under the modal
/// distance, cut at `cutoff`; alignments smaller than `min_cluster_size`
/// are discarded. Clusters come back ordered by representative frequency.
pub fn hierarchical_cluster(
    poles: Vec<Pole>,
    cutoff: f64,
    min_cluster_size: usize,
) -> Result<Vec<ModeCluster>> {
    if poles.is_empty() {
        return Err(Error::InvalidArg("no poles to cluster".into()));
    }
    if !(cutoff > 0.0) {
        return Err(Error::InvalidArg("cutoff must be positive".into()));
    }
    // Canonical order makes the whole procedure independent of input
    // permutation (ties in the linkage resolve by this order).
    let mut poles = poles;
    poles.sort_by(|a, b| {
        (a.f, a.xi, a.j_b, a.order)
            .partial_cmp(&(b.f, b.xi, b.j_b, b.order))
            .unwrap()
    });
    let n = poles.len();

    // Union of observations joined at or below the cutoff.
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        let mut root = i;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = i;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }

    if n > 1 {
        let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
        for i in 0..n {
            for j in (i + 1)..n {
                condensed.push(pole_distance(&poles[i], &poles[j]));
            }
        }
        let dendrogram = linkage(&mut condensed, n, Method::Average);
        // Track one representative observation per dendrogram label;
        // average linkage is monotone, so every cluster referenced by a
        // step at height ≤ cutoff was itself formed at height ≤ cutoff.
        let mut rep: Vec<usize> = (0..n).collect();
        for step in dendrogram.steps() {
            let r1 = rep[step.cluster1];
            let r2 = rep[step.cluster2];
            rep.push(r1);
            if step.dissimilarity <= cutoff {
                let a = find(&mut parent, r1);
                let b = find(&mut parent, r2);
                parent[a] = b;
            }
        }
    }

    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_of: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let r = find(&mut parent, i);
        match root_of[r] {
            Some(g) => groups[g].push(i),
            None => {
                root_of[r] = Some(groups.len());
                groups.push(vec![i]);
            }
        }
    }

    let mut clusters = Vec::new();
    for group in groups {
        if group.len() < min_cluster_size {
            continue;
        }
        let members: Vec<Pole> = group.iter().map(|&i| poles[i].clone()).collect();
        let mut fs: Vec<f64> = members.iter().map(|p| p.f).collect();
        fs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut xis: Vec<f64> = members.iter().map(|p| p.xi).collect();
        xis.sort_by(|a, b| a.partial_cmp(b).unwrap());

        // Medoid: minimum summed distance to the other members; ties go to
        // the earlier pole in canonical order.
        let medoid = (0..members.len())
            .map(|i| {
                let total: f64 = (0..members.len())
                    .filter(|&j| j != i)
                    .map(|j| pole_distance(&members[i], &members[j]))
                    .sum();
                (total, i)
            })
            .min_by(|a, b| a.partial_cmp(b).unwrap())
            .unwrap()
            .1;

        clusters.push(ModeCluster {
            f: lower_median(&fs),
            xi: lower_median(&xis),
            shape: members[medoid].shape.clone(),
            size: members.len(),
            f_iqr: nearest_rank(&fs, 0.75) - nearest_rank(&fs, 0.25),
            members,
        });
    }
    clusters.sort_by(|a, b| a.f.partial_cmp(&b.f).unwrap());
    Ok(clusters)
}

/// JSON digest of the extracted mode alignments.
pub fn clusters_to_json(clusters: &[ModeCluster]) -> serde_json::Value {
    let items: Vec<serde_json::Value> = clusters
        .iter()
        .map(|c| {
            let shape: Vec<f64> = c.shape.iter().flat_map(|z| [z.re, z.im]).collect();
            json!({
                "f": c.f,
                "xi": c.xi,
                "size": c.size,
                "f_iqr": c.f_iqr,
                "shape": shape,
                "members": c.members.iter().map(|p| json!({
                    "f": p.f,
                    "xi": p.xi,
                    "order": p.order,
                    "j_b": p.j_b,
                })).collect::<Vec<_>>(),
            })
        })
        .collect();
    json!(items)
}
