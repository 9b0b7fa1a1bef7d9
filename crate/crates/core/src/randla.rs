//! Randomized low-rank SVD and the empirical rank rule.
//!
//! The randomized decomposition sketches the range of the input with a
//! Gaussian test matrix, orthonormalizes the sketch, and solves the small
//! projected SVD exactly; on matrices whose spectrum decays (as
//! block-Toeplitz correlation matrices of finite-order systems do) it
//! captures the dominant subspace at a fraction of the dense-SVD cost.
//! A deterministic full SVD is kept alongside as the classical path and
//! as the oracle the randomized one is validated against.

use ndarray::{s, Array1, Array2};
use ndarray_linalg::QRInto;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{svd_econ, svd_econ_into};

/// A (possibly truncated) singular value decomposition A ≈ U·diag(S)·Vᵀ.
#[derive(Debug, Clone)]
pub struct LowRankSvd {
    /// m×k, orthonormal columns.
    pub u: Array2<f64>,
    /// k singular values, non-increasing, non-negative.
    pub s: Array1<f64>,
    /// n×k, orthonormal columns.
    pub v: Array2<f64>,
    pub rank_k: usize,
    /// Seed of the sketching matrix; `None` for the deterministic path.
    pub seed: Option<u64>,
}

impl LowRankSvd {
    /// Side length of the original (square) input, when square.
    pub fn rows(&self) -> usize {
        self.u.nrows()
    }
}

/// Advisory minimum sketch rank, as a percentage of the Toeplitz side
/// length: max(30 − 0.00156·T, 25).
pub fn min_rank_percent(t: usize) -> f64 {
    (30.0 - 0.00156 * t as f64).max(25.0)
}

/// Turn a rank percentage into a column count: ceil(percent·T/100),
/// clamped to [1, T].
pub fn sample_count(percent: f64, t: usize) -> Result<usize> {
    if !(percent > 0.0 && percent <= 100.0) {
        return Err(Error::InvalidArg(format!(
            "rank percentage {percent} outside (0, 100]"
        )));
    }
    if t < 1 {
        return Err(Error::InvalidArg("matrix side must be positive".into()));
    }
    let k = (percent * t as f64 / 100.0).ceil() as usize;
    Ok(k.clamp(1, t))
}

fn check_finite(a: &Array2<f64>) -> Result<()> {
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("matrix contains non-finite entries".into()));
    }
    Ok(())
}

/// Randomized SVD with target rank `k`, seeded and bit-reproducible.
///
/// Sketch: Ω is n×k with i.i.d. standard-normal entries, filled
/// column-by-column from a ChaCha stream seeded by `seed`. Then
/// Y = A·Ω, Q from the economy QR of Y, P = Qᵀ·A, the economy SVD of the
/// small P gives Ũ·S·Vᵀ, and U = Q·Ũ.
pub fn rsvd(a: &Array2<f64>, k: usize, seed: u64) -> Result<LowRankSvd> {
    rsvd_oversampled(a, k, seed, 0)
}

/// [`rsvd`] with `p` extra sketch columns (truncated back to `k` at the
/// end). The plain algorithm uses p = 0; a small p buys accuracy on slowly
/// decaying spectra at proportional cost.
pub fn rsvd_oversampled(a: &Array2<f64>, k: usize, seed: u64, p: usize) -> Result<LowRankSvd> {
    let (m, n) = a.dim();
    let kmax = m.min(n);
    if k < 1 || k > kmax {
        return Err(Error::InvalidArg(format!(
            "target rank {k} outside 1..={kmax}"
        )));
    }
    check_finite(a)?;
    let kk = (k + p).min(kmax);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut omega = Array2::<f64>::zeros((n, kk));
    for col in 0..kk {
        for row in 0..n {
            omega[[row, col]] = rng.sample::<f64, _>(StandardNormal);
        }
    }

    let y = a.dot(&omega);
    let (q, _r) = y.qr_into()?;
    let p_small = q.t().dot(a);
    let (u_tilde, sv, vt) = svd_econ_into(p_small)?;
    let u_full = q.dot(&u_tilde);

    Ok(LowRankSvd {
        u: u_full.slice(s![.., ..k]).to_owned(),
        s: sv.slice(s![..k]).to_owned(),
        v: vt.slice(s![..k, ..]).t().to_owned(),
        rank_k: k,
        seed: Some(seed),
    })
}

/// Deterministic economy SVD (k = min(m, n)); the classical path and the
/// test oracle.
pub fn full_svd(a: &Array2<f64>) -> Result<LowRankSvd> {
    check_finite(a)?;
    let k = a.nrows().min(a.ncols());
    let (u, s, vt) = svd_econ(a)?;
    Ok(LowRankSvd {
        u,
        s,
        v: vt.reversed_axes(),
        rank_k: k,
        seed: None,
    })
}

/// [`full_svd`] that consumes its input, letting LAPACK work without the
/// caller-side copy — this is what makes a fair peak-memory comparison
/// possible at large sizes.
pub fn full_svd_into(a: Array2<f64>) -> Result<LowRankSvd> {
    check_finite(&a)?;
    let k = a.nrows().min(a.ncols());
    let (u, s, vt) = svd_econ_into(a)?;
    Ok(LowRankSvd {
        u,
        s,
        v: vt.reversed_axes(),
        rank_k: k,
        seed: None,
    })
}

/// Relative Frobenius reconstruction error ‖A − U·diag(S)·Vᵀ‖_F / ‖A‖_F
/// (0 for an all-zero A).
pub fn reconstruction_error(a: &Array2<f64>, f: &LowRankSvd) -> f64 {
    let norm_a = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm_a == 0.0 {
        return 0.0;
    }
    let us = &f.u * &f.s; // scales column j of U by S[j]
    let recon = us.dot(&f.v.t());
    let diff = a - &recon;
    diff.iter().map(|x| x * x).sum::<f64>().sqrt() / norm_a
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn orthonormal_within(m: &Array2<f64>, tol: f64) -> bool {
        let gram = m.t().dot(m);
        let k = gram.nrows();
        (0..k).all(|i| {
            (0..k).all(|j| {
                let want = if i == j { 1.0 } else { 0.0 };
                (gram[[i, j]] - want).abs() <= tol
            })
        })
    }

    fn random_matrix(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((m, n), |_| rng.sample::<f64, _>(StandardNormal))
    }

    #[test]
    fn rank_rule_anchors() {
        assert_abs_diff_eq!(min_rank_percent(1890), 27.0516, epsilon = 1e-9);
        assert_abs_diff_eq!(min_rank_percent(11400), 25.0, epsilon = 1e-12);
        assert_abs_diff_eq!(min_rank_percent(1), 29.99844, epsilon = 1e-9);
        assert_eq!(sample_count(27.05, 1890).unwrap(), 512);
        assert_eq!(sample_count(min_rank_percent(1890), 1890).unwrap(), 512);
        assert_eq!(sample_count(100.0, 50).unwrap(), 50);
        assert_eq!(sample_count(25.0, 11400).unwrap(), 2850);
        assert!(sample_count(0.0, 10).is_err());
        assert!(sample_count(101.0, 10).is_err());
    }

    #[test]
    fn rsvd_recovers_embedded_diagonal() {
        let mut a = Array2::<f64>::zeros((5, 5));
        a[[0, 0]] = 3.0;
        a[[1, 1]] = 2.0;
        a[[2, 2]] = 1.0;
        let f = rsvd(&a, 3, 7).unwrap();
        assert_abs_diff_eq!(f.s[0], 3.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.s[1], 2.0, epsilon = 1e-10);
        assert_abs_diff_eq!(f.s[2], 1.0, epsilon = 1e-10);
        assert!(orthonormal_within(&f.u, 1e-10));
        assert!(orthonormal_within(&f.v, 1e-10));
    }

    #[test]
    fn rsvd_rank_one_identity() {
        let u = Array1::from_shape_fn(20, |i| (i as f64 * 0.37).sin() + 0.1);
        let v = Array1::from_shape_fn(15, |i| (i as f64 * 0.73).cos() - 0.2);
        let a = Array2::from_shape_fn((20, 15), |(i, j)| u[i] * v[j]);
        let f = rsvd(&a, 1, 123).unwrap();
        let norm_u = u.dot(&u).sqrt();
        let norm_v = v.dot(&v).sqrt();
        assert_abs_diff_eq!(f.s[0], norm_u * norm_v, epsilon = 1e-10);
        assert!(reconstruction_error(&a, &f) < 1e-10);
    }

    #[test]
    fn rsvd_captures_exact_low_rank() {
        // 200×200 of exact rank 10: range capture is exact, so the error
        // must hit numerical zero for any seed, and the singular values
        // must agree with the dense decomposition.
        let left = random_matrix(200, 10, 1);
        let right = random_matrix(10, 200, 2);
        let a = left.dot(&right);
        let dense = full_svd(&a).unwrap();
        for seed in [0u64, 1, 99] {
            let f = rsvd(&a, 12, seed).unwrap();
            assert!(reconstruction_error(&a, &f) <= 1e-8, "seed {seed}");
            for i in 0..10 {
                let rel = (f.s[i] - dense.s[i]).abs() / dense.s[0];
                assert!(rel <= 1e-8, "seed {seed}, σ_{i}");
            }
        }
    }

    #[test]
    fn rsvd_is_bit_deterministic() {
        let a = random_matrix(40, 30, 5);
        let f1 = rsvd(&a, 8, 42).unwrap();
        let f2 = rsvd(&a, 8, 42).unwrap();
        assert!(f1
            .u
            .iter()
            .zip(f2.u.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(f1
            .s
            .iter()
            .zip(f2.s.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(f1
            .v
            .iter()
            .zip(f2.v.iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        // A different seed draws a different sketch.
        let f3 = rsvd(&a, 8, 43).unwrap();
        assert!(f1.u.iter().zip(f3.u.iter()).any(|(x, y)| x != y));
    }

    #[test]
    fn rsvd_never_exceeds_dense_singular_values() {
        // The projected problem is a compression: σ̃_i ≤ σ_i up to rounding.
        let a = random_matrix(60, 45, 9);
        let dense = full_svd(&a).unwrap();
        for seed in [3u64, 17] {
            let f = rsvd(&a, 20, seed).unwrap();
            for i in 0..20 {
                assert!(
                    f.s[i] <= dense.s[i] * (1.0 + 1e-8),
                    "σ̃_{i} = {} > σ_{i} = {}",
                    f.s[i],
                    dense.s[i]
                );
            }
        }
    }

    #[test]
    fn rsvd_rejects_bad_rank_and_nonfinite() {
        let a = random_matrix(10, 8, 0);
        assert!(rsvd(&a, 0, 1).is_err());
        assert!(rsvd(&a, 9, 1).is_err());
        let mut b = a.clone();
        b[[3, 3]] = f64::NAN;
        assert!(rsvd(&b, 2, 1).is_err());
        assert!(full_svd(&b).is_err());
    }

    #[test]
    fn full_svd_known_matrices() {
        let eye = Array2::<f64>::eye(2);
        let f = full_svd(&eye).unwrap();
        assert_abs_diff_eq!(f.s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.s[1], 1.0, epsilon = 1e-12);

        let swap = array![[0.0, 1.0], [1.0, 0.0]];
        let f = full_svd(&swap).unwrap();
        assert_abs_diff_eq!(f.s[0], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f.s[1], 1.0, epsilon = 1e-12);
        assert!(reconstruction_error(&swap, &f) < 1e-12);
    }

    #[test]
    fn full_svd_transpose_invariance() {
        let a = random_matrix(50, 50, 11);
        let f = full_svd(&a).unwrap();
        let ft = full_svd(&a.t().to_owned()).unwrap();
        for i in 0..50 {
            assert_abs_diff_eq!(f.s[i], ft.s[i], epsilon = 1e-10 * f.s[0]);
        }
        assert!(orthonormal_within(&f.u, 1e-10));
        assert!(orthonormal_within(&f.v, 1e-10));
    }

    #[test]
    fn consuming_and_borrowing_svd_agree() {
        let a = random_matrix(30, 30, 13);
        let f1 = full_svd(&a).unwrap();
        let f2 = full_svd_into(a.clone()).unwrap();
        for (x, y) in f1.s.iter().zip(f2.s.iter()) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn reconstruction_error_eckart_young() {
        let a = random_matrix(30, 20, 21);
        let dense = full_svd(&a).unwrap();
        assert!(reconstruction_error(&a, &dense) < 1e-12);

        let k = 5;
        let trunc = LowRankSvd {
            u: dense.u.slice(s![.., ..k]).to_owned(),
            s: dense.s.slice(s![..k]).to_owned(),
            v: dense.v.slice(s![.., ..k]).to_owned(),
            rank_k: k,
            seed: None,
        };
        let tail: f64 = dense.s.iter().skip(k).map(|x| x * x).sum::<f64>().sqrt();
        let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert_abs_diff_eq!(
            reconstruction_error(&a, &trunc),
            tail / norm_a,
            epsilon = 1e-10
        );

        let zero = Array2::<f64>::zeros((4, 4));
        let fz = full_svd(&zero).unwrap();
        assert_eq!(reconstruction_error(&zero, &fz), 0.0);
    }

    #[test]
    fn rsvd_tracks_truncation_on_decaying_spectrum() {
        // Geometric spectral decay; over 20 seeds the randomized error must
        // stay within 10× of the optimal rank-k truncation error.
        let m = 60;
        let q1 = full_svd(&random_matrix(m, m, 31)).unwrap().u;
        let q2 = full_svd(&random_matrix(m, m, 32)).unwrap().u;
        let sing = Array1::from_shape_fn(m, |i| 0.5f64.powi(i as i32));
        let a = (&q1 * &sing).dot(&q2.t());

        let dense = full_svd(&a).unwrap();
        let k = 8;
        let tail: f64 = dense.s.iter().skip(k).map(|x| x * x).sum::<f64>().sqrt();
        let norm_a: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let optimal = tail / norm_a;
        for seed in 0..20u64 {
            let f = rsvd(&a, k, seed).unwrap();
            let err = reconstruction_error(&a, &f);
            assert!(
                err <= 10.0 * optimal,
                "seed {seed}: {err} vs optimal {optimal}"
            );
        }
    }

    #[test]
    fn oversampling_only_improves_capture() {
        let a = random_matrix(80, 80, 41);
        let plain = rsvd(&a, 10, 5).unwrap();
        let padded = rsvd_oversampled(&a, 10, 5, 10).unwrap();
        assert_eq!(padded.rank_k, 10);
        assert_eq!(padded.u.ncols(), 10);
        assert!(reconstruction_error(&a, &padded) <= reconstruction_error(&a, &plain) + 1e-12);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn factors_stay_orthonormal(seed in 0u64..1000, m in 5usize..24, n in 5usize..24, kf in 0.2f64..1.0) {
            let a = random_matrix(m, n, seed);
            let k = ((m.min(n) as f64 * kf) as usize).max(1);
            let f = rsvd(&a, k, seed ^ 0xabcd).unwrap();
            prop_assert!(orthonormal_within(&f.u, 1e-10));
            prop_assert!(orthonormal_within(&f.v, 1e-10));
            prop_assert!(f.s.windows(2).into_iter().all(|w| w[0] >= w[1] - 1e-12));
            prop_assert!(f.s.iter().all(|x| *x >= 0.0));
        }
    }
}
