//! Small dense linear-algebra helpers shared across the crate.
//!
//! These wrap the LAPACK-backed traits from `ndarray-linalg` behind the few
//! call shapes the identification pipeline needs, and add a matrix
//! exponential (scaling-and-squaring Padé) that LAPACK does not provide.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use ndarray_linalg::{Eig, Inverse, JobSvd, OperationNorm, SVDDCInto, SVDDC};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Economy SVD `A = U diag(s) Vᵀ`, singular values non-increasing.
/// Returns `(U m×k, s k, Vᵀ k×n)` with `k = min(m, n)`.
pub fn svd_econ(a: &Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (u, s, vt) = a.svddc(JobSvd::Some)?;
    Ok((
        u.ok_or_else(|| Error::Numeric("svd returned no U".into()))?,
        s,
        vt.ok_or_else(|| Error::Numeric("svd returned no VT".into()))?,
    ))
}

/// Economy SVD that consumes (and overwrites) its input, avoiding the
/// defensive copy of [`svd_econ`]. Use for very large matrices.
pub fn svd_econ_into(a: Array2<f64>) -> Result<(Array2<f64>, Array1<f64>, Array2<f64>)> {
    let (u, s, vt) = a.svddc_into(JobSvd::Some)?;
    Ok((
        u.ok_or_else(|| Error::Numeric("svd returned no U".into()))?,
        s,
        vt.ok_or_else(|| Error::Numeric("svd returned no VT".into()))?,
    ))
}

/// Eigendecomposition of a general real square matrix: `A ψ = μ ψ` with
/// complex eigenvalues and right eigenvectors (columns).
pub fn eig_general(a: &Array2<f64>) -> Result<(Array1<Complex64>, Array2<Complex64>)> {
    let (vals, vecs) = a.eig()?;
    Ok((vals, vecs))
}

/// Minimum-norm least-squares solve `argmin_X ‖A X − B‖_F` through the SVD of
/// `A`, discarding singular values below `rcond · σ₁`.
pub fn lstsq_svd(a: &Array2<f64>, b: &Array2<f64>, rcond: f64) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::InvalidArg(format!(
            "lstsq row mismatch: {} vs {}",
            a.nrows(),
            b.nrows()
        )));
    }
    let (u, s, vt) = svd_econ(a)?;
    let cut = s.first().copied().unwrap_or(0.0) * rcond;
    // X = V · diag(1/s) · Uᵀ · B, truncated at the cutoff.
    let utb = u.t().dot(b);
    let mut scaled = utb;
    for (i, mut row) in scaled.axis_iter_mut(Axis(0)).enumerate() {
        let si = s[i];
        let inv = if si > cut && si > 0.0 { 1.0 / si } else { 0.0 };
        row.mapv_inplace(|x| x * inv);
    }
    Ok(vt.t().dot(&scaled))
}

/// Scale a complex vector to unit 2-norm and rotate its largest-modulus
/// component onto the positive real axis, removing the arbitrary complex
/// scaling of an eigenvector so shapes can be compared and stored
/// canonically.
pub fn normalize_shape(mut shape: Array1<Complex64>) -> Result<Array1<Complex64>> {
    let norm = shape.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Numeric("zero mode shape".into()));
    }
    let pivot = shape
        .iter()
        .cloned()
        .max_by(|a, b| a.norm_sqr().partial_cmp(&b.norm_sqr()).unwrap())
        .unwrap();
    let phase = pivot / pivot.norm();
    let scale = phase.conj() / norm;
    shape.mapv_inplace(|z| z * scale);
    Ok(shape)
}

/// Matrix exponential by scaling-and-squaring with a degree-13 Padé
/// approximant. Accurate to machine precision for the well-scaled state
/// matrices this crate produces; cost is a handful of matmuls plus one solve.
pub fn expm(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::InvalidArg("expm requires a square matrix".into()));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("expm input has non-finite entries".into()));
    }

    // Degree-13 Padé coefficients.
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    // 1-norm threshold above which the argument is halved repeatedly.
    const THETA_13: f64 = 5.371920351148152;

    let norm = a.opnorm_one()?;
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = a.mapv(|x| x / 2f64.powi(s));

    let eye = Array2::<f64>::eye(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a2.dot(&a4);

    let u_inner = a6.dot(&(&a6 * B[13] + &a4 * B[11] + &a2 * B[9]))
        + &a6 * B[7]
        + &a4 * B[5]
        + &a2 * B[3]
        + &eye * B[1];
    let u = a.dot(&u_inner);
    let v = a6.dot(&(&a6 * B[12] + &a4 * B[10] + &a2 * B[8]))
        + &a6 * B[6]
        + &a4 * B[4]
        + &a2 * B[2]
        + &eye * B[0];

    // (V − U)⁻¹ (V + U); the matrices here are small (state dimension),
    // so an explicit inverse is fine.
    let num = &v + &u;
    let den = &v - &u;
    let mut r = den.inv()?.dot(&num);
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}
