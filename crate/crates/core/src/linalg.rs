//! Small dense linear-algebra helpers shared by the numerical modules.
//!
//! Every rank decision uses a singular-value cutoff relative to the largest
//! singular value, so the same input always yields the same rank.

use nalgebra::{DMatrix, DVector, SVD};

/// Relative singular-value cutoff for pseudo-inverses and rank decisions.
pub const PINV_RTOL: f64 = 1e-10;

/// Singular values in descending order. Empty for empty matrices.
pub fn singular_values(a: &DMatrix<f64>) -> DVector<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DVector::zeros(0);
    }
    let mut s = a.singular_values();
    s.as_mut_slice()
        .sort_unstable_by(|x, y| y.partial_cmp(x).expect("NaN singular value"));
    s
}

/// Largest singular value (0 for empty matrices).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_values(a).iter().copied().fold(0.0, f64::max)
}

/// Smallest singular value of `a` viewed as a map on its column space.
///
/// Returns `+∞` when `a` has no columns (the map on `{0}` is trivially
/// injective) and `0` when it has more columns than rows.
pub fn sigma_min(a: &DMatrix<f64>) -> f64 {
    if a.ncols() == 0 {
        return f64::INFINITY;
    }
    if a.ncols() > a.nrows() {
        return 0.0;
    }
    singular_values(a).iter().copied().fold(f64::INFINITY, f64::min)
}

/// Moore-Penrose pseudo-inverse with cutoff `PINV_RTOL · σ_max`.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.ncols(), a.nrows());
    }
    let svd = SVD::new(a.clone(), true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let cutoff = PINV_RTOL * smax;
    let u = svd.u.as_ref().expect("U requested");
    let vt = svd.v_t.as_ref().expect("V^T requested");
    let mut out = DMatrix::zeros(a.ncols(), a.nrows());
    for (i, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += vt.row(i).transpose() * u.column(i).transpose() / s;
        }
    }
    out
}

/// Numerical rank with cutoff `PINV_RTOL · σ_max`.
pub fn rank(a: &DMatrix<f64>) -> usize {
    let s = singular_values(a);
    let smax = s.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    s.iter().filter(|&&v| v > PINV_RTOL * smax).count()
}

/// Orthonormal basis (as columns) of the range of `a`, with relative cutoff
/// `rtol · σ_max`.
pub fn orthonormal_range(a: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = SVD::new(a.clone(), true, false);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let u = svd.u.expect("U requested");
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| smax > 0.0 && s > rtol * smax)
        .map(|(i, _)| i)
        .collect();
    u.select_columns(&keep)
}

/// Orthonormal basis of the orthogonal complement of the span of the
/// orthonormal columns `q` in `R^n`.
pub fn orthonormal_complement(q: &DMatrix<f64>, n: usize) -> DMatrix<f64> {
    if q.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    if q.ncols() >= n {
        return DMatrix::zeros(n, 0);
    }
    let proj = DMatrix::identity(n, n) - q * q.transpose();
    let svd = SVD::new(proj, true, false);
    let u = svd.u.expect("U requested");
    let keep: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s > 0.5)
        .map(|(i, _)| i)
        .collect();
    u.select_columns(&keep)
}

/// Orthonormal basis of `ker(a)`.
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let row_space = orthonormal_range(&a.transpose(), PINV_RTOL);
    orthonormal_complement(&row_space, n)
}

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Ordinary least-squares line fit, returning `(slope, intercept, r²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 {
        (sxy * sxy) / (sxx * syy)
    } else {
        1.0
    };
    (slope, intercept, r2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinv_of_rank_one() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let p = pinv(&a);
        let expect = DMatrix::from_element(2, 2, 0.25);
        assert!((p - expect).abs().max() < 1e-14);
    }

    #[test]
    fn sigma_min_conventions() {
        assert_eq!(sigma_min(&DMatrix::zeros(3, 0)), f64::INFINITY);
        assert_eq!(sigma_min(&DMatrix::from_element(1, 2, 1.0)), 0.0);
        let a = DMatrix::from_row_slice(2, 1, &[3.0, 4.0]);
        assert!((sigma_min(&a) - 5.0).abs() < 1e-14);
    }

    #[test]
    fn null_space_is_orthogonal_to_rows() {
        let a = DMatrix::from_row_slice(1, 3, &[1.0, -1.0, 0.0]);
        let k = null_space(&a);
        assert_eq!(k.ncols(), 2);
        assert!((&a * &k).abs().max() < 1e-12);
        assert!((k.transpose() * &k - DMatrix::identity(2, 2)).abs().max() < 1e-12);
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x - 1.0).collect();
        let (s, c, r2) = linear_fit(&xs, &ys);
        assert!((s - 2.0).abs() < 1e-12 && (c + 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
    }
}
