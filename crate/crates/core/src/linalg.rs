//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector};

/// Singular values sorted in decreasing order.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut sv: Vec<f64> = m.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    sv
}

/// Number of singular values above `rel_tol * largest`. A zero matrix has rank 0.
pub fn numerical_rank(singular_values: &[f64], rel_tol: f64) -> usize {
    let largest = singular_values.iter().copied().fold(0.0_f64, f64::max);
    if largest <= f64::MIN_POSITIVE {
        return 0;
    }
    singular_values.iter().filter(|&&s| s > rel_tol * largest).count()
}

/// Orthonormal factor of a QR decomposition with the sign ambiguity removed
/// (diag(R) >= 0), which makes the factorisation unique for full-rank input.
pub fn orthonormal_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let qr = m.clone().qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..q.ncols().min(r.nrows()) {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

/// `max |A^T A - I|` entrywise.
pub fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.ncols();
    max_abs(&(m.transpose() * m - DMatrix::<f64>::identity(n, n)))
}

/// `min(|x - y|, |x + y|)`: distance between the classes `{x, -x}` and `{y, -y}`.
pub fn sign_aligned_distance(x: &DVector<f64>, y: &DVector<f64>) -> f64 {
    (x - y).norm().min((x + y).norm())
}

/// Least-squares slope of `ys` against `xs`.
pub fn fitted_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

pub fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_of_zero_matrix_is_zero() {
        let sv = singular_values(&DMatrix::zeros(3, 4));
        assert_eq!(numerical_rank(&sv, 1e-6), 0);
    }

    #[test]
    fn orthonormal_factor_has_positive_r_diagonal() {
        let m = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, 0.5, 3.0]);
        let q = orthonormal_factor(&m);
        let r = q.transpose() * &m;
        assert!(r[(0, 0)] > 0.0 && r[(1, 1)] > 0.0);
        assert!(orthogonality_defect(&q) < 1e-14);
    }

    #[test]
    fn slope_of_exact_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 4.0 * x - 1.0).collect();
        assert!((fitted_slope(&xs, &ys) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&mut [3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&mut [4.0, 1.0, 3.0, 2.0]), 2.5);
    }
}
