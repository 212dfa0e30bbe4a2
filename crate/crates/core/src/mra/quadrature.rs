//! Quadrature rules for averages over the groups.

use std::f64::consts::PI;

/// Gauss–Legendre nodes and weights on `[-1, 1]` (exact for polynomials of
/// degree `2n - 1`).
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            // P_n(x) and P_n'(x) by the three-term recurrence
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pn1 = if n <= 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pn1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = x;
        weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// Product rule on SO(3) for the normalised Haar measure: Gauss–Legendre in
/// `cos(beta)` and trapezoid in `alpha`, `gamma`. Integrates products of two
/// Wigner-D entries of degree at most `band_limit` exactly. Returns
/// `(alpha, beta, gamma, weight)` with weights summing to one.
pub fn so3_quadrature(band_limit: usize) -> Vec<(f64, f64, f64, f64)> {
    let nb = band_limit + 2;
    let na = 2 * band_limit + 2;
    let (nodes, weights) = gauss_legendre(nb);
    let mut out = Vec::with_capacity(nb * na * na);
    for (c, w) in nodes.iter().zip(&weights) {
        let beta = c.clamp(-1.0, 1.0).acos();
        for i in 0..na {
            let alpha = 2.0 * PI * i as f64 / na as f64;
            for j in 0..na {
                let gamma = 2.0 * PI * j as f64 / na as f64;
                out.push((alpha, beta, gamma, 0.5 * w / (na * na) as f64));
            }
        }
    }
    out
}
