//! Real Wigner-D matrices for rotations of band-limited functions on the sphere.
//!
//! Coefficients are taken with respect to real spherical harmonics ordered
//! `m = -l..=l` inside each degree, sine-type for `m < 0` and cosine-type for
//! `m > 0`. A rotation `g` acts by `(g.f)(u) = f(g^{-1} u)` and Euler angles
//! follow the ZYZ convention `g = Rz(alpha) Ry(beta) Rz(gamma)`.

use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::{Complex, DMatrix, Matrix3};

use crate::error::{Error, Result};

/// Largest supported band limit.
pub const MAX_BAND_LIMIT: usize = 16;

fn factorial(n: i64) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// `d^l_{m'm}(beta)` from the explicit finite sum. Only used to seed the
/// degree recursion, where the sum has a single term.
fn small_d_direct(l: i64, mp: i64, m: i64, beta: f64) -> f64 {
    let (c, s) = ((0.5 * beta).cos(), (0.5 * beta).sin());
    let pre = (factorial(l + mp) * factorial(l - mp) * factorial(l + m) * factorial(l - m)).sqrt();
    let lo = 0.max(m - mp);
    let hi = (l + m).min(l - mp);
    let mut sum = 0.0;
    for k in lo..=hi {
        let sign = if (mp - m + k) % 2 == 0 { 1.0 } else { -1.0 };
        let den = factorial(l + m - k) * factorial(k) * factorial(mp - m + k) * factorial(l - mp - k);
        sum += sign * c.powi((2 * l + m - mp - 2 * k) as i32) * s.powi((mp - m + 2 * k) as i32) / den;
    }
    pre * sum
}

/// Wigner small-d matrices `d^l(beta)` for `l = 0..=band_limit`; entry
/// `(m' + l, m + l)` of element `l` holds `d^l_{m'm}(beta)`.
///
/// Each `(m', m)` column of degrees is seeded at `l = max(|m|, |m'|)` and
/// continued by the three-term recursion in `l`.
pub fn wigner_small_d(band_limit: usize, beta: f64) -> Vec<DMatrix<f64>> {
    let lmax = band_limit as i64;
    let mut out: Vec<DMatrix<f64>> = (0..=band_limit).map(|l| DMatrix::zeros(2 * l + 1, 2 * l + 1)).collect();
    let cb = beta.cos();
    for mp in -lmax..=lmax {
        for m in -lmax..=lmax {
            let l0 = mp.abs().max(m.abs());
            let mut prev = 0.0;
            let mut cur;
            let mut l;
            if l0 == 0 {
                out[0][(0, 0)] = 1.0;
                if lmax == 0 {
                    continue;
                }
                prev = 1.0;
                cur = cb;
                l = 1;
            } else {
                cur = small_d_direct(l0, mp, m, beta);
                l = l0;
            }
            out[l as usize][((mp + l) as usize, (m + l) as usize)] = cur;
            while l < lmax {
                let lf = l as f64;
                let (mf, mpf) = (m as f64, mp as f64);
                let next_den = (((lf + 1.0).powi(2) - mf * mf) * ((lf + 1.0).powi(2) - mpf * mpf)).sqrt();
                let back = ((lf * lf - mf * mf) * (lf * lf - mpf * mpf)).sqrt() / (lf * (2.0 * lf + 1.0));
                let next = (lf + 1.0) * (2.0 * lf + 1.0) / next_den
                    * ((cb - mf * mpf / (lf * (lf + 1.0))) * cur - back * prev);
                prev = cur;
                cur = next;
                l += 1;
                out[l as usize][((mp + l) as usize, (m + l) as usize)] = cur;
            }
        }
    }
    out
}

/// Rows: real harmonics; columns: complex harmonics `Y_{l,k}`, both indexed `-l..=l`.
fn real_from_complex(l: usize) -> DMatrix<Complex<f64>> {
    let d = 2 * l + 1;
    let li = l as i64;
    let mut u = DMatrix::from_element(d, d, Complex::new(0.0, 0.0));
    let idx = |m: i64| (m + li) as usize;
    u[(idx(0), idx(0))] = Complex::new(1.0, 0.0);
    for mu in 1..=li {
        let sign = if mu % 2 == 0 { 1.0 } else { -1.0 };
        u[(idx(mu), idx(mu))] = Complex::new(sign * FRAC_1_SQRT_2, 0.0);
        u[(idx(mu), idx(-mu))] = Complex::new(FRAC_1_SQRT_2, 0.0);
        u[(idx(-mu), idx(-mu))] = Complex::new(0.0, FRAC_1_SQRT_2);
        u[(idx(-mu), idx(mu))] = Complex::new(0.0, -sign * FRAC_1_SQRT_2);
    }
    u
}

fn check_band_limit(band_limit: usize) -> Result<()> {
    if band_limit > MAX_BAND_LIMIT {
        return Err(Error::Unsupported(format!(
            "band limit {band_limit} exceeds the supported maximum {MAX_BAND_LIMIT}"
        )));
    }
    Ok(())
}

/// Real Wigner-D blocks `D^0, ..., D^L` of the rotation with Euler angles
/// `(alpha, beta, gamma)`.
pub fn real_wigner_blocks(band_limit: usize, alpha: f64, beta: f64, gamma: f64) -> Result<Vec<DMatrix<f64>>> {
    check_band_limit(band_limit)?;
    if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite()) {
        return Err(Error::InvalidParameter("Euler angles must be finite".into()));
    }
    let small = wigner_small_d(band_limit, beta);
    let mut blocks = Vec::with_capacity(band_limit + 1);
    for (l, d) in small.iter().enumerate() {
        let li = l as i64;
        let dim = 2 * l + 1;
        let dc = DMatrix::from_fn(dim, dim, |i, j| {
            let (mp, m) = (i as i64 - li, j as i64 - li);
            Complex::from_polar(d[(i, j)], -(mp as f64) * alpha - (m as f64) * gamma)
        });
        let u = real_from_complex(l);
        let real = u.map(|z| z.conj()) * dc * u.transpose();
        debug_assert!(real.iter().all(|z| z.im.abs() < 1e-9));
        blocks.push(real.map(|z| z.re));
    }
    Ok(blocks)
}

/// Block-diagonal `(L+1)^2 x (L+1)^2` real Wigner-D matrix.
pub fn wigner_block(band_limit: usize, alpha: f64, beta: f64, gamma: f64) -> Result<DMatrix<f64>> {
    let blocks = real_wigner_blocks(band_limit, alpha, beta, gamma)?;
    let n = (band_limit + 1) * (band_limit + 1);
    let mut out = DMatrix::zeros(n, n);
    let mut off = 0;
    for b in blocks {
        let d = b.nrows();
        out.view_mut((off, off), (d, d)).copy_from(&b);
        off += d;
    }
    Ok(out)
}

/// `Rz(alpha) Ry(beta) Rz(gamma)`.
pub fn rotation_matrix(alpha: f64, beta: f64, gamma: f64) -> Matrix3<f64> {
    let rz = |t: f64| Matrix3::new(t.cos(), -t.sin(), 0.0, t.sin(), t.cos(), 0.0, 0.0, 0.0, 1.0);
    let ry = Matrix3::new(beta.cos(), 0.0, beta.sin(), 0.0, 1.0, 0.0, -beta.sin(), 0.0, beta.cos());
    rz(alpha) * ry * rz(gamma)
}

/// ZYZ Euler angles of a rotation matrix, with `beta` in `[0, pi]`.
pub fn euler_angles(r: &Matrix3<f64>) -> (f64, f64, f64) {
    let beta = r[(2, 2)].clamp(-1.0, 1.0).acos();
    let sb = beta.sin();
    if sb > 1e-12 {
        let alpha = r[(1, 2)].atan2(r[(0, 2)]);
        let gamma = r[(2, 1)].atan2(-r[(2, 0)]);
        (alpha, beta, gamma)
    } else if r[(2, 2)] > 0.0 {
        // only alpha + gamma is determined
        (r[(1, 0)].atan2(r[(0, 0)]), 0.0, 0.0)
    } else {
        ((-r[(1, 0)]).atan2(-r[(0, 0)]), std::f64::consts::PI, 0.0)
    }
}
