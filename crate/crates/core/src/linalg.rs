//! Fixed-size helpers. Three-dimensional objects are padded to four components.

use alloc::vec::Vec;
use nalgebra::{DMatrix, Matrix4, Vector4};
use num_traits::Float;

pub type V4 = Vector4<f64>;
pub type M4 = Matrix4<f64>;

/// `gamma[k][(i, j)] = Γ^k_{ij}`.
pub type Christoffel = [M4; 4];

/// Component array of a (0,4) tensor, `r[a][b][c][d]`.
pub type Tensor4 = [[[[f64; 4]; 4]; 4]; 4];

pub fn zero_tensor4() -> Tensor4 {
    [[[[0.0; 4]; 4]; 4]; 4]
}

/// Identity-padded copy of the leading `d x d` block.
pub fn pad(m: &M4, d: usize) -> M4 {
    let mut out = M4::identity();
    for i in 0..d {
        for j in 0..d {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

pub fn leading_block(m: &M4, d: usize) -> DMatrix<f64> {
    DMatrix::from_fn(d, d, |i, j| m[(i, j)])
}

/// Columns form a `g`-orthonormal frame: `e^T g e = I` on the leading block.
pub fn orthonormal_frame(g: &M4) -> Option<M4> {
    let l = g.cholesky()?.l();
    l.transpose().try_inverse()
}

/// Symmetric inverse with a positive-definiteness check.
pub fn spd_inverse(g: &M4) -> Option<M4> {
    let c = g.cholesky()?;
    Some(c.inverse())
}

pub fn dot_g(g: &M4, a: &V4, b: &V4) -> f64 {
    (a.transpose() * g * b)[(0, 0)]
}

pub fn norm_g(g: &M4, a: &V4) -> f64 {
    Float::sqrt(dot_g(g, a, a).max(0.0))
}

/// Largest singular value of the leading `rows x cols` block.
pub fn spectral_norm(m: &M4, rows: usize, cols: usize) -> f64 {
    let dm = DMatrix::from_fn(rows, cols, |i, j| m[(i, j)]);
    dm.svd(false, false).singular_values.max()
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| a.total_cmp(b));
    s
}

/// Frobenius norm of a (0,4) tensor after moving it into the frame `e`.
pub fn tensor4_frame_norm(r: &Tensor4, e: &M4, d: usize) -> f64 {
    // Contract one slot at a time; `d^5` work per slot.
    let mut a = *r;
    for slot in 0..4 {
        let mut b = zero_tensor4();
        for i in 0..d {
            for j in 0..d {
                for k in 0..d {
                    for l in 0..d {
                        let mut acc = 0.0;
                        for m in 0..d {
                            let (src, w) = match slot {
                                0 => (a[m][j][k][l], e[(m, i)]),
                                1 => (a[i][m][k][l], e[(m, j)]),
                                2 => (a[i][j][m][l], e[(m, k)]),
                                _ => (a[i][j][k][m], e[(m, l)]),
                            };
                            acc += src * w;
                        }
                        b[i][j][k][l] = acc;
                    }
                }
            }
        }
        a = b;
    }
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            for k in 0..d {
                for l in 0..d {
                    s += a[i][j][k][l] * a[i][j][k][l];
                }
            }
        }
    }
    Float::sqrt(s)
}

/// Ordinary least squares of `y` on `x`: returns `(slope, intercept, rms residual)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Option<(f64, f64, f64)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return None;
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let icept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - (icept + slope * a);
            e * e
        })
        .sum();
    Some((slope, icept, Float::sqrt(rss / nf)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_is_orthonormal() {
        let g = M4::new(
            2.0, 0.3, 0.0, 0.1, 0.3, 1.5, 0.2, 0.0, 0.0, 0.2, 1.0, 0.0, 0.1, 0.0, 0.0, 3.0,
        );
        let e = orthonormal_frame(&g).unwrap();
        let id = e.transpose() * g * e;
        assert!((id - M4::identity()).norm() < 1e-13);
    }

    #[test]
    fn fit_recovers_line() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [1.0, 3.0, 5.0, 7.0];
        let (a, b, res) = linear_fit(&x, &y).unwrap();
        assert!((a - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14 && res < 1e-14);
        assert!(linear_fit(&[1.0, 1.0], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn frame_norm_of_identity_tensor() {
        let mut t = zero_tensor4();
        t[0][1][0][1] = 1.0;
        t[1][0][1][0] = 1.0;
        let g = M4::identity() * 4.0;
        let e = orthonormal_frame(&g).unwrap();
        // each index picks up a factor 1/2
        assert!((tensor4_frame_norm(&t, &e, 4) - (2.0f64).sqrt() / 16.0).abs() < 1e-15);
    }
}
