//! The convolution-smoothed fibration `f` and its derivatives.
//!
//! Everything is computed on `T_x M` in the frame coordinates `z` of the GH chart,
//! where `g_x` is the identity. For a query point `z`,
//!
//! `f̂(z) = Σ ĥ(z+u) χ_ε(ρ(z+u, z)) √det ĝ(z+u) W(u) / Σ χ_ε(…) √det ĝ(z+u) W(u)`,
//!
//! with a tensor Gauss–Legendre rule `u` centered at `z` and clipped to the support of
//! `χ_ε`, and `ρ(v, w) ≈ ½ Δᵀ (ĝ(v) + ĝ(w))/2 Δ`. Node data (the pulled-back metric
//! `ĝ`, its volume factor and the lift correction `ĥ(v) − v_H`) vary on the scale of
//! `r(x)`, so they are computed once on a lattice of spacing `ε/2` and interpolated by
//! tensor Catmull–Rom splines. Centering the rule makes the leading term `z_H`
//! exact: only the small corrections see quadrature error.

use super::chi_eps;
use super::gh::{GhChart, HVec};
use crate::geodesics::exp_jet;
use crate::linalg::{orthonormal_frame, singular_values};
use crate::{GeomError, Model, Result, M4, V4};
use alloc::vec;
use alloc::vec::Vec;
use core::cell::RefCell;
use hashbrown::HashMap;
use nalgebra::{DMatrix, SymmetricEigen};
use num_traits::Float;

/// Fields per lattice node: `ĝ` (16, column-major), `√det ĝ`, `ĥ − v_H` (3).
const NF: usize = 20;

type Node = [f64; NF];

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let mut t = Float::cos(core::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5));
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, t);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * t * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (t * p1 - p0) / (t * t - 1.0);
            let dt = p1 / dp;
            t -= dt;
            if dt.abs() < 1e-16 {
                break;
            }
        }
        x[i] = t;
        w[i] = 2.0 / ((1.0 - t * t) * dp * dp);
    }
    (x, w)
}

fn catmull_rom(t: f64) -> [f64; 4] {
    let (t2, t3) = (t * t, t * t * t);
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}

fn catmull_rom_d(t: f64) -> [f64; 4] {
    let t2 = t * t;
    [
        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
        0.5 * (9.0 * t2 - 10.0 * t),
        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
        0.5 * (3.0 * t2 - 2.0 * t),
    ]
}

/// `out[o, i, r] = Σ_j w[i, j] data[o, j, r]` along `axis`.
fn mode_product(
    data: &[f64],
    shape: &[usize],
    axis: usize,
    w: &DMatrix<f64>,
) -> (Vec<f64>, Vec<usize>) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    let (m, n) = (w.nrows(), shape[axis]);
    let mut out = vec![0.0; outer * m * inner];
    for o in 0..outer {
        for i in 0..m {
            let dst = &mut out[(o * m + i) * inner..(o * m + i + 1) * inner];
            for j in 0..n {
                let c = w[(i, j)];
                if c == 0.0 {
                    continue;
                }
                let src = &data[(o * n + j) * inner..(o * n + j + 1) * inner];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += c * s;
                }
            }
        }
    }
    let mut s = shape.to_vec();
    s[axis] = m;
    (out, s)
}

pub struct FibrationChart<'c, 'a, M: Model + ?Sized> {
    pub gh: &'c GhChart<'a, M>,
    pub eps: f64,
    /// Lattice spacing of the node cache.
    pub spacing: f64,
    pub order: usize,
    rule: (Vec<f64>, Vec<f64>),
    check_rule: (Vec<f64>, Vec<f64>),
    cache: RefCell<HashMap<[i32; 4], Node>>,
}

/// `f` on the chart with smoothing scale `eps` (the construction uses `0.1 κ r(x)`).
pub fn smooth_fibration<'c, 'a, M: Model + ?Sized>(
    gh: &'c GhChart<'a, M>,
    eps: f64,
) -> Result<FibrationChart<'c, 'a, M>> {
    if !(eps > 0.0) {
        return Err(GeomError::InvalidInput("smoothing scale must be positive"));
    }
    Ok(FibrationChart {
        gh,
        eps,
        spacing: 0.5 * eps,
        order: 8,
        rule: gauss_legendre(8),
        check_rule: gauss_legendre(6),
        cache: RefCell::new(HashMap::new()),
    })
}

impl<'c, 'a, M: Model + ?Sized> FibrationChart<'c, 'a, M> {
    pub fn dim(&self) -> usize {
        self.gh.dim()
    }

    /// Number of lattice nodes computed so far.
    pub fn cached_nodes(&self) -> usize {
        self.cache.borrow().len()
    }

    fn compute_node(&self, idx: &[i32; 4]) -> Result<Node> {
        let d = self.dim();
        let mut z = V4::zeros();
        for a in 0..d {
            z[a] = self.spacing * idx[a] as f64;
        }
        let v = self.gh.from_frame(&z);
        let m = self.gh.ball.model;
        let (end, jac) = if m.is_flat() {
            (self.gh.ball.x + v, M4::identity())
        } else {
            let j = exp_jet(m, &self.gh.ball.x, &v, &self.gh.ball.opts)?;
            (j.end, j.dx_dv)
        };
        let f = self.gh.frame;
        let mut g = f.transpose() * jac.transpose() * m.metric(&end)? * jac * f;
        for i in d..4 {
            for j in 0..4 {
                g[(i, j)] = if i == j { 1.0 } else { 0.0 };
                g[(j, i)] = g[(i, j)];
            }
        }
        let e = self.gh.h_hat(&v)? - self.gh.project(&v);
        let mut node = [0.0; NF];
        node[..16].copy_from_slice(g.as_slice());
        node[16] = Float::sqrt(g.determinant().max(0.0));
        node[17..20].copy_from_slice(e.as_slice());
        Ok(node)
    }

    fn node(&self, idx: &[i32; 4]) -> Result<Node> {
        if let Some(n) = self.cache.borrow().get(idx) {
            return Ok(*n);
        }
        let n = self.compute_node(idx)?;
        self.cache.borrow_mut().insert(*idx, n);
        Ok(n)
    }

    /// Interpolated node data at `z`, and its `z`-gradient when asked.
    fn interp_point(&self, z: &V4, grad: bool) -> Result<(Node, [Node; 4])> {
        let d = self.dim();
        let mut base = [0i32; 4];
        let mut w = [[0.0; 4]; 4];
        let mut wd = [[0.0; 4]; 4];
        for a in 0..d {
            let p = z[a] / self.spacing;
            let fl = Float::floor(p);
            base[a] = fl as i32;
            w[a] = catmull_rom(p - fl);
            wd[a] = catmull_rom_d(p - fl);
        }
        let mut val = [0.0; NF];
        let mut gr = [[0.0; NF]; 4];
        let count = 4usize.pow(d as u32);
        for c in 0..count {
            let mut idx = [0i32; 4];
            let mut off = [0usize; 4];
            let mut r = c;
            for a in 0..d {
                off[a] = r % 4;
                idx[a] = base[a] + off[a] as i32 - 1;
                r /= 4;
            }
            let node = self.node(&idx)?;
            let wt: f64 = (0..d).map(|a| w[a][off[a]]).product();
            for k in 0..NF {
                val[k] += wt * node[k];
            }
            if grad {
                for b in 0..d {
                    let wb: f64 = (0..d)
                        .map(|a| if a == b { wd[a][off[a]] } else { w[a][off[a]] })
                        .product::<f64>()
                        / self.spacing;
                    for k in 0..NF {
                        gr[b][k] += wb * node[k];
                    }
                }
            }
        }
        Ok((val, gr))
    }

    /// Pulled-back metric `ĝ` at `z` in frame coordinates, and its first derivatives.
    pub fn metric_hat(&self, z: &V4) -> Result<(M4, [M4; 4])> {
        let (v, gr) = self.interp_point(z, true)?;
        let g = M4::from_column_slice(&v[..16]);
        let mut dg = [M4::zeros(); 4];
        for a in 0..self.dim() {
            dg[a] = M4::from_column_slice(&gr[a][..16]);
        }
        Ok((g, dg))
    }

    fn eval_rule(&self, z: &V4, rule: &(Vec<f64>, Vec<f64>)) -> Result<HVec> {
        let d = self.dim();
        let n = rule.0.len();
        let eps = self.eps;
        let (c, _) = self.interp_point(z, false)?;
        let g0 = M4::from_column_slice(&c[..16]);
        let g0i = g0
            .try_inverse()
            .ok_or(GeomError::InvalidInput("degenerate pulled-back metric"))?;
        // extended support ½ uᵀ g0 u <= 1.3 ε²/3 fits in the box |u_a| <= s_a
        let ext = 1.3 * eps * eps / 3.0;
        let mut s = [0.0; 4];
        let mut pos = vec![vec![0.0; n]; d];
        let mut lo = [0i32; 4];
        let mut hi = [0i32; 4];
        for a in 0..d {
            s[a] = Float::sqrt(2.0 * ext * g0i[(a, a)]);
            for i in 0..n {
                pos[a][i] = (z[a] + s[a] * rule.0[i]) / self.spacing;
            }
            lo[a] = Float::floor(pos[a][0].min(pos[a][n - 1])) as i32 - 1;
            hi[a] = Float::floor(pos[a][0].max(pos[a][n - 1])) as i32 + 2;
        }
        let shape: Vec<usize> = (0..d).map(|a| (hi[a] - lo[a] + 1) as usize).collect();
        let npts = n.pow(d as u32);
        // which rule points can carry weight
        let mut inside = vec![false; npts];
        let mut base_mask = vec![false; shape.iter().product()];
        let lin = |idx: &[usize], shape: &[usize]| {
            idx.iter().zip(shape).fold(0, |acc, (i, s)| acc * s + i)
        };
        for p in 0..npts {
            let mut u = V4::zeros();
            let mut r = p;
            let mut ii = [0usize; 4];
            for a in (0..d).rev() {
                ii[a] = r % n;
                r /= n;
                u[a] = s[a] * rule.0[ii[a]];
            }
            if 0.5 * (u.transpose() * g0 * u)[(0, 0)] <= ext {
                inside[p] = true;
                let b: Vec<usize> = (0..d)
                    .map(|a| (Float::floor(pos[a][ii[a]]) as i32 - lo[a]) as usize)
                    .collect();
                base_mask[lin(&b, &shape)] = true;
            }
        }
        // a node is needed when some marked base has it in its 4-point stencil
        let mut need = base_mask;
        for a in 0..d {
            let outer: usize = shape[..a].iter().product();
            let inner: usize = shape[a + 1..].iter().product();
            let na = shape[a];
            let mut next = vec![false; need.len()];
            for o in 0..outer {
                for j in 0..na {
                    for r in 0..inner {
                        let lo_f = j.saturating_sub(2);
                        let hi_f = (j + 1).min(na - 1);
                        next[(o * na + j) * inner + r] =
                            (lo_f..=hi_f).any(|f| need[(o * na + f) * inner + r]);
                    }
                }
            }
            need = next;
        }
        let mut data = vec![0.0; need.len() * NF];
        for (li, flag) in need.iter().enumerate() {
            if !flag {
                continue;
            }
            let mut idx = [0i32; 4];
            let mut r = li;
            for a in (0..d).rev() {
                idx[a] = lo[a] + (r % shape[a]) as i32;
                r /= shape[a];
            }
            data[li * NF..(li + 1) * NF].copy_from_slice(&self.node(&idx)?);
        }
        let mut sh = shape.clone();
        sh.push(NF);
        let mut cur = data;
        for a in 0..d {
            let mut w = DMatrix::zeros(n, shape[a]);
            for i in 0..n {
                let fl = Float::floor(pos[a][i]);
                let cr = catmull_rom(pos[a][i] - fl);
                for (k, c) in cr.iter().enumerate() {
                    w[(i, (fl as i32 - 1 + k as i32 - lo[a]) as usize)] = *c;
                }
            }
            let (next, s2) = mode_product(&cur, &sh, a, &w);
            cur = next;
            sh = s2;
        }
        let mut num = HVec::zeros();
        let mut den = 0.0;
        for p in 0..npts {
            if !inside[p] {
                continue;
            }
            let mut u = V4::zeros();
            let mut wt = 1.0;
            let mut r = p;
            for a in (0..d).rev() {
                let i = r % n;
                r /= n;
                u[a] = s[a] * rule.0[i];
                wt *= s[a] * rule.1[i];
            }
            let node = &cur[p * NF..(p + 1) * NF];
            let gu = M4::from_column_slice(&node[..16]);
            let rho = 0.25 * (u.transpose() * (g0 + gu) * u)[(0, 0)];
            let k = chi_eps(rho, eps);
            if k == 0.0 {
                continue;
            }
            let w = wt * k * node[16];
            let mut val = HVec::new(node[17], node[18], node[19]);
            for a in 1..d {
                val[a - 1] += u[a];
            }
            num += val * w;
            den += w;
        }
        if !(den > 0.0) {
            return Err(GeomError::QuadratureFailure {
                rel_err: f64::INFINITY,
            });
        }
        let mut out = num / den;
        for a in 1..d {
            out[a - 1] += z[a];
        }
        Ok(out)
    }

    /// `f̂(z)` with the order-8 rule.
    pub fn f_hat(&self, z: &V4) -> Result<HVec> {
        self.eval_rule(z, &self.rule)
    }

    /// `f̂(z)` and the difference to the order-6 rule relative to `ε`.
    ///
    /// Fails with `QuadratureFailure` above `1e-3`.
    pub fn f_hat_checked(&self, z: &V4) -> Result<(HVec, f64)> {
        let a = self.eval_rule(z, &self.rule)?;
        let b = self.eval_rule(z, &self.check_rule)?;
        let rel = (a - b).norm() / self.eps;
        if rel > 1e-3 {
            return Err(GeomError::QuadratureFailure { rel_err: rel });
        }
        Ok((a, rel))
    }

    /// `f(y)` for a point of the model, lifted near the frame vector `guess`.
    pub fn f_at_point(&self, y: &V4, guess: &V4) -> Result<HVec> {
        let v = self.gh.ball.log_near(y, &self.gh.from_frame(guess))?;
        self.f_hat(&self.gh.to_frame(&v))
    }

    /// `∂f̂/∂z` (columns = frame directions), central differences with step `h`.
    pub fn jacobian(&self, z: &V4, h: f64) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let mut j = DMatrix::zeros(3, d);
        for a in 0..d {
            let mut zp = *z;
            let mut zm = *z;
            zp[a] += h;
            zm[a] -= h;
            let c = (self.f_hat(&zp)? - self.f_hat(&zm)?) / (2.0 * h);
            for i in 0..3 {
                j[(i, a)] = c[i];
            }
        }
        Ok(j)
    }

    /// First and second `z`-derivatives of `f̂`: fourth-order first derivatives and
    /// diagonal second derivatives, second-order mixed ones.
    pub fn derivatives(&self, z: &V4, h: f64) -> Result<(DMatrix<f64>, [[HVec; 4]; 4])> {
        let d = self.dim();
        let f0 = self.f_hat(z)?;
        let shift = |a: usize, sa: f64, b: usize, sb: f64| {
            let mut y = *z;
            y[a] += sa * h;
            if sb != 0.0 {
                y[b] += sb * h;
            }
            y
        };
        let mut jac = DMatrix::zeros(3, d);
        let mut hess = [[HVec::zeros(); 4]; 4];
        for a in 0..d {
            let p1 = self.f_hat(&shift(a, 1.0, a, 0.0))?;
            let m1 = self.f_hat(&shift(a, -1.0, a, 0.0))?;
            let p2 = self.f_hat(&shift(a, 2.0, a, 0.0))?;
            let m2 = self.f_hat(&shift(a, -2.0, a, 0.0))?;
            let g = ((p1 - m1) * 8.0 - (p2 - m2)) / (12.0 * h);
            for i in 0..3 {
                jac[(i, a)] = g[i];
            }
            hess[a][a] = ((p1 + m1) * 16.0 - (p2 + m2) - f0 * 30.0) / (12.0 * h * h);
        }
        for a in 0..d {
            for b in a + 1..d {
                let pp = self.f_hat(&shift(a, 1.0, b, 1.0))?;
                let pm = self.f_hat(&shift(a, 1.0, b, -1.0))?;
                let mp = self.f_hat(&shift(a, -1.0, b, 1.0))?;
                let mm = self.f_hat(&shift(a, -1.0, b, -1.0))?;
                let v = (pp - pm - mp + mm) / (4.0 * h * h);
                hess[a][b] = v;
                hess[b][a] = v;
            }
        }
        Ok((jac, hess))
    }

    /// Unit vertical direction (kernel of `df`) at `z`, in frame coordinates,
    /// oriented along `+v_x`.
    pub fn vertical_hat(&self, z: &V4) -> Result<V4> {
        let d = self.dim();
        let (g, _) = self.metric_hat(z)?;
        let jac = self.jacobian(z, 1e-3 * self.eps)?;
        kernel_direction(&jac, &g, d)
    }
}

/// Unit (for `g`) kernel vector of a `3 × d` Jacobian of rank `d − 1`, with
/// nonnegative first component.
pub(crate) fn kernel_direction(jac: &DMatrix<f64>, g: &M4, d: usize) -> Result<V4> {
    let f = orthonormal_frame(g).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    let fd = crate::linalg::leading_block(&f, d);
    let a = jac.rows(0, d - 1) * &fd;
    let full = DMatrix::from_fn(d, d, |i, j| if i < d - 1 { a[(i, j)] } else { 0.0 });
    let ata = full.transpose() * &full;
    let eig = SymmetricEigen::new(ata);
    let (mut imin, mut vmin) = (0, f64::INFINITY);
    for i in 0..d {
        if eig.eigenvalues[i] < vmin {
            vmin = eig.eigenvalues[i];
            imin = i;
        }
    }
    let k = fd * eig.eigenvectors.column(imin);
    let mut v = V4::zeros();
    for i in 0..d {
        v[i] = k[i];
    }
    if v[0] < 0.0 {
        v = -v;
    }
    Ok(v)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SubmersionSample {
    /// Frame coordinates of the sample point.
    pub z: [f64; 4],
    /// Singular values of `df` in orthonormal frames, descending; the last is the
    /// kernel's (zero up to noise).
    pub singular_values: Vec<f64>,
    /// `max |ln σ|` over the horizontal singular values.
    pub log_distortion: f64,
    pub hessian_norm: f64,
    /// Unit kernel direction in frame coordinates.
    pub kernel: [f64; 4],
}

/// `df` singular values and `|∇² f|` at the sample points (frame coordinates).
///
/// The covariant Hessian uses the Christoffel symbols of the interpolated `ĝ`; the
/// finite-difference step is `0.1 ε`.
pub fn submersion_diagnostics<M: Model + ?Sized>(
    fc: &FibrationChart<'_, '_, M>,
    samples: &[V4],
) -> Result<Vec<SubmersionSample>> {
    let d = fc.dim();
    let mut out = Vec::with_capacity(samples.len());
    for z in samples {
        let (g, dg) = fc.metric_hat(z)?;
        let (jac, hess) = fc.derivatives(z, 0.1 * fc.eps)?;
        let gam = crate::manifold::christoffel_from_jet(&g, &dg, d)?;
        let f =
            orthonormal_frame(&g).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
        let fd = crate::linalg::leading_block(&f, d);
        let h = d - 1;
        let df = jac.rows(0, h) * &fd;
        let mut sv = singular_values(&df);
        sv.sort_by(|a, b| b.total_cmp(a));
        sv.push(0.0);
        sv.truncate(d);
        // the kernel singular value of a (d-1) × d map is zero; keep the full spectrum
        let full = DMatrix::from_fn(d, d, |i, j| if i < h { df[(i, j)] } else { 0.0 });
        let mut svf = singular_values(&full);
        svf.sort_by(|a, b| b.total_cmp(a));
        let log_distortion = svf[..h]
            .iter()
            .map(|s| Float::abs(Float::ln(*s)))
            .fold(0.0, f64::max);
        let mut hn2 = 0.0;
        for comp in 0..h {
            let mut hc = DMatrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    let mut v = hess[i][j][comp];
                    for k in 0..d {
                        v -= gam[k][(i, j)] * jac[(comp, k)];
                    }
                    hc[(i, j)] = v;
                }
            }
            let hn = fd.transpose() * hc * &fd;
            hn2 += hn.norm_squared();
        }
        let kern = kernel_direction(&jac, &g, d)?;
        out.push(SubmersionSample {
            z: [z[0], z[1], z[2], z[3]],
            singular_values: svf,
            log_distortion,
            hessian_norm: Float::sqrt(hn2),
            kernel: [kern[0], kern[1], kern[2], kern[3]],
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TransitionFit {
    /// Affine map `f_x ≈ A f_{x'} + c`, row-major `A`.
    pub linear: [[f64; 3]; 3],
    pub offset: [f64; 3],
    pub max_residual: f64,
    /// `‖AᵀA − I‖` restricted to the active block.
    pub orthogonality_defect: f64,
    pub samples: usize,
}

/// Least-squares affine transition between two charts on common model points.
pub fn transition_fit<M: Model + ?Sized>(
    fx: &FibrationChart<'_, '_, M>,
    fy: &FibrationChart<'_, '_, M>,
    points: &[V4],
) -> Result<TransitionFit> {
    let h = fx.dim() - 1;
    if points.len() < h + 2 {
        return Err(GeomError::IllConditionedFit("too few overlap points"));
    }
    let mut a_rows = Vec::with_capacity(points.len());
    let mut b_rows = Vec::with_capacity(points.len());
    for p in points {
        let gx = fx.gh.to_frame(&(p - fx.gh.ball.x));
        let gy = fy.gh.to_frame(&(p - fy.gh.ball.x));
        a_rows.push(fy.f_at_point(p, &gy)?);
        b_rows.push(fx.f_at_point(p, &gx)?);
    }
    let n = points.len();
    let design = DMatrix::from_fn(n, h + 1, |i, j| if j < h { a_rows[i][j] } else { 1.0 });
    let rhs = DMatrix::from_fn(n, h, |i, j| b_rows[i][j]);
    let svd = design.clone().svd(true, true);
    let sol = svd
        .solve(&rhs, 1e-12)
        .map_err(|_| GeomError::IllConditionedFit("transition least squares"))?;
    let resid = &design * &sol - &rhs;
    let max_residual = (0..n).map(|i| resid.row(i).norm()).fold(0.0, f64::max);
    let mut linear = [[0.0; 3]; 3];
    let mut offset = [0.0; 3];
    for i in 0..h {
        for j in 0..h {
            linear[i][j] = sol[(j, i)];
        }
        offset[i] = sol[(h, i)];
    }
    let a = DMatrix::from_fn(h, h, |i, j| linear[i][j]);
    let orthogonality_defect = (a.transpose() * &a - DMatrix::identity(h, h)).norm();
    Ok(TransitionFit {
        linear,
        offset,
        max_residual,
        orthogonality_defect,
        samples: n,
    })
}
