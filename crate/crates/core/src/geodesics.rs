//! Geodesics, their variations, parallel transport and geodesic loops.

use crate::linalg::{orthonormal_frame, spectral_norm};
use crate::manifold::{christoffel_at, MetricField, Model};
use crate::ode::{dopri5, OdeOptions};
use crate::zoo::loop_length;
use crate::{GeomError, Result, M4, V4};
use alloc::vec::Vec;
use nalgebra::SymmetricEigen;
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GeodesicOptions {
    pub ode: OdeOptions,
    /// Newton stops once `|exp_x(v) - y|_g <= newton_tol * max(1, |v|)`.
    pub newton_tol: f64,
    pub max_newton: usize,
}

impl Default for GeodesicOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            newton_tol: 1e-10,
            max_newton: 40,
        }
    }
}

fn gamma_vv(gam: &crate::linalg::Christoffel, a: &V4, b: &V4, d: usize) -> V4 {
    let mut out = V4::zeros();
    for k in 0..d {
        out[k] = (a.transpose() * gam[k] * b)[(0, 0)];
    }
    out
}

fn split8(y: &[f64; 8]) -> (V4, V4) {
    (
        V4::new(y[0], y[1], y[2], y[3]),
        V4::new(y[4], y[5], y[6], y[7]),
    )
}

fn join8(x: &V4, v: &V4) -> [f64; 8] {
    [x[0], x[1], x[2], x[3], v[0], v[1], v[2], v[3]]
}

fn as_left_domain(e: GeomError, s: f64, last: &V4) -> GeomError {
    match e {
        GeomError::SingularPoint(_)
        | GeomError::OutsideChart(_)
        | GeomError::StepSizeUnderflow { .. } => GeomError::LeftChartDomain { s, exit: *last },
        other => other,
    }
}

/// Sampled geodesic `s ∈ [0, 1]` with positions and velocities at accepted steps.
#[derive(Clone, Debug, Default)]
pub struct GeodesicPath {
    pub s: Vec<f64>,
    pub x: Vec<V4>,
    pub v: Vec<V4>,
}

impl GeodesicPath {
    /// Cubic Hermite position and its derivative at parameter `s`.
    pub fn at(&self, s: f64) -> (V4, V4) {
        let n = self.s.len();
        if n == 1 {
            return (self.x[0], self.v[0]);
        }
        let i = match self.s.iter().position(|&t| t > s) {
            Some(0) => 0,
            Some(j) => j - 1,
            None => n - 2,
        };
        let (s0, s1) = (self.s[i], self.s[i + 1]);
        let h = s1 - s0;
        let u = (s - s0) / h;
        let (x0, x1, m0, m1) = (self.x[i], self.x[i + 1], self.v[i] * h, self.v[i + 1] * h);
        let (u2, u3) = (u * u, u * u * u);
        let p = x0 * (2.0 * u3 - 3.0 * u2 + 1.0)
            + m0 * (u3 - 2.0 * u2 + u)
            + x1 * (-2.0 * u3 + 3.0 * u2)
            + m1 * (u3 - u2);
        let dp = (x0 * (6.0 * u2 - 6.0 * u)
            + m0 * (3.0 * u2 - 4.0 * u + 1.0)
            + x1 * (-6.0 * u2 + 6.0 * u)
            + m1 * (3.0 * u2 - 2.0 * u))
            / h;
        (p, dp)
    }

    pub fn end(&self) -> (V4, V4) {
        (*self.x.last().unwrap(), *self.v.last().unwrap())
    }

    /// Riemannian length from the stored velocities (trapezoid in `s`).
    pub fn length<M: MetricField + ?Sized>(&self, m: &M) -> Result<f64> {
        let mut total = 0.0;
        let mut prev: Option<f64> = None;
        for i in 0..self.s.len() {
            let g = m.metric(&self.x[i])?;
            let sp = crate::linalg::norm_g(&g, &self.v[i]);
            if let Some(p) = prev {
                total += 0.5 * (p + sp) * (self.s[i] - self.s[i - 1]);
            }
            prev = Some(sp);
        }
        Ok(total)
    }
}

fn geodesic_flow<M: MetricField + ?Sized>(m: &M, y: &[f64; 8]) -> Result<[f64; 8]> {
    let (x, v) = split8(y);
    let gam = christoffel_at(m, &x)?;
    let a = gamma_vv(&gam, &v, &v, m.dim());
    Ok([v[0], v[1], v[2], v[3], -a[0], -a[1], -a[2], -a[3]])
}

fn integrate_geodesic<M, O>(
    m: &M,
    x: &V4,
    v: &V4,
    opts: &GeodesicOptions,
    mut observe: O,
) -> Result<(V4, V4)>
where
    M: MetricField + ?Sized,
    O: FnMut(f64, &V4, &V4),
{
    m.check(x)?;
    let mut last = *x;
    let res = dopri5(
        |_s, y: &[f64; 8]| geodesic_flow(m, y),
        0.0,
        1.0,
        join8(x, v),
        &opts.ode,
        |s, y, _| {
            let (p, w) = split8(y);
            m.check(&p)
                .map_err(|_| GeomError::LeftChartDomain { s, exit: p })?;
            last = p;
            observe(s, &p, &w);
            Ok(())
        },
    );
    match res {
        Ok((y, _)) => Ok(split8(&y)),
        Err(e) => Err(as_left_domain(e, f64::NAN, &last)),
    }
}

/// `exp_x(v)`: endpoint and final velocity of the geodesic on `[0, 1]`.
pub fn exp_map<M: MetricField + ?Sized>(
    m: &M,
    x: &V4,
    v: &V4,
    opts: &GeodesicOptions,
) -> Result<(V4, V4)> {
    integrate_geodesic(m, x, v, opts, |_, _, _| {})
}

/// `exp_x(v)` with the accepted steps recorded.
pub fn exp_path<M: MetricField + ?Sized>(
    m: &M,
    x: &V4,
    v: &V4,
    opts: &GeodesicOptions,
) -> Result<GeodesicPath> {
    let mut path = GeodesicPath::default();
    integrate_geodesic(m, x, v, opts, |s, p, w| {
        path.s.push(s);
        path.x.push(*p);
        path.v.push(*w);
    })?;
    Ok(path)
}

/// Endpoint of `exp_x(v)` together with `∂x(1)/∂v` and `∂ẋ(1)/∂v`.
#[derive(Clone, Copy, Debug)]
pub struct ExpJet {
    pub end: V4,
    pub vel: V4,
    pub dx_dv: M4,
    pub dvel_dv: M4,
}

fn variational_flow<M: MetricField + ?Sized>(m: &M, y: &[f64; 40]) -> Result<[f64; 40]> {
    let d = m.dim();
    let x = V4::new(y[0], y[1], y[2], y[3]);
    let v = V4::new(y[4], y[5], y[6], y[7]);
    let gam = christoffel_at(m, &x)?;
    // ∂_l Γ by central differences with a step below the curvature scale
    let h = 1e-5 * x.norm().max(1.0);
    let mut dgam_vv = M4::zeros(); // column l: ∂_l Γ(v, v)
    for l in 0..d {
        let mut xp = x;
        let mut xm = x;
        xp[l] += h;
        xm[l] -= h;
        let gp = christoffel_at(m, &xp)?;
        let gm = christoffel_at(m, &xm)?;
        let col = (gamma_vv(&gp, &v, &v, d) - gamma_vv(&gm, &v, &v, d)) / (2.0 * h);
        dgam_vv.set_column(l, &col);
    }
    // 2 Γ(v, ·)
    let mut gv = M4::zeros();
    for k in 0..d {
        let row = v.transpose() * gam[k];
        for j in 0..d {
            gv[(k, j)] = 2.0 * row[j];
        }
    }
    let a = gamma_vv(&gam, &v, &v, d);
    let xm = M4::from_column_slice(&y[8..24]);
    let wm = M4::from_column_slice(&y[24..40]);
    let dw = -(dgam_vv * xm) - gv * wm;
    let mut out = [0.0; 40];
    for i in 0..4 {
        out[i] = v[i];
        out[4 + i] = -a[i];
    }
    out[8..24].copy_from_slice(wm.as_slice());
    out[24..40].copy_from_slice(dw.as_slice());
    Ok(out)
}

pub fn exp_jet<M: MetricField + ?Sized>(
    m: &M,
    x: &V4,
    v: &V4,
    opts: &GeodesicOptions,
) -> Result<ExpJet> {
    m.check(x)?;
    let mut y0 = [0.0; 40];
    y0[..4].copy_from_slice(x.as_slice());
    y0[4..8].copy_from_slice(v.as_slice());
    y0[24..40].copy_from_slice(M4::identity().as_slice());
    // padded dimensions carry the identity in the position block
    for i in m.dim()..4 {
        y0[8 + 5 * i] = 1.0;
        y0[24 + 5 * i] = 0.0;
    }
    let mut last = *x;
    let res = dopri5(
        |_s, y: &[f64; 40]| variational_flow(m, y),
        0.0,
        1.0,
        y0,
        &opts.ode,
        |s, y, _| {
            let p = V4::new(y[0], y[1], y[2], y[3]);
            m.check(&p)
                .map_err(|_| GeomError::LeftChartDomain { s, exit: p })?;
            last = p;
            Ok(())
        },
    );
    let (y, _) = res.map_err(|e| as_left_domain(e, f64::NAN, &last))?;
    Ok(ExpJet {
        end: V4::new(y[0], y[1], y[2], y[3]),
        vel: V4::new(y[4], y[5], y[6], y[7]),
        dx_dv: M4::from_column_slice(&y[8..24]),
        dvel_dv: M4::from_column_slice(&y[24..40]),
    })
}

#[derive(Clone, Copy, Debug)]
pub struct LogResult {
    pub v: V4,
    pub residual: f64,
    pub iterations: usize,
}

/// `v` with `exp_x(v) = y`, by damped Newton from `v0` (chart difference if `None`).
pub fn log_map<M: MetricField + ?Sized>(
    m: &M,
    x: &V4,
    y: &V4,
    v0: Option<V4>,
    opts: &GeodesicOptions,
) -> Result<LogResult> {
    let gy = m.metric(y)?;
    let d = m.dim();
    let mut v = v0.unwrap_or(y - x);
    let gx = m.metric(x)?;
    let resid = |e: &V4| crate::linalg::norm_g(&gy, e);
    let mut jet = exp_jet(m, x, &v, opts)?;
    let mut f = jet.end - y;
    let mut r = resid(&f);
    let mut best = r;
    for it in 0..=opts.max_newton {
        let vn = crate::linalg::norm_g(&gx, &v);
        if r <= opts.newton_tol * vn.max(1.0) {
            return Ok(LogResult {
                v,
                residual: r,
                iterations: it,
            });
        }
        if it == opts.max_newton {
            break;
        }
        let j = crate::linalg::pad(&jet.dx_dv, d);
        let step = match j.lu().solve(&(-f)) {
            Some(s) => s,
            None => {
                return Err(GeomError::NoConvergence {
                    best_residual: best,
                })
            }
        };
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..12 {
            let cand = v + step * alpha;
            if let Ok(cj) = exp_jet(m, x, &cand, opts) {
                let cf = cj.end - y;
                let cr = resid(&cf);
                if cr < r {
                    v = cand;
                    jet = cj;
                    f = cf;
                    r = cr;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        best = best.min(r);
        if !accepted {
            break;
        }
    }
    Err(GeomError::NoConvergence {
        best_residual: best,
    })
}

/// Parallel transport of the columns of `w` along `s ↦ exp_x(s v)`.
///
/// Returns the endpoint, the final velocity and the transported vectors.
pub fn transport_along_geodesic<M: MetricField + ?Sized>(
    m: &M,
    x: &V4,
    v: &V4,
    w: &M4,
    opts: &GeodesicOptions,
) -> Result<(V4, V4, M4)> {
    m.check(x)?;
    let d = m.dim();
    let mut y0 = [0.0; 24];
    y0[..4].copy_from_slice(x.as_slice());
    y0[4..8].copy_from_slice(v.as_slice());
    y0[8..24].copy_from_slice(w.as_slice());
    let mut last = *x;
    let res = dopri5(
        |_s, y: &[f64; 24]| {
            let p = V4::new(y[0], y[1], y[2], y[3]);
            let u = V4::new(y[4], y[5], y[6], y[7]);
            let gam = christoffel_at(m, &p)?;
            let a = gamma_vv(&gam, &u, &u, d);
            let wm = M4::from_column_slice(&y[8..24]);
            let mut out = [0.0; 24];
            for i in 0..4 {
                out[i] = u[i];
                out[4 + i] = -a[i];
            }
            for c in 0..4 {
                let col = wm.column(c).into_owned();
                let dc = -gamma_vv(&gam, &u, &col, d);
                out[8 + 4 * c..12 + 4 * c].copy_from_slice(dc.as_slice());
            }
            Ok(out)
        },
        0.0,
        1.0,
        y0,
        &opts.ode,
        |s, y, _| {
            let p = V4::new(y[0], y[1], y[2], y[3]);
            m.check(&p)
                .map_err(|_| GeomError::LeftChartDomain { s, exit: p })?;
            last = p;
            Ok(())
        },
    );
    let (y, _) = res.map_err(|e| as_left_domain(e, f64::NAN, &last))?;
    Ok((
        V4::new(y[0], y[1], y[2], y[3]),
        V4::new(y[4], y[5], y[6], y[7]),
        M4::from_column_slice(&y[8..24]),
    ))
}

/// Parallel transport along an arbitrary `C^1` curve `c: [0, 1] → chart`.
pub fn transport_along_curve<M, C>(m: &M, curve: C, w: &M4, opts: &GeodesicOptions) -> Result<M4>
where
    M: MetricField + ?Sized,
    C: Fn(f64) -> (V4, V4),
{
    let d = m.dim();
    let mut y0 = [0.0; 16];
    y0.copy_from_slice(w.as_slice());
    let (y, _) = dopri5(
        |s, y: &[f64; 16]| {
            let (p, u) = curve(s);
            let gam = christoffel_at(m, &p)?;
            let wm = M4::from_column_slice(y);
            let mut out = [0.0; 16];
            for c in 0..4 {
                let col = wm.column(c).into_owned();
                let dc = -gamma_vv(&gam, &u, &col, d);
                out[4 * c..4 * c + 4].copy_from_slice(dc.as_slice());
            }
            Ok(out)
        },
        0.0,
        1.0,
        y0,
        &opts.ode,
        |_, _, _| Ok(()),
    )?;
    Ok(M4::from_column_slice(&y))
}

/// A geodesic loop at `x` lifted to the segment from `x` to `D^k x`.
#[derive(Clone, Copy, Debug)]
pub struct LoopRecord {
    pub k: i64,
    /// Initial velocity on `[0, 1]`, so `|v| = length`.
    pub v: V4,
    pub length: f64,
    /// Transport around the loop, returned to `T_x` through `dD^{-k}`.
    pub holonomy: M4,
    pub residual: f64,
}

impl LoopRecord {
    /// `|H - id|` in a `g_x`-orthonormal frame (spectral norm).
    pub fn holonomy_defect<M: MetricField + ?Sized>(&self, m: &M, x: &V4) -> Result<f64> {
        holonomy_defect(m, x, &self.holonomy)
    }
}

pub fn holonomy_defect<M: MetricField + ?Sized>(m: &M, x: &V4, h: &M4) -> Result<f64> {
    let d = m.dim();
    let g = m.metric(x)?;
    let e = orthonormal_frame(&g).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    let ei = e
        .try_inverse()
        .ok_or(GeomError::InvalidInput("singular frame"))?;
    let hf = ei * h * e - M4::identity();
    Ok(spectral_norm(&hf, d, d))
}

#[derive(Clone, Debug)]
pub struct LoopSearch {
    pub loops: Vec<LoopRecord>,
    /// Shooting cannot certify that every loop was found.
    pub incomplete: bool,
}

impl LoopSearch {
    pub fn shortest(&self) -> Option<&LoopRecord> {
        self.loops
            .iter()
            .min_by(|a, b| a.length.total_cmp(&b.length))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct LoopOptions {
    pub geodesic: GeodesicOptions,
    /// Perturbed seeds on a cone around the chord, per deck power.
    pub cone_seeds: usize,
    pub cone_angle: f64,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            geodesic: GeodesicOptions::default(),
            cone_seeds: 12,
            cone_angle: 0.1,
        }
    }
}

/// Geodesic loops at `x` of length at most `l_max`, one family per deck power.
///
/// Flat models are enumerated exactly; curved ones are found by shooting from the
/// chord towards `D^k x` and from `cone_seeds` perturbations of it.
pub fn geodesic_loops<M: Model + ?Sized>(
    m: &M,
    x: &V4,
    l_max: f64,
    opts: &LoopOptions,
) -> Result<LoopSearch> {
    if !m.has_deck() {
        return Ok(LoopSearch {
            loops: Vec::new(),
            incomplete: false,
        });
    }
    let d = m.dim();
    let flat = m.is_flat();
    let hint = m.generator_length_hint(x).unwrap_or(1.0).max(1e-6);
    let mut loops = Vec::new();
    if flat {
        // straight segments; the loop length is |D^k x - x|
        let kmax = if m.name() == "flat_screw" {
            l_max.floor() as i64
        } else {
            (l_max / hint).floor() as i64
        };
        for k in (-kmax..=kmax).filter(|&k| k != 0) {
            let y = m.deck(k, x).unwrap();
            let v = y - x;
            let len = v.norm();
            if len <= l_max {
                let hol = m.deck_differential(-k);
                loops.push(LoopRecord {
                    k,
                    v,
                    length: len,
                    holonomy: hol,
                    residual: 0.0,
                });
            }
        }
        loops.sort_by(|a, b| a.length.total_cmp(&b.length).then(a.k.cmp(&b.k)));
        return Ok(LoopSearch {
            loops,
            incomplete: false,
        });
    }
    let gx = m.metric(x)?;
    let frame =
        orthonormal_frame(&gx).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    let kmax = ((l_max / hint) * 1.2).ceil() as i64;
    for k in (-kmax..=kmax).filter(|&k| k != 0) {
        let y = m.deck(k, x).unwrap();
        let chord = y - x;
        let mut seeds = Vec::with_capacity(opts.cone_seeds + 1);
        seeds.push(chord);
        let cn = crate::linalg::norm_g(&gx, &chord);
        for i in 0..opts.cone_seeds {
            let dir = frame.column(i % d) * if (i / d).is_multiple_of(2) { 1.0 } else { -1.0 };
            let scale = opts.cone_angle * cn * (1.0 + (i / (2 * d)) as f64);
            seeds.push(chord + dir * scale);
        }
        let mut found: Vec<LoopRecord> = Vec::new();
        for s in seeds {
            let Ok(lr) = log_map(m, x, &y, Some(s), &opts.geodesic) else {
                continue;
            };
            let len = crate::linalg::norm_g(&gx, &lr.v);
            if len > l_max
                || found
                    .iter()
                    .any(|f| (f.v - lr.v).norm() <= 1e-6 * len.max(1.0))
            {
                continue;
            }
            let (_, _, p) = transport_along_geodesic(m, x, &lr.v, &M4::identity(), &opts.geodesic)?;
            let hol = m.deck_differential(-k) * crate::linalg::pad(&p, d);
            found.push(LoopRecord {
                k,
                v: lr.v,
                length: len,
                holonomy: hol,
                residual: lr.residual,
            });
        }
        loops.extend(found);
    }
    loops.sort_by(|a, b| a.length.total_cmp(&b.length).then(a.k.cmp(&b.k)));
    Ok(LoopSearch {
        loops,
        incomplete: true,
    })
}

/// Closed-form loop length of the flat screw quotient, for cross-checks.
pub fn flat_loop_length(angle: &crate::zoo::Angle, k: i64, x: &V4) -> f64 {
    loop_length(angle, k, Float::hypot(x[0], x[1]))
}

/// Covariant Hessian of `ρ = d(x, ·)² / 2` at `exp_x(v)` from the variational
/// solution: `∇ grad ρ = (∂ẋ/∂v)(∂x/∂v)^{-1} + Γ(·, ẋ)`.
pub fn distance_hessian<M: MetricField + ?Sized>(
    m: &M,
    x: &V4,
    v: &V4,
    opts: &GeodesicOptions,
) -> Result<(V4, M4)> {
    let d = m.dim();
    let jet = exp_jet(m, x, v, opts)?;
    let xi = crate::linalg::pad(&jet.dx_dv, d)
        .try_inverse()
        .ok_or(GeomError::AtCutLocus)?;
    let mut nab = jet.dvel_dv * xi;
    let gam = christoffel_at(m, &jet.end)?;
    for k in 0..d {
        let row = gam[k] * jet.vel;
        for j in 0..d {
            nab[(k, j)] += row[j];
        }
    }
    let g = m.metric(&jet.end)?;
    let mut hess = g * nab;
    hess = (hess + hess.transpose()) * 0.5;
    for i in d..4 {
        hess[(i, i)] = 1.0;
    }
    Ok((jet.end, hess))
}

/// `max_w ‖∇²ρ − g‖` over `2 dim` points at distance `0.9 ε` from `x` and the
/// `2 dim (dim - 1)` diagonal points at the same distance; the norm is the largest
/// absolute eigenvalue in an orthonormal frame at each point.
pub fn distance_hessian_defect<M: MetricField + ?Sized>(
    m: &M,
    x: &V4,
    eps: f64,
    opts: &GeodesicOptions,
) -> Result<f64> {
    let d = m.dim();
    let gx = m.metric(x)?;
    let e =
        orthonormal_frame(&gx).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    let mut dirs: Vec<V4> = Vec::new();
    for i in 0..d {
        for s in [-1.0, 1.0] {
            dirs.push(e.column(i) * s);
        }
        for j in (i + 1)..d {
            for s in [-1.0, 1.0] {
                dirs.push((e.column(i) + e.column(j) * s) / Float::sqrt(2.0));
                dirs.push(-(e.column(i) + e.column(j) * s) / Float::sqrt(2.0));
            }
        }
    }
    let mut worst: f64 = 0.0;
    for u in dirs {
        let (y, hess) = distance_hessian(m, x, &(u * (0.9 * eps)), opts)?;
        let g = m.metric(&y)?;
        let f =
            orthonormal_frame(&g).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
        let diff = f.transpose() * (hess - g) * f;
        let block = crate::linalg::leading_block(&diff, d);
        let ev = SymmetricEigen::new(block).eigenvalues;
        worst = worst.max(ev.iter().fold(0.0f64, |a, b| a.max(b.abs())));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Euclidean, FlatScrew, TaubNut};
    use crate::zoo::Angle;
    use core::f64::consts::PI;

    #[test]
    fn euclidean_exp_is_straight() {
        let m = Euclidean::new(3, None).unwrap();
        let x = V4::new(1.0, 2.0, 3.0, 0.0);
        let v = V4::new(0.5, -1.0, 2.0, 0.0);
        let (y, w) = exp_map(&m, &x, &v, &GeodesicOptions::default()).unwrap();
        assert!((y - x - v).norm() < 1e-14 && (w - v).norm() < 1e-14);
    }

    #[test]
    fn exp_log_roundtrip_on_taub_nut() {
        let tn = TaubNut::new(200.0).unwrap();
        let x = V4::new(20.0, 1.3, 0.4, 0.2);
        let o = GeodesicOptions::default();
        for v in [
            V4::new(1.0, 0.02, -0.03, 1.5),
            V4::new(-2.0, 0.05, 0.1, -3.0),
            V4::new(0.3, -0.1, 0.2, 6.0),
        ] {
            let (y, _) = exp_map(&tn, &x, &v, &o).unwrap();
            let lr = log_map(&tn, &x, &y, None, &o).unwrap();
            assert!((lr.v - v).norm() < 1e-8 * v.norm(), "{v} -> {}", lr.v);
        }
    }

    #[test]
    fn jet_matches_difference_of_exp() {
        let tn = TaubNut::new(200.0).unwrap();
        let x = V4::new(12.0, 1.0, 0.2, 0.0);
        let v = V4::new(0.5, 0.03, 0.02, 2.0);
        let o = GeodesicOptions {
            ode: OdeOptions::with_tol(1e-12),
            ..Default::default()
        };
        let j = exp_jet(&tn, &x, &v, &o).unwrap();
        let h = 1e-5;
        for c in 0..4 {
            let mut vp = v;
            let mut vm = v;
            vp[c] += h;
            vm[c] -= h;
            let col = (exp_map(&tn, &x, &vp, &o).unwrap().0 - exp_map(&tn, &x, &vm, &o).unwrap().0)
                / (2.0 * h);
            assert!(
                (col - j.dx_dv.column(c)).norm() < 1e-6 * (1.0 + col.norm()),
                "col {c}"
            );
        }
    }

    #[test]
    fn transport_preserves_inner_products() {
        let tn = TaubNut::new(200.0).unwrap();
        let x = V4::new(8.0, 1.1, 0.0, 0.0);
        let v = V4::new(1.0, 0.1, 0.2, 3.0);
        let o = GeodesicOptions::default();
        let w = M4::new(
            1.0, 0.2, 0.0, 0.1, 0.0, 1.0, 0.3, 0.0, 0.5, 0.0, 1.0, 0.0, 0.0, 0.0, 0.4, 1.0,
        );
        let (y, _, tw) = transport_along_geodesic(&tn, &x, &v, &w, &o).unwrap();
        let a = w.transpose() * tn.metric(&x).unwrap() * w;
        let b = tw.transpose() * tn.metric(&y).unwrap() * tw;
        assert!((a - b).abs().max() < 1e-8 * a.abs().max());
    }

    #[test]
    fn flat_screw_loops_are_enumerated_exactly() {
        let m = FlatScrew::new(Angle::rational(1, 3).unwrap());
        let x = V4::new(10.0, 0.0, 0.0, 0.0);
        let s = geodesic_loops(&m, &x, 10.0, &LoopOptions::default()).unwrap();
        let ks: Vec<i64> = s.loops.iter().map(|l| l.k).collect();
        assert_eq!(ks, alloc::vec![-3, 3, -6, 6, -9, 9]);
        assert!(!s.incomplete);
        // holonomy of a multiple of q is trivial
        assert!(s.loops[0].holonomy_defect(&m, &x).unwrap() < 1e-15);
    }

    #[test]
    fn taub_nut_fiber_loop() {
        let tn = TaubNut::new(200.0).unwrap();
        let x = tn.point_at_radius(50.0);
        let o = LoopOptions {
            cone_seeds: 0,
            ..Default::default()
        };
        let s = geodesic_loops(&tn, &x, 7.0, &o).unwrap();
        let l = s.shortest().unwrap();
        let orbit = crate::models::tn_orbit_length(tn.gh_radius(50.0));
        assert!((l.length - orbit).abs() < 1e-3, "{} vs {orbit}", l.length);
        let hol =
            l.holonomy.transpose() * tn.metric(&x).unwrap() * l.holonomy - tn.metric(&x).unwrap();
        assert!(hol.abs().max() < 1e-8);
        assert!(l.holonomy_defect(&tn, &x).unwrap() < 1e-2);
        let _ = PI;
    }

    #[test]
    fn hessian_defect_vanishes_when_flat() {
        let m = FlatScrew::new(Angle::rational(1, 5).unwrap());
        let x = V4::new(3.0, 0.0, 0.0, 0.0);
        let dfct = distance_hessian_defect(&m, &x, 0.5, &GeodesicOptions::default()).unwrap();
        assert!(dfct < 1e-12);
    }
}
