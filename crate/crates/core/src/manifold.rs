//! Charts, metric fields and curvature.
//!
//! Christoffel symbols come from analytic metric derivatives when a model supplies
//! them and from central differences otherwise. The Riemann tensor is always a central
//! difference of Christoffel symbols.

use crate::linalg::{
    orthonormal_frame, spd_inverse, tensor4_frame_norm, zero_tensor4, Christoffel, Tensor4,
};
use crate::{GeomError, Result, M4, V4};
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Chart {
    Cartesian,
    ScrewCover,
    TaubNutRadial,
    GibbonsHawking,
    Isotropic,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartPoint {
    pub chart: Chart,
    pub x: V4,
}

impl ChartPoint {
    pub fn new(chart: Chart, x: V4) -> Self {
        Self { chart, x }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TangentVec {
    pub base: ChartPoint,
    pub v: V4,
}

/// A Riemannian metric on an open subset of a single chart.
pub trait MetricField {
    fn dim(&self) -> usize;
    fn chart(&self) -> Chart;
    /// Rejects excluded or singular points.
    fn check(&self, x: &V4) -> Result<()>;
    /// Metric components; the padded block (for `dim() == 3`) is the identity.
    fn metric(&self, x: &V4) -> Result<M4>;
    /// `(g, [∂_0 g, …, ∂_3 g])` when available in closed form.
    fn metric_jet(&self, _x: &V4) -> Option<Result<(M4, [M4; 4])>> {
        None
    }
}

/// A model space: a metric on a covering chart plus the data the experiments need.
pub trait Model: MetricField {
    fn name(&self) -> &'static str;
    /// Identically flat metric with closed-form geodesics in the chart.
    fn is_flat(&self) -> bool {
        false
    }
    /// A point related to `x` by an isometry, chosen away from chart singularities.
    /// Pointwise invariants such as `|Rm|` may be evaluated there.
    fn isometric_representative(&self, x: &V4) -> V4 {
        *x
    }
    /// The base point `o` used for `r(x) = d(o, x)`.
    fn base_point(&self) -> V4;
    /// The radial function `r` used in decay statements.
    fn radius(&self, x: &V4) -> f64;
    /// True when `radius(y) == d(base_point, y)` exactly.
    fn radius_is_distance_from_base(&self) -> bool {
        false
    }
    /// A representative point with `radius == r`, away from coordinate singularities.
    fn point_at_radius(&self, r: f64) -> V4;
    /// Image of `x` under the `k`-th deck generator power of the covering chart.
    fn deck(&self, _k: i64, _x: &V4) -> Option<V4> {
        None
    }
    /// Constant differential of the `k`-th deck map.
    fn deck_differential(&self, _k: i64) -> M4 {
        M4::identity()
    }
    fn has_deck(&self) -> bool {
        false
    }
    /// Rough length of the generator loop near `x`, used to pick windows.
    fn generator_length_hint(&self, _x: &V4) -> Option<f64> {
        None
    }
    /// Period-one circle action `u ↦ Φ_u(x)` when the model carries one.
    fn circle_action(&self, _x: &V4, _u: f64) -> Option<V4> {
        None
    }
    /// Coordinate generator of the circle action (period one).
    fn circle_generator(&self, _x: &V4) -> Option<V4> {
        None
    }
    /// Closed-form distance, when available.
    fn exact_distance(&self, _x: &V4, _y: &V4) -> Option<f64> {
        None
    }
    /// Map of the unit cube onto the shell `r0 <= radius <= r1`.
    ///
    /// Returns the chart point and the coordinate Jacobian, or a zero weight when the
    /// sample falls outside the shell. Multiplying by [`volume_density`] gives an
    /// unbiased Riemannian-volume estimator.
    fn shell_sample(&self, u: &[f64; 4], r0: f64, r1: f64) -> (V4, f64);
    /// Coordinate box for Monte Carlo balls of radius `t` around `x` together with
    /// a closed-form membership test. `None` when no closed form exists.
    fn ball_box(&self, _x: &V4, _t: f64) -> Option<(V4, V4)> {
        None
    }
}

/// Default finite-difference step: `max(1e-5, 1e-4 |x|)`.
pub fn fd_step(x: &V4) -> f64 {
    (1e-4 * x.norm()).max(1e-5)
}

pub fn metric_at<M: MetricField + ?Sized>(m: &M, x: &V4) -> Result<M4> {
    m.metric(x)
}

pub fn volume_density<M: MetricField + ?Sized>(m: &M, x: &V4) -> Result<f64> {
    let g = m.metric(x)?;
    Ok(Float::sqrt(g.determinant().max(0.0)))
}

/// Fourth-order central difference `(-f(2h) + 8 f(h) - 8 f(-h) + f(-2h)) / 12h`.
pub(crate) fn diff4<T, F>(x: &V4, k: usize, h: f64, mut f: F) -> Result<T>
where
    T: core::ops::Sub<Output = T> + core::ops::Add<Output = T> + core::ops::Mul<f64, Output = T>,
    F: FnMut(&V4) -> Result<T>,
{
    let at = |s: f64| {
        let mut y = *x;
        y[k] += s * h;
        y
    };
    let (p1, m1, p2, m2) = (f(&at(1.0))?, f(&at(-1.0))?, f(&at(2.0))?, f(&at(-2.0))?);
    Ok(((p1 - m1) * 8.0 + (m2 - p2)) * (1.0 / (12.0 * h)))
}

/// Finite-difference metric jet with step `h` (fourth-order stencil).
pub fn metric_jet_fd<M: MetricField + ?Sized>(m: &M, x: &V4, h: f64) -> Result<(M4, [M4; 4])> {
    let g = m.metric(x)?;
    let mut dg = [M4::zeros(); 4];
    for k in 0..m.dim() {
        dg[k] = diff4(x, k, h, |y| m.metric(y))?;
    }
    Ok((g, dg))
}

pub fn christoffel_from_jet(g: &M4, dg: &[M4; 4], d: usize) -> Result<Christoffel> {
    let gi = spd_inverse(g).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    let mut lower = [M4::zeros(); 4];
    for l in 0..d {
        for i in 0..d {
            for j in i..d {
                let v = 0.5 * (dg[i][(l, j)] + dg[j][(l, i)] - dg[l][(i, j)]);
                lower[l][(i, j)] = v;
                lower[l][(j, i)] = v;
            }
        }
    }
    let mut gam = [M4::zeros(); 4];
    for k in 0..d {
        for i in 0..d {
            for j in i..d {
                let mut s = 0.0;
                for l in 0..d {
                    s += gi[(k, l)] * lower[l][(i, j)];
                }
                gam[k][(i, j)] = s;
                gam[k][(j, i)] = s;
            }
        }
    }
    Ok(gam)
}

pub fn christoffel_at<M: MetricField + ?Sized>(m: &M, x: &V4) -> Result<Christoffel> {
    let (g, dg) = match m.metric_jet(x) {
        Some(j) => j?,
        None => metric_jet_fd(m, x, fd_step(x))?,
    };
    christoffel_from_jet(&g, &dg, m.dim())
}

/// Christoffel symbols from metric differences only, with an explicit step.
pub fn christoffel_fd<M: MetricField + ?Sized>(m: &M, x: &V4, h: f64) -> Result<Christoffel> {
    let (g, dg) = metric_jet_fd(m, x, h)?;
    christoffel_from_jet(&g, &dg, m.dim())
}

#[derive(Clone, Copy)]
struct ChristoffelOps(Christoffel);

impl core::ops::Sub for ChristoffelOps {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self(core::array::from_fn(|k| self.0[k] - o.0[k]))
    }
}
impl core::ops::Add for ChristoffelOps {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self(core::array::from_fn(|k| self.0[k] + o.0[k]))
    }
}
impl core::ops::Mul<f64> for ChristoffelOps {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self(core::array::from_fn(|k| self.0[k] * s))
    }
}

#[derive(Clone, Copy)]
struct T4Ops(Tensor4);

impl T4Ops {
    fn zip(self, o: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut out = self.0;
        for a in 0..4 {
            for b in 0..4 {
                for c in 0..4 {
                    for d in 0..4 {
                        out[a][b][c][d] = f(self.0[a][b][c][d], o.0[a][b][c][d]);
                    }
                }
            }
        }
        Self(out)
    }
}
impl core::ops::Sub for T4Ops {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self.zip(o, |a, b| a - b)
    }
}
impl core::ops::Add for T4Ops {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        self.zip(o, |a, b| a + b)
    }
}
impl core::ops::Mul<f64> for T4Ops {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        self.zip(self, |a, _| a * s)
    }
}

/// Lowered curvature tensor `R_{abcd} = <R(∂_c, ∂_d) ∂_b, ∂_a>` with the metric it was
/// computed against.
#[derive(Clone, Debug)]
pub struct CurvatureTensor {
    pub r: Tensor4,
    pub g: M4,
    pub dim: usize,
}

impl CurvatureTensor {
    pub fn norm(&self) -> f64 {
        match orthonormal_frame(&self.g) {
            Some(e) => tensor4_frame_norm(&self.r, &e, self.dim),
            None => f64::NAN,
        }
    }

    /// Sectional curvature of the plane spanned by `x` and `y`.
    pub fn sectional(&self, x: &V4, y: &V4) -> f64 {
        let d = self.dim;
        let mut num = 0.0;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for e in 0..d {
                        num += self.r[a][b][c][e] * x[a] * y[b] * x[c] * y[e];
                    }
                }
            }
        }
        let gxx = (x.transpose() * self.g * x)[(0, 0)];
        let gyy = (y.transpose() * self.g * y)[(0, 0)];
        let gxy = (x.transpose() * self.g * y)[(0, 0)];
        num / (gxx * gyy - gxy * gxy)
    }

    pub fn ricci(&self) -> M4 {
        let d = self.dim;
        let gi = spd_inverse(&self.g).unwrap_or_else(M4::identity);
        let mut ric = M4::zeros();
        for b in 0..d {
            for e in 0..d {
                let mut s = 0.0;
                for a in 0..d {
                    for c in 0..d {
                        s += gi[(a, c)] * self.r[a][b][c][e];
                    }
                }
                ric[(b, e)] = s;
            }
        }
        ric
    }
}

fn riemann_from(gam: &Christoffel, dgam: &[Christoffel; 4], g: &M4, d: usize) -> Tensor4 {
    // R^a_{bcd} = ∂_c Γ^a_{db} - ∂_d Γ^a_{cb} + Γ^a_{ce} Γ^e_{db} - Γ^a_{de} Γ^e_{cb}
    let mut up = zero_tensor4();
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    let mut v = dgam[c][a][(e, b)] - dgam[e][a][(c, b)];
                    for f in 0..d {
                        v += gam[a][(c, f)] * gam[f][(e, b)] - gam[a][(e, f)] * gam[f][(c, b)];
                    }
                    up[a][b][c][e] = v;
                }
            }
        }
    }
    let mut low = zero_tensor4();
    for a in 0..d {
        for b in 0..d {
            for c in 0..d {
                for e in 0..d {
                    let mut v = 0.0;
                    for f in 0..d {
                        v += g[(a, f)] * up[f][b][c][e];
                    }
                    low[a][b][c][e] = v;
                }
            }
        }
    }
    low
}

/// Riemann tensor with Christoffel differences taken at step `h`.
pub fn riemann_with_step<M: MetricField + ?Sized>(
    m: &M,
    x: &V4,
    h: f64,
) -> Result<CurvatureTensor> {
    let d = m.dim();
    let g = m.metric(x)?;
    let gam = christoffel_at(m, x)?;
    let mut dgam = [[M4::zeros(); 4]; 4];
    for k in 0..d {
        let dk = diff4(x, k, h, |y| christoffel_at(m, y).map(ChristoffelOps))?;
        dgam[k] = dk.0;
    }
    Ok(CurvatureTensor {
        r: riemann_from(&gam, &dgam, &g, d),
        g,
        dim: d,
    })
}

pub fn riemann_at<M: MetricField + ?Sized>(m: &M, x: &V4) -> Result<CurvatureTensor> {
    riemann_with_step(m, x, fd_step(x))
}

pub fn curvature_norm<M: MetricField + ?Sized>(m: &M, x: &V4) -> Result<f64> {
    Ok(riemann_at(m, x)?.norm())
}

/// `|∇Rm|` from central differences of the lowered curvature tensor.
pub fn curvature_derivative_norm<M: MetricField + ?Sized>(m: &M, x: &V4) -> Result<f64> {
    let d = m.dim();
    let h = fd_step(x);
    let base = riemann_at(m, x)?;
    let gam = christoffel_at(m, x)?;
    let mut nab = [zero_tensor4(); 4];
    for e in 0..d {
        let dr = diff4(x, e, h, |y| riemann_at(m, y).map(|c| T4Ops(c.r)))?.0;
        let r = &base.r;
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    for dd in 0..d {
                        let mut v = dr[a][b][c][dd];
                        for f in 0..d {
                            v -= gam[f][(e, a)] * r[f][b][c][dd]
                                + gam[f][(e, b)] * r[a][f][c][dd]
                                + gam[f][(e, c)] * r[a][b][f][dd]
                                + gam[f][(e, dd)] * r[a][b][c][f];
                        }
                        nab[e][a][b][c][dd] = v;
                    }
                }
            }
        }
    }
    let frame = orthonormal_frame(&base.g)
        .ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    // |∇Rm|^2 = Σ_e |(∇_{E_e} Rm)|^2 with E the orthonormal frame
    let mut total = 0.0;
    for i in 0..d {
        let mut t = zero_tensor4();
        for e in 0..d {
            let w = frame[(e, i)];
            if w == 0.0 {
                continue;
            }
            for a in 0..d {
                for b in 0..d {
                    for c in 0..d {
                        for dd in 0..d {
                            t[a][b][c][dd] += w * nab[e][a][b][c][dd];
                        }
                    }
                }
            }
        }
        let n = tensor4_frame_norm(&t, &frame, d);
        total += n * n;
    }
    Ok(Float::sqrt(total))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Round three-sphere of radius `a` in hyperspherical coordinates `(χ, θ, φ)`.
    struct Sphere3 {
        a: f64,
    }

    impl MetricField for Sphere3 {
        fn dim(&self) -> usize {
            3
        }
        fn chart(&self) -> Chart {
            Chart::Cartesian
        }
        fn check(&self, _x: &V4) -> Result<()> {
            Ok(())
        }
        fn metric(&self, x: &V4) -> Result<M4> {
            let a2 = self.a * self.a;
            let s = x[0].sin();
            let mut g = M4::identity();
            g[(0, 0)] = a2;
            g[(1, 1)] = a2 * s * s;
            g[(2, 2)] = a2 * s * s * x[1].sin() * x[1].sin();
            Ok(g)
        }
        fn metric_jet(&self, x: &V4) -> Option<Result<(M4, [M4; 4])>> {
            let a2 = self.a * self.a;
            let (s, c) = (x[0].sin(), x[0].cos());
            let (s1, c1) = (x[1].sin(), x[1].cos());
            let mut dg = [M4::zeros(); 4];
            dg[0][(1, 1)] = 2.0 * a2 * s * c;
            dg[0][(2, 2)] = 2.0 * a2 * s * c * s1 * s1;
            dg[1][(2, 2)] = 2.0 * a2 * s * s * s1 * c1;
            Some(self.metric(x).map(|g| (g, dg)))
        }
    }

    #[test]
    fn sphere_sectional_and_norm() {
        let m = Sphere3 { a: 2.0 };
        let x = V4::new(1.0, 1.2, 0.3, 0.0);
        let r = riemann_at(&m, &x).unwrap();
        let e0 = V4::new(1.0, 0.0, 0.0, 0.0);
        let e1 = V4::new(0.0, 1.0, 0.0, 0.0);
        let e2 = V4::new(0.3, 0.0, 1.0, 0.0);
        assert!((r.sectional(&e0, &e1) - 0.25).abs() < 1e-7);
        assert!((r.sectional(&e1, &e2) - 0.25).abs() < 1e-7);
        // constant curvature k: |Rm|^2 = 2 n (n - 1) k^2 with n = 3
        assert!((r.norm() - (12.0f64).sqrt() * 0.25).abs() < 1e-7);
        // Ric = 2 k g
        let ric = r.ricci();
        let g3 = crate::linalg::leading_block(&r.g, 3);
        let ric3 = crate::linalg::leading_block(&ric, 3);
        assert!((ric3 - g3 * 0.5).abs().max() < 1e-7);
        let dn = curvature_derivative_norm(&m, &x).unwrap();
        assert!(dn < 1e-5, "{dn}");
    }

    #[test]
    fn analytic_and_fd_christoffel_agree_on_sphere() {
        let m = Sphere3 { a: 1.5 };
        let x = V4::new(0.7, 2.0, 0.1, 0.0);
        let a = christoffel_at(&m, &x).unwrap();
        let b = christoffel_fd(&m, &x, 1e-4).unwrap();
        for k in 0..3 {
            assert!((a[k] - b[k]).abs().max() < 1e-10);
        }
    }

    #[test]
    fn fd_christoffel_is_step_stable() {
        let m = Sphere3 { a: 1.5 };
        let x = V4::new(0.7, 2.0, 0.1, 0.0);
        let a = christoffel_fd(&m, &x, 1e-4).unwrap();
        let b = christoffel_fd(&m, &x, 2e-4).unwrap();
        // Γ^0_{11} = -sin χ cos χ
        assert!((a[0][(1, 1)] + 0.7f64.sin() * 0.7f64.cos()).abs() < 1e-8);
        for k in 0..3 {
            assert!((a[k] - b[k]).abs().max() < 1e-7);
        }
    }
}
