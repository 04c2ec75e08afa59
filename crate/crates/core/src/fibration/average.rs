//! Averaging the metric along fibers, the vertical field, and the O'Neill formula
//! for the curvature of the base.

use crate::linalg::{dot_g, norm_g, orthonormal_frame};
use crate::manifold::{christoffel_at, diff4, fd_step, riemann_at, Chart, MetricField};
use crate::ode::{dopri5, OdeOptions};
use crate::{GeomError, Model, Result, M4, V4};
use num_traits::Float;

/// A unit vertical vector field.
pub trait VerticalField {
    fn vertical(&self, p: &V4) -> Result<V4>;
}

/// The model's circle generator normalized to unit length.
pub struct CircleVertical<'a, M: Model + ?Sized> {
    pub model: &'a M,
}

impl<M: Model + ?Sized> VerticalField for CircleVertical<'_, M> {
    fn vertical(&self, p: &V4) -> Result<V4> {
        let k = self
            .model
            .circle_generator(p)
            .ok_or(GeomError::InvalidInput("model has no circle action"))?;
        let g = self.model.metric(p)?;
        Ok(k / norm_g(&g, &k))
    }
}

/// A one-parameter family of maps `φ_s`, `s ∈ [0, period]`, closing up after one period.
pub trait FiberFlow {
    fn period(&self, p: &V4) -> Result<f64>;
    fn flow(&self, p: &V4, s: f64) -> Result<V4>;
}

/// The model's circle action with unit period.
pub struct CircleFlow<'a, M: Model + ?Sized> {
    pub model: &'a M,
}

impl<M: Model + ?Sized> FiberFlow for CircleFlow<'_, M> {
    fn period(&self, _p: &V4) -> Result<f64> {
        Ok(1.0)
    }
    fn flow(&self, p: &V4, s: f64) -> Result<V4> {
        self.model
            .circle_action(p, s)
            .ok_or(GeomError::InvalidInput("model has no circle action"))
    }
}

/// Unit-speed flow of a vertical field; the period is the model's generator length.
pub struct UnitVerticalFlow<'a, M: Model + ?Sized, V: VerticalField> {
    pub model: &'a M,
    pub field: V,
    pub ode: OdeOptions,
}

impl<M: Model + ?Sized, V: VerticalField> FiberFlow for UnitVerticalFlow<'_, M, V> {
    fn period(&self, p: &V4) -> Result<f64> {
        self.model
            .generator_length_hint(p)
            .ok_or(GeomError::InvalidInput("no fiber length available"))
    }
    fn flow(&self, p: &V4, s: f64) -> Result<V4> {
        if s == 0.0 {
            return Ok(*p);
        }
        let y0 = [p[0], p[1], p[2], p[3]];
        let (y, _) = dopri5(
            |_t, y: &[f64; 4]| {
                let v = self.field.vertical(&V4::from_column_slice(y))?;
                Ok([v[0], v[1], v[2], v[3]])
            },
            0.0,
            s,
            y0,
            &self.ode,
            |_, _, _| Ok(()),
        )?;
        Ok(V4::from_column_slice(&y))
    }
}

fn flow_differential<F: FiberFlow + ?Sized>(flow: &F, p: &V4, s: f64, d: usize) -> Result<M4> {
    let h = 1e-4 * p.norm().max(1.0);
    let mut j = M4::identity();
    for k in 0..d {
        let col = diff4(p, k, h, |q| flow.flow(q, s))?;
        j.set_column(k, &col);
    }
    Ok(j)
}

/// `h_p = (1/l) ∫_0^l φ_s^* g ds` by the periodic trapezoid rule on `n` nodes.
pub fn fiber_average_metric<M, F>(m: &M, flow: &F, p: &V4, n: usize) -> Result<M4>
where
    M: MetricField + ?Sized,
    F: FiberFlow + ?Sized,
{
    if n == 0 {
        return Err(GeomError::InvalidInput("need at least one quadrature node"));
    }
    let d = m.dim();
    let period = flow.period(p)?;
    let mut acc = M4::zeros();
    for i in 0..n {
        let s = period * i as f64 / n as f64;
        let q = flow.flow(p, s)?;
        let j = flow_differential(flow, p, s, d)?;
        acc += j.transpose() * m.metric(&q)? * j;
    }
    let mut h = acc / n as f64;
    for i in d..4 {
        h[(i, i)] = 1.0;
    }
    Ok(h)
}

/// The fiber-averaged metric as a metric field in the model's chart.
pub struct AveragedMetric<'a, M: Model + ?Sized, F: FiberFlow> {
    pub model: &'a M,
    pub flow: F,
    pub nodes: usize,
}

impl<M: Model + ?Sized, F: FiberFlow> MetricField for AveragedMetric<'_, M, F> {
    fn dim(&self) -> usize {
        self.model.dim()
    }
    fn chart(&self) -> Chart {
        self.model.chart()
    }
    fn check(&self, x: &V4) -> Result<()> {
        self.model.check(x)
    }
    fn metric(&self, x: &V4) -> Result<M4> {
        fiber_average_metric(self.model, &self.flow, x, self.nodes)
    }
}

/// `|∇V|` with `∇_a V^k = ∂_a V^k + Γ^k_{aj} V^j`, normed in a `g`-orthonormal frame.
pub fn vertical_derivative_norm<M, V>(m: &M, field: &V, p: &V4) -> Result<f64>
where
    M: MetricField + ?Sized,
    V: VerticalField + ?Sized,
{
    let d = m.dim();
    let g = m.metric(p)?;
    let gam = christoffel_at(m, p)?;
    let v = field.vertical(p)?;
    let h = fd_step(p);
    let mut nab = M4::zeros(); // column a: ∇_a V
    for a in 0..d {
        let mut col = diff4(p, a, h, |q| field.vertical(q))?;
        for k in 0..d {
            for j in 0..d {
                col[k] += gam[k][(a, j)] * v[j];
            }
        }
        nab.set_column(a, &col);
    }
    let e = orthonormal_frame(&g).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    // components ∇_{e_b} V in the frame: e^{-1} (nab e)
    let ei = e
        .try_inverse()
        .ok_or(GeomError::InvalidInput("degenerate frame"))?;
    let t = ei * nab * e;
    let mut s = 0.0;
    for i in 0..d {
        for j in 0..d {
            s += t[(i, j)] * t[(i, j)];
        }
    }
    Ok(Float::sqrt(s))
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OneillReport {
    /// Sectional curvature of the total-space metric on the horizontal plane.
    pub sect_total: f64,
    /// `h([Y, Z], V)` for the horizontal orthonormal pair.
    pub bracket: f64,
    /// `Sect_h(Y∧Z) + ¾ h([Y,Z],V)²`.
    pub base: f64,
}

/// Base sectional curvature of the plane spanned by the horizontal parts of `y`, `z`.
///
/// `Y`, `Z` are extended as the horizontal projections of constant coordinate fields;
/// the vertical part of their bracket is tensorial, so the extension does not matter.
pub fn oneill_base_curvature<H, V>(
    metric: &H,
    field: &V,
    p: &V4,
    y: &V4,
    z: &V4,
) -> Result<OneillReport>
where
    H: MetricField + ?Sized,
    V: VerticalField + ?Sized,
{
    let d = metric.dim();
    let proj = |q: &V4, w: &V4| -> Result<V4> {
        let g = metric.metric(q)?;
        let v = field.vertical(q)?;
        Ok(w - v * (dot_g(&g, w, &v) / dot_g(&g, &v, &v)))
    };
    let g = metric.metric(p)?;
    let v = field.vertical(p)?;
    let v = v / norm_g(&g, &v);
    let y0 = proj(p, y)?;
    let y0 = y0 / norm_g(&g, &y0);
    let mut z0 = proj(p, z)?;
    z0 -= y0 * dot_g(&g, &z0, &y0);
    let nz = norm_g(&g, &z0);
    if !(nz > 1e-10) {
        return Err(GeomError::InvalidInput("horizontal parts are parallel"));
    }
    let z0 = z0 / nz;
    let h = fd_step(p);
    let mut dy = M4::zeros();
    let mut dz = M4::zeros();
    for a in 0..d {
        dy.set_column(a, &diff4(p, a, h, |q| proj(q, &y0))?);
        dz.set_column(a, &diff4(p, a, h, |q| proj(q, &z0))?);
    }
    let bracket_vec = dz * y0 - dy * z0;
    let bracket = dot_g(&g, &bracket_vec, &v);
    let sect_total = riemann_at(metric, p)?.sectional(&y0, &z0);
    Ok(OneillReport {
        sect_total,
        bracket,
        base: sect_total + 0.75 * bracket * bracket,
    })
}
