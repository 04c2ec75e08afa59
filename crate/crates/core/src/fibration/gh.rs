//! The center-of-mass Gromov–Hausdorff chart.

use crate::exec::block_rng;
use crate::geodesics::LoopOptions;
use crate::linalg::{dot_g, norm_g, pad};
use crate::pseudo_group::{build_pseudo_group, LiftedBall};
use crate::{GeomError, Model, Result, M4, V4};
use alloc::vec::Vec;
use nalgebra::Vector3;
use num_traits::Float;
use rand::Rng;

/// A vector of the hyperplane `H`, in the `g_x`-orthonormal basis of the chart frame.
/// Three-dimensional models leave the last slot at zero.
pub type HVec = Vector3<f64>;

pub struct GhChart<'a, M: Model + ?Sized> {
    pub ball: LiftedBall<'a, M>,
    pub kappa: f64,
    /// `κ r(x)`, the radius of the lifted ball carrying the pseudo-group.
    pub scale: f64,
    /// Tip of the fundamental-loop lift; the axis normal to `H`.
    pub vx: V4,
    /// `g_x`-orthonormal frame: column 0 along `v_x`, columns `1..d` span `H`.
    pub frame: M4,
    pub frame_inv: M4,
    hinv: Vec<M4>,
}

fn frame_along<M: Model + ?Sized>(m: &M, gx: &M4, axis: &V4) -> Result<M4> {
    let d = m.dim();
    let mut cols: Vec<V4> = Vec::with_capacity(d);
    let n = norm_g(gx, axis);
    if !(n > 0.0) {
        return Err(GeomError::InvalidInput("axis must be nonzero"));
    }
    cols.push(axis / n);
    for i in 0..d {
        if cols.len() == d {
            break;
        }
        let mut e = V4::zeros();
        e[i] = 1.0;
        for c in &cols {
            e -= c * dot_g(gx, c, &e);
        }
        let ne = norm_g(gx, &e);
        if ne > 1e-6 {
            cols.push(e / ne);
        }
    }
    let mut f = M4::identity();
    for (j, c) in cols.iter().enumerate() {
        f.set_column(j, c);
    }
    Ok(f)
}

/// Chart at `x` with the pseudo-group built at scale `κ r(x)`; `H ⊥ v_x`.
pub fn gh_chart<'a, M: Model + ?Sized>(
    m: &'a M,
    x: &V4,
    kappa: f64,
    opts: &LoopOptions,
) -> Result<GhChart<'a, M>> {
    let scale = kappa * m.radius(x);
    let ball = build_pseudo_group(m, x, scale, opts)?;
    let vx = ball.fundamental().ok_or(GeomError::NoLifts)?.v;
    finish(ball, kappa, scale, vx)
}

/// Chart with a prescribed axis, for models whose pseudo-group at this scale is trivial.
pub fn gh_chart_with_axis<'a, M: Model + ?Sized>(
    m: &'a M,
    x: &V4,
    kappa: f64,
    axis: &V4,
    opts: &LoopOptions,
) -> Result<GhChart<'a, M>> {
    let scale = kappa * m.radius(x);
    let ball = build_pseudo_group(m, x, scale, opts)?;
    finish(ball, kappa, scale, *axis)
}

fn finish<M: Model + ?Sized>(
    ball: LiftedBall<'_, M>,
    kappa: f64,
    scale: f64,
    vx: V4,
) -> Result<GhChart<'_, M>> {
    let frame = frame_along(ball.model, &ball.gx, &vx)?;
    let frame_inv = frame
        .try_inverse()
        .ok_or(GeomError::InvalidInput("degenerate frame"))?;
    let d = ball.model.dim();
    let hinv = ball
        .elements
        .iter()
        .map(|e| {
            pad(&e.holonomy, d)
                .try_inverse()
                .unwrap_or_else(M4::identity)
        })
        .collect();
    Ok(GhChart {
        ball,
        kappa,
        scale,
        vx,
        frame,
        frame_inv,
        hinv,
    })
}

impl<'a, M: Model + ?Sized> GhChart<'a, M> {
    pub fn dim(&self) -> usize {
        self.ball.model.dim()
    }

    /// Lifts entering the center of mass lie in `B̂(0, κ r(x) / 2)`.
    pub fn lift_radius(&self) -> f64 {
        0.5 * self.scale
    }

    /// Frame coordinates `z` of a tangent vector `v = frame · z`.
    pub fn to_frame(&self, v: &V4) -> V4 {
        self.frame_inv * v
    }

    pub fn from_frame(&self, z: &V4) -> V4 {
        self.frame * z
    }

    /// `v_H` in the basis of `H`.
    pub fn project(&self, v: &V4) -> HVec {
        let z = self.to_frame(v);
        let mut h = HVec::zeros();
        for i in 1..self.dim() {
            h[i - 1] = z[i];
        }
        h
    }

    /// Lifts `τ(v)`, `τ ∈ Γ(x, κr)`, lying in `B̂(0, κ r / 2)`.
    pub fn lifts(&self, v: &V4) -> Result<Vec<V4>> {
        let rr = self.lift_radius();
        let mut out = Vec::new();
        for (e, hinv) in self.ball.elements.iter().zip(&self.hinv) {
            let w = if e.k == 0 {
                *v
            } else {
                let pred = e.v + hinv * v;
                if self.ball.norm(&pred) > 1.1 * rr + 0.5 {
                    continue;
                }
                self.ball.tau_apply(e, v)?
            };
            if self.ball.norm(&w) < rr {
                out.push(w);
            }
        }
        Ok(out)
    }

    /// `ĥ(v) = h(exp_x v)`: the mean of the `H`-projections of the lifts.
    pub fn h_hat(&self, v: &V4) -> Result<HVec> {
        let lifts = self.lifts(v)?;
        if lifts.is_empty() {
            return Err(GeomError::NoLifts);
        }
        let mut acc = HVec::zeros();
        for w in &lifts {
            acc += self.project(w);
        }
        Ok(acc / lifts.len() as f64)
    }

    /// `h(y)` for a point of the model, lifted by `log_x` near `guess`.
    pub fn h(&self, y: &V4, guess: &V4) -> Result<HVec> {
        let v = self.ball.log_near(y, guess)?;
        self.h_hat(&v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GhDefect {
    /// `max |d(y, z) − |h(y) − h(z)||` over the sampled pairs.
    pub max: f64,
    pub mean: f64,
    pub pairs: usize,
    /// Radius of the target ball in `H`.
    pub target_radius: f64,
}

/// Sample pairs in `Ω = h^{-1}(B(0, 0.1 κ r))` and measure the distance defect.
///
/// Half of the pairs are independent; the other half are local (separation below a
/// few loop lengths), where the additive defect concentrates.
pub fn gh_defect<M: Model + ?Sized>(
    chart: &GhChart<'_, M>,
    pairs: usize,
    seed: u64,
) -> Result<GhDefect> {
    let m = chart.ball.model;
    let d = chart.dim();
    let target = 0.1 * chart.scale;
    let axial = 0.5 * chart.ball.norm(&chart.vx);
    let mut rng = block_rng(seed, 0);
    let sample_in_ball = |rng: &mut rand_chacha::ChaCha8Rng, radius: f64| -> V4 {
        loop {
            let mut z = V4::zeros();
            for i in 1..d {
                z[i] = radius * (2.0 * rng.random::<f64>() - 1.0);
            }
            if (1..d).map(|i| z[i] * z[i]).sum::<f64>() <= radius * radius {
                z[0] = axial * (2.0 * rng.random::<f64>() - 1.0);
                return z;
            }
        }
    };
    let (mut max, mut sum, mut n, mut tries) = (0.0f64, 0.0, 0usize, 0usize);
    while n < pairs {
        tries += 1;
        if tries > 20 * pairs + 100 {
            return Err(GeomError::InvalidInput(
                "could not sample pairs inside the chart domain",
            ));
        }
        let zy = sample_in_ball(&mut rng, target);
        let zz = if n % 2 == 0 {
            sample_in_ball(&mut rng, target)
        } else {
            let sep = (4.0 * axial).min(target);
            let off = sample_in_ball(&mut rng, sep);
            zy + off
        };
        let (vy, vz) = (chart.from_frame(&zy), chart.from_frame(&zz));
        let (hy, hz) = (chart.h_hat(&vy)?, chart.h_hat(&vz)?);
        if hy.norm() > target || hz.norm() > target {
            continue;
        }
        let (py, pz) = (chart.ball.exp(&vy)?, chart.ball.exp(&vz)?);
        let dist = m
            .exact_distance(&py, &pz)
            .ok_or(GeomError::InvalidInput("GH defect needs an exact distance"))?;
        let defect = Float::abs(dist - (hy - hz).norm());
        max = max.max(defect);
        sum += defect;
        n += 1;
    }
    Ok(GhDefect {
        max,
        mean: sum / n.max(1) as f64,
        pairs: n,
        target_radius: target,
    })
}
