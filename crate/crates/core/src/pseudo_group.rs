//! The pseudo-group `Γ(x, ρ)` of a lifted ball `B̂(0, 2ρ) ⊂ T_x M`.
//!
//! Tangent vectors at `x` are chart components; lengths use `g_x`. An element is the
//! map `τ_v = exp_x^{-1} ∘ D^k ∘ exp_x` for the deck power `k` whose loop lifts to `v`.

use crate::geodesics::{exp_map, geodesic_loops, log_map, GeodesicOptions, LoopOptions};
use crate::linalg::{norm_g, orthonormal_frame, pad};
use crate::manifold::{curvature_norm, Model};
use crate::{GeomError, Result, M4, V4};
use alloc::vec::Vec;
use core::f64::consts::FRAC_PI_4;
use num_traits::Float;

#[derive(Clone, Copy, Debug)]
pub struct PseudoGroupElement {
    /// Deck power; `0` is the identity.
    pub k: i64,
    /// `τ(0)`, the lift of `x` reached by the loop.
    pub v: V4,
    pub length: f64,
    /// Parallel transport around the loop, returned to `T_x`.
    pub holonomy: M4,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DomainMembership {
    Inside,
    Boundary,
    Outside,
}

impl DomainMembership {
    pub fn is_inside(self) -> bool {
        self == DomainMembership::Inside
    }
}

pub struct LiftedBall<'a, M: Model + ?Sized> {
    pub model: &'a M,
    pub x: V4,
    pub rho: f64,
    /// Square root of the largest sampled `|Rm|` on `B(x, 2ρ)`.
    pub lambda: f64,
    pub gx: M4,
    pub elements: Vec<PseudoGroupElement>,
    /// Elements were found by shooting; completeness is not certified.
    pub incomplete: bool,
    pub opts: GeodesicOptions,
}

/// Build `Γ(x, ρ)`: the identity and every loop element with `|τ(0)| < ρ`.
pub fn build_pseudo_group<'a, M: Model + ?Sized>(
    model: &'a M,
    x: &V4,
    rho: f64,
    opts: &LoopOptions,
) -> Result<LiftedBall<'a, M>> {
    if !(rho > 0.0) {
        return Err(GeomError::InvalidInput("rho must be positive"));
    }
    let gx = model.metric(x)?;
    let lambda = if model.is_flat() {
        0.0
    } else {
        sample_curvature_scale(model, x, 2.0 * rho, &opts.geodesic)?
    };
    if lambda * rho >= FRAC_PI_4 {
        return Err(GeomError::ScaleTooLarge {
            lambda_rho: lambda * rho,
        });
    }
    let search = geodesic_loops(model, x, rho, opts)?;
    let mut elements = alloc::vec![PseudoGroupElement {
        k: 0,
        v: V4::zeros(),
        length: 0.0,
        holonomy: M4::identity()
    }];
    for l in search.loops.iter().filter(|l| l.length < rho) {
        elements.push(PseudoGroupElement {
            k: l.k,
            v: l.v,
            length: l.length,
            holonomy: l.holonomy,
        });
    }
    let mut incomplete = search.incomplete;
    // an element without its inverse means the search missed something
    for e in &elements {
        if !elements.iter().any(|f| f.k == -e.k) {
            incomplete = true;
        }
    }
    Ok(LiftedBall {
        model,
        x: *x,
        rho,
        lambda,
        gx,
        elements,
        incomplete,
        opts: opts.geodesic,
    })
}

/// `sqrt(max |Rm|)` over `x` and the points `exp_x(±s E_i)`, `s ∈ {radius/2, radius}`.
pub fn sample_curvature_scale<M: Model + ?Sized>(
    m: &M,
    x: &V4,
    radius: f64,
    opts: &GeodesicOptions,
) -> Result<f64> {
    let g = m.metric(x)?;
    let e = orthonormal_frame(&g).ok_or(GeomError::InvalidInput("metric not positive definite"))?;
    let mut worst = curvature_norm(m, x)?;
    for i in 0..m.dim() {
        for s in [-1.0, -0.5, 0.5, 1.0] {
            let (y, _) = exp_map(m, x, &(e.column(i) * (s * radius)), opts)?;
            worst = worst.max(curvature_norm(m, &y)?);
        }
    }
    Ok(Float::sqrt(worst))
}

impl<'a, M: Model + ?Sized> LiftedBall<'a, M> {
    pub fn norm(&self, w: &V4) -> f64 {
        norm_g(&self.gx, w)
    }

    pub fn element(&self, k: i64) -> Option<&PseudoGroupElement> {
        self.elements.iter().find(|e| e.k == k)
    }

    /// Shortest nontrivial element with positive deck power: `τ(0) = v_x`.
    pub fn fundamental(&self) -> Option<&PseudoGroupElement> {
        self.elements
            .iter()
            .filter(|e| e.k > 0)
            .min_by(|a, b| a.length.total_cmp(&b.length))
    }

    /// `exp_x(w)` in the covering chart.
    pub fn exp(&self, w: &V4) -> Result<V4> {
        if self.model.is_flat() {
            return Ok(self.x + w);
        }
        Ok(exp_map(self.model, &self.x, w, &self.opts)?.0)
    }

    /// The lift of `y` near the guess `w0`.
    pub fn log_near(&self, y: &V4, w0: &V4) -> Result<V4> {
        if self.model.is_flat() {
            return Ok(y - self.x);
        }
        Ok(log_map(self.model, &self.x, y, Some(*w0), &self.opts)?.v)
    }

    /// `exp_x^{-1} ∘ D^k ∘ exp_x` on the branch through `v_k + H^{-1} w`.
    pub fn apply_power(&self, k: i64, w: &V4, guess: &V4) -> Result<V4> {
        if k == 0 {
            return Ok(*w);
        }
        let y = self
            .model
            .deck(k, &self.exp(w)?)
            .ok_or(GeomError::InvalidInput("model has no deck group"))?;
        self.log_near(&y, guess)
    }

    pub fn tau_apply(&self, e: &PseudoGroupElement, w: &V4) -> Result<V4> {
        if e.k == 0 {
            return Ok(*w);
        }
        let hinv = pad(&e.holonomy, self.model.dim())
            .try_inverse()
            .unwrap_or_else(M4::identity);
        self.apply_power(e.k, w, &(e.v + hinv * w))
    }

    /// `d̂(a, b)` through the covering chart; accurate for nearby points.
    pub fn lifted_distance(&self, a: &V4, b: &V4) -> Result<f64> {
        if self.model.is_flat() {
            return Ok((a - b).norm());
        }
        let pa = self.exp(a)?;
        let pb = self.exp(b)?;
        let lr = log_map(self.model, &pa, &pb, None, &self.opts)?;
        Ok(norm_g(&self.model.metric(&pa)?, &lr.v))
    }

    /// Number of lifts of `y` in `B̂(0, radius)`, orbiting one lift under the
    /// elements. Needs `radius + d(x, y) <= ρ` so that every relevant element is known.
    pub fn lift_count(&self, y: &V4, radius: f64) -> Result<usize> {
        let w0 = self.log_near(y, &(y - self.x))?;
        if radius + self.norm(&w0) > self.rho * (1.0 + 1e-12) {
            return Err(GeomError::InvalidInput(
                "lift_count radius exceeds the ball's element range",
            ));
        }
        let mut lifts: Vec<V4> = Vec::new();
        for e in &self.elements {
            let w = self.tau_apply(e, &w0)?;
            if self.norm(&w) < radius
                && !lifts
                    .iter()
                    .any(|u| self.norm(&(u - w)) < 1e-9 * radius.max(1.0))
            {
                lifts.push(w);
            }
        }
        Ok(lifts.len())
    }

    /// Membership in `F` (all elements) or `F_τ` (powers in `subset`).
    pub fn fundamental_domain(&self, subset: Option<&[i64]>, w: &V4) -> Result<DomainMembership> {
        let nw = self.norm(w);
        let mut boundary = false;
        for e in &self.elements {
            if e.k == 0 || subset.is_some_and(|s| !s.contains(&e.k)) {
                continue;
            }
            let nt = self.norm(&self.tau_apply(e, w)?);
            let tol = 1e-9 * nw.max(1.0);
            if nt < nw - tol {
                return Ok(DomainMembership::Outside);
            }
            if (nt - nw).abs() <= tol {
                boundary = true;
            }
        }
        Ok(if boundary {
            DomainMembership::Boundary
        } else {
            DomainMembership::Inside
        })
    }

    /// Both inequalities of the slab `I_τ(x, ρ)`.
    pub fn in_trig_slab(&self, e: &PseudoGroupElement, w: &V4) -> Result<bool> {
        let v = e.v;
        let inv = self
            .element(-e.k)
            .map(|f| f.v)
            .ok_or(GeomError::InvalidInput("inverse missing"))?;
        let n2 = self.norm(&v).powi(2);
        let bound = 0.5 * n2 + 0.5 * self.lambda * self.lambda * self.rho * self.rho * n2;
        let tol = 1e-9 * n2.max(1.0);
        let a = (w.transpose() * self.gx * v)[(0, 0)];
        let b = (w.transpose() * self.gx * inv)[(0, 0)];
        Ok(a <= bound + tol && b <= bound + tol)
    }

    /// `d̂(τ_v(w), v + p_v^{-1} w)`.
    pub fn translation_defect(&self, e: &PseudoGroupElement, w: &V4) -> Result<f64> {
        let tw = self.tau_apply(e, w)?;
        let hinv = pad(&e.holonomy, self.model.dim())
            .try_inverse()
            .unwrap_or_else(M4::identity);
        let pred = e.v + hinv * w;
        self.lifted_distance(&tw, &pred)
    }

    /// `|τ^k(w) − w − k v_x|` with `v_x` the fundamental element.
    pub fn loop_iterate_translation_defect(&self, k: i64, w: &V4) -> Result<f64> {
        if k == 0 {
            return Ok(0.0);
        }
        let vx = self.fundamental().ok_or(GeomError::NoLifts)?.v;
        let pred = w + vx * k as f64;
        let img = self.apply_power(k, w, &pred)?;
        Ok(self.norm(&(img - pred)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Euclidean, FlatScrew};
    use crate::zoo::{loop_length, screw_apply, Angle};

    #[test]
    fn euclidean_group_is_trivial() {
        let m = Euclidean::new(3, None).unwrap();
        let b = build_pseudo_group(
            &m,
            &V4::new(1.0, 2.0, 0.0, 0.0),
            5.0,
            &LoopOptions::default(),
        )
        .unwrap();
        assert_eq!(b.elements.len(), 1);
        assert_eq!(b.lift_count(&V4::new(1.5, 2.0, 0.0, 0.0), 4.0).unwrap(), 1);
    }

    #[test]
    fn flat_elements_match_enumeration() {
        let a = Angle::rational(1, 5).unwrap();
        let m = FlatScrew::new(a);
        let x = V4::new(3.0, 0.0, 0.0, 0.0);
        let b = build_pseudo_group(&m, &x, 12.0, &LoopOptions::default()).unwrap();
        let mut ks: Vec<i64> = b.elements.iter().map(|e| e.k).collect();
        ks.sort();
        let expect: Vec<i64> = (-40..=40i64)
            .filter(|&k| k == 0 || loop_length(&a, k, 3.0) < 12.0)
            .collect();
        assert_eq!(ks, expect);
        assert!(!b.incomplete);
        let w = V4::new(0.3, -1.2, 0.7, 0.0);
        for e in &b.elements {
            let direct = screw_apply(&a, e.k, &(x + w)) - x;
            assert!((b.tau_apply(e, &w).unwrap() - direct).norm() < 1e-12);
            assert!(b.translation_defect(e, &w).unwrap() < 1e-12);
        }
    }

    #[test]
    fn lift_count_example() {
        let m = FlatScrew::new(Angle::rational(1, 3).unwrap());
        let x = V4::new(10.0, 0.0, 0.0, 0.0);
        let b = build_pseudo_group(&m, &x, 10.0, &LoopOptions::default()).unwrap();
        // k = 0, ±3, ±6, ±9
        assert_eq!(b.lift_count(&x, 10.0).unwrap(), 7);
    }
}
