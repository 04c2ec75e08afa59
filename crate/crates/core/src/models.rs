//! Model metrics.
//!
//! | model | chart | coordinates |
//! |---|---|---|
//! | [`Euclidean`] | Cartesian | `x_0 … x_{n-1}` (optionally last one periodic) |
//! | [`FlatScrew`] | screw cover | `(x, y, z)`, deck = screw motion |
//! | [`TaubNut`] | radial | `(t, θ, φ, ψ)`, `t` = distance from the nut |
//! | [`MultiTaubNut`] | Gibbons–Hawking | `(x, y, z, ψ)` |
//! | [`Schwarzschild`] | isotropic | `(τ, x, y, z)` |
//! | [`PerturbedTaubNut`] | radial | Taub-NUT plus `δ cos ψ / t² dt²` |

use crate::manifold::{Chart, MetricField, Model};
use crate::ode::{dopri5, OdeOptions};
use crate::zoo::{deck_distance, flat_inj_auto, safe_window, screw_apply, Angle, ScrewMotion};
use crate::{GeomError, Result, M4, V4};
use alloc::vec::Vec;
use core::f64::consts::PI;
use num_traits::Float;

fn box_sample(u: &[f64; 4], lo: &V4, hi: &V4, d: usize) -> (V4, f64) {
    let mut x = V4::zeros();
    let mut w = 1.0;
    for i in 0..d {
        x[i] = lo[i] + u[i] * (hi[i] - lo[i]);
        w *= hi[i] - lo[i];
    }
    (x, w)
}

fn unit_direction(u1: f64, u2: f64) -> (f64, f64, f64) {
    let c = 1.0 - 2.0 * u1;
    let s = Float::sqrt((1.0 - c * c).max(0.0));
    let p = 2.0 * PI * u2;
    (s * Float::cos(p), s * Float::sin(p), c)
}

// ---------------------------------------------------------------------------

/// Flat `R^n`, optionally with the last coordinate of period `period`.
#[derive(Clone, Debug, PartialEq)]
pub struct Euclidean {
    pub dim: usize,
    pub period: Option<f64>,
}

impl Euclidean {
    pub fn new(dim: usize, period: Option<f64>) -> Result<Self> {
        if !(2..=4).contains(&dim) {
            return Err(GeomError::InvalidInput(
                "Euclidean dimension must be 2, 3 or 4",
            ));
        }
        if let Some(p) = period {
            if !(p > 0.0) {
                return Err(GeomError::InvalidInput("period must be positive"));
            }
        }
        Ok(Self { dim, period })
    }

    fn radial_dims(&self) -> usize {
        if self.period.is_some() {
            self.dim - 1
        } else {
            self.dim
        }
    }
}

impl MetricField for Euclidean {
    fn dim(&self) -> usize {
        self.dim
    }
    fn chart(&self) -> Chart {
        Chart::Cartesian
    }
    fn check(&self, x: &V4) -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GeomError::OutsideChart(*x))
        }
    }
    fn metric(&self, x: &V4) -> Result<M4> {
        self.check(x)?;
        Ok(M4::identity())
    }
    fn metric_jet(&self, x: &V4) -> Option<Result<(M4, [M4; 4])>> {
        Some(self.metric(x).map(|g| (g, [M4::zeros(); 4])))
    }
}

impl Model for Euclidean {
    fn name(&self) -> &'static str {
        "euclidean"
    }
    fn is_flat(&self) -> bool {
        true
    }
    fn base_point(&self) -> V4 {
        V4::zeros()
    }
    fn radius(&self, x: &V4) -> f64 {
        let n = self.radial_dims();
        Float::sqrt((0..n).map(|i| x[i] * x[i]).sum::<f64>())
    }
    fn radius_is_distance_from_base(&self) -> bool {
        self.period.is_none()
    }
    fn point_at_radius(&self, r: f64) -> V4 {
        V4::new(r, 0.0, 0.0, 0.0)
    }
    fn deck(&self, k: i64, x: &V4) -> Option<V4> {
        let p = self.period?;
        let mut y = *x;
        y[self.dim - 1] += k as f64 * p;
        Some(y)
    }
    fn has_deck(&self) -> bool {
        self.period.is_some()
    }
    fn generator_length_hint(&self, _x: &V4) -> Option<f64> {
        self.period
    }
    fn circle_action(&self, x: &V4, u: f64) -> Option<V4> {
        self.deck(0, x).map(|mut y| {
            y[self.dim - 1] += u * self.period.unwrap();
            y
        })
    }
    fn circle_generator(&self, _x: &V4) -> Option<V4> {
        let p = self.period?;
        let mut v = V4::zeros();
        v[self.dim - 1] = p;
        Some(v)
    }
    fn exact_distance(&self, x: &V4, y: &V4) -> Option<f64> {
        match self.period {
            None => Some((y - x).norm()),
            Some(p) => {
                let mut d = y - x;
                let last = self.dim - 1;
                d[last] -= p * Float::round(d[last] / p);
                Some(d.norm())
            }
        }
    }
    fn shell_sample(&self, u: &[f64; 4], r0: f64, r1: f64) -> (V4, f64) {
        let n = self.radial_dims();
        let mut lo = V4::from_element(-r1);
        let mut hi = V4::from_element(r1);
        if let Some(p) = self.period {
            lo[self.dim - 1] = 0.0;
            hi[self.dim - 1] = p;
        }
        let (x, w) = box_sample(u, &lo, &hi, self.dim);
        let r = Float::sqrt((0..n).map(|i| x[i] * x[i]).sum::<f64>());
        (x, if r >= r0 && r <= r1 { w } else { 0.0 })
    }
    fn ball_box(&self, x: &V4, t: f64) -> Option<(V4, V4)> {
        let mut lo = x - V4::from_element(t);
        let mut hi = x + V4::from_element(t);
        for i in self.dim..4 {
            lo[i] = 0.0;
            hi[i] = 0.0;
        }
        if let Some(p) = self.period {
            let last = self.dim - 1;
            lo[last] = x[last] - 0.5 * p;
            hi[last] = x[last] + 0.5 * p;
        }
        Some((lo, hi))
    }
}

// ---------------------------------------------------------------------------

/// `R^3` modulo the screw motion `(rotation by θ about z) ∘ (z ↦ z + 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatScrew {
    pub screw: ScrewMotion,
}

impl FlatScrew {
    pub fn new(angle: Angle) -> Self {
        Self {
            screw: ScrewMotion::new(angle),
        }
    }

    pub fn angle(&self) -> &Angle {
        &self.screw.angle
    }

    /// Quotient distance with a window that always contains the minimizer.
    pub fn distance(&self, x: &V4, y: &V4) -> f64 {
        let w = safe_window(x, y);
        deck_distance(self.angle(), x, y, w)
            .map(|(d, _)| d)
            .unwrap_or(f64::INFINITY)
    }
}

impl MetricField for FlatScrew {
    fn dim(&self) -> usize {
        3
    }
    fn chart(&self) -> Chart {
        Chart::ScrewCover
    }
    fn check(&self, x: &V4) -> Result<()> {
        if x.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(GeomError::OutsideChart(*x))
        }
    }
    fn metric(&self, x: &V4) -> Result<M4> {
        self.check(x)?;
        Ok(M4::identity())
    }
    fn metric_jet(&self, x: &V4) -> Option<Result<(M4, [M4; 4])>> {
        Some(self.metric(x).map(|g| (g, [M4::zeros(); 4])))
    }
}

impl Model for FlatScrew {
    fn name(&self) -> &'static str {
        "flat_screw"
    }
    fn is_flat(&self) -> bool {
        true
    }
    fn base_point(&self) -> V4 {
        V4::zeros()
    }
    fn radius(&self, x: &V4) -> f64 {
        Float::hypot(x[0], x[1])
    }
    fn point_at_radius(&self, r: f64) -> V4 {
        V4::new(r, 0.0, 0.0, 0.0)
    }
    fn deck(&self, k: i64, x: &V4) -> Option<V4> {
        Some(screw_apply(self.angle(), k, x))
    }
    fn deck_differential(&self, k: i64) -> M4 {
        self.screw.rotation(k)
    }
    fn has_deck(&self) -> bool {
        true
    }
    fn generator_length_hint(&self, x: &V4) -> Option<f64> {
        Some(2.0 * flat_inj_auto(self.angle(), self.radius(x)).0)
    }
    fn exact_distance(&self, x: &V4, y: &V4) -> Option<f64> {
        Some(self.distance(x, y))
    }
    fn shell_sample(&self, u: &[f64; 4], r0: f64, r1: f64) -> (V4, f64) {
        let rho = Float::sqrt(r0 * r0 + u[0] * (r1 * r1 - r0 * r0));
        let a = 2.0 * PI * u[1];
        (
            V4::new(rho * Float::cos(a), rho * Float::sin(a), u[2], 0.0),
            PI * (r1 * r1 - r0 * r0),
        )
    }
    fn ball_box(&self, x: &V4, t: f64) -> Option<(V4, V4)> {
        // the slab |z - x_z| <= 1/2 is a fundamental domain
        let r = self.radius(x) + t;
        Some((
            V4::new(-r, -r, x[2] - 0.5, 0.0),
            V4::new(r, r, x[2] + 0.5, 0.0),
        ))
    }
}

// ---------------------------------------------------------------------------

/// `H(t)`: the Gibbons–Hawking radius at distance `t` from the Taub-NUT nut,
/// the solution of `H' = V(H)^{-1/2}`, `H(0) = 0`, with `V = 1 + 1/(2r)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TaubNutProfile {
    t0: f64,
    step: f64,
    t_max: f64,
    h: Vec<f64>,
}

const SERIES: [f64; 5] = [
    0.5,
    -1.0 / 6.0,
    11.0 / 90.0,
    -73.0 / 630.0,
    1774.0 / 14175.0,
];

fn profile_series(t: f64) -> f64 {
    let t2 = t * t;
    let mut acc = 0.0;
    for c in SERIES.iter().rev() {
        acc = acc * t2 + c;
    }
    acc * t2
}

/// `dH/dt` as a function of `H`.
pub fn profile_slope(r: f64) -> f64 {
    Float::sqrt(2.0 * r / (2.0 * r + 1.0))
}

impl TaubNutProfile {
    pub fn new(t_max: f64, step: f64) -> Result<Self> {
        if !(t_max > 1.0 && step > 0.0 && step < 0.1) {
            return Err(GeomError::InvalidInput(
                "profile needs t_max > 1 and 0 < step < 0.1",
            ));
        }
        let t0 = 0.05;
        let n = ((t_max - t0) / step).ceil() as usize + 2;
        let mut h = Vec::with_capacity(n);
        h.push(profile_series(t0));
        let opts = OdeOptions {
            rtol: 1e-14,
            atol: 1e-16,
            h0: Some(step),
            ..OdeOptions::default()
        };
        let mut cur = [h[0]];
        for i in 1..n {
            let a = t0 + (i - 1) as f64 * step;
            let (y, _) = dopri5(
                |_t, y: &[f64; 1]| Ok([profile_slope(y[0])]),
                a,
                a + step,
                cur,
                &opts,
                |_, _, _| Ok(()),
            )?;
            cur = y;
            h.push(y[0]);
        }
        let t_max = t0 + (n - 1) as f64 * step;
        Ok(Self { t0, step, t_max, h })
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// `H(t)`, using the Taylor series below `t = 0.05` and quintic Hermite
    /// interpolation on the integrated grid above (`H'` and `H'' = (2H + 1)^{-2}`
    /// are functions of `H`).
    pub fn eval(&self, t: f64) -> f64 {
        if t <= self.t0 {
            return profile_series(t);
        }
        let s = (t - self.t0) / self.step;
        let i = (s.floor() as usize).min(self.h.len() - 2);
        let u = s - i as f64;
        let (y0, y1) = (self.h[i], self.h[i + 1]);
        let hs = self.step;
        let (m0, m1) = (profile_slope(y0) * hs, profile_slope(y1) * hs);
        let acc = |y: f64| hs * hs / ((2.0 * y + 1.0) * (2.0 * y + 1.0));
        let (a0, a1) = (acc(y0), acc(y1));
        let u2 = u * u;
        let u3 = u2 * u;
        let u4 = u3 * u;
        let u5 = u4 * u;
        let h0 = 1.0 - 10.0 * u3 + 15.0 * u4 - 6.0 * u5;
        let h1 = u - 6.0 * u3 + 8.0 * u4 - 3.0 * u5;
        let h2 = 0.5 * (u2 - 3.0 * u3 + 3.0 * u4 - u5);
        let h3 = 10.0 * u3 - 15.0 * u4 + 6.0 * u5;
        let h4 = -4.0 * u3 + 7.0 * u4 - 3.0 * u5;
        let h5 = 0.5 * (u3 - 2.0 * u4 + u5);
        h0 * y0 + h1 * m0 + h2 * a0 + h3 * y1 + h4 * m1 + h5 * a1
    }
}

/// Gibbons–Hawking potential of a single nut with unit-normalized fiber.
pub fn tn_potential(r: f64) -> f64 {
    1.0 + 0.5 / r
}

/// Length of the `ψ`-orbit at Gibbons–Hawking radius `r`.
pub fn tn_orbit_length(r: f64) -> f64 {
    2.0 * PI / Float::sqrt(tn_potential(r))
}

/// Single-nut Taub-NUT in the radial chart `(t, θ, φ, ψ)`:
/// `dt² + r²V (dθ² + sin²θ dφ²) + V^{-1} (dψ + cos θ dφ / 2)²`, `r = H(t)`.
///
/// `ψ` has period `2π`; the chart map to Gibbons–Hawking coordinates is
/// `ψ_gh = ψ + φ/2` with the Dirac string along the negative `z` axis.
#[derive(Clone, Debug, PartialEq)]
pub struct TaubNut {
    pub profile: TaubNutProfile,
}

impl TaubNut {
    pub fn new(t_max: f64) -> Result<Self> {
        Ok(Self {
            profile: TaubNutProfile::new(t_max, 0.01)?,
        })
    }

    /// Gibbons–Hawking radius at radial coordinate `t`.
    pub fn gh_radius(&self, t: f64) -> f64 {
        self.profile.eval(t)
    }

    /// Radial chart to Gibbons–Hawking chart `(x, y, z, ψ_gh)`.
    pub fn to_gibbons_hawking(&self, p: &V4) -> V4 {
        let r = self.gh_radius(p[0]);
        let (st, ct) = (Float::sin(p[1]), Float::cos(p[1]));
        V4::new(
            r * st * Float::cos(p[2]),
            r * st * Float::sin(p[2]),
            r * ct,
            p[3] + 0.5 * p[2],
        )
    }

    fn jet(&self, x: &V4, delta: f64) -> Result<(M4, [M4; 4])> {
        self.check_point(x)?;
        let t = x[0];
        let r = self.gh_radius(t);
        let hp = profile_slope(r);
        let a2 = r * r + 0.5 * r;
        let c2 = 2.0 * r / (2.0 * r + 1.0);
        let da2 = (2.0 * r + 0.5) * hp;
        let dc2 = 2.0 / ((2.0 * r + 1.0) * (2.0 * r + 1.0)) * hp;
        let (s, c) = (Float::sin(x[1]), Float::cos(x[1]));
        let (sp, cp) = (Float::sin(x[3]), Float::cos(x[3]));
        let mut g = M4::zeros();
        g[(0, 0)] = 1.0 + delta * cp / (t * t);
        g[(1, 1)] = a2;
        g[(2, 2)] = a2 * s * s + 0.25 * c2 * c * c;
        g[(2, 3)] = 0.5 * c2 * c;
        g[(3, 2)] = g[(2, 3)];
        g[(3, 3)] = c2;
        let mut dg = [M4::zeros(); 4];
        dg[0][(0, 0)] = -2.0 * delta * cp / (t * t * t);
        dg[0][(1, 1)] = da2;
        dg[0][(2, 2)] = da2 * s * s + 0.25 * dc2 * c * c;
        dg[0][(2, 3)] = 0.5 * dc2 * c;
        dg[0][(3, 2)] = dg[0][(2, 3)];
        dg[0][(3, 3)] = dc2;
        dg[1][(2, 2)] = 2.0 * a2 * s * c - 0.5 * c2 * s * c;
        dg[1][(2, 3)] = -0.5 * c2 * s;
        dg[1][(3, 2)] = dg[1][(2, 3)];
        dg[3][(0, 0)] = -delta * sp / (t * t);
        Ok((g, dg))
    }

    /// SU(2) acts isometrically and transitively on the `t`-spheres of the unperturbed
    /// metric, so every point is equivalent to one on the equator.
    fn symmetric_point(&self, x: &V4, invariant: bool) -> V4 {
        if invariant {
            V4::new(x[0], 0.5 * PI, 0.0, 0.0)
        } else {
            *x
        }
    }

    fn check_point(&self, x: &V4) -> Result<()> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(GeomError::OutsideChart(*x));
        }
        if x[0] <= 1e-9 || Float::abs(Float::sin(x[1])) < 1e-9 {
            return Err(GeomError::SingularPoint(*x));
        }
        if x[0] > self.profile.t_max() {
            return Err(GeomError::OutsideChart(*x));
        }
        Ok(())
    }

    fn sample_shell(&self, u: &[f64; 4], r0: f64, r1: f64) -> (V4, f64) {
        let t = r0 + u[0] * (r1 - r0);
        let ct = 1.0 - 2.0 * u[1];
        let th = Float::acos(ct.clamp(-1.0, 1.0));
        let st = Float::sin(th).max(1e-300);
        let x = V4::new(t, th, 2.0 * PI * u[2], 2.0 * PI * u[3]);
        (x, (r1 - r0) * (2.0 / st) * 4.0 * PI * PI)
    }
}

impl MetricField for TaubNut {
    fn dim(&self) -> usize {
        4
    }
    fn chart(&self) -> Chart {
        Chart::TaubNutRadial
    }
    fn check(&self, x: &V4) -> Result<()> {
        self.check_point(x)
    }
    fn metric(&self, x: &V4) -> Result<M4> {
        Ok(self.jet(x, 0.0)?.0)
    }
    fn metric_jet(&self, x: &V4) -> Option<Result<(M4, [M4; 4])>> {
        Some(self.jet(x, 0.0))
    }
}

macro_rules! radial_tn_model {
    ($ty:ty, $name:expr, $tn:ident) => {
        impl Model for $ty {
            fn name(&self) -> &'static str {
                $name
            }
            fn base_point(&self) -> V4 {
                V4::new(0.0, 0.5 * PI, 0.0, 0.0)
            }
            fn radius(&self, x: &V4) -> f64 {
                x[0]
            }
            fn radius_is_distance_from_base(&self) -> bool {
                true
            }
            fn point_at_radius(&self, r: f64) -> V4 {
                V4::new(r, 0.5 * PI, 0.0, 0.0)
            }
            fn isometric_representative(&self, x: &V4) -> V4 {
                self.$tn().symmetric_point(x, self.is_invariant())
            }
            fn deck(&self, k: i64, x: &V4) -> Option<V4> {
                Some(x + V4::new(0.0, 0.0, 0.0, 2.0 * PI * k as f64))
            }
            fn has_deck(&self) -> bool {
                true
            }
            fn generator_length_hint(&self, x: &V4) -> Option<f64> {
                Some(tn_orbit_length(self.$tn().gh_radius(x[0].max(1e-9))))
            }
            fn circle_action(&self, x: &V4, u: f64) -> Option<V4> {
                Some(x + V4::new(0.0, 0.0, 0.0, 2.0 * PI * u))
            }
            fn circle_generator(&self, _x: &V4) -> Option<V4> {
                Some(V4::new(0.0, 0.0, 0.0, 2.0 * PI))
            }
            fn shell_sample(&self, u: &[f64; 4], r0: f64, r1: f64) -> (V4, f64) {
                self.$tn().sample_shell(u, r0, r1)
            }
        }
    };
}

impl TaubNut {
    fn tn(&self) -> &TaubNut {
        self
    }
    fn is_invariant(&self) -> bool {
        true
    }
}

radial_tn_model!(TaubNut, "taub_nut", tn);

/// Taub-NUT with `δ t^{-2} cos ψ dt²` added; not invariant under the `ψ` circle.
#[derive(Clone, Debug, PartialEq)]
pub struct PerturbedTaubNut {
    pub base: TaubNut,
    pub delta: f64,
}

impl PerturbedTaubNut {
    pub fn new(t_max: f64, delta: f64) -> Result<Self> {
        Ok(Self {
            base: TaubNut::new(t_max)?,
            delta,
        })
    }
    fn tn(&self) -> &TaubNut {
        &self.base
    }
    fn is_invariant(&self) -> bool {
        self.delta == 0.0
    }
}

impl MetricField for PerturbedTaubNut {
    fn dim(&self) -> usize {
        4
    }
    fn chart(&self) -> Chart {
        Chart::TaubNutRadial
    }
    fn check(&self, x: &V4) -> Result<()> {
        self.base.check_point(x)?;
        if self.delta.abs() >= 0.5 * x[0] * x[0] {
            return Err(GeomError::SingularPoint(*x));
        }
        Ok(())
    }
    fn metric(&self, x: &V4) -> Result<M4> {
        self.check(x)?;
        Ok(self.base.jet(x, self.delta)?.0)
    }
    fn metric_jet(&self, x: &V4) -> Option<Result<(M4, [M4; 4])>> {
        Some(self.check(x).and_then(|_| self.base.jet(x, self.delta)))
    }
}

radial_tn_model!(PerturbedTaubNut, "perturbed_taub_nut", tn);

// ---------------------------------------------------------------------------

/// Multi-center Taub-NUT `V (dx² + dy² + dz²) + V^{-1} (dψ + A)²` with
/// `V = 1 + Σ 1/(2|x - p_i|)` and `dA = *dV`; Dirac strings run from each nut
/// in the `-z` direction.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiTaubNut {
    pub nuts: Vec<[f64; 3]>,
    /// Radius of the excluded tube around each Dirac string.
    pub tube: f64,
}

impl MultiTaubNut {
    pub fn new(nuts: Vec<[f64; 3]>) -> Result<Self> {
        if nuts.is_empty() {
            return Err(GeomError::InvalidInput(
                "multi-Taub-NUT needs at least one nut",
            ));
        }
        Ok(Self { nuts, tube: 1e-3 })
    }

    /// `(V, ∇V, A, ∂A)` with `da[k][j] = ∂_k A_j`.
    pub fn potentials(&self, x: &V4) -> ([f64; 4], [f64; 3], [[f64; 3]; 3]) {
        let mut v = [1.0, 0.0, 0.0, 0.0];
        let mut a = [0.0; 3];
        let mut da = [[0.0; 3]; 3];
        for p in &self.nuts {
            let (xx, yy, zz) = (x[0] - p[0], x[1] - p[1], x[2] - p[2]);
            let r2 = xx * xx + yy * yy + zz * zz;
            let r = Float::sqrt(r2);
            v[0] += 0.5 / r;
            let r3 = r2 * r;
            v[1] -= 0.5 * xx / r3;
            v[2] -= 0.5 * yy / r3;
            v[3] -= 0.5 * zz / r3;
            // A = (y dx - x dy) F, F = 1 / (2 R (R + Z))
            let dd = r * (r + zz);
            let f = 0.5 / dd;
            let ddd = [
                xx * (2.0 + zz / r),
                yy * (2.0 + zz / r),
                (r + zz) * (r + zz) / r,
            ];
            let df = [-f * ddd[0] / dd, -f * ddd[1] / dd, -f * ddd[2] / dd];
            a[0] += yy * f;
            a[1] -= xx * f;
            for k in 0..3 {
                da[k][0] += yy * df[k];
                da[k][1] -= xx * df[k];
            }
            da[1][0] += f;
            da[0][1] -= f;
        }
        (v, a, da)
    }

    fn jet(&self, x: &V4) -> Result<(M4, [M4; 4])> {
        self.check(x)?;
        let (v, a, da) = self.potentials(x);
        let iv = 1.0 / v[0];
        let mut g = M4::zeros();
        for i in 0..3 {
            for j in 0..3 {
                g[(i, j)] = if i == j { v[0] } else { 0.0 } + iv * a[i] * a[j];
            }
            g[(i, 3)] = iv * a[i];
            g[(3, i)] = g[(i, 3)];
        }
        g[(3, 3)] = iv;
        let mut dg = [M4::zeros(); 4];
        for k in 0..3 {
            let div = -v[k + 1] * iv * iv;
            let m = &mut dg[k];
            for i in 0..3 {
                for j in 0..3 {
                    m[(i, j)] = if i == j { v[k + 1] } else { 0.0 }
                        + div * a[i] * a[j]
                        + iv * (da[k][i] * a[j] + a[i] * da[k][j]);
                }
                m[(i, 3)] = div * a[i] + iv * da[k][i];
                m[(3, i)] = m[(i, 3)];
            }
            m[(3, 3)] = div;
        }
        Ok((g, dg))
    }
}

impl MetricField for MultiTaubNut {
    fn dim(&self) -> usize {
        4
    }
    fn chart(&self) -> Chart {
        Chart::GibbonsHawking
    }
    fn check(&self, x: &V4) -> Result<()> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(GeomError::OutsideChart(*x));
        }
        for p in &self.nuts {
            let (xx, yy, zz) = (x[0] - p[0], x[1] - p[1], x[2] - p[2]);
            let rho2 = xx * xx + yy * yy;
            if rho2 + zz * zz < 1e-18 || (zz < 0.0 && rho2 < self.tube * self.tube) {
                return Err(GeomError::SingularPoint(*x));
            }
        }
        Ok(())
    }
    fn metric(&self, x: &V4) -> Result<M4> {
        Ok(self.jet(x)?.0)
    }
    fn metric_jet(&self, x: &V4) -> Option<Result<(M4, [M4; 4])>> {
        Some(self.jet(x))
    }
}

impl Model for MultiTaubNut {
    fn name(&self) -> &'static str {
        "multi_taub_nut"
    }
    fn base_point(&self) -> V4 {
        V4::zeros()
    }
    fn radius(&self, x: &V4) -> f64 {
        Float::sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    }
    fn point_at_radius(&self, r: f64) -> V4 {
        // upper half space keeps clear of the strings
        let d = V4::new(0.6, 0.0, 0.8, 0.0);
        d * r
    }
    fn deck(&self, k: i64, x: &V4) -> Option<V4> {
        Some(x + V4::new(0.0, 0.0, 0.0, 2.0 * PI * k as f64))
    }
    fn has_deck(&self) -> bool {
        true
    }
    fn generator_length_hint(&self, x: &V4) -> Option<f64> {
        let v = self.potentials(x).0[0];
        Some(2.0 * PI / Float::sqrt(v))
    }
    fn circle_action(&self, x: &V4, u: f64) -> Option<V4> {
        Some(x + V4::new(0.0, 0.0, 0.0, 2.0 * PI * u))
    }
    fn circle_generator(&self, _x: &V4) -> Option<V4> {
        Some(V4::new(0.0, 0.0, 0.0, 2.0 * PI))
    }
    fn shell_sample(&self, u: &[f64; 4], r0: f64, r1: f64) -> (V4, f64) {
        let r = Float::cbrt(r0 * r0 * r0 + u[0] * (r1 * r1 * r1 - r0 * r0 * r0));
        let (dx, dy, dz) = unit_direction(u[1], u[2]);
        let x = V4::new(r * dx, r * dy, r * dz, 2.0 * PI * u[3]);
        let w = 4.0 / 3.0 * PI * (r1 * r1 * r1 - r0 * r0 * r0) * 2.0 * PI;
        if self.check(&x).is_err() {
            return (x, 0.0);
        }
        (x, w)
    }
}

// ---------------------------------------------------------------------------

/// Riemannian Schwarzschild in isotropic coordinates `(τ, x, y, z)`:
/// `((1 - m/2ρ)/(1 + m/2ρ))² dτ² + (1 + m/2ρ)⁴ |dx|²`, `τ` of period `8πm`.
#[derive(Clone, Debug, PartialEq)]
pub struct Schwarzschild {
    pub mass: f64,
}

impl Schwarzschild {
    pub fn new(mass: f64) -> Result<Self> {
        if !(mass > 0.0) {
            return Err(GeomError::InvalidInput("mass must be positive"));
        }
        Ok(Self { mass })
    }

    fn rho(x: &V4) -> f64 {
        Float::sqrt(x[1] * x[1] + x[2] * x[2] + x[3] * x[3])
    }

    /// Areal radius `ρ (1 + m/2ρ)²`.
    pub fn areal_radius(&self, x: &V4) -> f64 {
        let rho = Self::rho(x);
        let b = 1.0 + 0.5 * self.mass / rho;
        rho * b * b
    }

    fn jet(&self, x: &V4) -> Result<(M4, [M4; 4])> {
        self.check(x)?;
        let rho = Self::rho(x);
        let u = 0.5 * self.mass / rho;
        let a = (1.0 - u) / (1.0 + u);
        let b = 1.0 + u;
        let da = 2.0 * u / (rho * (1.0 + u) * (1.0 + u));
        let db4 = -4.0 * b * b * b * u / rho;
        let b4 = b * b * b * b;
        let g = M4::from_diagonal(&V4::new(a * a, b4, b4, b4));
        let mut dg = [M4::zeros(); 4];
        for k in 1..4 {
            let dr = x[k] / rho;
            dg[k] = M4::from_diagonal(&V4::new(2.0 * a * da * dr, db4 * dr, db4 * dr, db4 * dr));
        }
        Ok((g, dg))
    }
}

impl MetricField for Schwarzschild {
    fn dim(&self) -> usize {
        4
    }
    fn chart(&self) -> Chart {
        Chart::Isotropic
    }
    fn check(&self, x: &V4) -> Result<()> {
        if !x.iter().all(|v| v.is_finite()) {
            return Err(GeomError::OutsideChart(*x));
        }
        if Self::rho(x) - 0.5 * self.mass < 1e-9 {
            return Err(GeomError::SingularPoint(*x));
        }
        Ok(())
    }
    fn metric(&self, x: &V4) -> Result<M4> {
        Ok(self.jet(x)?.0)
    }
    fn metric_jet(&self, x: &V4) -> Option<Result<(M4, [M4; 4])>> {
        Some(self.jet(x))
    }
}

impl Model for Schwarzschild {
    fn name(&self) -> &'static str {
        "schwarzschild"
    }
    fn base_point(&self) -> V4 {
        V4::new(0.0, 0.5 * self.mass, 0.0, 0.0)
    }
    fn radius(&self, x: &V4) -> f64 {
        self.areal_radius(x)
    }
    fn point_at_radius(&self, r: f64) -> V4 {
        let m = self.mass;
        let s = r - m;
        let rho = 0.5 * (s + Float::sqrt((s * s - m * m).max(0.0)));
        V4::new(0.0, 0.6 * rho, 0.0, 0.8 * rho)
    }
    fn deck(&self, k: i64, x: &V4) -> Option<V4> {
        Some(x + V4::new(8.0 * PI * self.mass * k as f64, 0.0, 0.0, 0.0))
    }
    fn has_deck(&self) -> bool {
        true
    }
    fn generator_length_hint(&self, x: &V4) -> Option<f64> {
        let u = 0.5 * self.mass / Self::rho(x);
        Some(8.0 * PI * self.mass * (1.0 - u) / (1.0 + u))
    }
    fn circle_action(&self, x: &V4, u: f64) -> Option<V4> {
        Some(x + V4::new(8.0 * PI * self.mass * u, 0.0, 0.0, 0.0))
    }
    fn circle_generator(&self, _x: &V4) -> Option<V4> {
        Some(V4::new(8.0 * PI * self.mass, 0.0, 0.0, 0.0))
    }
    fn shell_sample(&self, u: &[f64; 4], r0: f64, r1: f64) -> (V4, f64) {
        // shell in the isotropic radius; callers convert the bounds
        let r = Float::cbrt(r0 * r0 * r0 + u[0] * (r1 * r1 * r1 - r0 * r0 * r0));
        let (dx, dy, dz) = unit_direction(u[1], u[2]);
        let p = 8.0 * PI * self.mass;
        let x = V4::new(p * u[3], r * dx, r * dy, r * dz);
        (x, 4.0 / 3.0 * PI * (r1 * r1 * r1 - r0 * r0 * r0) * p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifold::{
        christoffel_at, christoffel_fd, curvature_norm, riemann_at, volume_density,
    };

    fn closed_form_t(r: f64) -> f64 {
        Float::sqrt(r * r + 0.5 * r) + 0.5 * Float::asinh(Float::sqrt(2.0 * r))
    }

    #[test]
    fn profile_inverts_closed_form() {
        let p = TaubNutProfile::new(200.0, 0.005).unwrap();
        for &r in &[1e-4, 0.003, 0.04, 0.3, 1.0, 7.5, 42.0, 150.0] {
            let t = closed_form_t(r);
            let h = p.eval(t);
            assert!((h - r).abs() <= 1e-10 * r.max(1e-2), "r={r} got {h}");
        }
    }

    #[test]
    fn taub_nut_volume_density() {
        let tn = TaubNut::new(100.0).unwrap();
        let x = V4::new(5.0, 1.1, 0.4, 2.0);
        let r = tn.gh_radius(5.0);
        let expect = r * r * Float::sqrt(tn_potential(r)) * Float::sin(1.1);
        assert!((volume_density(&tn, &x).unwrap() - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn taub_nut_curvature_matches_kretschmann() {
        let tn = TaubNut::new(100.0).unwrap();
        for &t in &[0.5, 2.0, 10.0, 40.0] {
            let x = V4::new(t, 1.0, 0.3, 0.2);
            let r = tn.gh_radius(t);
            let exact = Float::sqrt(384.0) / Float::powi(2.0 * r + 1.0, 3);
            let got = curvature_norm(&tn, &x).unwrap();
            assert!(
                (got - exact).abs() < 1e-6 * exact,
                "t={t}: {got} vs {exact}"
            );
            let rt = riemann_at(&tn, &x).unwrap();
            let scale = exact * rt.g.abs().max();
            assert!(rt.ricci().abs().max() < 1e-6 * scale);
        }
    }

    #[test]
    fn radial_chart_is_pullback_of_gibbons_hawking() {
        let tn = TaubNut::new(100.0).unwrap();
        let gh = MultiTaubNut::new(alloc::vec![[0.0, 0.0, 0.0]]).unwrap();
        let p = V4::new(3.0, 1.2, 0.7, 0.4);
        let h = 1e-6;
        let mut jac = M4::zeros();
        for j in 0..4 {
            let mut a = p;
            let mut b = p;
            a[j] += h;
            b[j] -= h;
            let col = (tn.to_gibbons_hawking(&a) - tn.to_gibbons_hawking(&b)) / (2.0 * h);
            jac.set_column(j, &col);
        }
        let pulled = jac.transpose() * gh.metric(&tn.to_gibbons_hawking(&p)).unwrap() * jac;
        let direct = tn.metric(&p).unwrap();
        assert!((pulled - direct).abs().max() < 1e-7, "{pulled} vs {direct}");
    }

    #[test]
    fn gibbons_hawking_connection_solves_monopole_equation() {
        let m = MultiTaubNut::new(alloc::vec![[0.0, 0.0, 0.0], [0.3, -0.2, 2.0]]).unwrap();
        let x = V4::new(1.3, 0.8, 0.5, 0.0);
        let (v, _a, da) = m.potentials(&x);
        // curl A = grad V
        let curl = [
            da[1][2] - da[2][1],
            da[2][0] - da[0][2],
            da[0][1] - da[1][0],
        ];
        for i in 0..3 {
            assert!((curl[i] - v[i + 1]).abs() < 1e-12, "{curl:?} {v:?}");
        }
        // analytic metric derivatives agree with differences
        let a = christoffel_at(&m, &x).unwrap();
        let b = christoffel_fd(&m, &x, 1e-5).unwrap();
        for k in 0..4 {
            assert!((a[k] - b[k]).abs().max() < 1e-7);
        }
        assert!(matches!(
            m.check(&V4::new(0.0, 0.0, -1.0, 0.0)),
            Err(GeomError::SingularPoint(_))
        ));
        assert!(matches!(
            m.check(&V4::new(0.0, 0.0, 1e-12, 0.0)),
            Err(GeomError::SingularPoint(_))
        ));
    }

    #[test]
    fn schwarzschild_is_ricci_flat_with_known_kretschmann() {
        let s = Schwarzschild::new(1.0).unwrap();
        let x = s.point_at_radius(6.0);
        assert!((s.areal_radius(&x) - 6.0).abs() < 1e-12);
        let rt = riemann_at(&s, &x).unwrap();
        let k = Float::sqrt(48.0) / Float::powi(6.0, 3);
        assert!((rt.norm() - k).abs() < 1e-6 * k);
        assert!(rt.ricci().abs().max() < 1e-7);
        assert!(matches!(
            s.metric(&V4::new(0.0, 0.5, 0.0, 0.0)),
            Err(GeomError::SingularPoint(_))
        ));
    }

    #[test]
    fn perturbed_model_derivatives() {
        let p = PerturbedTaubNut::new(100.0, 0.3).unwrap();
        let x = V4::new(4.0, 1.0, 0.2, 0.9);
        let a = christoffel_at(&p, &x).unwrap();
        let b = christoffel_fd(&p, &x, 1e-5).unwrap();
        for k in 0..4 {
            assert!((a[k] - b[k]).abs().max() < 1e-8);
        }
    }
}
