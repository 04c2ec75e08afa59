//! Growth and decay statistics at infinity: ball volumes, injectivity profiles,
//! power-law fits, the weighted curvature integral, and the Diophantine side of screw
//! angles (continued fractions and the pigeonhole power).

use crate::exec::{monte_carlo, Executor};
use crate::geodesics::{geodesic_loops, LoopOptions};
use crate::linalg::linear_fit;
use crate::manifold::{curvature_norm, volume_density, Model};
use crate::zoo::{flat_inj_auto, Angle};
use crate::{GeomError, Result, V4};
use alloc::vec::Vec;
use num_traits::Float;
use rand::Rng;

/// Least-squares fit of `log value = log_constant + exponent · log t`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecayFit {
    pub exponent: f64,
    pub log_constant: f64,
    /// RMS residual in log space.
    pub residual: f64,
    pub window: (f64, f64),
    pub n_points: usize,
}

/// Fit the pairs with `t` inside the closed `window`.
pub fn decay_fit(pairs: &[(f64, f64)], window: (f64, f64)) -> Result<DecayFit> {
    let sel: Vec<(f64, f64)> = pairs
        .iter()
        .copied()
        .filter(|&(t, _)| t >= window.0 && t <= window.1)
        .collect();
    if sel.len() < 5 {
        return Err(GeomError::EmptyWindow { n: sel.len() });
    }
    if let Some(&(t, _)) = sel.iter().find(|&&(t, v)| !(v > 0.0) || !(t > 0.0)) {
        return Err(GeomError::NonPositiveValue { t });
    }
    let lx: Vec<f64> = sel.iter().map(|p| Float::ln(p.0)).collect();
    let ly: Vec<f64> = sel.iter().map(|p| Float::ln(p.1)).collect();
    let (slope, icpt, rms) =
        linear_fit(&lx, &ly).ok_or(GeomError::IllConditionedFit("all t equal"))?;
    Ok(DecayFit {
        exponent: slope,
        log_constant: icpt,
        residual: rms,
        window,
        n_points: sel.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum VolumeMethod {
    MonteCarlo,
    ProductQuadrature,
}

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VolumeEstimate {
    pub value: f64,
    /// Monte-Carlo standard error, or the midpoint/half-grid difference for quadrature.
    pub std_error: f64,
    pub method: VolumeMethod,
    pub samples: u64,
    pub seed: u64,
}

impl VolumeEstimate {
    pub fn relative_error(&self) -> f64 {
        self.std_error / self.value.abs()
    }
}

/// How a ball is swept.
enum BallSampler {
    /// Shell sampler around the base point: every sample is inside.
    Radial,
    /// Coordinate box containing a fundamental domain of the ball; membership by distance.
    Boxed(V4, V4),
}

fn ball_sampler<M: Model + ?Sized>(m: &M, x: &V4, t: f64) -> Result<BallSampler> {
    if m.radius_is_distance_from_base() && (x - m.base_point()).norm() == 0.0 {
        return Ok(BallSampler::Radial);
    }
    if m.exact_distance(x, x).is_none() {
        return Err(GeomError::InvalidInput(
            "no exact distance available for ball membership",
        ));
    }
    let (lo, hi) = m
        .ball_box(x, t)
        .ok_or(GeomError::InvalidInput("model has no ball box"))?;
    Ok(BallSampler::Boxed(lo, hi))
}

fn ball_integrand<M: Model + ?Sized>(
    m: &M,
    x: &V4,
    t: f64,
    s: &BallSampler,
    u: &[f64; 4],
) -> Result<f64> {
    let d = m.dim();
    match s {
        BallSampler::Radial => {
            let (y, w) = m.shell_sample(u, 0.0, t);
            if w == 0.0 {
                return Ok(0.0);
            }
            Ok(w * volume_density(m, &y)?)
        }
        BallSampler::Boxed(lo, hi) => {
            let mut y = V4::zeros();
            let mut w = 1.0;
            for i in 0..d {
                y[i] = lo[i] + u[i] * (hi[i] - lo[i]);
                w *= hi[i] - lo[i];
            }
            if m.exact_distance(x, &y).unwrap_or(f64::INFINITY) <= t {
                Ok(w * volume_density(m, &y)?)
            } else {
                Ok(0.0)
            }
        }
    }
}

/// `vol B(x, t)`.
///
/// `ProductQuadrature` uses a midpoint grid with `samples^{1/d}` nodes per axis and
/// reports the difference to the half-resolution grid as its error.
pub fn ball_volume<M, E>(
    m: &M,
    x: &V4,
    t: f64,
    method: VolumeMethod,
    samples: u64,
    seed: u64,
    exec: &E,
) -> Result<VolumeEstimate>
where
    M: Model + Sync + ?Sized,
    E: Executor + ?Sized,
{
    if !(t > 0.0) {
        return Err(GeomError::InvalidInput("ball radius must be positive"));
    }
    let s = ball_sampler(m, x, t)?;
    if let BallSampler::Boxed(..) = s {
        m.check(x)?;
    }
    let d = m.dim();
    match method {
        VolumeMethod::MonteCarlo => {
            let sums = monte_carlo(exec, seed, samples, |rng| {
                let u = [
                    rng.random::<f64>(),
                    rng.random(),
                    rng.random(),
                    rng.random(),
                ];
                ball_integrand(m, x, t, &s, &u)
            })?;
            Ok(VolumeEstimate {
                value: sums.mean(),
                std_error: sums.std_error(),
                method,
                samples,
                seed,
            })
        }
        VolumeMethod::ProductQuadrature => {
            let n = (Float::powf(samples as f64, 1.0 / d as f64).floor() as usize / 2 * 2).max(2);
            let fine = midpoint_grid(m, x, t, &s, n, exec)?;
            let coarse = midpoint_grid(m, x, t, &s, n / 2, exec)?;
            Ok(VolumeEstimate {
                value: fine,
                std_error: (fine - coarse).abs(),
                method,
                samples: (n as u64).pow(d as u32),
                seed,
            })
        }
    }
}

fn midpoint_grid<M, E>(m: &M, x: &V4, t: f64, s: &BallSampler, n: usize, exec: &E) -> Result<f64>
where
    M: Model + Sync + ?Sized,
    E: Executor + ?Sized,
{
    let d = m.dim();
    let rest = n.pow(d as u32 - 1);
    let h = 1.0 / n as f64;
    let slabs = exec.map(n, |i0| -> Result<f64> {
        let mut acc = 0.0;
        for j in 0..rest {
            let mut u = [0.5; 4];
            u[0] = (i0 as f64 + 0.5) * h;
            let mut r = j;
            for a in 1..d {
                u[a] = ((r % n) as f64 + 0.5) * h;
                r /= n;
            }
            acc += ball_integrand(m, x, t, s, &u)?;
        }
        Ok(acc)
    });
    let mut total = 0.0;
    for v in slabs {
        total += v?;
    }
    Ok(total * Float::powi(h, d as i32))
}

/// Monte-Carlo estimate of `∫_{r_min ≤ r ≤ r_max} |Rm|² r dvol`.
pub fn weighted_curvature_integral<M, E>(
    m: &M,
    r_min: f64,
    r_max: f64,
    samples: u64,
    seed: u64,
    exec: &E,
) -> Result<VolumeEstimate>
where
    M: Model + Sync + ?Sized,
    E: Executor + ?Sized,
{
    if !(r_max > r_min) || r_min < 0.0 {
        return Err(GeomError::InvalidInput("annulus needs 0 <= r_min < r_max"));
    }
    let flat = m.is_flat();
    let sums = monte_carlo(exec, seed, samples, |rng| {
        let u = [
            rng.random::<f64>(),
            rng.random(),
            rng.random(),
            rng.random(),
        ];
        let (y, w) = m.shell_sample(&u, r_min, r_max);
        if w == 0.0 || flat {
            return Ok(0.0);
        }
        let rm = curvature_norm(m, &m.isometric_representative(&y))?;
        Ok(w * volume_density(m, &y)? * rm * rm * m.radius(&y))
    })?;
    Ok(VolumeEstimate {
        value: sums.mean(),
        std_error: sums.std_error(),
        method: VolumeMethod::MonteCarlo,
        samples,
        seed,
    })
}

/// One point of an injectivity-radius profile. `inj == None` means infinite.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct InjSample {
    pub r: f64,
    pub inj: Option<f64>,
    /// The loop search is not certified complete.
    pub incomplete: bool,
}

/// Half the length of the shortest geodesic loop at each point.
pub fn inj_profile<M: Model + ?Sized>(
    m: &M,
    points: &[V4],
    l_max: f64,
    opts: &LoopOptions,
) -> Result<Vec<InjSample>> {
    let mut out = Vec::with_capacity(points.len());
    for x in points {
        let r = m.radius(x);
        if !m.has_deck() {
            out.push(InjSample {
                r,
                inj: None,
                incomplete: false,
            });
            continue;
        }
        let s = match flat_screw_inj(m, x) {
            Some(v) => InjSample {
                r,
                inj: Some(v),
                incomplete: false,
            },
            None => {
                let search = geodesic_loops(m, x, l_max, opts)?;
                match search.shortest() {
                    Some(l) => InjSample {
                        r,
                        inj: Some(0.5 * l.length),
                        incomplete: search.incomplete,
                    },
                    None => InjSample {
                        r,
                        inj: None,
                        incomplete: true,
                    },
                }
            }
        };
        out.push(s);
    }
    Ok(out)
}

fn flat_screw_inj<M: Model + ?Sized>(m: &M, x: &V4) -> Option<f64> {
    // flat models expose the exact minimal loop through the length hint
    if m.is_flat() {
        m.generator_length_hint(x).map(|l| 0.5 * l)
    } else {
        None
    }
}

/// Continued fraction `[a₀; a₁, a₂, …]` with its convergents.
#[derive(Clone, Debug, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ContinuedFraction {
    pub coefficients: Vec<i128>,
    /// `(p_i, q_i)`.
    pub convergents: Vec<(i128, i128)>,
    /// The expanded number as the exact fraction `num / den`.
    pub num: i128,
    pub den: i128,
}

impl ContinuedFraction {
    /// Expansion of `num / den` (`den > 0`) to at most `depth` coefficients.
    pub fn of_rational(num: i128, den: i128, depth: usize) -> Result<Self> {
        if den <= 0 {
            return Err(GeomError::InvalidInput("denominator must be positive"));
        }
        let (mut a, mut b) = (num, den);
        let mut coefficients = Vec::new();
        let mut convergents: Vec<(i128, i128)> = Vec::new();
        let (mut p1, mut q1, mut p2, mut q2) = (1i128, 0i128, 0i128, 1i128);
        while b != 0 && coefficients.len() < depth {
            let c = a.div_euclid(b);
            let (Some(p), Some(q)) = (
                c.checked_mul(p1).and_then(|v| v.checked_add(p2)),
                c.checked_mul(q1).and_then(|v| v.checked_add(q2)),
            ) else {
                break;
            };
            coefficients.push(c);
            convergents.push((p, q));
            (p2, q2, p1, q1) = (p1, q1, p, q);
            let r = a.rem_euclid(b);
            a = b;
            b = r;
        }
        Ok(Self {
            coefficients,
            convergents,
            num,
            den,
        })
    }

    /// `|x − p_i/q_i| ≤ 1/(q_i q_{i+1})`, checked in integers; `None` on overflow.
    pub fn convergent_bound_holds(&self, i: usize) -> Option<bool> {
        let (p, q) = *self.convergents.get(i)?;
        let (_, qn) = *self.convergents.get(i + 1)?;
        let lhs = self
            .num
            .checked_mul(q)?
            .checked_sub(self.den.checked_mul(p)?)?
            .checked_abs()?
            .checked_mul(qn)?;
        Some(lhs <= self.den)
    }

    /// `p_i = a_i p_{i−1} + p_{i−2}` and the same for `q_i`, for every `i`.
    pub fn recurrence_holds(&self) -> bool {
        let (mut p1, mut q1, mut p2, mut q2) = (1i128, 0i128, 0i128, 1i128);
        for (a, &(p, q)) in self.coefficients.iter().zip(&self.convergents) {
            if a * p1 + p2 != p || a * q1 + q2 != q {
                return false;
            }
            (p2, q2, p1, q1) = (p1, q1, p, q);
        }
        true
    }
}

/// Continued fraction of the double `x`, read as the exact dyadic rational it stores.
pub fn continued_fraction_of(x: f64, depth: usize) -> Result<ContinuedFraction> {
    if !x.is_finite() {
        return Err(GeomError::InvalidInput("non-finite value"));
    }
    if depth > 40 {
        return Err(GeomError::InvalidInput("depth must be at most 40"));
    }
    if x == 0.0 {
        return ContinuedFraction::of_rational(0, 1, depth);
    }
    let (mant, exp, sign) = Float::integer_decode(x);
    let (mut num, mut e) = (mant as i128 * sign as i128, exp as i32);
    while num % 2 == 0 && e < 0 {
        num /= 2;
        e += 1;
    }
    if e >= 0 {
        if e > 60 {
            return Err(GeomError::InvalidInput("value too large"));
        }
        return ContinuedFraction::of_rational(num << e, 1, depth);
    }
    if -e > 120 {
        return Err(GeomError::InvalidInput(
            "value too small for an exact expansion",
        ));
    }
    ContinuedFraction::of_rational(num, 1i128 << (-e), depth)
}

/// Continued fraction of a screw angle's turn count.
pub fn continued_fraction_of_angle(angle: &Angle, depth: usize) -> Result<ContinuedFraction> {
    match angle.turns {
        crate::zoo::Turns::Rational { p, q } => {
            ContinuedFraction::of_rational(p as i128, q as i128, depth)
        }
        _ => continued_fraction_of(angle.turns_f64(), depth),
    }
}

/// The power `k ∈ [1, ⌊√t⌋]` minimizing `|e^{ikθ} − 1|`, with that value.
///
/// By pigeonhole the minimum is at most `2π/√t`.
pub fn pigeonhole_k(angle: &Angle, t: f64) -> Result<(u64, f64)> {
    if !(t >= 1.0) {
        return Err(GeomError::InvalidInput("pigeonhole needs t >= 1"));
    }
    let kmax = (Float::sqrt(t).floor() as u64).max(1);
    let mut best = (1, f64::INFINITY);
    for k in 1..=kmax {
        let d = 2.0 * angle.half_sin_abs(k as i64);
        if d < best.1 {
            best = (k, d);
        }
    }
    Ok(best)
}

/// `(t, inj(t), inj(t)/t^a)` for the flat quotient with screw angle `angle`.
pub fn inj_power_ratio(angle: &Angle, ts: &[f64], a: f64) -> Vec<(f64, f64, f64)> {
    ts.iter()
        .map(|&t| {
            let inj = flat_inj_auto(angle, t).0;
            (t, inj, inj / Float::powf(t, a))
        })
        .collect()
}

/// Geometric sequence inside the `inj = 10^{n!}/2` plateau of the truncated Liouville
/// angle: from past the plateau start to before the next term resolves.
pub fn liouville_plateau_sequence(n: u32, len: usize) -> Vec<f64> {
    let q = Float::powi(10.0, (1..=n).product::<u32>() as i32);
    let start = 2.0 * q * q;
    let ratio = 10.0;
    (0..len)
        .map(|i| start * Float::powi(ratio, i as i32))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exec::Sequential;
    use crate::models::{Euclidean, FlatScrew};
    use core::f64::consts::PI;

    #[test]
    fn fit_exact_power_law() {
        let pairs: Vec<(f64, f64)> = (1..=20)
            .map(|i| (i as f64, 7.0 * Float::powf(i as f64, -3.0)))
            .collect();
        let f = decay_fit(&pairs, (1.0, 20.0)).unwrap();
        assert!((f.exponent + 3.0).abs() < 1e-10);
        assert!((f.log_constant - Float::ln(7.0)).abs() < 1e-10);
        let c: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, 2.0)).collect();
        assert!(decay_fit(&c, (0.0, 10.0)).unwrap().exponent.abs() < 1e-12);
        assert_eq!(
            decay_fit(&c, (0.0, 3.0)),
            Err(GeomError::EmptyWindow { n: 3 })
        );
        let mut bad = c.clone();
        bad[2].1 = 0.0;
        assert_eq!(
            decay_fit(&bad, (0.0, 10.0)),
            Err(GeomError::NonPositiveValue { t: 3.0 })
        );
    }

    #[test]
    fn euclidean_ball() {
        let m = Euclidean::new(3, None).unwrap();
        let v = ball_volume(
            &m,
            &V4::zeros(),
            2.0,
            VolumeMethod::MonteCarlo,
            200_000,
            3,
            &Sequential,
        )
        .unwrap();
        let exact = 4.0 / 3.0 * PI * 8.0;
        assert!((v.value - exact).abs() < 4.0 * v.std_error, "{v:?}");
        let q = ball_volume(
            &m,
            &V4::zeros(),
            2.0,
            VolumeMethod::ProductQuadrature,
            200_000,
            0,
            &Sequential,
        )
        .unwrap();
        assert!((q.value - exact).abs() / exact < 1e-2);
    }

    #[test]
    fn cf_examples() {
        let c = ContinuedFraction::of_rational(1, 3, 10).unwrap();
        assert_eq!(c.coefficients, [0, 3]);
        let s = continued_fraction_of(core::f64::consts::SQRT_2 - 1.0, 40).unwrap();
        assert_eq!(s.coefficients[0], 0);
        assert!(s.coefficients[1..18].iter().all(|&a| a == 2));
        assert!(s.recurrence_holds());
        let g = continued_fraction_of((5f64.sqrt() - 1.0) / 2.0, 40).unwrap();
        assert!(g.coefficients[1..30].iter().all(|&a| a == 1));
        for i in 0..g.convergents.len() - 1 {
            assert_eq!(g.convergent_bound_holds(i), Some(true));
        }
    }

    #[test]
    fn pigeonhole_examples() {
        let a = Angle::rational(1, 3).unwrap();
        let (k, d) = pigeonhole_k(&a, 9.0).unwrap();
        assert_eq!(k, 3);
        assert!(d < 1e-15);
        let r = Angle::from_turns(core::f64::consts::SQRT_2 - 1.0).unwrap();
        let (k, d) = pigeonhole_k(&r, 100.0).unwrap();
        assert!(k <= 10 && d <= 2.0 * PI / 10.0);
        assert_eq!(pigeonhole_k(&r, 1.0).unwrap().0, 1);
    }

    #[test]
    fn inj_profile_flat_and_euclidean() {
        let m = FlatScrew::new(Angle::rational(1, 3).unwrap());
        let pts: Vec<V4> = [10.0, 40.0, 100.0]
            .iter()
            .map(|&t| m.point_at_radius(t))
            .collect();
        for s in inj_profile(&m, &pts, 10.0, &LoopOptions::default()).unwrap() {
            assert_eq!(s.inj, Some(1.5));
        }
        let e = Euclidean::new(3, None).unwrap();
        assert_eq!(
            inj_profile(&e, &[V4::zeros()], 10.0, &LoopOptions::default()).unwrap()[0].inj,
            None
        );
    }
}
