//! Flat screw quotients of `R^3` and their loop lengths.
//!
//! Rotation angles are kept as a number of turns with an exact representation, so
//! `k θ mod 2π` stays accurate for deck powers far beyond double-precision reach.

use crate::{GeomError, Result, M4, V4};
use core::f64::consts::PI;
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Turns {
    /// `p / q` turns, reduced, `q > 0`.
    Rational { p: i64, q: i64 },
    /// `m / 2^e` turns, exactly the double it was built from.
    Dyadic { m: u64, e: u32 },
    /// `Σ_{n=1}^{terms} 10^{-n!}` turns.
    Liouville { terms: u32 },
}

/// A rotation angle `θ = 2π x`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Angle {
    pub turns: Turns,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

const LIOUVILLE_EXACT_DIGITS: u32 = 18;

fn factorial(n: u32) -> u32 {
    (1..=n).product::<u32>().max(1)
}

impl Angle {
    pub fn rational(p: i64, q: i64) -> Result<Self> {
        if q == 0 {
            return Err(GeomError::InvalidInput(
                "rational angle with zero denominator",
            ));
        }
        let s = if q < 0 { -1 } else { 1 };
        let (p, q) = (p * s, q * s);
        let g = gcd(p, q).max(1);
        Ok(Self {
            turns: Turns::Rational {
                p: (p / g).rem_euclid(q / g),
                q: q / g,
            },
        })
    }

    /// Angle whose turn count is the double `x mod 1`, taken as exact.
    pub fn from_turns(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(GeomError::InvalidInput("non-finite angle"));
        }
        let f = x - Float::floor(x);
        if f == 0.0 || f >= 1.0 {
            return Ok(Self {
                turns: Turns::Rational { p: 0, q: 1 },
            });
        }
        let (mant, exp, _) = Float::integer_decode(f);
        // f = mant * 2^exp with exp < 0
        let mut m = mant;
        let mut e = (-exp) as u32;
        while m & 1 == 0 && e > 0 {
            m >>= 1;
            e -= 1;
        }
        Ok(Self {
            turns: Turns::Dyadic { m, e },
        })
    }

    pub fn from_radians(theta: f64) -> Result<Self> {
        Self::from_turns(theta / (2.0 * PI))
    }

    pub fn liouville(terms: u32) -> Result<Self> {
        if terms == 0 || terms > 6 {
            return Err(GeomError::InvalidInput(
                "Liouville truncation must use 1..=6 terms",
            ));
        }
        Ok(Self {
            turns: Turns::Liouville { terms },
        })
    }

    /// The turn count as a double.
    pub fn turns_f64(&self) -> f64 {
        match self.turns {
            Turns::Rational { p, q } => p as f64 / q as f64,
            Turns::Dyadic { m, e } => m as f64 * Float::powi(2.0, -(e as i32)),
            Turns::Liouville { terms } => (1..=terms)
                .map(|n| Float::powi(10.0, -(factorial(n) as i32)))
                .sum(),
        }
    }

    pub fn radians(&self) -> f64 {
        2.0 * PI * self.turns_f64()
    }

    /// The representative of `k x` modulo one in `[-1/2, 1/2]`.
    pub fn reduced_turns(&self, k: i64) -> f64 {
        match self.turns {
            Turns::Rational { p, q } => {
                let mut r = ((k as i128 * p as i128).rem_euclid(q as i128)) as i64;
                if 2 * r > q {
                    r -= q;
                }
                r as f64 / q as f64
            }
            Turns::Dyadic { m, e } => {
                let prod = (k.unsigned_abs() as u128) * (m as u128);
                if e >= 127 {
                    // no wrap possible: |k| m < 2^117
                    let v = prod as f64 * Float::powi(2.0, -(e as i32));
                    if k < 0 {
                        -v
                    } else {
                        v
                    }
                } else {
                    let modulus = 1u128 << e;
                    let mut r = prod % modulus;
                    if k < 0 && r != 0 {
                        r = modulus - r;
                    }
                    let half = modulus >> 1;
                    let s = if r > half {
                        -((modulus - r) as f64)
                    } else {
                        r as f64
                    };
                    s * Float::powi(2.0, -(e as i32))
                }
            }
            Turns::Liouville { terms } => {
                let big = 10u128.pow(LIOUVILLE_EXACT_DIGITS);
                let kk = (k as i128).rem_euclid(big as i128) as u128;
                let mut num: u128 = 0;
                let mut tiny = 0.0;
                for n in 1..=terms {
                    let d = factorial(n);
                    if d <= LIOUVILLE_EXACT_DIGITS {
                        let md = 10u128.pow(d);
                        num = (num + (kk % md) * 10u128.pow(LIOUVILLE_EXACT_DIGITS - d)) % big;
                    } else {
                        // 10^{-720} underflows; this is where the truncation bites
                        tiny += k as f64 * Float::powi(10.0, -(d as i32));
                    }
                }
                let main = if 2 * num > big {
                    -((big - num) as f64)
                } else {
                    num as f64
                };
                main / big as f64 + tiny
            }
        }
    }

    /// `(cos kθ, sin kθ)`.
    pub fn cos_sin(&self, k: i64) -> (f64, f64) {
        let r = self.reduced_turns(k);
        if r == 0.0 {
            return (1.0, 0.0);
        }
        let a = 2.0 * PI * r;
        (Float::cos(a), Float::sin(a))
    }

    /// `|sin(kθ/2)|`.
    pub fn half_sin_abs(&self, k: i64) -> f64 {
        Float::abs(Float::sin(PI * self.reduced_turns(k)))
    }

    /// Reduced denominator when the angle is a rational multiple of `2π`.
    pub fn rational_denominator(&self) -> Option<i64> {
        match self.turns {
            Turns::Rational { q, .. } => Some(q),
            _ => None,
        }
    }
}

/// Rotation by `θ` about the `z` axis followed by unit translation along `z`.
#[derive(Clone, Copy, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ScrewMotion {
    pub angle: Angle,
}

impl ScrewMotion {
    pub fn new(angle: Angle) -> Self {
        Self { angle }
    }

    pub fn rotation(&self, k: i64) -> M4 {
        let (c, s) = self.angle.cos_sin(k);
        let mut r = M4::identity();
        r[(0, 0)] = c;
        r[(0, 1)] = -s;
        r[(1, 0)] = s;
        r[(1, 1)] = c;
        r
    }

    pub fn apply(&self, k: i64, p: &V4) -> V4 {
        screw_apply(&self.angle, k, p)
    }
}

/// `k`-th power of the screw motion applied to `p`.
pub fn screw_apply(angle: &Angle, k: i64, p: &V4) -> V4 {
    let (c, s) = angle.cos_sin(k);
    V4::new(
        c * p[0] - s * p[1],
        s * p[0] + c * p[1],
        p[2] + k as f64,
        0.0,
    )
}

/// Length of the loop `ρ^k` at distance `t` from the axis.
pub fn loop_length(angle: &Angle, k: i64, t: f64) -> f64 {
    let s = angle.half_sin_abs(k);
    let kf = k as f64;
    Float::sqrt(kf * kf + 4.0 * t * t * s * s)
}

/// Half the minimal loop length over `1 <= k <= k_max`.
///
/// Fails unless the window certifies the minimum: every `k > k_max` has
/// `l_k >= k > k_max`, so `k_max + 1 >= min` suffices.
pub fn flat_inj(angle: &Angle, t: f64, k_max: u64) -> Result<f64> {
    if k_max == 0 || !(t >= 0.0) {
        return Err(GeomError::InvalidInput(
            "flat_inj needs k_max >= 1 and t >= 0",
        ));
    }
    let mut m = f64::INFINITY;
    for k in 1..=k_max {
        m = m.min(loop_length(angle, k as i64, t));
    }
    if (k_max as f64) + 1.0 < m {
        return Err(GeomError::KMaxTooSmall { k_max, needed: m });
    }
    Ok(0.5 * m)
}

/// `flat_inj` with the window grown until the certificate holds.
///
/// Returns the injectivity radius and the minimizing power.
pub fn flat_inj_auto(angle: &Angle, t: f64) -> (f64, u64) {
    let mut m = f64::INFINITY;
    let mut arg = 0;
    let mut k: u64 = 1;
    loop {
        let l = loop_length(angle, k as i64, t);
        if l < m {
            m = l;
            arg = k;
        }
        if (k as f64) + 1.0 >= m {
            return (0.5 * m, arg);
        }
        k += 1;
    }
}

/// Start of the plateau `inj = q/2` for `θ = 2π p/q`.
pub fn rational_plateau_start(q: i64) -> f64 {
    if q <= 1 {
        0.0
    } else {
        q as f64 / Float::sin(PI / q as f64)
    }
}

/// Distance in the quotient: minimum of `|D^k y - x|` over `|k| <= window`.
///
/// Errors with `WindowTooSmall` when the minimum sits on the window edge.
pub fn deck_distance(angle: &Angle, x: &V4, y: &V4, window: i64) -> Result<(f64, i64)> {
    let mut best = (f64::INFINITY, 0);
    for k in -window..=window {
        let d = (screw_apply(angle, k, y) - x).norm();
        if d < best.0 {
            best = (d, k);
        }
    }
    if best.1.abs() == window && window > 0 {
        return Err(GeomError::WindowTooSmall { k: best.1 });
    }
    Ok(best)
}

/// A deck window that always contains the minimizer: `|D^k y - x| >= |y_z + k - x_z|`.
pub fn safe_window(x: &V4, y: &V4) -> i64 {
    let d0 = (y - x).norm();
    (d0 + (y[2] - x[2]).abs()).ceil() as i64 + 2
}
