//! Dormand–Prince 5(4) with embedded error control and FSAL reuse.

use crate::{GeomError, Result};
use num_traits::Float;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h0: Option<f64>,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-10,
            h0: None,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 100_000,
        }
    }
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            rtol: tol,
            atol: tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
}

const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// fifth-order weights minus fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

fn err_norm<const N: usize>(e: &[f64; N], y: &[f64; N], yn: &[f64; N], o: &OdeOptions) -> f64 {
    let mut s = 0.0;
    for i in 0..N {
        let sc = o.atol + o.rtol * y[i].abs().max(yn[i].abs());
        let q = e[i] / sc;
        s += q * q;
    }
    Float::sqrt(s / N as f64)
}

/// Integrate `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// `observe` sees every accepted step, including the initial point, and may abort
/// with an error. A right-hand side that fails inside a trial step only shrinks the
/// step; the error is returned once the step would fall below `h_min`.
pub fn dopri5<const N: usize, F, O>(
    mut f: F,
    t0: f64,
    t1: f64,
    y0: [f64; N],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<([f64; N], OdeStats)>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
    O: FnMut(f64, &[f64; N], &[f64; N]) -> Result<()>,
{
    let span = t1 - t0;
    let dir = if span >= 0.0 { 1.0 } else { -1.0 };
    let mut stats = OdeStats {
        accepted: 0,
        rejected: 0,
        evals: 1,
    };
    let mut t = t0;
    let mut y = y0;
    let mut k0 = f(t, &y)?;
    observe(t, &y, &k0)?;
    if span == 0.0 {
        return Ok((y, stats));
    }

    let mut h = match opts.h0 {
        Some(h) => h.abs().min(span.abs()),
        None => initial_step(&y, &k0, span.abs(), opts),
    };
    h = h.min(opts.h_max);
    let mut last_fail: Option<GeomError> = None;
    let mut fac_max = 5.0;

    loop {
        let remaining = (t1 - t) * dir;
        if remaining <= 1e-15 * span.abs().max(1.0) {
            return Ok((y, stats));
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(GeomError::TooManySteps { s: t });
        }
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h < opts.h_min && !last {
            return Err(last_fail.unwrap_or(GeomError::StepSizeUnderflow { s: t }));
        }
        match trial_step(&mut f, t, &y, &k0, h * dir, &mut stats) {
            Ok((yn, kn, e)) => {
                let en = err_norm(&e, &y, &yn, opts);
                if en <= 1.0 {
                    t = if last { t1 } else { t + h * dir };
                    y = yn;
                    k0 = kn;
                    stats.accepted += 1;
                    observe(t, &y, &k0)?;
                    let fac = if en == 0.0 {
                        fac_max
                    } else {
                        (0.9 * Float::powf(en, -0.2)).clamp(0.2, fac_max)
                    };
                    h = (h * fac).min(opts.h_max);
                    fac_max = 5.0;
                    last_fail = None;
                } else {
                    stats.rejected += 1;
                    h *= (0.9 * Float::powf(en, -0.2)).clamp(0.1, 0.9);
                    fac_max = 1.0;
                }
            }
            Err(err) => {
                stats.rejected += 1;
                h *= 0.25;
                fac_max = 1.0;
                last_fail = Some(err);
                if h < opts.h_min {
                    return Err(last_fail.unwrap());
                }
            }
        }
    }
}

fn trial_step<const N: usize, F>(
    f: &mut F,
    t: f64,
    y: &[f64; N],
    k0: &[f64; N],
    h: f64,
    stats: &mut OdeStats,
) -> Result<([f64; N], [f64; N], [f64; N])>
where
    F: FnMut(f64, &[f64; N]) -> Result<[f64; N]>,
{
    let mut k = [[0.0; N]; 7];
    k[0] = *k0;
    let mut yn = [0.0; N];
    for s in 1..7 {
        let mut ys = *y;
        for j in 0..s {
            let a = A[s][j];
            if a != 0.0 {
                for i in 0..N {
                    ys[i] += h * a * k[j][i];
                }
            }
        }
        k[s] = f(t + C[s] * h, &ys)?;
        stats.evals += 1;
        if s == 6 {
            yn = ys;
        }
    }
    let mut e = [0.0; N];
    for i in 0..N {
        let mut acc = 0.0;
        for s in 0..7 {
            acc += E[s] * k[s][i];
        }
        e[i] = h * acc;
    }
    Ok((yn, k[6], e))
}

fn initial_step<const N: usize>(y: &[f64; N], k0: &[f64; N], span: f64, o: &OdeOptions) -> f64 {
    let mut d0 = 0.0;
    let mut d1 = 0.0;
    for i in 0..N {
        let sc = o.atol + o.rtol * y[i].abs();
        d0 += (y[i] / sc) * (y[i] / sc);
        d1 += (k0[i] / sc) * (k0[i] / sc);
    }
    let h = if d0 < 1e-10 || d1 < 1e-10 {
        1e-6
    } else {
        0.01 * Float::sqrt(d0 / d1)
    };
    // a fifth-order step is rarely limited by this guess; cap it by the span
    h.max(1e-6 * span).min(span).min(0.1 * span.max(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_oscillator_period() {
        let tau = 2.0 * core::f64::consts::PI;
        let (y, st) = dopri5(
            |_t, y: &[f64; 2]| Ok([y[1], -y[0]]),
            0.0,
            tau,
            [1.0, 0.0],
            &OdeOptions::with_tol(1e-11),
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!((y[0] - 1.0).abs() < 1e-9 && y[1].abs() < 1e-9, "{y:?}");
        assert!(st.accepted > 10);
    }

    #[test]
    fn exponential_backwards() {
        let (y, _) = dopri5(
            |_t, y: &[f64; 1]| Ok([y[0]]),
            1.0,
            0.0,
            [1.0],
            &OdeOptions::default(),
            |_, _, _| Ok(()),
        )
        .unwrap();
        assert!((y[0] - (-1.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn observer_abort_propagates() {
        let r = dopri5(
            |_t, _y: &[f64; 1]| Ok([1.0]),
            0.0,
            10.0,
            [0.0],
            &OdeOptions::default(),
            |t, _, _| {
                if t > 1.0 {
                    Err(GeomError::OutsideChart(crate::V4::zeros()))
                } else {
                    Ok(())
                }
            },
        );
        assert!(matches!(r, Err(GeomError::OutsideChart(_))));
    }

    #[test]
    fn fifth_order_convergence() {
        // error ratio over halving fixed steps should be close to 2^5
        let f = |_t: f64, y: &[f64; 2]| Ok([y[1], -y[0]]);
        let mut errs = [0.0; 2];
        for (n, e) in [20usize, 40].iter().zip(errs.iter_mut()) {
            let h = 1.0 / *n as f64;
            let mut st = OdeStats {
                accepted: 0,
                rejected: 0,
                evals: 0,
            };
            let mut y = [1.0, 0.0];
            let mut t = 0.0;
            for _ in 0..*n {
                let mut ff = f;
                let k0 = ff(t, &y).unwrap();
                y = trial_step(&mut ff, t, &y, &k0, h, &mut st).unwrap().0;
                t += h;
            }
            *e = (y[0] - 1.0f64.cos()).abs();
        }
        let ratio = errs[0] / errs[1];
        assert!(ratio > 25.0 && ratio < 40.0, "ratio {ratio}");
    }
}
