use collapse_core::asymptotics::{continued_fraction_of, pigeonhole_k, ContinuedFraction};
use collapse_core::exec::{monte_carlo, Sequential};
use collapse_core::zoo::{flat_inj_auto, loop_length, screw_apply, Angle};
use collapse_core::V4;
use proptest::prelude::*;
use rand::Rng;
use std::f64::consts::PI;

/// `D^k p` by composing the one-step screw motion `|k|` times.
fn deck_oracle(theta: f64, k: i64, p: [f64; 3]) -> [f64; 3] {
    let (s, c) = theta.sin_cos();
    let (s, step) = if k >= 0 { (s, 1.0) } else { (-s, -1.0) };
    let mut q = p;
    for _ in 0..k.abs() {
        q = [c * q[0] - s * q[1], s * q[0] + c * q[1], q[2] + step];
    }
    q
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn convergents_bracket_rationals(num in -1_000_000_000i128..1_000_000_000, den in 1i128..1_000_000_000) {
        let cf = ContinuedFraction::of_rational(num, den, 40).unwrap();
        prop_assert!(cf.recurrence_holds());
        for i in 0..cf.convergents.len().saturating_sub(1) {
            prop_assert_eq!(cf.convergent_bound_holds(i), Some(true));
        }
        // the last convergent is the number itself
        let (p, q) = *cf.convergents.last().unwrap();
        prop_assert_eq!(p * den, num * q);
    }

    #[test]
    fn convergents_of_doubles(x in 0.0f64..1.0) {
        let cf = continued_fraction_of(x, 12).unwrap();
        prop_assert!(cf.recurrence_holds());
        for i in 0..cf.convergents.len().saturating_sub(1) {
            prop_assert_ne!(cf.convergent_bound_holds(i), Some(false));
        }
    }

    #[test]
    fn loop_length_is_deck_distance(u in 0.0f64..1.0, k in -40i64..=40, t in 0.0f64..50.0) {
        let a = Angle::from_turns(u).unwrap();
        let p = [t, 0.0, 0.0];
        let q = deck_oracle(2.0 * PI * u, k, p);
        let oracle = ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) + (q[2] - p[2]).powi(2)).sqrt();
        let l = loop_length(&a, k, t);
        prop_assert!((l - oracle).abs() <= 1e-12 * oracle.max(1.0), "{} vs {}", l, oracle);
    }

    #[test]
    fn screw_powers_compose(u in 0.0f64..1.0, a in -20i64..20, b in -20i64..20, x in -5.0f64..5.0, z in -5.0f64..5.0) {
        let ang = Angle::from_turns(u).unwrap();
        let p = V4::new(x, 1.0, z, 0.0);
        let lhs = screw_apply(&ang, a, &screw_apply(&ang, b, &p));
        let rhs = screw_apply(&ang, a + b, &p);
        prop_assert!((lhs - rhs).norm() < 1e-12 * (1.0 + p.norm() + (a.abs() + b.abs()) as f64));
    }

    #[test]
    fn flat_inj_below_sqrt_bound(u in 0.0f64..1.0, e in 0.0f64..4.0) {
        let t = 10f64.powf(e);
        let c = (1.0 + 4.0 * PI * PI).sqrt() / 2.0;
        let (inj, _) = flat_inj_auto(&Angle::from_turns(u).unwrap(), t);
        prop_assert!(inj >= 0.5);
        prop_assert!(inj <= c * t.sqrt(), "inj {} at t {}", inj, t);
    }

    #[test]
    fn pigeonhole_beats_its_bound(u in 0.0f64..1.0, t in 1.0f64..1e6) {
        let (k, d) = pigeonhole_k(&Angle::from_turns(u).unwrap(), t).unwrap();
        let n = t.sqrt().floor();
        prop_assert!(k >= 1 && k as f64 <= n);
        prop_assert!(d <= 2.0 * PI / (n + 1.0) + 1e-12);
    }

    #[test]
    fn monte_carlo_is_reproducible(seed in any::<u64>(), samples in 1u64..5000) {
        let f = |rng: &mut rand_chacha::ChaCha8Rng| Ok(rng.random::<f64>());
        let a = monte_carlo(&Sequential, seed, samples, f).unwrap();
        let b = monte_carlo(&Sequential, seed, samples, f).unwrap();
        prop_assert_eq!(a.n, samples);
        prop_assert_eq!(a.sum.to_bits(), b.sum.to_bits());
        prop_assert_eq!(a.sum_sq.to_bits(), b.sum_sq.to_bits());
    }
}
