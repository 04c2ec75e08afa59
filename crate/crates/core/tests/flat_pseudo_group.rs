//! Pseudo-groups of flat screw quotients against brute-force deck enumeration.

use collapse_core::exec::block_rng;
use collapse_core::geodesics::LoopOptions;
use collapse_core::models::FlatScrew;
use collapse_core::pseudo_group::{build_pseudo_group, DomainMembership};
use collapse_core::zoo::{screw_apply, Angle};
use collapse_core::V4;
use rand::Rng;

fn sample_ball(rng: &mut impl Rng, radius: f64) -> V4 {
    loop {
        let w = V4::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            0.0,
        );
        if w.norm() < 1.0 {
            return w * radius;
        }
    }
}

fn configs() -> Vec<(Angle, V4, f64)> {
    vec![
        (
            Angle::rational(1, 5).unwrap(),
            V4::new(5.0, 0.0, 0.0, 0.0),
            6.0,
        ),
        (
            Angle::rational(2, 7).unwrap(),
            V4::new(0.0, 8.0, 0.3, 0.0),
            8.0,
        ),
        (
            Angle::from_turns(0.3819660112501051).unwrap(),
            V4::new(2.0, 2.0, 0.0, 0.0),
            5.0,
        ),
        (
            Angle::rational(1, 3).unwrap(),
            V4::new(20.0, 0.0, 0.0, 0.0),
            5.0,
        ),
    ]
}

#[test]
fn elements_act_without_fixed_points() {
    let mut rng = block_rng(21, 0);
    for (a, x, rho) in configs() {
        let m = FlatScrew::new(a);
        let b = build_pseudo_group(&m, &x, rho, &LoopOptions::default()).unwrap();
        assert!(b.elements.len() > 1);
        for _ in 0..200 {
            let w = sample_ball(&mut rng, rho);
            for e in b.elements.iter().filter(|e| e.k != 0) {
                assert!(
                    (b.tau_apply(e, &w).unwrap() - w).norm() > 0.5,
                    "k {} fixes {w:?}",
                    e.k
                );
            }
        }
    }
}

#[test]
fn pair_domains_sit_in_their_slabs() {
    let mut rng = block_rng(22, 0);
    for (a, x, rho) in configs() {
        let m = FlatScrew::new(a);
        let b = build_pseudo_group(&m, &x, rho, &LoopOptions::default()).unwrap();
        for e in b.elements.iter().filter(|e| e.k > 0) {
            let pair = [e.k, -e.k];
            let mut inside = 0;
            for _ in 0..400 {
                let w = sample_ball(&mut rng, rho);
                if b.fundamental_domain(Some(&pair), &w).unwrap() == DomainMembership::Inside {
                    inside += 1;
                    assert!(b.in_trig_slab(e, &w).unwrap(), "k {}: {w:?}", e.k);
                }
            }
            assert!(inside > 0);
        }
    }
}

#[test]
fn lift_count_matches_deck_orbit() {
    let mut rng = block_rng(23, 0);
    for (a, x, rho) in configs() {
        let m = FlatScrew::new(a);
        let b = build_pseudo_group(&m, &x, rho, &LoopOptions::default()).unwrap();
        for _ in 0..50 {
            let w = sample_ball(&mut rng, 0.3 * rho);
            let radius = 0.6 * rho;
            let y = x + w;
            // lifts of y around x: deck images of y in the Euclidean ball
            let want = (-40..=40)
                .filter(|&k| (screw_apply(&a, k, &y) - x).norm() < radius)
                .count();
            assert_eq!(b.lift_count(&y, radius).unwrap(), want);
        }
    }
}
