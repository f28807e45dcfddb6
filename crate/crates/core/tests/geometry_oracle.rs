mod common;

use std::f64::consts::PI;

use avp_core::geometry::{intersection_area, OrientedRect, Vec2};
use avp_core::perception::iogt;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::grid_iogt;

fn random_rect<R: Rng>(rng: &mut R) -> OrientedRect {
    OrientedRect::new(
        Vec2::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        rng.random_range(0.25..2.0),
        rng.random_range(0.25..2.0),
        rng.random_range(-PI..PI),
    )
}

#[test]
fn axis_aligned_fixtures() {
    let gt = OrientedRect::new(Vec2::new(0.0, 0.0), 1.0, 0.5, 0.0);
    assert_eq!(iogt(&gt, &gt).unwrap(), 1.0);
    let shifted = OrientedRect::new(Vec2::new(1.0, 0.0), 1.0, 0.5, 0.0);
    assert!((iogt(&shifted, &gt).unwrap() - 0.5).abs() < 1e-12);
    let apart = OrientedRect::new(Vec2::new(5.0, 0.0), 1.0, 0.5, 0.0);
    assert_eq!(iogt(&apart, &gt).unwrap(), 0.0);
    // a prediction enclosing the object still scores 1
    let big = OrientedRect::new(Vec2::new(0.0, 0.0), 3.0, 3.0, 0.0);
    assert_eq!(iogt(&big, &gt).unwrap(), 1.0);
}

#[test]
fn matches_grid_oracle_on_random_oriented_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..30 {
        let (p, g) = (random_rect(&mut rng), random_rect(&mut rng));
        let exact = iogt(&p, &g).unwrap();
        let sampled = grid_iogt(&p, &g, 1e-4);
        assert!((exact - sampled).abs() < 1e-3, "{exact} vs {sampled}");
    }
}

#[test]
fn diamond_in_square_has_half_area() {
    // unit-radius diamond inside the 2x2 square
    let sq = OrientedRect::new(Vec2::ZERO, 1.0, 1.0, 0.0);
    let h = 1.0 / 2f64.sqrt();
    let dia = OrientedRect::new(Vec2::ZERO, h, h, PI / 4.0);
    assert!((intersection_area(&dia, &sq) - 2.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn iogt_is_a_fraction(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, g) = (random_rect(&mut rng), random_rect(&mut rng));
        let v = iogt(&p, &g).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn intersection_is_symmetric_and_bounded(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_rect(&mut rng), random_rect(&mut rng));
        let ab = intersection_area(&a, &b);
        let ba = intersection_area(&b, &a);
        prop_assert!((ab - ba).abs() < 1e-9);
        prop_assert!(ab <= a.area().min(b.area()) + 1e-9);
    }

    #[test]
    fn rigid_motion_preserves_iogt(seed in any::<u64>(), shift in -5.0f64..5.0, turn in -PI..PI) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, g) = (random_rect(&mut rng), random_rect(&mut rng));
        let mv = |r: &OrientedRect| OrientedRect {
            center: r.center.rotate(turn) + Vec2::new(shift, -shift),
            half_extents: r.half_extents,
            heading: r.heading + turn,
        };
        let before = iogt(&p, &g).unwrap();
        let after = iogt(&mv(&p), &mv(&g)).unwrap();
        prop_assert!((before - after).abs() < 1e-9);
    }
}
