mod common;

use avp_core::search::{crowding, dominates, hypervolume_2d, nondominated_sort};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{brute_dominates, brute_fronts};

fn random_population<R: Rng>(rng: &mut R, n: usize, m: usize) -> Vec<Vec<f64>> {
    // a coarse value grid makes ties and duplicates common
    (0..n)
        .map(|_| (0..m).map(|_| rng.random_range(0..6) as f64).collect())
        .collect()
}

fn sorted(mut fronts: Vec<Vec<usize>>) -> Vec<Vec<usize>> {
    for f in &mut fronts {
        f.sort();
    }
    fronts
}

#[test]
fn sort_matches_peeling_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let n = rng.random_range(1..=50);
        let m = rng.random_range(2..=3);
        let pop = random_population(&mut rng, n, m);
        assert_eq!(sorted(nondominated_sort(&pop)), brute_fronts(&pop));
    }
}

#[test]
fn hypervolume_of_a_staircase() {
    // boxes to (4,4): 3x1 + 2x1 + 1x1 stacked
    let pts = vec![vec![1.0, 3.0], vec![2.0, 2.0], vec![3.0, 1.0]];
    assert!((hypervolume_2d(&pts, [4.0, 4.0]) - 6.0).abs() < 1e-12);
}

proptest! {
    #[test]
    fn dominance_agrees_with_definition(a in prop::collection::vec(0u8..4, 3), b in prop::collection::vec(0u8..4, 3)) {
        let a: Vec<f64> = a.into_iter().map(f64::from).collect();
        let b: Vec<f64> = b.into_iter().map(f64::from).collect();
        prop_assert_eq!(dominates(&a, &b).unwrap(), brute_dominates(&a, &b));
    }

    #[test]
    fn fronts_partition_and_respect_dominance(seed in any::<u64>(), n in 1usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pop = random_population(&mut rng, n, 3);
        let fronts = nondominated_sort(&pop);
        let mut all: Vec<usize> = fronts.iter().flatten().copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        for f in &fronts {
            for &i in f {
                for &j in f {
                    prop_assert!(!brute_dominates(&pop[i], &pop[j]));
                }
            }
        }
    }

    #[test]
    fn crowding_marks_the_extremes_infinite(seed in any::<u64>(), n in 3usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // distinct points on an anti-diagonal form a single front
        let mut xs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        let pop: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x, 1.0 - x]).collect();
        let front: Vec<usize> = (0..pop.len()).collect();
        let c = crowding(&pop, &front);
        prop_assert!(c[0].is_infinite() && c[pop.len() - 1].is_infinite());
        prop_assert!(c.iter().all(|v| *v >= 0.0));
    }
}
