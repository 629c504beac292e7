use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use mmfuse::dataset::{fleiss_kappa, split, RatingsMatrix};
use mmfuse::evalharness::{f1, macro_f1, readability, round_half_up};
use mmfuse::fusion::{blend_vectors, BlendConfig};
use mmfuse::numkernel::{attention, attention_backward, finite_diff_check, softmax_rows};
use mmfuse::{Category, Matrix};

fn matrix(rows: usize, cols: usize, seed: u64, bound: f64) -> Matrix {
    Matrix::uniform(rows, cols, bound, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn category() -> impl Strategy<Value = Category> {
    (0usize..Category::COUNT).prop_map(|c| Category::ALL[c])
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..6, cols in 1usize..8, seed in any::<u64>(), bound in 0.1f64..50.0) {
        let s = softmax_rows(&matrix(rows, cols, seed, bound)).unwrap();
        for r in 0..rows {
            prop_assert!((s.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(s.row(r).iter().all(|&x| (0.0..=1.0).contains(&x)));
        }
    }

    #[test]
    fn softmax_ignores_row_shifts(cols in 1usize..8, seed in any::<u64>(), shift in -100.0f64..100.0) {
        let m = matrix(1, cols, seed, 3.0);
        let a = softmax_rows(&m).unwrap();
        let b = softmax_rows(&m.map(|x| x + shift)).unwrap();
        prop_assert!(a.max_abs_diff(&b) < 1e-12);
    }

    #[test]
    fn attention_output_stays_in_value_hull(n in 1usize..5, m in 1usize..5, d in 1usize..5, seed in any::<u64>()) {
        let q = matrix(n, d, seed, 2.0);
        let k = matrix(m, d, seed ^ 1, 2.0);
        let v = matrix(m, 3, seed ^ 2, 2.0);
        let (out, w) = attention(&q, &k, &v).unwrap();
        for r in 0..n {
            prop_assert!((w.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            for c in 0..3 {
                let col: Vec<f64> = (0..m).map(|j| v.get(j, c)).collect();
                let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
                let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out.get(r, c) >= lo - 1e-12 && out.get(r, c) <= hi + 1e-12);
            }
        }
    }

    #[test]
    fn attention_query_gradient_matches_finite_difference(n in 1usize..4, m in 1usize..4, seed in any::<u64>()) {
        let q = matrix(n, 3, seed, 1.0);
        let k = matrix(m, 3, seed ^ 1, 1.0);
        let v = matrix(m, 2, seed ^ 2, 1.0);
        let probe = matrix(n, 2, seed ^ 3, 1.0);
        let err = finite_diff_check(
            |q: &Matrix| {
                let (out, w) = attention(q, &k, &v).unwrap();
                let g = attention_backward(q, &k, &v, &w, &probe).unwrap();
                (out.dot(&probe).unwrap(), g.dq)
            },
            &q,
            1e-5,
        );
        prop_assert!(err < 1e-5, "relative error {err:e}");
    }

    #[test]
    fn blend_is_bounded_by_its_inputs(seed in any::<u64>(), omega in 0.0f64..=1.0, alpha in 0.0f64..=1.0) {
        let v: Vec<Matrix> = (0..4).map(|i| matrix(1, 6, seed.wrapping_add(i), 5.0)).collect();
        let z = blend_vectors(&v[0], &v[1], &v[2], &v[3], BlendConfig::new(omega, alpha).unwrap()).unwrap();
        for c in 0..6 {
            let lo = v.iter().map(|m| m.get(0, c)).fold(f64::INFINITY, f64::min);
            let hi = v.iter().map(|m| m.get(0, c)).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(z.get(0, c) >= lo - 1e-12 && z.get(0, c) <= hi + 1e-12);
        }
    }

    #[test]
    fn kappa_is_permutation_invariant(seed in any::<u64>(), items in 2usize..8, cats in 2usize..5, raters in 2u32..6) {
        use rand::seq::SliceRandom;
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut counts: Vec<Vec<u32>> = (0..items)
            .map(|_| {
                let mut row = vec![0; cats];
                for _ in 0..raters {
                    row[rng.gen_range(0..cats)] += 1;
                }
                row
            })
            .collect();
        let Ok(base) = fleiss_kappa(&RatingsMatrix::new(counts.clone()).unwrap()) else {
            return Ok(());
        };
        prop_assert!((-1.0..=1.0).contains(&base));
        counts.shuffle(&mut rng);
        let mut perm: Vec<usize> = (0..cats).collect();
        perm.shuffle(&mut rng);
        let permuted: Vec<Vec<u32>> = counts.iter().map(|r| perm.iter().map(|&j| r[j]).collect()).collect();
        let k = fleiss_kappa(&RatingsMatrix::new(permuted).unwrap()).unwrap();
        prop_assert!((k - base).abs() < 1e-12);
    }

    #[test]
    fn classification_scores_are_unit_interval(pairs in prop::collection::vec((any::<bool>(), any::<bool>(), category(), category()), 1..40)) {
        let pb: Vec<bool> = pairs.iter().map(|p| p.0).collect();
        let gb: Vec<bool> = pairs.iter().map(|p| p.1).collect();
        let pc: Vec<Category> = pairs.iter().map(|p| p.2).collect();
        let gc: Vec<Category> = pairs.iter().map(|p| p.3).collect();
        prop_assert!((0.0..=1.0).contains(&f1(&pb, &gb).unwrap()));
        prop_assert!((0.0..=1.0).contains(&macro_f1(&pc, &gc).unwrap()));
        prop_assert_eq!(f1(&gb, &gb).unwrap(), if gb.contains(&true) { 1.0 } else { 0.0 });
    }

    #[test]
    fn readability_is_unit_interval(text in "[A-Za-z]{1,12}( [A-Za-z]{1,12}){0,20}[.!?]") {
        let r = readability(&text).unwrap();
        prop_assert!((0.0..=1.0).contains(&r), "{r}");
    }

    #[test]
    fn split_partitions_and_stratifies(cats in prop::collection::vec(0usize..5, 1..60), seed in any::<u64>(), frac in 0.1f64..0.9) {
        let items: Vec<(usize, usize)> = cats.iter().cloned().enumerate().collect();
        let s = split(&items, |x| Category::ALL[x.1], seed, frac).unwrap();
        let mut ids: Vec<usize> = s.train.iter().chain(&s.test).map(|x| x.0).collect();
        ids.sort_unstable();
        prop_assert_eq!(ids, (0..items.len()).collect::<Vec<_>>());
        for c in 0..5 {
            let total = cats.iter().filter(|&&x| x == c).count() as f64;
            let got = s.train.iter().filter(|x| x.1 == c).count() as f64;
            prop_assert!((got - total * frac).abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn rounding_is_within_half_step(x in -1000.0f64..1000.0, d in 0u32..4) {
        let step = 10f64.powi(-(d as i32));
        prop_assert!((round_half_up(x, d) - x).abs() <= step / 2.0 + 1e-9);
    }
}
