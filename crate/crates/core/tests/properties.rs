mod support;

use mgrpo_core::entropy_filter::{iqr_filter, quartiles, FilterConfig};
use mgrpo_core::policy::{ema_update, kl_from_log_probs, tempered_log_softmax, Shape, TabularPolicy};
use mgrpo_core::selfreward::{binary_rewards, majority_vote, normalize_advantages};
use proptest::prelude::*;
use support::*;

fn answers() -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0usize..6, 1..40)
}

fn entropies() -> impl Strategy<Value = Vec<f64>> {
    // a coarse grid produces plenty of ties
    prop::collection::vec(prop_oneof![0.0f64..3.0, (0u8..30).prop_map(|x| x as f64 / 10.0)], 2..48)
}

proptest! {
    #[test]
    fn vote_matches_counting_oracle(a in answers()) {
        prop_assert_eq!(majority_vote(&a).ok(), vote_oracle(&a));
    }

    #[test]
    fn vote_ignores_order(a in answers(), seed in any::<u64>()) {
        let mut shuffled = a.clone();
        let n = shuffled.len();
        for i in (1..n).rev() {
            shuffled.swap(i, (seed.rotate_left(i as u32) as usize) % (i + 1));
        }
        prop_assert_eq!(majority_vote(&a).unwrap(), majority_vote(&shuffled).unwrap());
    }

    #[test]
    fn winner_collects_the_most_reward(a in answers()) {
        let winner = majority_vote(&a).unwrap();
        let total: f64 = binary_rewards(winner, &a).iter().sum();
        for other in 0..6 {
            prop_assert!(binary_rewards(other, &a).iter().sum::<f64>() <= total);
        }
    }

    #[test]
    fn advantages_are_standardized(r in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), -3.0f64..3.0], 1..40)) {
        let out = normalize_advantages(&r);
        match normalize_oracle(&r) {
            None => {
                prop_assert!(out.degenerate);
                prop_assert!(out.values.iter().all(|&v| v == 0.0));
            }
            Some(expected) => {
                prop_assert!(!out.degenerate);
                let n = r.len() as f64;
                let mean = out.values.iter().sum::<f64>() / n;
                let var = out.values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
                prop_assert!(mean.abs() < 1e-9);
                prop_assert!((var - 1.0).abs() < 1e-9);
                for (a, b) in out.values.iter().zip(&expected) {
                    prop_assert!((a - b).abs() < 1e-7 * (1.0 + b.abs()));
                }
            }
        }
    }

    #[test]
    fn quartiles_match_sorted_interpolation(v in entropies()) {
        let (q1, q3) = quartiles(&v).unwrap();
        prop_assert_eq!(q1, quantile_oracle(&v, 0.25));
        prop_assert_eq!(q3, quantile_oracle(&v, 0.75));
        prop_assert!(q1 <= q3);
    }

    #[test]
    fn filter_matches_oracle(v in entropies(), k in 0.0f64..3.0, min_pool in 2usize..10, enabled in any::<bool>()) {
        let config = FilterConfig { k, min_pool_for_filter: min_pool, enabled };
        let out = iqr_filter(&v, &config).unwrap();
        prop_assert_eq!(&out.keep_mask, &keep_mask_oracle(&v, k, min_pool, enabled));
        prop_assert_eq!(out.removed_count, out.keep_mask.iter().filter(|&&x| !x).count());
    }

    #[test]
    fn larger_k_keeps_a_superset(v in entropies(), k in 0.0f64..2.0, extra in 0.0f64..2.0) {
        let tight = iqr_filter(&v, &FilterConfig { k, ..FilterConfig::default() }).unwrap();
        let loose = iqr_filter(&v, &FilterConfig { k: k + extra, ..FilterConfig::default() }).unwrap();
        for (t, l) in tight.keep_mask.iter().zip(&loose.keep_mask) {
            prop_assert!(!t || *l);
        }
    }

    #[test]
    fn filter_is_scale_and_shift_equivariant(v in entropies(), exp in -3i32..4, shift in -4i32..5) {
        // powers of two and small integer shifts keep the arithmetic exact on the grid
        let c = 2f64.powi(exp);
        let grid: Vec<f64> = v.iter().map(|x| (x * 8.0).round() / 8.0).collect();
        let moved: Vec<f64> = grid.iter().map(|x| x * c + shift as f64).collect();
        let config = FilterConfig::default();
        prop_assert_eq!(iqr_filter(&grid, &config).unwrap().keep_mask, iqr_filter(&moved, &config).unwrap().keep_mask);
    }

    #[test]
    fn filter_keeps_at_least_half(v in entropies(), k in 0.0f64..3.0) {
        let out = iqr_filter(&v, &FilterConfig { k, ..FilterConfig::default() }).unwrap();
        prop_assert!(2 * out.removed_count <= v.len());
    }

    #[test]
    fn kl_is_nonnegative(p in prop::collection::vec(-5.0f64..5.0, 2..8), seed in any::<u64>(), t in 0.3f64..3.0) {
        let q: Vec<f64> = p.iter().enumerate().map(|(i, x)| x * ((seed >> (i % 60)) & 3) as f64 - 1.0).collect();
        let (mut lp, mut lq) = (vec![0.0; p.len()], vec![0.0; p.len()]);
        tempered_log_softmax(&p, t, &mut lp);
        tempered_log_softmax(&q, t, &mut lq);
        prop_assert!(kl_from_log_probs(&lp, &lq) >= -1e-15);
        prop_assert!(kl_from_log_probs(&lp, &lp).abs() < 1e-15);
        prop_assert!((lp.iter().map(|x| x.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ema_contracts_toward_current(a in prop::collection::vec(-10.0f64..10.0, 6), b in prop::collection::vec(-10.0f64..10.0, 6), m in 0.0f64..0.999) {
        let shape = Shape::new(1, 1, 2).unwrap();
        let momentum = TabularPolicy::from_logits(shape, a).unwrap();
        let current = TabularPolicy::from_logits(shape, b).unwrap();
        let next = ema_update(&momentum, &current, m).unwrap();
        let dist = |x: &TabularPolicy, y: &TabularPolicy| {
            x.logits().iter().zip(y.logits()).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max)
        };
        prop_assert!(dist(&next, &current) <= m * dist(&momentum, &current) + 1e-12);
        prop_assert!(dist(&next, &momentum) <= (1.0 - m) * dist(&momentum, &current) + 1e-12);
    }
}

#[test]
fn hand_computed_examples_agree_with_oracles() {
    assert_eq!(vote_oracle(&[2, 7, 7, 2]), Some(2));
    assert_eq!(majority_vote(&[2, 7, 7, 2]).unwrap(), 2);
    let expected = normalize_oracle(&[1.0, 0.0, 0.0, 0.0]).unwrap();
    for (a, b) in normalize_advantages(&[1.0, 0.0, 0.0, 0.0]).values.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert!((expected[0] - 1.7321).abs() < 1e-4);
    assert!((quantile_oracle(&[0.1, 1.0, 1.1, 1.2], 0.25) - 0.775).abs() < 1e-12);
}
