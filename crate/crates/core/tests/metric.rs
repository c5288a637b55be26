mod common;

use common::*;
use proptest::prelude::*;
use radar_fewshot::fewshot::{class_score, classify, ClassSupportPool, EmbeddedFeature};

#[test]
fn class_score_matches_exhaustive_search() {
    let (err, mismatches) = metric_oracle(100, 17);
    assert_eq!(mismatches, 0);
    assert!(err < 1e-9, "score error {err:e}");
}

#[test]
fn unit_attention_reproduces_plain_dn4() {
    assert_eq!(ablation_mismatches(10, 23), 0);
}

fn descriptors(n: usize, d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0f64..1.0, n * d)
}

proptest! {
    #[test]
    fn score_is_bounded_and_pool_order_free(
        q in descriptors(4, 3),
        pool in descriptors(7, 3),
        k in 1usize..=7,
        shift in 0usize..7,
    ) {
        let feat = EmbeddedFeature::new(2, 2, 3, q).unwrap();
        let a = class_score(&feat, &ClassSupportPool::from_descriptors(3, pool.clone()).unwrap(), k).unwrap();
        prop_assert!(a.score.abs() <= (4 * k) as f64 + 1e-12);
        let mut rotated = pool[shift * 3..].to_vec();
        rotated.extend_from_slice(&pool[..shift * 3]);
        let b = class_score(&feat, &ClassSupportPool::from_descriptors(3, rotated).unwrap(), k).unwrap();
        prop_assert!((a.score - b.score).abs() < 1e-12);
    }

    #[test]
    fn scores_grow_with_k(q in descriptors(4, 3), pool in descriptors(6, 3)) {
        // The k-th neighbour adds a cosine in [-1, 1], and never more than
        // the (k-1)-th one did.
        let feat = EmbeddedFeature::new(2, 2, 3, q).unwrap();
        let pool = ClassSupportPool::from_descriptors(3, pool).unwrap();
        let s: Vec<f64> = (1..=6).map(|k| class_score(&feat, &pool, k).unwrap().score).collect();
        for w in s.windows(3) {
            prop_assert!(w[2] - w[1] <= w[1] - w[0] + 1e-12);
        }
    }

    #[test]
    fn prediction_is_the_best_scoring_class(q in descriptors(4, 3), pools in prop::collection::vec(descriptors(5, 3), 2..5)) {
        let feat = EmbeddedFeature::new(2, 2, 3, q).unwrap();
        let pools: Vec<_> = pools.into_iter().map(|p| ClassSupportPool::from_descriptors(3, p).unwrap()).collect();
        let c = classify(&feat, &pools, 3).unwrap();
        let best = c.scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!(c.scores[c.prediction], best);
        prop_assert!(c.scores[..c.prediction].iter().all(|&s| s < best));
    }
}
