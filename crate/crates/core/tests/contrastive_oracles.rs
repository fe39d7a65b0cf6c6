mod common;

use ccts_core::contrastive::{
    accumulate_counts, eta_smoothed, log_model_likelihood, smoothed_rate, softmax, ContrastiveModel, ModelParams,
};
use ccts_core::{ConceptId, ConceptSet, ConceptTree};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-node log-likelihood written directly from indicator vectors, with `0 ln 0 = 0`.
fn node_log_likelihood(tree: &ConceptTree, data: &[ConceptSet], v: ConceptId, eta: f64) -> f64 {
    let xlogy = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * y.ln() };
    data.iter()
        .map(|b| {
            let on = b.contains(v) as u8 as f64;
            let parent_on = b.contains(tree.parent(v)) as u8 as f64;
            xlogy(on, eta) + xlogy(parent_on - on, 1.0 - eta)
        })
        .sum()
}

/// Zooming grid search over [0, 1].
fn grid_argmax(f: impl Fn(f64) -> f64) -> f64 {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let mut best = 0.0;
    for _ in 0..4 {
        let steps = 1000;
        let h = (hi - lo) / steps as f64;
        let mut best_val = f64::NEG_INFINITY;
        for i in 0..=steps {
            let x = lo + i as f64 * h;
            let val = f(x);
            if val > best_val {
                best_val = val;
                best = x;
            }
        }
        lo = (best - h).max(0.0);
        hi = (best + h).min(1.0);
    }
    best
}

#[test]
fn mle_matches_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut checked = 0;
    for _ in 0..100 {
        let tree = common::random_tree(rng.random_range(1..10), &mut rng);
        let data: Vec<ConceptSet> =
            (0..rng.random_range(1..=20)).map(|_| common::random_closed_set(&tree, &mut rng)).collect();
        let all: Vec<usize> = (0..data.len()).collect();
        let counts = accumulate_counts(&tree, &data, &all).unwrap();
        for v in tree.ids().skip(1) {
            if counts.b(v) == 0 {
                continue;
            }
            let mle = smoothed_rate(counts.a(v), counts.b(v), 0.0, 0.0).unwrap();
            let oracle = grid_argmax(|eta| node_log_likelihood(&tree, &data, v, eta));
            assert!((mle - oracle).abs() < 1e-6, "node {v}: mle {mle} oracle {oracle}");
            checked += 1;
        }
    }
    assert!(checked > 100);

    // with every node observed the vector form agrees
    let tree = common::random_tree(4, &mut rng);
    let full = tree.ancestor_closure(tree.ids()).unwrap();
    let data = vec![full, ConceptSet::root_only()];
    let counts = accumulate_counts(&tree, &data, &[0, 1]).unwrap();
    let eta = eta_smoothed(&counts, tree.len(), 0.0, 0.0).unwrap();
    for v in tree.ids().skip(1) {
        let oracle = grid_argmax(|e| node_log_likelihood(&tree, &data, v, e));
        assert!((eta[v.0] - oracle).abs() < 1e-6);
    }
}

#[test]
fn likelihood_normalizes_over_closed_configurations() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..50 {
        let tree = common::random_tree(rng.random_range(1..=4), &mut rng);
        let eta: Vec<f64> = tree.ids().map(|_| rng.random_range(0.01..0.99)).collect();
        let total: f64 = common::all_closed_configurations(&tree)
            .iter()
            .map(|b| log_model_likelihood(&tree, b, &eta).unwrap().exp())
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
    }
}

#[test]
fn good_evidence_never_lowers_delta() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let params = ModelParams::default();
    for _ in 0..500 {
        let tree = common::random_tree(rng.random_range(1..8), &mut rng);
        let v = ConceptId(rng.random_range(1..tree.len()));
        let data: Vec<ConceptSet> = (0..10).map(|_| common::random_closed_set(&tree, &mut rng)).collect();
        let good: Vec<usize> = (0..5).collect();
        let bad: Vec<usize> = (5..10).collect();

        let mut before = ContrastiveModel::new(params);
        before.counts_good = accumulate_counts(&tree, &data, &good).unwrap();
        before.counts_bad = accumulate_counts(&tree, &data, &bad).unwrap();

        let mut extended = data.clone();
        extended.push(tree.ancestor_closure([v]).unwrap());
        let mut good_plus = good.clone();
        good_plus.push(10);
        let mut after = ContrastiveModel::new(params);
        after.counts_good = accumulate_counts(&tree, &extended, &good_plus).unwrap();
        after.counts_bad = before.counts_bad.clone();

        assert!(after.delta(v) >= before.delta(v) - 1e-15);
    }
}

proptest! {
    #[test]
    fn softmax_is_shift_invariant(
        logs in prop::collection::vec(-30.0f64..30.0, 1..12),
        shift in -500.0f64..500.0,
    ) {
        let shifted: Vec<f64> = logs.iter().map(|x| x + shift).collect();
        let a = softmax(&logs);
        let b = softmax(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn parent_weights_sum_to_one(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tree = common::random_tree(rng.random_range(1..10), &mut rng);
        let data: Vec<ConceptSet> = (0..12).map(|_| common::random_closed_set(&tree, &mut rng)).collect();
        let fitness: Vec<f64> = (0..12).map(|_| rng.random::<f64>()).collect();
        let mut model = ContrastiveModel::new(ModelParams::default());
        model.fit(&tree, &data, &fitness).unwrap();
        let w = model.parent_weights(&tree, &data).unwrap();
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(w.iter().all(|&p| p > 0.0));
        for (b, p) in data.iter().zip(&w) {
            let lw = model.log_weight(&tree, b).unwrap();
            prop_assert!(lw.is_finite());
            let ratio = (lw - model.log_weight(&tree, &data[0]).unwrap()).exp();
            prop_assert!((p / w[0] - ratio).abs() < 1e-9 * ratio.max(1.0));
        }
    }
}

#[test]
fn proposal_frequencies_match_mixture() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let tree = common::random_tree(7, &mut rng);
    let data: Vec<ConceptSet> = (0..20).map(|_| common::random_closed_set(&tree, &mut rng)).collect();
    let fitness: Vec<f64> = data.iter().map(|b| b.len() as f64 + rng.random::<f64>()).collect();
    let mut model = ContrastiveModel::new(ModelParams { lambda_mix: 0.3, ..Default::default() });
    model.fit(&tree, &data, &fitness).unwrap();
    for leaf in tree.leaves().into_iter().take(1) {
        model.register_attempt(&tree, leaf).unwrap();
    }
    let dist = model.proposal_distribution(&tree);
    assert!((dist.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() < 1e-12);

    let draws = 100_000;
    let mut hits = vec![0usize; tree.len()];
    for _ in 0..draws {
        hits[model.propose_concept(&tree, &mut rng).0] += 1;
    }
    for &(v, p) in &dist {
        let freq = hits[v.0] as f64 / draws as f64;
        let se = common::binomial_se(p, draws);
        assert!((freq - p).abs() <= 3.0 * se + 1e-12, "leaf {v}: freq {freq} p {p}");
    }
    // internal nodes are never proposed
    for v in tree.ids().filter(|&v| !tree.is_leaf(v)) {
        assert_eq!(hits[v.0], 0);
    }
}
