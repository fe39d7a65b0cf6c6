#![allow(dead_code)]

use ccts_core::{ConceptId, ConceptSet, ConceptTree};
use rand::Rng;

/// Tree with `extra` non-root nodes, each attached to a uniformly chosen earlier node.
pub fn random_tree<R: Rng>(extra: usize, rng: &mut R) -> ConceptTree {
    let mut tree = ConceptTree::new("root").unwrap();
    for i in 0..extra {
        let parent = ConceptId(rng.random_range(0..tree.len()));
        tree.insert_child(parent, &format!("n{i}")).unwrap();
    }
    tree
}

/// Random ancestor-closed set that always contains the root.
pub fn random_closed_set<R: Rng>(tree: &ConceptTree, rng: &mut R) -> ConceptSet {
    let picks: Vec<ConceptId> = tree.ids().filter(|_| rng.random_bool(0.3)).collect();
    tree.ancestor_closure(picks.into_iter().chain([ConceptId::ROOT])).unwrap()
}

/// Every ancestor-closed configuration that contains the root, by brute force.
pub fn all_closed_configurations(tree: &ConceptTree) -> Vec<ConceptSet> {
    let m = tree.len() - 1;
    let mut out = Vec::new();
    for mask in 0u32..(1 << m) {
        let set: ConceptSet = std::iter::once(ConceptId::ROOT)
            .chain((0..m).filter(|b| mask & (1 << b) != 0).map(|b| ConceptId(b + 1)))
            .collect();
        let closed = set
            .iter()
            .all(|v| v.is_root() || set.contains(tree.parent(v)));
        if closed {
            out.push(set);
        }
    }
    out
}

/// Standard error of a Bernoulli frequency estimate.
pub fn binomial_se(p: f64, n: usize) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}
