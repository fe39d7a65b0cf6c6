//! Contrastive hierarchical Bernoulli model over concept sets.
//!
//! The archive is split into a good and a bad subset at an elite quantile.
//! Each subset gets a factorized model in which concept `v` is active with
//! probability `eta_v` given that its parent is active. The ratio of the two
//! likelihoods weights parent selection, and the per-concept log-rate
//! difference drives which concept is proposed as the next directive.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept_tree::{ConceptId, ConceptSet, ConceptTree};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("archive has {0} entries, at least 2 are needed to partition")]
    InsufficientArchive(usize),
    #[error("elite fraction {0} is outside (0, 1)")]
    InvalidEliteFraction(f64),
    #[error("feature set {0} is not ancestor-closed over the concept tree")]
    ClosureViolation(usize),
    #[error("concept {0} has no parent observations and no smoothing")]
    DegenerateCounts(ConceptId),
    #[error("unknown concept {0}")]
    UnknownConcept(ConceptId),
    #[error("subset index {0} is out of range")]
    IndexOutOfRange(usize),
    #[error("invalid model parameters: {0}")]
    InvalidParams(&'static str),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelParams {
    /// Beta pseudo-count added to activations.
    pub alpha0: f64,
    /// Beta pseudo-count added to non-activations.
    pub beta0: f64,
    /// Novelty decay exponent.
    pub gamma: f64,
    /// Weight of the novelty distribution in concept proposals.
    pub lambda_mix: f64,
    /// Fraction of the archive labelled good.
    pub rho_elite: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self { alpha0: 0.1, beta0: 10.0, gamma: 1.0, lambda_mix: 0.05, rho_elite: 0.5 }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.alpha0 > 0.0 && self.beta0 > 0.0) {
            return Err(ModelError::InvalidParams("alpha0 and beta0 must be positive"));
        }
        if !(self.gamma >= 0.0) {
            return Err(ModelError::InvalidParams("gamma must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.lambda_mix) {
            return Err(ModelError::InvalidParams("lambda_mix must lie in [0, 1]"));
        }
        if !(self.rho_elite > 0.0 && self.rho_elite < 1.0) {
            return Err(ModelError::InvalidEliteFraction(self.rho_elite));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionResult {
    pub good: Vec<usize>,
    pub bad: Vec<usize>,
    pub threshold: f64,
}

/// Splits indices at the elite threshold.
///
/// The threshold is the `ceil(rho_elite * n)`-th largest fitness; entries
/// tied with it are good, so the good subset is never empty.
pub fn partition_archive(fitnesses: &[f64], rho_elite: f64) -> Result<PartitionResult, ModelError> {
    if fitnesses.len() < 2 {
        return Err(ModelError::InsufficientArchive(fitnesses.len()));
    }
    if !(rho_elite > 0.0 && rho_elite < 1.0) {
        return Err(ModelError::InvalidEliteFraction(rho_elite));
    }
    let n = fitnesses.len();
    let mut sorted = fitnesses.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let rank = ((rho_elite * n as f64).ceil() as usize).clamp(1, n);
    let threshold = sorted[rank - 1];
    let (good, bad) = (0..n).partition(|&i| fitnesses[i] >= threshold);
    Ok(PartitionResult { good, bad, threshold })
}

/// Activation counts over one subset of the archive.
///
/// `a[v]` counts members with `v` active, `b[v]` members with `parent(v)`
/// active. The root's virtual parent is always active, so `b[root]` is the
/// subset size.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptCounts {
    pub a: Vec<u32>,
    pub b: Vec<u32>,
}

impl ConceptCounts {
    pub fn zeros(n: usize) -> Self {
        Self { a: vec![0; n], b: vec![0; n] }
    }

    pub fn a(&self, v: ConceptId) -> u32 {
        self.a.get(v.0).copied().unwrap_or(0)
    }

    pub fn b(&self, v: ConceptId) -> u32 {
        self.b.get(v.0).copied().unwrap_or(0)
    }
}

pub fn accumulate_counts(
    tree: &ConceptTree,
    feature_sets: &[ConceptSet],
    subset: &[usize],
) -> Result<ConceptCounts, ModelError> {
    let n = tree.len();
    let mut counts = ConceptCounts::zeros(n);
    for &i in subset {
        let set = feature_sets.get(i).ok_or(ModelError::IndexOutOfRange(i))?;
        if !tree.is_closed(set) {
            return Err(ModelError::ClosureViolation(i));
        }
        counts.b[0] += 1;
        for v in set.iter() {
            counts.a[v.0] += 1;
            for &child in tree.children(v) {
                counts.b[child.0] += 1;
            }
        }
    }
    Ok(counts)
}

/// Smoothed conditional activation rate `(A + alpha0) / (B + alpha0 + beta0)`.
pub fn smoothed_rate(a: u32, b: u32, alpha0: f64, beta0: f64) -> Option<f64> {
    let denom = b as f64 + alpha0 + beta0;
    (denom > 0.0).then(|| (a as f64 + alpha0) / denom)
}

/// Per-concept smoothed rates over `n` concepts (counts beyond their length
/// are treated as unobserved).
pub fn eta_smoothed(
    counts: &ConceptCounts,
    n: usize,
    alpha0: f64,
    beta0: f64,
) -> Result<Vec<f64>, ModelError> {
    (0..n)
        .map(ConceptId)
        .map(|v| {
            smoothed_rate(counts.a(v), counts.b(v), alpha0, beta0)
                .ok_or(ModelError::DegenerateCounts(v))
        })
        .collect()
}

/// `sum over non-root v of b_v ln(eta_v) + (b_pa(v) - b_v) ln(1 - eta_v)`.
pub fn log_model_likelihood(tree: &ConceptTree, b: &ConceptSet, eta: &[f64]) -> Result<f64, ModelError> {
    if !tree.is_closed(b) {
        return Err(ModelError::ClosureViolation(0));
    }
    Ok(log_likelihood_closed(tree, b, eta))
}

fn log_likelihood_closed(tree: &ConceptTree, b: &ConceptSet, eta: &[f64]) -> f64 {
    let mut total = 0.0;
    for v in b.iter() {
        for &child in tree.children(v) {
            let rate = eta[child.0];
            total += if b.contains(child) { rate.ln() } else { (1.0 - rate).ln() };
        }
    }
    total
}

/// Numerically stable normalization of `exp(log_weights)`.
pub fn softmax(log_weights: &[f64]) -> Vec<f64> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = log_weights.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}

/// Draws an index from an unnormalized non-negative weight vector.
pub fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    // rounding: fall back to the last positive weight
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(weights.len() - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityRow {
    pub id: ConceptId,
    pub label: String,
    pub depth: usize,
    pub a_good: u32,
    pub b_good: u32,
    pub a_bad: u32,
    pub b_bad: u32,
    pub eta_good: f64,
    pub eta_bad: f64,
    pub delta: f64,
    pub attempts: u32,
    /// Archive entries with this concept active at dump time.
    pub observations: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveModel {
    pub params: ModelParams,
    pub counts_good: ConceptCounts,
    pub counts_bad: ConceptCounts,
    novelty: Vec<u32>,
    eta_good: Vec<f64>,
    eta_bad: Vec<f64>,
    fitted: bool,
}

impl ContrastiveModel {
    pub fn new(params: ModelParams) -> Self {
        Self {
            params,
            counts_good: ConceptCounts::default(),
            counts_bad: ConceptCounts::default(),
            novelty: Vec::new(),
            eta_good: Vec::new(),
            eta_bad: Vec::new(),
            fitted: false,
        }
    }

    /// True once counts come from a valid partition.
    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    /// Recomputes both partitions' counts from scratch.
    pub fn fit(
        &mut self,
        tree: &ConceptTree,
        feature_sets: &[ConceptSet],
        fitnesses: &[f64],
    ) -> Result<PartitionResult, ModelError> {
        let partition = partition_archive(fitnesses, self.params.rho_elite)?;
        self.counts_good = accumulate_counts(tree, feature_sets, &partition.good)?;
        self.counts_bad = accumulate_counts(tree, feature_sets, &partition.bad)?;
        self.refresh_rates(tree.len());
        self.fitted = true;
        Ok(partition)
    }

    fn refresh_rates(&mut self, n: usize) {
        let (a0, b0) = (self.params.alpha0, self.params.beta0);
        // alpha0, beta0 > 0 so the rates are always defined
        self.eta_good = eta_smoothed(&self.counts_good, n, a0, b0).expect("positive smoothing");
        self.eta_bad = eta_smoothed(&self.counts_bad, n, a0, b0).expect("positive smoothing");
    }

    fn rate(&self, rates: &[f64], counts: &ConceptCounts, v: ConceptId) -> f64 {
        rates.get(v.0).copied().unwrap_or_else(|| {
            smoothed_rate(counts.a(v), counts.b(v), self.params.alpha0, self.params.beta0)
                .expect("positive smoothing")
        })
    }

    pub fn eta_good(&self, v: ConceptId) -> f64 {
        self.rate(&self.eta_good, &self.counts_good, v)
    }

    pub fn eta_bad(&self, v: ConceptId) -> f64 {
        self.rate(&self.eta_bad, &self.counts_bad, v)
    }

    fn rates_for(&self, tree: &ConceptTree) -> (Vec<f64>, Vec<f64>) {
        let good = tree.ids().map(|v| self.eta_good(v)).collect();
        let bad = tree.ids().map(|v| self.eta_bad(v)).collect();
        (good, bad)
    }

    /// `log p(b | good) - log p(b | bad)`.
    pub fn log_weight(&self, tree: &ConceptTree, b: &ConceptSet) -> Result<f64, ModelError> {
        let (good, bad) = self.rates_for(tree);
        Ok(log_model_likelihood(tree, b, &good)? - log_model_likelihood(tree, b, &bad)?)
    }

    /// Parent-selection probabilities proportional to the likelihood ratio.
    pub fn parent_weights(
        &self,
        tree: &ConceptTree,
        feature_sets: &[ConceptSet],
    ) -> Result<Vec<f64>, ModelError> {
        let (good, bad) = self.rates_for(tree);
        let log_w = feature_sets
            .iter()
            .enumerate()
            .map(|(i, b)| {
                if !tree.is_closed(b) {
                    return Err(ModelError::ClosureViolation(i));
                }
                Ok(log_likelihood_closed(tree, b, &good) - log_likelihood_closed(tree, b, &bad))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(softmax(&log_w))
    }

    /// Per-concept `ln eta_good - ln eta_bad`.
    pub fn delta(&self, v: ConceptId) -> f64 {
        self.eta_good(v).ln() - self.eta_bad(v).ln()
    }

    pub fn concept_utilities(&self, tree: &ConceptTree) -> Vec<f64> {
        tree.ids().map(|v| self.delta(v)).collect()
    }

    pub fn attempts(&self, v: ConceptId) -> u32 {
        self.novelty.get(v.0).copied().unwrap_or(0)
    }

    pub fn register_attempt(&mut self, tree: &ConceptTree, v: ConceptId) -> Result<(), ModelError> {
        if !tree.contains(v) {
            return Err(ModelError::UnknownConcept(v));
        }
        if self.novelty.len() <= v.0 {
            self.novelty.resize(v.0 + 1, 0);
        }
        self.novelty[v.0] += 1;
        Ok(())
    }

    /// `(n_v + 1)^(-gamma)`.
    pub fn novelty(&self, v: ConceptId) -> f64 {
        (self.attempts(v) as f64 + 1.0).powf(-self.params.gamma)
    }

    /// Mixture of the utility softmax and the novelty distribution, both over leaves.
    pub fn proposal_distribution(&self, tree: &ConceptTree) -> Vec<(ConceptId, f64)> {
        let leaves = tree.leaves();
        let deltas: Vec<f64> = leaves.iter().map(|&v| self.delta(v)).collect();
        let exploit = softmax(&deltas);
        let novel: Vec<f64> = leaves.iter().map(|&v| self.novelty(v)).collect();
        let novel_total: f64 = novel.iter().sum();
        let lambda = self.params.lambda_mix;
        leaves
            .into_iter()
            .zip(exploit.iter().zip(&novel))
            .map(|(v, (&e, &nv))| (v, (1.0 - lambda) * e + lambda * nv / novel_total))
            .collect()
    }

    pub fn propose_concept<R: Rng + ?Sized>(&self, tree: &ConceptTree, rng: &mut R) -> ConceptId {
        let dist = self.proposal_distribution(tree);
        let weights: Vec<f64> = dist.iter().map(|&(_, p)| p).collect();
        dist[sample_index(&weights, rng)].0
    }

    /// One row per concept of `tree`. `feature_sets` is the archive the
    /// observation counts are taken from.
    pub fn utility_rows(&self, tree: &ConceptTree, feature_sets: &[ConceptSet]) -> Vec<UtilityRow> {
        let n = tree.len();
        let mut observed = vec![0u32; n];
        for set in feature_sets {
            for v in set.iter().filter(|v| v.0 < n) {
                observed[v.0] += 1;
            }
        }
        tree.ids()
            .map(|v| UtilityRow {
                id: v,
                label: tree.label(v).to_string(),
                depth: tree.depth(v),
                a_good: self.counts_good.a(v),
                b_good: self.counts_good.b(v),
                a_bad: self.counts_bad.a(v),
                b_bad: self.counts_bad.b(v),
                eta_good: self.eta_good(v),
                eta_bad: self.eta_bad(v),
                delta: self.delta(v),
                attempts: self.attempts(v),
                observations: observed[v.0],
            })
            .collect()
    }
}

/// Tab-separated utility dump with a header line.
pub fn utility_table(rows: &[UtilityRow]) -> String {
    let mut out = String::from(
        "id\tlabel\tdepth\ta_good\tb_good\ta_bad\tb_bad\teta_good\teta_bad\tdelta\tattempts\tobservations\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.12}\t{:.12}\t{:.12}\t{}\t{}\n",
            r.id.0,
            r.label,
            r.depth,
            r.a_good,
            r.b_good,
            r.a_bad,
            r.b_bad,
            r.eta_good,
            r.eta_bad,
            r.delta,
            r.attempts,
            r.observations
        ));
    }
    out
}
