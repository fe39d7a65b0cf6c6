//! Generate/evaluate loop with pluggable parent-selection policies.
//!
//! A run seeds the archive with one candidate produced from an empty parent,
//! then repeats: refit the contrastive model, select a parent, propose a
//! concept directive, generate, evaluate, extract features and archive the
//! child. Generation and evaluation failures are archived as invalid
//! entries at the evaluator's floor score.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept_tree::{ConceptId, ConceptSet, ConceptTree, TreeError};
use crate::contrastive::{sample_index, ContrastiveModel, ModelError, ModelParams};
use crate::trace::{IterationRecord, RunTrace, TraceHeader, TraceSummary};

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("archive is empty")]
    EmptyArchive,
    #[error("invalid run configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tree(#[from] TreeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Uniform,
    Greedy,
    KElite,
    Ccts,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] =
        [PolicyKind::Ccts, PolicyKind::KElite, PolicyKind::Greedy, PolicyKind::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Uniform => "uniform",
            PolicyKind::Greedy => "greedy",
            PolicyKind::KElite => "k_elite",
            PolicyKind::Ccts => "ccts",
        }
    }
}

impl std::str::FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "uniform" => Ok(PolicyKind::Uniform),
            "greedy" => Ok(PolicyKind::Greedy),
            "k_elite" | "kelite" | "k_elites" => Ok(PolicyKind::KElite),
            "ccts" => Ok(PolicyKind::Ccts),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionPolicy {
    pub kind: PolicyKind,
    /// Elite pool size for `KElite`.
    pub k: usize,
    /// Probability of taking the informed branch instead of uniform sampling.
    pub p_exploit: f64,
}

impl SelectionPolicy {
    pub fn new(kind: PolicyKind) -> Self {
        Self { kind, k: 5, p_exploit: 0.85 }
    }

    pub fn with_p_exploit(mut self, p_exploit: f64) -> Self {
        self.p_exploit = p_exploit;
        self
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if !(0.0..=1.0).contains(&self.p_exploit) {
            return Err(SearchError::InvalidConfig(format!(
                "p_exploit {} outside [0, 1]",
                self.p_exploit
            )));
        }
        if self.k == 0 {
            return Err(SearchError::InvalidConfig("k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Explore,
    Exploit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub policy: SelectionPolicy,
    pub iterations: usize,
    pub seed: u64,
    pub model: ModelParams,
    /// Only a single island is supported.
    pub islands: usize,
}

impl RunConfig {
    pub fn new(kind: PolicyKind, seed: u64) -> Self {
        Self {
            policy: SelectionPolicy::new(kind),
            iterations: 25,
            seed,
            model: ModelParams::default(),
            islands: 1,
        }
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        self.policy.validate()?;
        self.model.validate()?;
        if self.iterations == 0 {
            return Err(SearchError::InvalidConfig("iterations must be at least 1".into()));
        }
        if self.islands != 1 {
            return Err(SearchError::InvalidConfig("only a single island is supported".into()));
        }
        Ok(())
    }
}

/// One evaluated candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchiveEntry<P> {
    pub entry_id: usize,
    /// `None` when generation itself failed.
    pub payload: Option<P>,
    pub fitness: f64,
    pub valid: bool,
    pub features: ConceptSet,
    pub parent_entry: Option<usize>,
    pub proposed_concept: Option<ConceptId>,
    pub iteration: usize,
    pub feedback: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub fitness: f64,
    pub valid: bool,
    /// Diagnostics for the next prompt, e.g. captured stderr.
    pub feedback: Option<String>,
}

impl Evaluation {
    pub fn valid(fitness: f64) -> Self {
        Self { fitness, valid: true, feedback: None }
    }

    pub fn invalid(floor: f64, feedback: impl Into<String>) -> Self {
        Self { fitness: floor, valid: false, feedback: Some(feedback.into()) }
    }
}

/// Typed failure from a generator or extractor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Error)]
#[error("{kind}: {message}")]
pub struct CandidateFailure {
    pub kind: String,
    pub message: String,
}

impl CandidateFailure {
    pub fn new(kind: impl Into<String>, message: impl Into<String>) -> Self {
        Self { kind: kind.into(), message: message.into() }
    }
}

/// Everything a generator may condition on.
#[derive(Debug, Clone)]
pub struct GenerationRequest<'a, P> {
    pub iteration: usize,
    pub parent: Option<&'a P>,
    pub parent_score: Option<f64>,
    pub best_score: Option<f64>,
    pub directive: Option<&'a str>,
    pub last_failure: Option<&'a str>,
}

pub trait Generator<P> {
    fn generate(
        &mut self,
        request: &GenerationRequest<'_, P>,
        rng: &mut dyn RngCore,
    ) -> Result<P, CandidateFailure>;
}

pub trait Evaluator<P> {
    fn evaluate(&mut self, payload: &P) -> Evaluation;

    /// Score stored for invalid candidates.
    fn floor_score(&self) -> f64;
}

pub trait Extractor<P> {
    fn root_label(&self) -> &str;

    /// Returns a set closed over `tree` after any insertions it makes.
    fn extract(&mut self, payload: &P, tree: &mut ConceptTree) -> Result<ConceptSet, CandidateFailure>;
}

pub struct Bindings<'a, P> {
    pub generator: &'a mut dyn Generator<P>,
    pub evaluator: &'a mut dyn Evaluator<P>,
    pub extractor: &'a mut dyn Extractor<P>,
}

/// Chooses a parent index and reports which branch of the mixture fired.
pub fn select_parent<R: Rng + ?Sized>(
    policy: &SelectionPolicy,
    fitnesses: &[f64],
    features: &[ConceptSet],
    tree: &ConceptTree,
    model: &ContrastiveModel,
    rng: &mut R,
) -> Result<(usize, Branch), SearchError> {
    let n = fitnesses.len();
    if n == 0 {
        return Err(SearchError::EmptyArchive);
    }
    if rng.random::<f64>() >= policy.p_exploit {
        return Ok((rng.random_range(0..n), Branch::Explore));
    }
    let index = match policy.kind {
        PolicyKind::Uniform => rng.random_range(0..n),
        PolicyKind::Greedy => greedy_index(fitnesses),
        PolicyKind::KElite => {
            let elite = top_k(fitnesses, policy.k);
            elite[rng.random_range(0..elite.len())]
        }
        PolicyKind::Ccts => {
            if model.is_fitted() {
                let weights = model.parent_weights(tree, features)?;
                sample_index(&weights, rng)
            } else {
                rng.random_range(0..n)
            }
        }
    };
    Ok((index, Branch::Exploit))
}

/// Argmax with the lowest index winning ties.
pub fn greedy_index(fitnesses: &[f64]) -> usize {
    let mut best = 0;
    for (i, &y) in fitnesses.iter().enumerate().skip(1) {
        if y > fitnesses[best] {
            best = i;
        }
    }
    best
}

/// Indices of the `min(k, n)` fittest entries, ties broken by index.
pub fn top_k(fitnesses: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..fitnesses.len()).collect();
    order.sort_by(|&a, &b| fitnesses[b].total_cmp(&fitnesses[a]).then(a.cmp(&b)));
    order.truncate(k.max(1).min(fitnesses.len()));
    order
}

/// Running maximum of a fitness sequence.
pub fn running_best(fitnesses: &[f64]) -> Vec<f64> {
    fitnesses
        .iter()
        .scan(f64::NEG_INFINITY, |best, &y| {
            *best = best.max(y);
            Some(*best)
        })
        .collect()
}

pub fn best_curve(trace: &RunTrace) -> Vec<f64> {
    trace.records.iter().map(|r| r.best_so_far).collect()
}

/// Mutable state of one run.
pub struct SearchState<P> {
    pub config: RunConfig,
    pub tree: ConceptTree,
    pub archive: Vec<ArchiveEntry<P>>,
    pub model: ContrastiveModel,
    pub last_failure: Option<String>,
    fitnesses: Vec<f64>,
    features: Vec<ConceptSet>,
    best: f64,
}

const FEEDBACK_CAP: usize = 2000;

fn truncate_feedback(text: &str) -> String {
    if text.len() <= FEEDBACK_CAP {
        return text.to_string();
    }
    let mut end = FEEDBACK_CAP;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &text[..end])
}

impl<P> SearchState<P> {
    /// Builds the archive from one candidate generated without a parent.
    pub fn seed(
        config: RunConfig,
        bindings: &mut Bindings<'_, P>,
        rng: &mut dyn RngCore,
    ) -> Result<Self, SearchError> {
        config.validate()?;
        let tree = ConceptTree::new(bindings.extractor.root_label())?;
        let model = ContrastiveModel::new(config.model);
        let mut state = Self {
            config,
            tree,
            archive: Vec::new(),
            model,
            last_failure: None,
            fitnesses: Vec::new(),
            features: Vec::new(),
            best: f64::NEG_INFINITY,
        };
        let request = GenerationRequest {
            iteration: 0,
            parent: None,
            parent_score: None,
            best_score: None,
            directive: None,
            last_failure: None,
        };
        let generated = bindings.generator.generate(&request, rng);
        state.archive_child(bindings, generated, None, None, 0);
        Ok(state)
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn fitnesses(&self) -> &[f64] {
        &self.fitnesses
    }

    pub fn features(&self) -> &[ConceptSet] {
        &self.features
    }

    /// Evaluates, extracts and appends a child; returns its entry id.
    fn archive_child(
        &mut self,
        bindings: &mut Bindings<'_, P>,
        generated: Result<P, CandidateFailure>,
        parent_entry: Option<usize>,
        proposed_concept: Option<ConceptId>,
        iteration: usize,
    ) -> usize {
        let floor = bindings.evaluator.floor_score();
        let (payload, evaluation) = match generated {
            Ok(payload) => {
                let mut eval = bindings.evaluator.evaluate(&payload);
                if !eval.valid || !eval.fitness.is_finite() {
                    eval.valid = false;
                    eval.fitness = floor;
                }
                (Some(payload), eval)
            }
            Err(failure) => (None, Evaluation::invalid(floor, failure.to_string())),
        };
        let features = match &payload {
            Some(p) => bindings
                .extractor
                .extract(p, &mut self.tree)
                .ok()
                .filter(|set| !set.is_empty() && self.tree.is_closed(set))
                .unwrap_or_else(ConceptSet::root_only),
            None => ConceptSet::root_only(),
        };
        self.last_failure = if evaluation.valid {
            None
        } else {
            evaluation.feedback.as_deref().map(truncate_feedback)
        };
        let entry_id = self.archive.len();
        self.best = self.best.max(evaluation.fitness);
        self.fitnesses.push(evaluation.fitness);
        self.features.push(features.clone());
        self.archive.push(ArchiveEntry {
            entry_id,
            payload,
            fitness: evaluation.fitness,
            valid: evaluation.valid,
            features,
            parent_entry,
            proposed_concept,
            iteration,
            feedback: evaluation.feedback,
        });
        entry_id
    }

    /// Refits the model when the archive allows a partition.
    pub fn refit(&mut self) -> Result<(), SearchError> {
        if self.archive.len() >= 2 {
            self.model.fit(&self.tree, &self.features, &self.fitnesses)?;
        }
        Ok(())
    }

    pub fn step(
        &mut self,
        bindings: &mut Bindings<'_, P>,
        rng: &mut dyn RngCore,
    ) -> Result<IterationRecord, SearchError> {
        if self.archive.is_empty() {
            return Err(SearchError::EmptyArchive);
        }
        let iteration = self.archive.len();
        self.refit()?;
        let (parent, branch) = select_parent(
            &self.config.policy,
            &self.fitnesses,
            &self.features,
            &self.tree,
            &self.model,
            rng,
        )?;
        let concept = self.model.propose_concept(&self.tree, rng);
        self.model.register_attempt(&self.tree, concept)?;
        // the root alone carries no actionable direction
        let directive = (!concept.is_root()).then(|| self.tree.label(concept).to_string());

        let parent_entry = &self.archive[parent];
        let request = GenerationRequest {
            iteration,
            parent: parent_entry.payload.as_ref(),
            parent_score: Some(parent_entry.fitness),
            best_score: Some(self.best),
            directive: directive.as_deref(),
            last_failure: self.last_failure.as_deref(),
        };
        let generated = bindings.generator.generate(&request, rng);
        let child = self.archive_child(bindings, generated, Some(parent), Some(concept), iteration);
        let entry = &self.archive[child];
        Ok(IterationRecord {
            iteration,
            selected_parent: parent,
            policy_branch: branch,
            proposed_concept: concept,
            directive,
            child_entry_id: child,
            child_fitness: entry.fitness,
            child_valid: entry.valid,
            child_features: entry.features.iter().collect(),
            tree_size: self.tree.len(),
            best_so_far: self.best,
            failure: if entry.valid { None } else { entry.feedback.clone() },
        })
    }

    /// Refits on the final archive and dumps tree and utilities.
    pub fn summary(&mut self) -> Result<TraceSummary, SearchError> {
        self.refit()?;
        Ok(TraceSummary {
            tree: self.tree.clone(),
            utilities: self.model.utility_rows(&self.tree, &self.features),
            final_best: self.best,
            archive_size: self.archive.len(),
            invalid_entries: self.archive.iter().filter(|e| !e.valid).count(),
        })
    }

    fn seed_header(&self, environment: serde_json::Value) -> TraceHeader {
        let seed_entry = &self.archive[0];
        TraceHeader {
            config: self.config.clone(),
            seed: self.config.seed,
            environment,
            seed_fitness: seed_entry.fitness,
            seed_valid: seed_entry.valid,
            seed_features: seed_entry.features.iter().collect(),
        }
    }
}

pub struct RunOutcome<P> {
    pub trace: RunTrace,
    pub state: SearchState<P>,
}

/// Executes a full run. The run RNG is derived from `config.seed`.
/// `environment` is copied into the trace header verbatim.
pub fn run<P>(
    config: RunConfig,
    bindings: &mut Bindings<'_, P>,
    environment: serde_json::Value,
) -> Result<RunOutcome<P>, SearchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let iterations = config.iterations;
    let mut state = SearchState::seed(config, bindings, &mut rng)?;
    let header = state.seed_header(environment);
    let mut records = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        records.push(state.step(bindings, &mut rng)?);
    }
    let summary = state.summary()?;
    Ok(RunOutcome { trace: RunTrace { header, records, summary }, state })
}
