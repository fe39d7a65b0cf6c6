//! Synthetic teacher/student environment.
//!
//! A teacher concept tree is grown by a truncated Galton-Watson process,
//! every concept gets a latent logit utility, and algorithms are closed sets
//! of teacher concepts whose fitness is the sum of depth-centered weights
//! plus Gaussian noise. Mutation, noisy feature extraction and an MCMC
//! population reference stand in for the language model.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept_tree::{ConceptId, ConceptSet, ConceptTree};
use crate::contrastive::{accumulate_counts, partition_archive, smoothed_rate, ModelError};
use crate::search::{
    run, Bindings, CandidateFailure, Evaluation, Evaluator, Extractor, GenerationRequest, Generator,
    RunConfig, RunOutcome, SearchError,
};

pub const ROOT_LABEL: &str = "root";

/// A latent algorithm is a closed set of teacher concepts containing the root.
pub type LatentAlgorithm = ConceptSet;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("invalid teacher parameters: {0}")]
    InvalidParams(String),
    #[error("population of {0} cannot be split into non-empty good and bad subsets")]
    InsufficientPopulation(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("world document: {0}")]
    Document(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherParams {
    /// Expected offspring at the root.
    pub lambda0: f64,
    /// Exponential decay of the offspring rate with depth.
    pub alpha: f64,
    pub d_max: usize,
    /// Upper bound on the number of concepts, root included.
    pub n_max: usize,
    pub mu0: f64,
    pub sigma0: f64,
    /// Optional per-depth overrides of `mu0` / `sigma0`; depths past the end use the constants.
    pub mu_by_depth: Vec<f64>,
    pub sigma_by_depth: Vec<f64>,
    pub sigma_y: f64,
    pub p_keep: f64,
    pub nu: f64,
    pub p_local: f64,
    pub walk_len: usize,
    pub r_retain: f64,
}

impl Default for TeacherParams {
    fn default() -> Self {
        Self {
            lambda0: 5.0,
            alpha: 0.9,
            d_max: 10,
            n_max: 25,
            mu0: 0.0,
            sigma0: 1.0,
            mu_by_depth: Vec::new(),
            sigma_by_depth: Vec::new(),
            sigma_y: 0.1,
            p_keep: 0.75,
            nu: 1.5,
            p_local: 0.65,
            walk_len: 2,
            r_retain: 0.9,
        }
    }
}

impl TeacherParams {
    pub fn validate(&self) -> Result<(), SyntheticError> {
        let bad = |msg: &str| Err(SyntheticError::InvalidParams(msg.to_string()));
        if !(self.lambda0 > 0.0 && self.lambda0.is_finite()) {
            return bad("lambda0 must be positive");
        }
        if !(self.alpha >= 0.0) {
            return bad("alpha must be non-negative");
        }
        if self.n_max == 0 {
            return bad("n_max must be at least 1");
        }
        for (name, p) in [("p_keep", self.p_keep), ("p_local", self.p_local), ("r_retain", self.r_retain)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(SyntheticError::InvalidParams(format!("{name} must lie in [0, 1]")));
            }
        }
        if !(self.nu >= 0.0) || !(self.sigma_y >= 0.0) || !(self.sigma0 >= 0.0) {
            return bad("nu, sigma_y and sigma0 must be non-negative");
        }
        if self.sigma_by_depth.iter().any(|s| !(*s >= 0.0)) {
            return bad("per-depth sigma must be non-negative");
        }
        Ok(())
    }

    /// Poisson offspring rate at depth `d`.
    pub fn branching_rate(&self, depth: usize) -> f64 {
        self.lambda0 * (-self.alpha * depth as f64).exp()
    }

    pub fn mu(&self, depth: usize) -> f64 {
        self.mu_by_depth.get(depth).copied().unwrap_or(self.mu0)
    }

    pub fn sigma(&self, depth: usize) -> f64 {
        self.sigma_by_depth.get(depth).copied().unwrap_or(self.sigma0)
    }
}

fn poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> u64 {
    if !(rate > 0.0) {
        return 0;
    }
    match Poisson::new(rate) {
        Ok(dist) => dist.sample(rng) as u64,
        Err(_) => 0,
    }
}

fn concept_label(id: usize) -> String {
    format!("c{id}")
}

/// Breadth-first truncated Galton-Watson tree.
pub fn sample_teacher_tree<R: Rng + ?Sized>(params: &TeacherParams, rng: &mut R) -> ConceptTree {
    let mut tree = ConceptTree::new(ROOT_LABEL).expect("static root label");
    let mut cursor = 0;
    while cursor < tree.len() {
        let node = ConceptId(cursor);
        cursor += 1;
        let depth = tree.depth(node);
        if depth >= params.d_max {
            continue;
        }
        let offspring = poisson(params.branching_rate(depth), rng);
        for _ in 0..offspring {
            if tree.len() >= params.n_max {
                break;
            }
            let label = concept_label(tree.len());
            tree.insert_child(node, &label).expect("fresh label");
        }
    }
    tree
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Gaussian logits `mu_d + sigma_d * xi`.
pub fn sample_logits<R: Rng + ?Sized>(tree: &ConceptTree, params: &TeacherParams, rng: &mut R) -> Vec<f64> {
    tree.ids()
        .map(|v| {
            let d = tree.depth(v);
            let xi: f64 = rng.sample(rand_distr::StandardNormal);
            params.mu(d) + params.sigma(d) * xi
        })
        .collect()
}

/// Subtracts the per-depth empirical mean from each logit.
pub fn centered_weights(tree: &ConceptTree, logits: &[f64]) -> Vec<f64> {
    let levels = tree.max_depth() + 1;
    let mut sum = vec![0.0; levels];
    let mut count = vec![0usize; levels];
    for v in tree.ids() {
        sum[tree.depth(v)] += logits[v.0];
        count[tree.depth(v)] += 1;
    }
    tree.ids()
        .map(|v| {
            let d = tree.depth(v);
            logits[v.0] - sum[d] / count[d] as f64
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TeacherWorld {
    pub tree: ConceptTree,
    pub logits: Vec<f64>,
    pub rho: Vec<f64>,
    pub weights: Vec<f64>,
    pub params: TeacherParams,
    by_label: BTreeMap<String, ConceptId>,
}

#[derive(Serialize, Deserialize)]
struct WorldNode {
    id: usize,
    label: String,
    parent: usize,
    depth: usize,
    logit: f64,
    rho: f64,
    weight: f64,
}

#[derive(Serialize, Deserialize)]
struct WorldDocument {
    params: TeacherParams,
    nodes: Vec<WorldNode>,
}

impl TeacherWorld {
    pub fn sample<R: Rng + ?Sized>(params: TeacherParams, rng: &mut R) -> Result<Self, SyntheticError> {
        params.validate()?;
        let tree = sample_teacher_tree(&params, rng);
        let logits = sample_logits(&tree, &params, rng);
        Ok(Self::from_logits(tree, logits, params))
    }

    pub fn from_seed(params: TeacherParams, seed: u64) -> Result<Self, SyntheticError> {
        Self::sample(params, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn from_logits(tree: ConceptTree, logits: Vec<f64>, params: TeacherParams) -> Self {
        let weights = centered_weights(&tree, &logits);
        let rho = logits.iter().map(|&l| sigmoid(l)).collect();
        Self::assemble(tree, logits, rho, weights, params)
    }

    /// World with explicit fitness weights, bypassing centering.
    pub fn from_weights(tree: ConceptTree, weights: Vec<f64>, params: TeacherParams) -> Self {
        let logits = weights.clone();
        let rho = logits.iter().map(|&l| sigmoid(l)).collect();
        Self::assemble(tree, logits, rho, weights, params)
    }

    fn assemble(
        tree: ConceptTree,
        logits: Vec<f64>,
        rho: Vec<f64>,
        weights: Vec<f64>,
        params: TeacherParams,
    ) -> Self {
        let by_label = tree.ids().map(|v| (tree.label(v).to_lowercase(), v)).collect();
        Self { tree, logits, rho, weights, params, by_label }
    }

    pub fn concept_by_label(&self, label: &str) -> Option<ConceptId> {
        self.by_label.get(&label.trim().to_lowercase()).copied()
    }

    pub fn noiseless_fitness(&self, x: &LatentAlgorithm) -> f64 {
        x.iter().map(|v| self.weights[v.0]).sum()
    }

    pub fn to_json(&self) -> String {
        let nodes = self
            .tree
            .ids()
            .map(|v| WorldNode {
                id: v.0,
                label: self.tree.label(v).to_string(),
                parent: self.tree.parent(v).0,
                depth: self.tree.depth(v),
                logit: self.logits[v.0],
                rho: self.rho[v.0],
                weight: self.weights[v.0],
            })
            .collect();
        let doc = WorldDocument { params: self.params.clone(), nodes };
        serde_json::to_string_pretty(&doc).expect("world serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SyntheticError> {
        let doc: WorldDocument = serde_json::from_str(text)?;
        let first = doc
            .nodes
            .first()
            .ok_or_else(|| SyntheticError::InvalidParams("world has no nodes".into()))?;
        let mut tree = ConceptTree::new(&first.label)
            .map_err(|e| SyntheticError::InvalidParams(e.to_string()))?;
        for (i, node) in doc.nodes.iter().enumerate().skip(1) {
            if node.id != i || node.parent >= i {
                return Err(SyntheticError::InvalidParams(format!("node {i} is out of order")));
            }
            tree.insert_child(ConceptId(node.parent), &node.label)
                .map_err(|e| SyntheticError::InvalidParams(e.to_string()))?;
        }
        if tree.len() != doc.nodes.len() {
            return Err(SyntheticError::InvalidParams("duplicate sibling labels".into()));
        }
        let logits = doc.nodes.iter().map(|n| n.logit).collect();
        let rho = doc.nodes.iter().map(|n| n.rho).collect();
        let weights = doc.nodes.iter().map(|n| n.weight).collect();
        Ok(Self::assemble(tree, logits, rho, weights, doc.params))
    }
}

fn random_walk<R: Rng + ?Sized>(tree: &ConceptTree, start: ConceptId, steps: usize, rng: &mut R) -> ConceptId {
    let mut node = start;
    let mut neighbors = Vec::new();
    for _ in 0..steps {
        neighbors.clear();
        if !node.is_root() {
            neighbors.push(tree.parent(node));
        }
        neighbors.extend_from_slice(tree.children(node));
        if neighbors.is_empty() {
            break;
        }
        node = neighbors[rng.random_range(0..neighbors.len())];
    }
    node
}

/// Inheritance with probability `p_keep`, then `Poisson(nu)` local or global additions.
pub fn mutate<R: Rng + ?Sized>(parent: &LatentAlgorithm, world: &TeacherWorld, rng: &mut R) -> LatentAlgorithm {
    let params = &world.params;
    let tree = &world.tree;
    let kept: Vec<ConceptId> = parent
        .iter()
        .filter(|v| v.is_root() || rng.random_bool(params.p_keep))
        .collect();
    let mut child = tree
        .ancestor_closure(kept.into_iter().chain([ConceptId::ROOT]))
        .expect("parent lives in the teacher tree");
    let additions = poisson(params.nu, rng);
    for _ in 0..additions {
        let target = if rng.random_bool(params.p_local) {
            let active: Vec<ConceptId> = child.iter().collect();
            let start = active[rng.random_range(0..active.len())];
            random_walk(tree, start, params.walk_len, rng)
        } else {
            ConceptId(rng.random_range(0..tree.len()))
        };
        child.insert_closed(tree, target).expect("target in tree");
    }
    child
}

pub fn fitness<R: Rng + ?Sized>(x: &LatentAlgorithm, world: &TeacherWorld, rng: &mut R) -> f64 {
    let noise = if world.params.sigma_y > 0.0 {
        Normal::new(0.0, world.params.sigma_y).expect("finite std").sample(rng)
    } else {
        0.0
    };
    world.noiseless_fitness(x) + noise
}

/// Drops each non-root concept with probability `1 - r_retain`, then restores closure.
pub fn extract_noisy<R: Rng + ?Sized>(x: &LatentAlgorithm, world: &TeacherWorld, rng: &mut R) -> ConceptSet {
    let r = world.params.r_retain;
    let kept: Vec<ConceptId> = x.iter().filter(|v| v.is_root() || rng.random_bool(r)).collect();
    world
        .tree
        .ancestor_closure(kept.into_iter().chain([ConceptId::ROOT]))
        .expect("x lives in the teacher tree")
}

/// Best noiseless latent algorithm by tree dynamic programming.
pub fn optimal_latent(world: &TeacherWorld) -> (LatentAlgorithm, f64) {
    let tree = &world.tree;
    // children always have larger ids than their parent
    let mut gain = world.weights.clone();
    for v in tree.ids().rev() {
        let extra: f64 = tree.children(v).iter().map(|c| gain[c.0].max(0.0)).sum();
        gain[v.0] += extra;
    }
    let mut best = ConceptSet::root_only();
    let mut stack = vec![ConceptId::ROOT];
    while let Some(v) = stack.pop() {
        for &c in tree.children(v) {
            if gain[c.0] > 0.0 {
                best.insert_closed(tree, c).expect("child in tree");
                stack.push(c);
            }
        }
    }
    let value = world.noiseless_fitness(&best);
    (best, value)
}

/// Per-concept difference of smoothed conditional log-odds between the good
/// and bad parts of a population.
pub fn teacher_log_odds(
    population: &[(LatentAlgorithm, f64)],
    tree: &ConceptTree,
    rho_elite: f64,
    alpha0: f64,
    beta0: f64,
) -> Result<Vec<f64>, SyntheticError> {
    let fitnesses: Vec<f64> = population.iter().map(|(_, y)| *y).collect();
    let partition = partition_archive(&fitnesses, rho_elite)
        .map_err(|_| SyntheticError::InsufficientPopulation(population.len()))?;
    if partition.bad.is_empty() || partition.good.is_empty() {
        return Err(SyntheticError::InsufficientPopulation(population.len()));
    }
    let sets: Vec<ConceptSet> = population.iter().map(|(x, _)| x.clone()).collect();
    let good = accumulate_counts(tree, &sets, &partition.good)?;
    let bad = accumulate_counts(tree, &sets, &partition.bad)?;
    tree.ids()
        .map(|v| {
            let pg = smoothed_rate(good.a(v), good.b(v), alpha0, beta0);
            let pb = smoothed_rate(bad.a(v), bad.b(v), alpha0, beta0);
            match (pg, pb) {
                (Some(pg), Some(pb)) => Ok(logit(pg) - logit(pb)),
                _ => Err(SyntheticError::Model(ModelError::DegenerateCounts(v))),
            }
        })
        .collect()
}

/// Metropolis chain over closed concept sets.
///
/// Each proposal toggles one uniformly chosen non-root concept: switching it
/// on also activates its ancestors, switching it off removes its subtree. The
/// move is accepted with probability `min(1, exp(beta * dy))` on noiseless
/// fitness. Every post-burn-in state is returned.
pub fn mcmc_reference<R: Rng + ?Sized>(
    world: &TeacherWorld,
    n_samples: usize,
    n_burn: usize,
    beta: f64,
    rng: &mut R,
) -> Vec<(LatentAlgorithm, f64)> {
    let tree = &world.tree;
    let mut state = ConceptSet::root_only();
    let mut value = world.noiseless_fitness(&state);
    let mut out = Vec::with_capacity(n_samples);
    for step in 0..n_burn + n_samples {
        if tree.len() > 1 {
            let v = ConceptId(rng.random_range(1..tree.len()));
            let mut proposal = state.clone();
            if state.contains(v) {
                proposal.remove_subtree(tree, v);
            } else {
                proposal.insert_closed(tree, v).expect("v in tree");
            }
            let proposed = world.noiseless_fitness(&proposal);
            let log_accept = beta * (proposed - value);
            if log_accept >= 0.0 || rng.random::<f64>() < log_accept.exp() {
                state = proposal;
                value = proposed;
            }
        }
        if step >= n_burn {
            out.push((state.clone(), value));
        }
    }
    out
}

/// Tab-separated dump of a reference population: fitness then the active ids.
pub fn population_table(population: &[(LatentAlgorithm, f64)]) -> String {
    let mut out = String::from("index\tfitness\tconcepts\n");
    for (i, (x, y)) in population.iter().enumerate() {
        let ids: Vec<String> = x.iter().map(|v| v.0.to_string()).collect();
        let _ = writeln!(out, "{i}\t{y:.12}\t{}", ids.join(","));
    }
    out
}

pub struct SyntheticGenerator<'w> {
    world: &'w TeacherWorld,
}

impl Generator<LatentAlgorithm> for SyntheticGenerator<'_> {
    fn generate(
        &mut self,
        request: &GenerationRequest<'_, LatentAlgorithm>,
        rng: &mut dyn RngCore,
    ) -> Result<LatentAlgorithm, CandidateFailure> {
        let Some(parent) = request.parent else {
            return Ok(ConceptSet::root_only());
        };
        let mut child = mutate(parent, self.world, rng);
        if let Some(label) = request.directive {
            let v = self.world.concept_by_label(label).ok_or_else(|| {
                CandidateFailure::new("UnknownConcept", format!("directive {label:?} is not a teacher concept"))
            })?;
            child.insert_closed(&self.world.tree, v).expect("teacher concept");
        }
        Ok(child)
    }
}

pub struct SyntheticEvaluator<'w> {
    world: &'w TeacherWorld,
    rng: ChaCha8Rng,
}

impl Evaluator<LatentAlgorithm> for SyntheticEvaluator<'_> {
    fn evaluate(&mut self, payload: &LatentAlgorithm) -> Evaluation {
        Evaluation::valid(fitness(payload, self.world, &mut self.rng))
    }

    fn floor_score(&self) -> f64 {
        // lowest achievable noiseless score, minus a margin for noise
        let negative: f64 = self.world.weights.iter().filter(|w| **w < 0.0).sum();
        negative - 10.0 * self.world.params.sigma_y - 1.0
    }
}

/// Maps noisy teacher features into the student's own, growing tree by label path.
pub struct SyntheticExtractor<'w> {
    world: &'w TeacherWorld,
    rng: ChaCha8Rng,
}

impl Extractor<LatentAlgorithm> for SyntheticExtractor<'_> {
    fn root_label(&self) -> &str {
        self.world.tree.root_label()
    }

    fn extract(
        &mut self,
        payload: &LatentAlgorithm,
        tree: &mut ConceptTree,
    ) -> Result<ConceptSet, CandidateFailure> {
        let observed = extract_noisy(payload, self.world, &mut self.rng);
        let teacher = &self.world.tree;
        let mut mapped: BTreeMap<ConceptId, ConceptId> = BTreeMap::new();
        mapped.insert(ConceptId::ROOT, ConceptId::ROOT);
        // ascending ids visit parents before children
        for v in observed.iter().filter(|v| !v.is_root()) {
            let parent = mapped[&teacher.parent(v)];
            let id = tree
                .insert_child(parent, teacher.label(v))
                .map_err(|e| CandidateFailure::new("TreeError", e.to_string()))?;
            mapped.insert(v, id);
        }
        Ok(mapped.into_values().collect())
    }
}

/// Independent RNG streams for the parts of one synthetic run.
fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

pub fn synthetic_bindings(
    world: &TeacherWorld,
    seed: u64,
) -> (SyntheticGenerator<'_>, SyntheticEvaluator<'_>, SyntheticExtractor<'_>) {
    (
        SyntheticGenerator { world },
        SyntheticEvaluator { world, rng: stream(seed, 1) },
        SyntheticExtractor { world, rng: stream(seed, 2) },
    )
}

/// Runs a full search in `world`; noise streams derive from `config.seed`.
pub fn run_synthetic(
    world: &TeacherWorld,
    config: RunConfig,
    environment: serde_json::Value,
) -> Result<RunOutcome<LatentAlgorithm>, SearchError> {
    let (mut generator, mut evaluator, mut extractor) = synthetic_bindings(world, config.seed);
    let mut bindings = Bindings {
        generator: &mut generator,
        evaluator: &mut evaluator,
        extractor: &mut extractor,
    };
    run(config, &mut bindings, environment)
}
