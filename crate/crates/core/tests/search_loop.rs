mod common;

use ccts_core::search::{best_curve, select_parent};
use ccts_core::synthetic::{run_synthetic, LatentAlgorithm, ROOT_LABEL};
use ccts_core::{
    run, Bindings, Branch, CandidateFailure, ConceptSet, ConceptTree, ContrastiveModel, Evaluation,
    Evaluator, Extractor, GenerationRequest, Generator, ModelParams, PolicyKind, RunConfig,
    SearchState, SelectionPolicy, TeacherParams, TeacherWorld,
};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn world() -> TeacherWorld {
    TeacherWorld::from_seed(TeacherParams::default(), 7).unwrap()
}

#[test]
fn uniform_when_never_exploiting() {
    let tree = ConceptTree::new("root").unwrap();
    let model = ContrastiveModel::new(ModelParams::default());
    let fitness = [0.0, 5.0, 1.0, 2.0];
    let feats = vec![ConceptSet::root_only(); 4];
    let draws = 100_000;
    for kind in PolicyKind::ALL {
        let policy = SelectionPolicy::new(kind).with_p_exploit(0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(kind as u64);
        let mut hits = [0usize; 4];
        for _ in 0..draws {
            let (i, branch) = select_parent(&policy, &fitness, &feats, &tree, &model, &mut rng).unwrap();
            assert_eq!(branch, Branch::Explore);
            hits[i] += 1;
        }
        let se = common::binomial_se(0.25, draws);
        for h in hits {
            assert!((h as f64 / draws as f64 - 0.25).abs() <= 3.0 * se, "{kind:?} {hits:?}");
        }
    }
}

#[test]
fn explore_branch_frequency() {
    let tree = ConceptTree::new("root").unwrap();
    let model = ContrastiveModel::new(ModelParams::default());
    let policy = SelectionPolicy::new(PolicyKind::Greedy);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let draws = 100_000;
    let explore = (0..draws)
        .filter(|_| {
            let (_, b) =
                select_parent(&policy, &[1.0, 2.0], &[ConceptSet::root_only(), ConceptSet::root_only()], &tree, &model, &mut rng)
                    .unwrap();
            b == Branch::Explore
        })
        .count();
    let freq = explore as f64 / draws as f64;
    assert!((freq - 0.15).abs() <= 3.0 * common::binomial_se(0.15, draws), "{freq}");
}

#[test]
fn ccts_with_flat_utilities_is_uniform() {
    // identical feature sets make every likelihood ratio equal
    let tree = ConceptTree::new("root").unwrap();
    let feats = vec![ConceptSet::root_only(); 5];
    let fitness = [0.0, 1.0, 2.0, 3.0, 4.0];
    let mut model = ContrastiveModel::new(ModelParams { lambda_mix: 0.0, ..Default::default() });
    model.fit(&tree, &feats, &fitness).unwrap();
    let policy = SelectionPolicy::new(PolicyKind::Ccts).with_p_exploit(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let draws = 100_000;
    let mut hits = [0usize; 5];
    for _ in 0..draws {
        hits[select_parent(&policy, &fitness, &feats, &tree, &model, &mut rng).unwrap().0] += 1;
    }
    let se = common::binomial_se(0.2, draws);
    for h in hits {
        assert!((h as f64 / draws as f64 - 0.2).abs() <= 3.0 * se, "{hits:?}");
    }
}

#[test]
fn one_step_grows_archive_by_one() {
    let w = world();
    let (mut g, mut e, mut x) = ccts_core::synthetic::synthetic_bindings(&w, 3);
    let mut bindings = Bindings { generator: &mut g, evaluator: &mut e, extractor: &mut x };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut state = SearchState::seed(RunConfig::new(PolicyKind::Ccts, 3), &mut bindings, &mut rng).unwrap();
    assert_eq!(state.archive.len(), 1);
    for i in 1..=10 {
        let record = state.step(&mut bindings, &mut rng).unwrap();
        assert_eq!(state.archive.len(), 1 + i);
        assert_eq!(record.child_entry_id, i);
        assert!(state.archive[i].parent_entry.unwrap() < i);
    }
}

#[test]
fn synthetic_runs_are_deterministic_and_valid() {
    let w = world();
    for kind in PolicyKind::ALL {
        let config = RunConfig::new(kind, 42);
        let a = run_synthetic(&w, config.clone(), json!({"world": 7})).unwrap().trace;
        let b = run_synthetic(&w, config.clone(), json!({"world": 7})).unwrap().trace;
        assert_eq!(a.to_jsonl(), b.to_jsonl());
        assert_eq!(a.records.len(), 25);
        a.validate().unwrap();
        let curve = best_curve(&a);
        assert!(curve.windows(2).all(|p| p[0] <= p[1]));

        let other = run_synthetic(&w, RunConfig { seed: 43, ..config }, json!({})).unwrap().trace;
        assert_ne!(
            a.records.iter().map(|r| r.child_fitness).collect::<Vec<_>>(),
            other.records.iter().map(|r| r.child_fitness).collect::<Vec<_>>()
        );
    }
}

#[test]
fn single_iteration_run() {
    let w = world();
    let config = RunConfig { iterations: 1, ..RunConfig::new(PolicyKind::Greedy, 5) };
    let trace = run_synthetic(&w, config, json!({})).unwrap().trace;
    assert_eq!(trace.records.len(), 1);
    trace.validate().unwrap();
}

#[test]
fn trace_jsonl_round_trip() {
    let w = world();
    let trace = run_synthetic(&w, RunConfig::new(PolicyKind::Ccts, 9), json!({"mode": "synthetic"}))
        .unwrap()
        .trace;
    let text = trace.to_jsonl();
    assert_eq!(text.lines().count(), 27);
    assert!(text.lines().next().unwrap().contains("\"type\":\"header\""));
    let back = ccts_core::RunTrace::from_jsonl(&text).unwrap();
    assert_eq!(back, trace);
}

struct FailingGenerator;

impl Generator<LatentAlgorithm> for FailingGenerator {
    fn generate(
        &mut self,
        _: &GenerationRequest<'_, LatentAlgorithm>,
        _: &mut dyn RngCore,
    ) -> Result<LatentAlgorithm, CandidateFailure> {
        Err(CandidateFailure::new("NoCodeBlock", "nothing to run"))
    }
}

struct ConstEvaluator;

impl Evaluator<LatentAlgorithm> for ConstEvaluator {
    fn evaluate(&mut self, _: &LatentAlgorithm) -> Evaluation {
        Evaluation::valid(1.0)
    }

    fn floor_score(&self) -> f64 {
        -3.0
    }
}

struct RootExtractor;

impl Extractor<LatentAlgorithm> for RootExtractor {
    fn root_label(&self) -> &str {
        ROOT_LABEL
    }

    fn extract(&mut self, _: &LatentAlgorithm, _: &mut ConceptTree) -> Result<ConceptSet, CandidateFailure> {
        Ok(ConceptSet::root_only())
    }
}

#[test]
fn failing_generator_archives_invalid_entries() {
    let mut bindings = Bindings {
        generator: &mut FailingGenerator,
        evaluator: &mut ConstEvaluator,
        extractor: &mut RootExtractor,
    };
    let outcome = run(RunConfig::new(PolicyKind::Ccts, 1), &mut bindings, json!({})).unwrap();
    let trace = outcome.trace;
    assert!(!trace.header.seed_valid);
    assert_eq!(trace.header.seed_fitness, -3.0);
    assert_eq!(trace.records.len(), 25);
    assert!(trace.records.iter().all(|r| !r.child_valid && r.child_fitness == -3.0));
    assert!(best_curve(&trace).iter().all(|&b| b == -3.0));
    assert!(trace.records[0].failure.as_deref().unwrap().contains("NoCodeBlock"));
    assert_eq!(outcome.state.archive.len(), 26);
    assert!(outcome.state.archive.iter().all(|e| e.payload.is_none() && !e.valid));
    assert_eq!(trace.summary.invalid_entries, 26);
    trace.validate().unwrap();
}
