use ccts_cli::analysis::{aggregate_curves, concept_growth, observed_deltas, quadrant_analysis};
use ccts_cli::batch::{load_batch, run_batch, ExperimentSpec, Mode, WorldMode};
use ccts_cli::config::HyperParams;
use ccts_core::PolicyKind;

fn small_spec(runs: usize) -> ExperimentSpec {
    let mut hyper = HyperParams::default();
    hyper.iterations = 10;
    ExperimentSpec::synthetic(hyper, vec![PolicyKind::Ccts], runs, 100)
}

#[test]
fn writes_one_file_per_run_and_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(2);
    spec.output_dir = Some(dir.path().to_path_buf());
    let result = run_batch(&spec).unwrap();
    assert_eq!(result.manifest.cells.len(), 1);
    let runs = &result.manifest.cells[0].runs;
    assert_eq!(runs.iter().map(|r| r.seed).collect::<Vec<_>>(), vec![100, 101]);
    for r in runs {
        assert!(dir.path().join(r.file.as_ref().unwrap()).is_file());
        assert!(r.error.is_none());
    }
    assert!(dir.path().join("manifest.json").is_file());

    let loaded = load_batch(dir.path()).unwrap();
    assert_eq!(loaded.manifest, result.manifest);
    assert_eq!(loaded.cells[0].traces, result.cells[0].traces);
}

#[test]
fn reruns_are_identical() {
    let a = run_batch(&small_spec(4)).unwrap();
    let b = run_batch(&small_spec(4)).unwrap();
    let text = |r: &ccts_cli::batch::BatchResult| {
        r.cells[0].traces.iter().map(|t| t.to_jsonl()).collect::<Vec<_>>()
    };
    assert_eq!(text(&a), text(&b));
}

#[test]
fn grid_product_of_cells() {
    let mut spec = small_spec(1);
    spec.policies = vec![PolicyKind::Ccts, PolicyKind::Greedy];
    spec.p_exploit = vec![0.1, 0.4, 0.7, 0.9];
    let result = run_batch(&spec).unwrap();
    assert_eq!(result.manifest.cells.len(), 8);
    let mut names: Vec<&str> = result.manifest.cells.iter().map(|c| c.name.as_str()).collect();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), 8);

    spec.lambda0 = vec![1.0, 5.0];
    assert_eq!(spec.cells().len(), 16);
}

#[test]
fn invalid_specs_are_rejected() {
    let mut spec = small_spec(0);
    assert!(run_batch(&spec).is_err());
    spec.runs = 1;
    spec.p_exploit = vec![1.5];
    assert!(run_batch(&spec).is_err());
    spec.p_exploit = vec![];
    assert!(run_batch(&spec).is_err());
}

#[test]
fn analyses_are_reproducible_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = small_spec(6);
    spec.mode = Mode::Synthetic { world: WorldMode::Fixed(3) };
    spec.output_dir = Some(dir.path().to_path_buf());
    let fresh = run_batch(&spec).unwrap();
    let loaded = load_batch(dir.path()).unwrap();
    let (a, b) = (&fresh.cells[0].traces, &loaded.cells[0].traces);
    assert_eq!(aggregate_curves(a).unwrap(), aggregate_curves(b).unwrap());
    assert_eq!(quadrant_analysis(a).unwrap(), quadrant_analysis(b).unwrap());
    assert_eq!(concept_growth(a).unwrap(), concept_growth(b).unwrap());
}

#[test]
fn curve_mean_ignores_run_order() {
    let result = run_batch(&small_spec(8)).unwrap();
    let traces = result.cells[0].traces.clone();
    let mut reversed = traces.clone();
    reversed.reverse();
    let a = aggregate_curves(&traces).unwrap();
    let b = aggregate_curves(&reversed).unwrap();
    for (x, y) in a.mean.iter().zip(&b.mean) {
        assert!((x - y).abs() < 1e-12);
    }
    assert!(a.mean.windows(2).all(|w| w[0] <= w[1]));
    assert!(a.half_width.iter().all(|&h| h >= 0.0));
}

#[test]
fn quadrant_counts_cover_observed_pairs() {
    let mut spec = small_spec(10);
    spec.mode = Mode::Synthetic { world: WorldMode::Fixed(11) };
    let result = run_batch(&spec).unwrap();
    let traces = &result.cells[0].traces;
    let q = quadrant_analysis(traces).unwrap();
    let pairs: usize = traces.iter().map(|t| observed_deltas(t).len()).sum();
    let counted: usize = q.cells.iter().flatten().map(|c| c.n).sum();
    assert_eq!(counted, pairs);
    assert_eq!(q.good_runs + q.bad_runs, 10);
}
