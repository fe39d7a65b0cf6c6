use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use ccts_core::{run, run_synthetic, Bindings, PolicyKind, RunTrace, TaskConfig, TeacherParams, TeacherWorld};
use ccts_llm::{ChatClient, LlmEvaluator, LlmExtractor, LlmGenerator};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::HyperParams;
use crate::CliError;

/// Where synthetic worlds come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorldMode {
    /// A fresh world for every run, derived from the run seed.
    PerRun,
    /// One world shared by every run.
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Synthetic { world: WorldMode },
    Llm { task: TaskConfig },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub mode: Mode,
    pub hyper: HyperParams,
    pub policies: Vec<PolicyKind>,
    pub p_exploit: Vec<f64>,
    /// Synthetic branching ratios; empty means the value in `hyper`.
    pub lambda0: Vec<f64>,
    pub runs: usize,
    pub base_seed: u64,
    pub output_dir: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn synthetic(hyper: HyperParams, policies: Vec<PolicyKind>, runs: usize, base_seed: u64) -> Self {
        let p_exploit = vec![hyper.p_exploit];
        Self {
            mode: Mode::Synthetic { world: WorldMode::PerRun },
            hyper,
            policies,
            p_exploit,
            lambda0: Vec::new(),
            runs,
            base_seed,
            output_dir: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.runs == 0 {
            return Err(CliError::Config("runs must be at least 1".into()));
        }
        if self.policies.is_empty() || self.p_exploit.is_empty() {
            return Err(CliError::Config("policy and p_exploit grids must be non-empty".into()));
        }
        if matches!(self.mode, Mode::Llm { .. }) && !self.lambda0.is_empty() {
            return Err(CliError::Config("lambda0 grid only applies to synthetic mode".into()));
        }
        self.hyper.validate()?;
        for &p in &self.p_exploit {
            let mut h = self.hyper.clone();
            h.p_exploit = p;
            h.validate()?;
        }
        Ok(())
    }

    pub fn cells(&self) -> Vec<Cell> {
        let lambdas: Vec<Option<f64>> = match self.mode {
            Mode::Synthetic { .. } if !self.lambda0.is_empty() => self.lambda0.iter().copied().map(Some).collect(),
            _ => vec![None],
        };
        let mut out = Vec::new();
        for &lambda0 in &lambdas {
            for &policy in &self.policies {
                for &p_exploit in &self.p_exploit {
                    out.push(Cell { policy, p_exploit, lambda0 });
                }
            }
        }
        out
    }
}

/// One point of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub policy: PolicyKind,
    pub p_exploit: f64,
    pub lambda0: Option<f64>,
}

impl Cell {
    pub fn name(&self) -> String {
        match self.lambda0 {
            Some(l) => format!("{}_p{}_l{}", self.policy.name(), self.p_exploit, l),
            None => format!("{}_p{}", self.policy.name(), self.p_exploit),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub run: usize,
    pub seed: u64,
    pub file: Option<String>,
    pub final_best: Option<f64>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub name: String,
    pub cell: Cell,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub mode: Mode,
    pub runs_per_cell: usize,
    pub base_seed: u64,
    pub iterations: usize,
    pub cells: Vec<CellEntry>,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub cell: Cell,
    /// Successful traces in run order.
    pub traces: Vec<RunTrace>,
}

#[derive(Debug, Clone)]
pub struct BatchResult {
    pub manifest: Manifest,
    pub cells: Vec<CellResult>,
}

impl BatchResult {
    pub fn cell(&self, policy: PolicyKind) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.cell.policy == policy)
    }
}

/// Seed of the world used by a per-run synthetic run.
pub fn per_run_world_seed(run_seed: u64) -> u64 {
    run_seed ^ 0x9E37_79B9_7F4A_7C15
}

fn teacher_for(spec: &ExperimentSpec, cell: &Cell) -> TeacherParams {
    let mut params = spec.hyper.teacher();
    if let Some(l) = cell.lambda0 {
        params.lambda0 = l;
    }
    params
}

/// Executes one run of one cell.
pub fn execute_run(spec: &ExperimentSpec, cell: &Cell, seed: u64) -> Result<RunTrace, String> {
    let mut hyper = spec.hyper.clone();
    hyper.p_exploit = cell.p_exploit;
    let config = hyper.run_config(cell.policy, seed);
    match &spec.mode {
        Mode::Synthetic { world } => {
            let params = teacher_for(spec, cell);
            let world_seed = match world {
                WorldMode::PerRun => per_run_world_seed(seed),
                WorldMode::Fixed(s) => *s,
            };
            let teacher = TeacherWorld::from_seed(params.clone(), world_seed).map_err(|e| e.to_string())?;
            let environment = json!({"mode": "synthetic", "world_seed": world_seed, "teacher": params});
            run_synthetic(&teacher, config, environment).map(|o| o.trace).map_err(|e| e.to_string())
        }
        Mode::Llm { task } => {
            let client = ChatClient::new(hyper.llm.client.clone()).map_err(|e| e.to_string())?;
            let mut generator = LlmGenerator::new(client.clone(), task);
            let mut evaluator = LlmEvaluator { task: *task, limits: hyper.llm.limits.clone() };
            let mut extractor = LlmExtractor::new(client);
            let mut bindings =
                Bindings { generator: &mut generator, evaluator: &mut evaluator, extractor: &mut extractor };
            let environment = json!({
                "mode": "llm",
                "task": task,
                "model": hyper.llm.client.model_name,
                "temperature": hyper.llm.client.temperature,
            });
            run(config, &mut bindings, environment).map(|o| o.trace).map_err(|e| e.to_string())
        }
    }
}

/// Runs every cell `runs` times in parallel; seeds are `base_seed + run`.
pub fn run_batch(spec: &ExperimentSpec) -> Result<BatchResult, CliError> {
    spec.validate()?;
    let cells = spec.cells();
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..spec.runs).map(move |r| (c, r))).collect();
    let outcomes: Vec<Result<RunTrace, String>> = jobs
        .par_iter()
        .map(|&(c, r)| execute_run(spec, &cells[c], spec.base_seed + r as u64))
        .collect();

    if let Some(dir) = &spec.output_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))?;
    }
    let mut manifest_cells = Vec::new();
    let mut results = Vec::new();
    let mut outcomes = outcomes.into_iter();
    for cell in &cells {
        let name = cell.name();
        let mut entries = Vec::new();
        let mut traces = Vec::new();
        for r in 0..spec.runs {
            let seed = spec.base_seed + r as u64;
            let outcome = outcomes.next().expect("one outcome per job");
            let mut entry = RunEntry { run: r, seed, file: None, final_best: None, error: None };
            match outcome {
                Ok(trace) => {
                    entry.final_best = Some(trace.final_best());
                    if let Some(dir) = &spec.output_dir {
                        let rel = format!("{name}/run_{r:04}.jsonl");
                        write_trace(&dir.join(&rel), &trace)?;
                        entry.file = Some(rel);
                    }
                    traces.push(trace);
                }
                Err(e) => entry.error = Some(e),
            }
            entries.push(entry);
        }
        manifest_cells.push(CellEntry { name, cell: *cell, runs: entries });
        results.push(CellResult { cell: *cell, traces });
    }
    let manifest = Manifest {
        mode: spec.mode.clone(),
        runs_per_cell: spec.runs,
        base_seed: spec.base_seed,
        iterations: spec.hyper.iterations,
        cells: manifest_cells,
    };
    if let Some(dir) = &spec.output_dir {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest).expect("serializable manifest");
        fs::write(&path, text).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    }
    Ok(BatchResult { manifest, cells: results })
}

pub fn write_trace(path: &Path, trace: &RunTrace) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::Io(parent.display().to_string(), e))?;
    }
    let file = fs::File::create(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    trace.write_jsonl(BufWriter::new(file)).map_err(|e| CliError::Trace(path.display().to_string(), e.to_string()))
}

pub fn read_trace(path: &Path) -> Result<RunTrace, CliError> {
    let file = fs::File::open(path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    RunTrace::read_jsonl(BufReader::new(file)).map_err(|e| CliError::Trace(path.display().to_string(), e.to_string()))
}

/// Reads a batch directory back: manifest plus the traces of every successful run.
pub fn load_batch(dir: &Path) -> Result<BatchResult, CliError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(|e| CliError::Io(path.display().to_string(), e))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Trace(path.display().to_string(), e.to_string()))?;
    let mut cells = Vec::new();
    for entry in &manifest.cells {
        let traces = entry
            .runs
            .iter()
            .filter_map(|r| r.file.as_ref())
            .map(|f| read_trace(&dir.join(f)))
            .collect::<Result<Vec<_>, _>>()?;
        cells.push(CellResult { cell: entry.cell, traces });
    }
    Ok(BatchResult { manifest, cells })
}
