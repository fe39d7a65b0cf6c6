use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use ccts_cli::analysis::{
    aggregate_curves, concept_growth, exploit_sweep, growth_tsv, quadrant_analysis, teacher_reference,
    teacher_student_corr,
};
use ccts_cli::batch::{execute_run, load_batch, read_trace, run_batch, write_trace, Cell, ExperimentSpec, Mode, WorldMode};
use ccts_cli::config::HyperParams;
use ccts_cli::CliError;
use ccts_core::{PolicyKind, RunTrace, TaskConfig, TaskId, TeacherParams, TeacherWorld};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ccts", version, about = "Contrastive concept-tree search experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Single run; writes a JSONL trace.
    Run(RunArgs),
    /// Grid of runs with a manifest.
    Batch(BatchArgs),
    /// Analyses over a batch directory.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Score a solution document.
    Eval {
        #[arg(long)]
        task: TaskId,
        #[arg(long)]
        count: Option<usize>,
        file: PathBuf,
    },
    /// DOT dump of a trace's concept tree, or of a teacher world.
    Tree {
        /// Trace file; omit to print the teacher tree of --world-seed.
        trace: Option<PathBuf>,
        #[arg(long)]
        world_seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Synthetic,
    Llm,
}

#[derive(Args)]
struct Common {
    /// Hyperparameter file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "synthetic")]
    mode: ModeArg,
    /// Task for llm mode.
    #[arg(long, default_value = "circle_packing")]
    task: TaskId,
    /// Row count for circle and square tasks.
    #[arg(long)]
    count: Option<usize>,
    /// Share one synthetic world across runs instead of one per run.
    #[arg(long)]
    world_seed: Option<u64>,
    #[arg(long = "T")]
    iterations: Option<usize>,
    #[arg(long)]
    llm_endpoint: Option<String>,
    #[arg(long)]
    llm_model: Option<String>,
    #[arg(long)]
    llm_temp: Option<f64>,
    #[arg(long)]
    exec_timeout: Option<f64>,
}

impl Common {
    fn hyper(&self) -> Result<HyperParams, CliError> {
        let mut h = match &self.config {
            Some(path) => HyperParams::load(path)?,
            None => HyperParams::default(),
        };
        if let Some(t) = self.iterations {
            h.iterations = t;
        }
        if let Some(u) = &self.llm_endpoint {
            h.llm.client.endpoint_url = u.clone();
        }
        if let Some(m) = &self.llm_model {
            h.llm.client.model_name = m.clone();
        }
        if let Some(t) = self.llm_temp {
            h.llm.client.temperature = t;
        }
        if let Some(t) = self.exec_timeout {
            h.llm.limits.wall_time_s = t;
        }
        Ok(h)
    }

    fn mode(&self) -> Mode {
        match self.mode {
            ModeArg::Synthetic => Mode::Synthetic {
                world: self.world_seed.map(WorldMode::Fixed).unwrap_or(WorldMode::PerRun),
            },
            ModeArg::Llm => {
                let mut task = TaskConfig::new(self.task);
                if let Some(n) = self.count {
                    task = task.with_count(n);
                }
                Mode::Llm { task }
            }
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "ccts")]
    policy: PolicyKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    p_exploit: Option<f64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BatchArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_delimiter = ',', default_value = "uniform,greedy,k_elite,ccts")]
    policies: Vec<PolicyKind>,
    #[arg(long, value_delimiter = ',')]
    p_exploit: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    lambda0: Vec<f64>,
    #[arg(long, default_value_t = 10)]
    runs: usize,
    #[arg(long, default_value_t = 0)]
    base_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum AnalyzeCommand {
    /// Mean best-so-far curve with 95% CI per cell.
    Curves { dir: PathBuf },
    /// Log-utility averages over run and concept halves per cell.
    Quadrant { dir: PathBuf },
    /// Concept discovery statistics per cell.
    Growth { dir: PathBuf },
    /// Teacher-student utility correlation per synthetic run.
    Corr {
        dir: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 1_000)]
        burn: usize,
    },
    /// Mean final score per (lambda0, p_exploit) cell.
    Sweep { dir: PathBuf },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse().command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run(args) => cmd_run(args),
        Command::Batch(args) => cmd_batch(args),
        Command::Analyze(a) => cmd_analyze(a),
        Command::Eval { task, count, file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| CliError::Io(file.display().to_string(), e))?;
            let mut config = TaskConfig::new(task);
            if let Some(n) = count {
                config = config.with_count(n);
            }
            let score = config.score_document(&text);
            match score.value {
                Some(v) => println!("valid\t{v}"),
                None => println!("invalid\t{}", task.floor_score()),
            }
            for d in score.diagnostics {
                eprintln!("{d}");
            }
            Ok(())
        }
        Command::Tree { trace, world_seed, config } => {
            if let Some(path) = trace {
                print!("{}", read_trace(&path)?.summary.tree.to_dot());
                return Ok(());
            }
            let seed = world_seed.ok_or_else(|| CliError::Config("give a trace file or --world-seed".into()))?;
            let params = match config {
                Some(p) => HyperParams::load(&p)?.teacher(),
                None => TeacherParams::default(),
            };
            let world = TeacherWorld::from_seed(params, seed).map_err(|e| CliError::Config(e.to_string()))?;
            print!("{}", world.tree.to_dot());
            Ok(())
        }
    }
}

fn cmd_run(args: RunArgs) -> Result<(), CliError> {
    let mut hyper = args.common.hyper()?;
    if let Some(p) = args.p_exploit {
        hyper.p_exploit = p;
    }
    let spec = ExperimentSpec {
        mode: args.common.mode(),
        p_exploit: vec![hyper.p_exploit],
        hyper,
        policies: vec![args.policy],
        lambda0: Vec::new(),
        runs: 1,
        base_seed: args.seed,
        output_dir: None,
    };
    spec.validate()?;
    let cell = Cell { policy: args.policy, p_exploit: spec.hyper.p_exploit, lambda0: None };
    let trace = execute_run(&spec, &cell, args.seed).map_err(CliError::Analysis)?;
    match args.out {
        Some(path) => write_trace(&path, &trace)?,
        None => print!("{}", trace.to_jsonl()),
    }
    eprintln!("final best {}", trace.final_best());
    Ok(())
}

fn cmd_batch(args: BatchArgs) -> Result<(), CliError> {
    let hyper = args.common.hyper()?;
    let spec = ExperimentSpec {
        mode: args.common.mode(),
        p_exploit: if args.p_exploit.is_empty() { vec![hyper.p_exploit] } else { args.p_exploit },
        hyper,
        policies: args.policies,
        lambda0: args.lambda0,
        runs: args.runs,
        base_seed: args.base_seed,
        output_dir: Some(args.out.clone()),
    };
    let result = run_batch(&spec)?;
    let failures: usize =
        result.manifest.cells.iter().flat_map(|c| &c.runs).filter(|r| r.error.is_some()).count();
    eprintln!(
        "{} cells x {} runs written to {} ({failures} failed)",
        result.cells.len(),
        spec.runs,
        args.out.display()
    );
    Ok(())
}

fn cmd_analyze(command: AnalyzeCommand) -> Result<(), CliError> {
    match command {
        AnalyzeCommand::Curves { dir } => {
            let batch = load_batch(&dir)?;
            println!("cell\titeration\tmean\thalf_width\truns");
            for cell in &batch.cells {
                let agg = aggregate_curves(&cell.traces)?;
                if let Some(w) = &agg.warning {
                    eprintln!("{}: {w}", cell.cell.name());
                }
                for (i, (m, h)) in agg.mean.iter().zip(&agg.half_width).enumerate() {
                    println!("{}\t{}\t{m}\t{h}\t{}", cell.cell.name(), i + 1, agg.runs);
                }
            }
        }
        AnalyzeCommand::Quadrant { dir } => {
            for cell in load_batch(&dir)?.cells {
                println!("# {}", cell.cell.name());
                print!("{}", quadrant_analysis(&cell.traces)?.to_tsv());
            }
        }
        AnalyzeCommand::Growth { dir } => {
            for cell in load_batch(&dir)?.cells {
                println!("# {}", cell.cell.name());
                print!("{}", growth_tsv(&concept_growth(&cell.traces)?));
            }
        }
        AnalyzeCommand::Corr { dir, samples, burn } => {
            let batch = load_batch(&dir)?;
            println!("cell\trun\tr\tconcepts");
            for cell in &batch.cells {
                let mut references: BTreeMap<u64, BTreeMap<String, f64>> = BTreeMap::new();
                for (i, trace) in cell.traces.iter().enumerate() {
                    let (world_seed, world) = world_of(trace)?;
                    if !references.contains_key(&world_seed) {
                        let reference =
                            teacher_reference(&world, &trace.header.config.model, samples, burn, world_seed)?;
                        references.insert(world_seed, reference);
                    }
                    match teacher_student_corr(&trace.summary.utilities, &references[&world_seed]) {
                        Ok(c) => println!("{}\t{i}\t{}\t{}", cell.cell.name(), c.r, c.concepts),
                        Err(e) => println!("{}\t{i}\tNA\t0\t# {e}", cell.cell.name()),
                    }
                }
            }
        }
        AnalyzeCommand::Sweep { dir } => {
            let batch = load_batch(&dir)?;
            for policy in PolicyKind::ALL {
                let cells: Vec<(f64, f64, Vec<f64>)> = batch
                    .cells
                    .iter()
                    .filter(|c| c.cell.policy == policy)
                    .map(|c| {
                        let lambda0 = c.cell.lambda0.unwrap_or_else(|| lambda0_of(c.traces.first()));
                        (lambda0, c.cell.p_exploit, c.traces.iter().map(RunTrace::final_best).collect())
                    })
                    .collect();
                if cells.is_empty() {
                    continue;
                }
                let table = exploit_sweep(&cells)?;
                println!("# {}", policy.name());
                print!("{}", table.to_tsv());
                for (l, p) in &table.argmax {
                    println!("# argmax lambda0={l} p_exploit={p}");
                }
            }
        }
    }
    Ok(())
}

fn lambda0_of(trace: Option<&RunTrace>) -> f64 {
    trace
        .and_then(|t| t.header.environment["teacher"]["lambda0"].as_f64())
        .unwrap_or(TeacherParams::default().lambda0)
}

/// Rebuilds the teacher world recorded in a synthetic trace header.
fn world_of(trace: &RunTrace) -> Result<(u64, TeacherWorld), CliError> {
    let env = &trace.header.environment;
    let seed = env["world_seed"].as_u64().ok_or_else(|| CliError::Analysis("trace has no world seed".into()))?;
    let params: TeacherParams =
        serde_json::from_value(env["teacher"].clone()).map_err(|e| CliError::Analysis(e.to_string()))?;
    let world = TeacherWorld::from_seed(params, seed).map_err(|e| CliError::Analysis(e.to_string()))?;
    Ok((seed, world))
}
