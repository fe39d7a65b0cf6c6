use std::collections::{BTreeMap, BTreeSet};

use ccts_core::search::best_curve;
use ccts_core::synthetic::{mcmc_reference, teacher_log_odds};
use ccts_core::{ConceptId, ModelParams, RunTrace, TeacherWorld, UtilityRow};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

const Z95: f64 = 1.96;

/// Mean and normal-approximation 95% half-width; `None` half-width when there is a single value.
pub fn mean_ci(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(Z95 * var.sqrt() / n.sqrt()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
    pub runs: usize,
    /// Set when the interval could not be estimated.
    pub warning: Option<String>,
}

impl AggregateCurve {
    pub fn final_mean(&self) -> f64 {
        *self.mean.last().expect("non-empty curve")
    }

    pub fn final_half_width(&self) -> f64 {
        *self.half_width.last().expect("non-empty curve")
    }

    /// Final-iteration interval `(lo, hi)`.
    pub fn final_interval(&self) -> (f64, f64) {
        (self.final_mean() - self.final_half_width(), self.final_mean() + self.final_half_width())
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("iteration\tmean\thalf_width\n");
        for (i, (m, h)) in self.mean.iter().zip(&self.half_width).enumerate() {
            out.push_str(&format!("{}\t{m}\t{h}\n", i + 1));
        }
        out
    }
}

pub fn aggregate_curves(traces: &[RunTrace]) -> Result<AggregateCurve, CliError> {
    let curves: Vec<Vec<f64>> = traces.iter().map(best_curve).collect();
    aggregate_series(&curves)
}

/// Per-index mean and CI over equally long series.
pub fn aggregate_series(curves: &[Vec<f64>]) -> Result<AggregateCurve, CliError> {
    let first = curves.first().ok_or(CliError::Analysis("no runs to aggregate".into()))?;
    let len = first.len();
    if len == 0 {
        return Err(CliError::Analysis("empty curve".into()));
    }
    if let Some(bad) = curves.iter().find(|c| c.len() != len) {
        return Err(CliError::Analysis(format!("length mismatch: {} vs {len}", bad.len())));
    }
    let mut mean = Vec::with_capacity(len);
    let mut half_width = Vec::with_capacity(len);
    for i in 0..len {
        let column: Vec<f64> = curves.iter().map(|c| c[i]).collect();
        let (m, h) = mean_ci(&column);
        mean.push(m);
        half_width.push(h.unwrap_or(0.0));
    }
    let warning = (curves.len() == 1).then(|| "single run: confidence interval reported as 0".to_string());
    Ok(AggregateCurve { mean, half_width, runs: curves.len(), warning })
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct QuadrantCell {
    pub mean: f64,
    pub n: usize,
}

/// Cells indexed `[run half][concept half]`, 0 = good, 1 = bad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadrantSummary {
    pub cells: [[QuadrantCell; 2]; 2],
    pub good_runs: usize,
    pub bad_runs: usize,
    pub good_concepts: Vec<String>,
    pub bad_concepts: Vec<String>,
}

impl QuadrantSummary {
    pub fn good_run_good_concept(&self) -> QuadrantCell {
        self.cells[0][0]
    }
    pub fn good_run_bad_concept(&self) -> QuadrantCell {
        self.cells[0][1]
    }
    pub fn bad_run_good_concept(&self) -> QuadrantCell {
        self.cells[1][0]
    }
    pub fn bad_run_bad_concept(&self) -> QuadrantCell {
        self.cells[1][1]
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("runs\tconcepts\tmean_delta\tn\n");
        for (ri, r) in ["good", "bad"].iter().enumerate() {
            for (ci, c) in ["good", "bad"].iter().enumerate() {
                let cell = self.cells[ri][ci];
                out.push_str(&format!("{r}\t{c}\t{}\t{}\n", cell.mean, cell.n));
            }
        }
        out
    }
}

/// Observed non-root concepts of one run, keyed by tree path.
pub fn observed_deltas(trace: &RunTrace) -> BTreeMap<String, f64> {
    trace
        .summary
        .utilities
        .iter()
        .filter(|row| !row.id.is_root() && row.observations > 0)
        .map(|row| (trace.summary.tree.path_string(row.id), row.delta))
        .collect()
}

/// Indices sorted by descending key, ties by index; the first `ceil(n/2)` form the top half.
fn top_half(keys: &[f64]) -> Vec<bool> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[b].total_cmp(&keys[a]).then(a.cmp(&b)));
    let mut top = vec![false; keys.len()];
    for &i in order.iter().take(keys.len().div_ceil(2)) {
        top[i] = true;
    }
    top
}

/// Run and concept medians splits of per-run concept utilities.
pub fn quadrant_from_matrix(
    finals: &[f64],
    deltas: &[BTreeMap<String, f64>],
) -> Result<QuadrantSummary, CliError> {
    if finals.len() < 2 || finals.len() != deltas.len() {
        return Err(CliError::Analysis("quadrant analysis needs at least 2 runs".into()));
    }
    let concepts: BTreeSet<&String> = deltas.iter().flat_map(|d| d.keys()).collect();
    if concepts.is_empty() {
        return Err(CliError::Analysis("no observed concepts".into()));
    }
    let concepts: Vec<&String> = concepts.into_iter().collect();
    let averages: Vec<f64> = concepts
        .iter()
        .map(|c| {
            let vals: Vec<f64> = deltas.iter().filter_map(|d| d.get(*c)).copied().collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    let good_concept = top_half(&averages);
    let good_run = top_half(finals);

    let mut sums = [[0.0f64; 2]; 2];
    let mut counts = [[0usize; 2]; 2];
    for (r, d) in deltas.iter().enumerate() {
        let ri = if good_run[r] { 0 } else { 1 };
        for (ci, c) in concepts.iter().enumerate() {
            if let Some(&delta) = d.get(*c) {
                let k = if good_concept[ci] { 0 } else { 1 };
                sums[ri][k] += delta;
                counts[ri][k] += 1;
            }
        }
    }
    let mut cells = [[QuadrantCell::default(); 2]; 2];
    for ri in 0..2 {
        for ci in 0..2 {
            let n = counts[ri][ci];
            cells[ri][ci] = QuadrantCell { mean: if n > 0 { sums[ri][ci] / n as f64 } else { f64::NAN }, n };
        }
    }
    let split = |flag: bool| -> Vec<String> {
        concepts.iter().zip(&good_concept).filter(|(_, &g)| g == flag).map(|(c, _)| (*c).clone()).collect()
    };
    Ok(QuadrantSummary {
        cells,
        good_runs: good_run.iter().filter(|&&g| g).count(),
        bad_runs: good_run.iter().filter(|&&g| !g).count(),
        good_concepts: split(true),
        bad_concepts: split(false),
    })
}

pub fn quadrant_analysis(traces: &[RunTrace]) -> Result<QuadrantSummary, CliError> {
    let finals: Vec<f64> = traces.iter().map(RunTrace::final_best).collect();
    let deltas: Vec<BTreeMap<String, f64>> = traces.iter().map(observed_deltas).collect();
    quadrant_from_matrix(&finals, &deltas)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    pub iteration: usize,
    pub cumulative: f64,
    pub child: f64,
    pub running_mean: f64,
}

/// Cumulative distinct concepts, child size, and running mean child size.
pub fn concept_growth_series(children: &[Vec<ConceptId>]) -> Vec<GrowthRow> {
    let mut seen = BTreeSet::new();
    let mut total = 0usize;
    children
        .iter()
        .enumerate()
        .map(|(i, set)| {
            seen.extend(set.iter().copied());
            total += set.len();
            GrowthRow {
                iteration: i + 1,
                cumulative: seen.len() as f64,
                child: set.len() as f64,
                running_mean: total as f64 / (i + 1) as f64,
            }
        })
        .collect()
}

/// Growth series averaged across runs.
pub fn concept_growth(traces: &[RunTrace]) -> Result<Vec<GrowthRow>, CliError> {
    let series: Vec<Vec<GrowthRow>> = traces
        .iter()
        .map(|t| {
            let children: Vec<Vec<ConceptId>> = t.records.iter().map(|r| r.child_features.clone()).collect();
            concept_growth_series(&children)
        })
        .collect();
    let first = series.first().ok_or(CliError::Analysis("no runs".into()))?;
    if series.iter().any(|s| s.len() != first.len()) {
        return Err(CliError::Analysis("runs have different lengths".into()));
    }
    let n = series.len() as f64;
    Ok((0..first.len())
        .map(|i| GrowthRow {
            iteration: i + 1,
            cumulative: series.iter().map(|s| s[i].cumulative).sum::<f64>() / n,
            child: series.iter().map(|s| s[i].child).sum::<f64>() / n,
            running_mean: series.iter().map(|s| s[i].running_mean).sum::<f64>() / n,
        })
        .collect())
}

pub fn growth_tsv(rows: &[GrowthRow]) -> String {
    let mut out = String::from("iteration\tcumulative\tchild\trunning_mean\n");
    for r in rows {
        out.push_str(&format!("{}\t{}\t{}\t{}\n", r.iteration, r.cumulative, r.child, r.running_mean));
    }
    out
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx <= 0.0 || syy <= 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub r: f64,
    pub concepts: usize,
}

pub const MIN_OBSERVATIONS: u32 = 5;

/// Pearson correlation of student utilities against teacher values matched by label.
pub fn teacher_student_corr(
    student: &[UtilityRow],
    teacher: &BTreeMap<String, f64>,
) -> Result<Correlation, CliError> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = student
        .iter()
        .filter(|row| !row.id.is_root() && row.observations >= MIN_OBSERVATIONS)
        .filter_map(|row| teacher.get(&row.label).map(|&t| (row.delta, t)))
        .unzip();
    if xs.len() < 3 {
        return Err(CliError::Undefined(format!("{} eligible concepts, need 3", xs.len())));
    }
    let r = pearson(&xs, &ys).ok_or_else(|| CliError::Undefined("zero variance".into()))?;
    Ok(Correlation { r, concepts: xs.len() })
}

/// Teacher log-odds per concept label from an MCMC reference population.
pub fn teacher_reference(
    world: &TeacherWorld,
    model: &ModelParams,
    samples: usize,
    burn: usize,
    seed: u64,
) -> Result<BTreeMap<String, f64>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let population = mcmc_reference(world, samples, burn, 1.0, &mut rng);
    let odds = teacher_log_odds(&population, &world.tree, model.rho_elite, model.alpha0, model.beta0)
        .map_err(|e| CliError::Analysis(e.to_string()))?;
    Ok(world.tree.ids().map(|v| (world.tree.label(v).to_string(), odds[v.0])).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub lambda0: f64,
    pub p_exploit: f64,
    pub mean: f64,
    pub half_width: f64,
    pub runs: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// `(lambda0, argmax p_exploit)` per branching ratio.
    pub argmax: Vec<(f64, f64)>,
}

impl SweepTable {
    pub fn argmax_for(&self, lambda0: f64) -> Option<f64> {
        self.argmax.iter().find(|(l, _)| *l == lambda0).map(|(_, p)| *p)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("lambda0\tp_exploit\tmean_final\thalf_width\truns\tci_flag\n");
        for r in &self.rows {
            let flag = if r.flagged { "single_run" } else { "" };
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{flag}\n",
                r.lambda0, r.p_exploit, r.mean, r.half_width, r.runs
            ));
        }
        out
    }
}

/// Mean final best per `(lambda0, p_exploit, finals)` cell; first maximum wins ties.
pub fn exploit_sweep(cells: &[(f64, f64, Vec<f64>)]) -> Result<SweepTable, CliError> {
    let mut rows = Vec::new();
    for (lambda0, p_exploit, finals) in cells {
        if finals.is_empty() {
            return Err(CliError::Analysis(format!("no runs for lambda0={lambda0} p_exploit={p_exploit}")));
        }
        let (mean, hw) = mean_ci(finals);
        rows.push(SweepRow {
            lambda0: *lambda0,
            p_exploit: *p_exploit,
            mean,
            half_width: hw.unwrap_or(0.0),
            runs: finals.len(),
            flagged: hw.is_none(),
        });
    }
    let mut lambdas: Vec<f64> = rows.iter().map(|r| r.lambda0).collect();
    lambdas.sort_by(f64::total_cmp);
    lambdas.dedup();
    let argmax = lambdas
        .iter()
        .map(|&l| {
            let best = rows
                .iter()
                .filter(|r| r.lambda0 == l)
                .fold(None::<&SweepRow>, |acc, r| match acc {
                    Some(a) if a.mean >= r.mean => Some(a),
                    _ => Some(r),
                })
                .expect("lambda present");
            (l, best.p_exploit)
        })
        .collect();
    Ok(SweepTable { rows, argmax })
}
