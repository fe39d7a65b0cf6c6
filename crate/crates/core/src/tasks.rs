//! Deterministic scorers for the benchmark tasks and their solution documents.
//!
//! A solution document is JSON of the form
//! `{"task": "<id>", "rows": [[...], ...]}` with one row per circle
//! `[x, y, r]`, point `[x, y]`, square `[cx, cy, theta, s]` or lattice atom
//! `[x, y, p]`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Feasibility tolerance for all geometric checks.
pub const GEOMETRY_EPS: f64 = 1e-9;
/// Tolerance on the total probability mass of a lattice distribution.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskId {
    CirclePacking,
    Kakeya,
    Heilbronn,
    Squares,
}

impl TaskId {
    pub const ALL: [TaskId; 4] = [TaskId::CirclePacking, TaskId::Kakeya, TaskId::Heilbronn, TaskId::Squares];

    pub fn name(self) -> &'static str {
        match self {
            TaskId::CirclePacking => "circle_packing",
            TaskId::Kakeya => "kakeya",
            TaskId::Heilbronn => "heilbronn",
            TaskId::Squares => "squares",
        }
    }

    /// Finite score archived for invalid candidates.
    pub fn floor_score(self) -> f64 {
        match self {
            TaskId::Squares => -1.0,
            _ => 0.0,
        }
    }

    fn row_width(self) -> usize {
        match self {
            TaskId::CirclePacking | TaskId::Kakeya => 3,
            TaskId::Heilbronn => 2,
            TaskId::Squares => 4,
        }
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for TaskId {
    type Err = TaskError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "circle_packing" | "circles" => Ok(TaskId::CirclePacking),
            "kakeya" | "arithmetic_kakeya" => Ok(TaskId::Kakeya),
            "heilbronn" => Ok(TaskId::Heilbronn),
            "squares" | "squares_in_square" => Ok(TaskId::Squares),
            other => Err(TaskError::UnknownTask(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TaskError {
    #[error("unknown task {0:?}")]
    UnknownTask(String),
    #[error("document is not valid JSON: {0}")]
    Syntax(String),
    #[error("document is for task {found}, expected {expected}")]
    TaskMismatch { expected: TaskId, found: String },
    #[error("expected {expected} rows, found {found}")]
    WrongCount { expected: usize, found: usize },
    #[error("row {row} has {found} columns, expected {expected}")]
    WrongShape { row: usize, expected: usize, found: usize },
    #[error("row {0} contains a non-finite value")]
    NonFinite(usize),
    #[error("row {0}: lattice coordinates must be integers")]
    NonInteger(usize),
    #[error("row {0}: probability must be positive")]
    NonPositiveMass(usize),
    #[error("lattice point ({0}, {1}) appears twice")]
    DuplicateSupport(i64, i64),
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("every reference projection is deterministic")]
    DegenerateDistribution,
}

/// Evaluator outcome for one candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskScore {
    /// Score, or `None` when the candidate is invalid.
    pub value: Option<f64>,
    pub diagnostics: Vec<String>,
}

impl TaskScore {
    fn valid(value: f64) -> Self {
        Self { value: Some(value), diagnostics: Vec::new() }
    }

    fn invalid(diagnostics: Vec<String>) -> Self {
        Self { value: None, diagnostics }
    }

    pub fn is_valid(&self) -> bool {
        self.value.is_some()
    }

    /// Score with invalid candidates mapped to the task floor.
    pub fn archived(&self, task: TaskId) -> f64 {
        self.value.unwrap_or_else(|| task.floor_score())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Circle {
    pub x: f64,
    pub y: f64,
    pub r: f64,
}

pub const DEFAULT_CIRCLES: usize = 26;

/// Sum of radii when every circle lies in the unit square and no two overlap.
pub fn eval_circle_packing(circles: &[Circle], expected_n: usize) -> TaskScore {
    let mut problems = Vec::new();
    if circles.len() != expected_n {
        problems.push(format!("expected {expected_n} circles, found {}", circles.len()));
    }
    for (i, c) in circles.iter().enumerate() {
        if !(c.x.is_finite() && c.y.is_finite() && c.r.is_finite()) {
            problems.push(format!("circle {i} is not finite"));
            continue;
        }
        if c.r < 0.0 {
            problems.push(format!("circle {i} has negative radius"));
        }
        let room = c.x.min(1.0 - c.x).min(c.y).min(1.0 - c.y);
        if c.r > room + GEOMETRY_EPS {
            problems.push(format!("circle {i} leaves the unit square"));
        }
    }
    if problems.is_empty() {
        for i in 0..circles.len() {
            for j in i + 1..circles.len() {
                let (a, b) = (circles[i], circles[j]);
                let dist = (a.x - b.x).hypot(a.y - b.y);
                if dist < a.r + b.r - GEOMETRY_EPS {
                    problems.push(format!("circles {i} and {j} overlap"));
                }
            }
        }
    }
    if problems.is_empty() {
        TaskScore::valid(circles.iter().map(|c| c.r).sum())
    } else {
        TaskScore::invalid(problems)
    }
}

pub const HEILBRONN_POINTS: usize = 11;

/// Side of the unit-area equilateral triangle, `2 / 3^(1/4)`.
pub fn heilbronn_side() -> f64 {
    2.0 / 3f64.powf(0.25)
}

pub fn heilbronn_triangle() -> [[f64; 2]; 3] {
    let a = heilbronn_side();
    [[0.0, 0.0], [a, 0.0], [a / 2.0, a * 3f64.sqrt() / 2.0]]
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

pub fn triangle_area(a: [f64; 2], b: [f64; 2], c: [f64; 2]) -> f64 {
    cross(a, b, c).abs() / 2.0
}

fn closest_on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    [a[0] + t * d[0], a[1] + t * d[1]]
}

/// Projects points outside the triangle onto its boundary; interior points are unchanged.
pub fn repair_point(p: [f64; 2]) -> [f64; 2] {
    let tri = heilbronn_triangle();
    // vertices are counter-clockwise, so the interior is left of every edge
    let inside = (0..3).all(|i| cross(tri[i], tri[(i + 1) % 3], p) >= -1e-12);
    if inside {
        return p;
    }
    (0..3)
        .map(|i| closest_on_segment(p, tri[i], tri[(i + 1) % 3]))
        .min_by(|q, r| {
            let dq = (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
            let dr = (r[0] - p[0]).powi(2) + (r[1] - p[1]).powi(2);
            dq.total_cmp(&dr)
        })
        .expect("three edges")
}

/// Smallest triangle area over all triples after repair; 0 for malformed input.
pub fn eval_heilbronn(points: &[[f64; 2]]) -> TaskScore {
    if points.len() != HEILBRONN_POINTS {
        return TaskScore::invalid(vec![format!(
            "expected {HEILBRONN_POINTS} points, found {}",
            points.len()
        )]);
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return TaskScore::invalid(vec!["non-finite coordinate".into()]);
    }
    let repaired: Vec<[f64; 2]> = points.iter().map(|&p| repair_point(p)).collect();
    let mut diagnostics = Vec::new();
    let moved = repaired.iter().zip(points).filter(|(r, p)| r != p).count();
    if moved > 0 {
        diagnostics.push(format!("{moved} points projected onto the triangle boundary"));
    }
    let mut best = f64::INFINITY;
    let n = repaired.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                best = best.min(triangle_area(repaired[i], repaired[j], repaired[k]));
            }
        }
    }
    TaskScore { value: Some(best), diagnostics }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Square {
    pub cx: f64,
    pub cy: f64,
    pub theta: f64,
    pub side: f64,
}

pub const DEFAULT_SQUARES: usize = 5;

impl Square {
    pub fn axis_aligned(cx: f64, cy: f64, side: f64) -> Self {
        Self { cx, cy, theta: 0.0, side }
    }

    /// Unit edge normals (two distinct directions).
    pub fn axes(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta.sin_cos();
        [[c, s], [-s, c]]
    }

    pub fn vertices(&self) -> [[f64; 2]; 4] {
        let h = self.side / 2.0;
        let [u, v] = self.axes();
        let corner = |a: f64, b: f64| [self.cx + a * u[0] + b * v[0], self.cy + a * u[1] + b * v[1]];
        [corner(-h, -h), corner(h, -h), corner(h, h), corner(-h, h)]
    }

    fn project(&self, axis: [f64; 2]) -> (f64, f64) {
        self.vertices()
            .iter()
            .map(|p| p[0] * axis[0] + p[1] * axis[1])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)))
    }
}

/// Smallest interval overlap over the four separating-axis candidates.
/// Non-positive means the squares are disjoint or only touch.
pub fn square_penetration(a: &Square, b: &Square) -> f64 {
    a.axes()
        .into_iter()
        .chain(b.axes())
        .map(|axis| {
            let (alo, ahi) = a.project(axis);
            let (blo, bhi) = b.project(axis);
            ahi.min(bhi) - alo.max(blo)
        })
        .fold(f64::INFINITY, f64::min)
}

/// Positive-area overlap beyond the feasibility band.
pub fn squares_overlap(a: &Square, b: &Square) -> bool {
    square_penetration(a, b) > GEOMETRY_EPS
}

/// Sum of side lengths for a valid packing; invalid otherwise.
pub fn eval_squares(squares: &[Square]) -> TaskScore {
    let mut problems = Vec::new();
    for (i, sq) in squares.iter().enumerate() {
        if ![sq.cx, sq.cy, sq.theta, sq.side].iter().all(|v| v.is_finite()) {
            problems.push(format!("square {i} is not finite"));
            continue;
        }
        if sq.side < 0.0 {
            problems.push(format!("square {i} has negative side"));
        }
        let outside = sq
            .vertices()
            .iter()
            .flatten()
            .any(|&c| c < -GEOMETRY_EPS || c > 1.0 + GEOMETRY_EPS);
        if outside {
            problems.push(format!("square {i} leaves the unit square"));
        }
    }
    if problems.is_empty() {
        for i in 0..squares.len() {
            for j in i + 1..squares.len() {
                if squares_overlap(&squares[i], &squares[j]) {
                    problems.push(format!("squares {i} and {j} overlap"));
                }
            }
        }
    }
    if problems.is_empty() {
        TaskScore::valid(squares.iter().map(|s| s.side).sum())
    } else {
        TaskScore::invalid(problems)
    }
}

/// Finitely supported distribution on the integer lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatticeDistribution {
    support: Vec<((i64, i64), f64)>,
}

impl LatticeDistribution {
    pub fn new(support: Vec<((i64, i64), f64)>) -> Result<Self, TaskError> {
        let mut seen = BTreeSet::new();
        for (row, &((x, y), p)) in support.iter().enumerate() {
            if !p.is_finite() {
                return Err(TaskError::NonFinite(row));
            }
            if p <= 0.0 {
                return Err(TaskError::NonPositiveMass(row));
            }
            if !seen.insert((x, y)) {
                return Err(TaskError::DuplicateSupport(x, y));
            }
        }
        let total: f64 = support.iter().map(|(_, p)| p).sum();
        if (total - 1.0).abs() > MASS_TOL {
            return Err(TaskError::NotNormalized(total));
        }
        Ok(Self { support })
    }

    pub fn uniform(points: &[(i64, i64)]) -> Result<Self, TaskError> {
        let p = 1.0 / points.len() as f64;
        Self::new(points.iter().map(|&pt| (pt, p)).collect())
    }

    pub fn support(&self) -> &[((i64, i64), f64)] {
        &self.support
    }

    /// Shannon entropy (nats) of `a*X + b*Y`.
    pub fn projection_entropy(&self, a: i64, b: i64) -> f64 {
        let mut mass: BTreeMap<i128, f64> = BTreeMap::new();
        for &((x, y), p) in &self.support {
            *mass.entry(a as i128 * x as i128 + b as i128 * y as i128).or_insert(0.0) += p;
        }
        -mass.values().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>()
    }
}

/// `H(X - Y) / max(H(X), H(X + Y), H(X + 2Y), H(Y))`.
pub fn eval_kakeya_ratio(dist: &LatticeDistribution) -> Result<f64, TaskError> {
    let numerator = dist.projection_entropy(1, -1);
    let denominator = [(1, 0), (1, 1), (1, 2), (0, 1)]
        .iter()
        .map(|&(a, b)| dist.projection_entropy(a, b))
        .fold(0.0, f64::max);
    if denominator <= 0.0 {
        return Err(TaskError::DegenerateDistribution);
    }
    Ok(numerator / denominator)
}

/// Parsed, invariant-checked candidate for one task.
#[derive(Debug, Clone, PartialEq)]
pub enum TaskSolution {
    Circles(Vec<Circle>),
    Heilbronn(Vec<[f64; 2]>),
    Squares(Vec<Square>),
    Kakeya(LatticeDistribution),
}

/// Task-level settings that are not part of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TaskConfig {
    pub task: TaskId,
    /// Expected row count for circle and square tasks.
    pub count: Option<usize>,
}

impl TaskConfig {
    pub fn new(task: TaskId) -> Self {
        let count = match task {
            TaskId::CirclePacking => Some(DEFAULT_CIRCLES),
            TaskId::Squares => Some(DEFAULT_SQUARES),
            TaskId::Heilbronn => Some(HEILBRONN_POINTS),
            TaskId::Kakeya => None,
        };
        Self { task, count }
    }

    pub fn with_count(mut self, count: usize) -> Self {
        self.count = Some(count);
        self
    }

    /// Scores a parsed solution.
    pub fn evaluate(&self, solution: &TaskSolution) -> TaskScore {
        match solution {
            TaskSolution::Circles(c) => {
                eval_circle_packing(c, self.count.unwrap_or(c.len()))
            }
            TaskSolution::Heilbronn(p) => eval_heilbronn(p),
            TaskSolution::Squares(s) => match self.count {
                Some(n) if n != s.len() => {
                    TaskScore::invalid(vec![format!("expected {n} squares, found {}", s.len())])
                }
                _ => eval_squares(s),
            },
            TaskSolution::Kakeya(d) => match eval_kakeya_ratio(d) {
                Ok(v) => TaskScore::valid(v),
                Err(e) => TaskScore::invalid(vec![e.to_string()]),
            },
        }
    }

    /// Parses then scores a document; parse errors become invalid scores.
    pub fn score_document(&self, document: &str) -> TaskScore {
        match parse_solution(self, document) {
            Ok(solution) => self.evaluate(&solution),
            Err(e) => TaskScore::invalid(vec![e.to_string()]),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SolutionDocument {
    task: String,
    rows: Vec<Vec<f64>>,
}

pub fn parse_solution(config: &TaskConfig, document: &str) -> Result<TaskSolution, TaskError> {
    // serde_json rejects NaN/Infinity literals, so non-finite values surface as syntax errors
    let doc: SolutionDocument =
        serde_json::from_str(document.trim()).map_err(|e| TaskError::Syntax(e.to_string()))?;
    let task = config.task;
    match doc.task.parse::<TaskId>() {
        Ok(found) if found == task => {}
        _ => return Err(TaskError::TaskMismatch { expected: task, found: doc.task }),
    }
    let width = task.row_width();
    for (row, values) in doc.rows.iter().enumerate() {
        if values.len() != width {
            return Err(TaskError::WrongShape { row, expected: width, found: values.len() });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(TaskError::NonFinite(row));
        }
    }
    let expect_count = |n: usize| -> Result<(), TaskError> {
        if doc.rows.len() != n {
            return Err(TaskError::WrongCount { expected: n, found: doc.rows.len() });
        }
        Ok(())
    };
    match task {
        TaskId::CirclePacking => {
            if let Some(n) = config.count {
                expect_count(n)?;
            }
            Ok(TaskSolution::Circles(
                doc.rows.iter().map(|r| Circle { x: r[0], y: r[1], r: r[2] }).collect(),
            ))
        }
        TaskId::Heilbronn => {
            expect_count(HEILBRONN_POINTS)?;
            Ok(TaskSolution::Heilbronn(doc.rows.iter().map(|r| [r[0], r[1]]).collect()))
        }
        TaskId::Squares => {
            if let Some(n) = config.count {
                expect_count(n)?;
            }
            Ok(TaskSolution::Squares(
                doc.rows
                    .iter()
                    .map(|r| Square { cx: r[0], cy: r[1], theta: r[2], side: r[3] })
                    .collect(),
            ))
        }
        TaskId::Kakeya => {
            let mut support = Vec::with_capacity(doc.rows.len());
            for (row, r) in doc.rows.iter().enumerate() {
                let coord = |v: f64| -> Result<i64, TaskError> {
                    if v.fract() != 0.0 || v.abs() > 2f64.powi(53) {
                        return Err(TaskError::NonInteger(row));
                    }
                    Ok(v as i64)
                };
                support.push(((coord(r[0])?, coord(r[1])?), r[2]));
            }
            Ok(TaskSolution::Kakeya(LatticeDistribution::new(support)?))
        }
    }
}

/// Renders a solution in the document format.
pub fn solution_document(solution: &TaskSolution) -> String {
    let (task, rows): (TaskId, Vec<Vec<f64>>) = match solution {
        TaskSolution::Circles(c) => (TaskId::CirclePacking, c.iter().map(|c| vec![c.x, c.y, c.r]).collect()),
        TaskSolution::Heilbronn(p) => (TaskId::Heilbronn, p.iter().map(|p| p.to_vec()).collect()),
        TaskSolution::Squares(s) => (
            TaskId::Squares,
            s.iter().map(|s| vec![s.cx, s.cy, s.theta, s.side]).collect(),
        ),
        TaskSolution::Kakeya(d) => (
            TaskId::Kakeya,
            d.support().iter().map(|&((x, y), p)| vec![x as f64, y as f64, p]).collect(),
        ),
    };
    serde_json::to_string(&SolutionDocument { task: task.name().to_string(), rows }).expect("serializable")
}

/// `k x k` grid of axis-aligned squares of side `1/k`.
pub fn square_grid(k: usize) -> Vec<Square> {
    let side = 1.0 / k as f64;
    (0..k)
        .flat_map(|i| (0..k).map(move |j| (i, j)))
        .map(|(i, j)| Square::axis_aligned((i as f64 + 0.5) * side, (j as f64 + 0.5) * side, side))
        .collect()
}
