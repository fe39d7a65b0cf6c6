use ccts_core::tasks::{DEFAULT_CIRCLES, DEFAULT_SQUARES, HEILBRONN_POINTS};
use ccts_core::TaskId;

use crate::LlmError;

pub const DIRECTIVE_PREFIX: &str = "Try to incorporate concept";

pub const OUTPUT_FORMAT: &str = "Reply with exactly one fenced code block containing a complete Python 3 program. \
The program must run without arguments or input and print a single JSON document on standard output: \
{\"task\": <task name>, \"rows\": [[...], ...]}. Print nothing else on standard output.";

/// Pieces of one generation prompt.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PromptBundle {
    pub task_prompt: String,
    pub context: String,
    pub directive: Option<String>,
}

/// Renders the labeled sections; empty context and missing directive are omitted.
pub fn build_prompt(bundle: &PromptBundle) -> Result<String, LlmError> {
    if bundle.task_prompt.trim().is_empty() {
        return Err(LlmError::EmptyPrompt);
    }
    let mut out = format!("## TASK\n{}\n", bundle.task_prompt.trim_end());
    if !bundle.context.trim().is_empty() {
        out.push_str(&format!("\n## CONTEXT\n{}\n", bundle.context.trim_end()));
    }
    if let Some(label) = &bundle.directive {
        out.push_str(&format!("\n## DIRECTIVE\n{DIRECTIVE_PREFIX} {label}\n"));
    }
    out.push_str(&format!("\n## OUTPUT FORMAT\n{OUTPUT_FORMAT}\n"));
    Ok(out)
}

/// Default task description for each benchmark.
pub fn task_prompt(task: TaskId, count: Option<usize>) -> String {
    match task {
        TaskId::CirclePacking => {
            let n = count.unwrap_or(DEFAULT_CIRCLES);
            format!(
                "Pack {n} disjoint circles inside the unit square [0,1]x[0,1] so that the sum of their radii is as \
large as possible. Task name: \"circle_packing\". Each row is [x, y, r]; exactly {n} rows."
            )
        }
        TaskId::Heilbronn => format!(
            "Place {HEILBRONN_POINTS} points inside the equilateral triangle of unit area with vertices (0,0), (a,0), \
(a/2, a*sqrt(3)/2), a = 2/3^(1/4), maximizing the smallest area of any triangle formed by three of the points. \
Task name: \"heilbronn\". Each row is [x, y]; exactly {HEILBRONN_POINTS} rows."
        ),
        TaskId::Squares => {
            let n = count.unwrap_or(DEFAULT_SQUARES);
            format!(
                "Place {n} non-overlapping squares, possibly rotated, inside the unit square so that the sum of their \
side lengths is as large as possible. Task name: \"squares\". Each row is [cx, cy, theta, side] with theta in \
radians; exactly {n} rows."
            )
        }
        TaskId::Kakeya => "Find a finitely supported probability distribution of integer pairs (X, Y) that makes \
H(X - Y) / max(H(X), H(X + Y), H(X + 2Y), H(Y)) as large as possible, where H is Shannon entropy. Task name: \
\"kakeya\". Each row is [x, y, p] with integer x, y, distinct pairs and positive p summing to 1."
            .to_string(),
    }
}

/// Context block: parent program, scores and the last failure.
pub fn build_context(
    parent: Option<&str>,
    parent_score: Option<f64>,
    best_score: Option<f64>,
    last_failure: Option<&str>,
) -> String {
    let mut parts = Vec::new();
    match parent {
        Some(program) => parts.push(format!("Parent program:\n```python\n{}\n```", program.trim_end())),
        None => parts.push("There is no previous program yet; write an initial solution.".to_string()),
    }
    if let Some(s) = parent_score {
        parts.push(format!("Parent score: {s}"));
    }
    if let Some(s) = best_score {
        parts.push(format!("Best score so far: {s}"));
    }
    if let Some(f) = last_failure {
        parts.push(format!("The previous candidate failed:\n{f}"));
    }
    parts.join("\n\n")
}
