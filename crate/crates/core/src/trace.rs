//! Run traces and their JSONL serialization.
//!
//! A trace file holds one JSON object per line: a `header` line with the
//! resolved configuration, one `iteration` line per step, and a closing
//! `summary` line with the final concept tree and utility dump.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept_tree::{ConceptId, ConceptTree};
use crate::contrastive::UtilityRow;
use crate::search::{Branch, RunConfig};

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("malformed trace: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub config: RunConfig,
    pub seed: u64,
    /// Environment description supplied by the caller (world parameters, task, ...).
    pub environment: serde_json::Value,
    pub seed_fitness: f64,
    pub seed_valid: bool,
    pub seed_features: Vec<ConceptId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub selected_parent: usize,
    pub policy_branch: Branch,
    pub proposed_concept: ConceptId,
    pub directive: Option<String>,
    pub child_entry_id: usize,
    pub child_fitness: f64,
    pub child_valid: bool,
    pub child_features: Vec<ConceptId>,
    /// Concepts in the tree after this step.
    pub tree_size: usize,
    pub best_so_far: f64,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub tree: ConceptTree,
    pub utilities: Vec<UtilityRow>,
    pub final_best: f64,
    pub archive_size: usize,
    pub invalid_entries: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum TraceLine {
    Header(TraceHeader),
    Iteration(IterationRecord),
    Summary(TraceSummary),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunTrace {
    pub header: TraceHeader,
    pub records: Vec<IterationRecord>,
    pub summary: TraceSummary,
}

impl RunTrace {
    pub fn final_best(&self) -> f64 {
        self.records.last().map_or(self.header.seed_fitness, |r| r.best_so_far)
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> Result<(), TraceError> {
        let mut line = |value: &TraceLine| -> Result<(), TraceError> {
            serde_json::to_writer(&mut out, value).map_err(|e| TraceError::Json { line: 0, source: e })?;
            out.write_all(b"\n")?;
            Ok(())
        };
        line(&TraceLine::Header(self.header.clone()))?;
        for r in &self.records {
            line(&TraceLine::Iteration(r.clone()))?;
        }
        line(&TraceLine::Summary(self.summary.clone()))?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("json is utf-8")
    }

    pub fn read_jsonl<R: BufRead>(input: R) -> Result<Self, TraceError> {
        let mut header = None;
        let mut records = Vec::new();
        let mut summary = None;
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: TraceLine =
                serde_json::from_str(&line).map_err(|e| TraceError::Json { line: i + 1, source: e })?;
            match parsed {
                TraceLine::Header(h) if header.is_none() => header = Some(h),
                TraceLine::Header(_) => return Err(TraceError::Malformed("duplicate header".into())),
                TraceLine::Iteration(r) => records.push(r),
                TraceLine::Summary(s) => summary = Some(s),
            }
        }
        let header = header.ok_or_else(|| TraceError::Malformed("missing header".into()))?;
        let summary = summary.ok_or_else(|| TraceError::Malformed("missing summary".into()))?;
        Ok(Self { header, records, summary })
    }

    pub fn from_jsonl(text: &str) -> Result<Self, TraceError> {
        Self::read_jsonl(text.as_bytes())
    }

    /// Checks the structural invariants every trace must satisfy.
    pub fn validate(&self) -> Result<(), TraceError> {
        let expected = self.header.config.iterations;
        if self.records.len() != expected {
            return Err(TraceError::Malformed(format!(
                "{} records for {} iterations",
                self.records.len(),
                expected
            )));
        }
        let mut best = self.header.seed_fitness;
        for (i, r) in self.records.iter().enumerate() {
            if r.iteration != i + 1 || r.child_entry_id != i + 1 {
                return Err(TraceError::Malformed(format!("record {i} out of order")));
            }
            if r.selected_parent >= r.child_entry_id {
                return Err(TraceError::Malformed(format!("record {i} selects a future parent")));
            }
            best = best.max(r.child_fitness);
            if r.best_so_far != best {
                return Err(TraceError::Malformed(format!("record {i} best_so_far is not the running max")));
            }
            if !r.child_fitness.is_finite() {
                return Err(TraceError::Malformed(format!("record {i} has non-finite fitness")));
            }
        }
        let tree = &self.summary.tree;
        for r in &self.records {
            if r.child_features.iter().any(|&v| !tree.contains(v)) {
                return Err(TraceError::Malformed("feature id outside the final tree".into()));
            }
            let set = r.child_features.iter().copied().collect();
            if !tree.is_closed(&set) {
                return Err(TraceError::Malformed(format!(
                    "record {} features are not ancestor-closed",
                    r.iteration
                )));
            }
        }
        if self.summary.archive_size != expected + 1 {
            return Err(TraceError::Malformed("archive size does not match iterations".into()));
        }
        Ok(())
    }
}
