//! Language-model bindings for concept-tree search.

mod bindings;
mod client;
mod config;
mod exec;
mod extract;
pub mod mock;
pub mod prompt;

pub use bindings::{LlmEvaluator, LlmExtractor, LlmGenerator, Program, LLM_ROOT_LABEL};
pub use client::{parse_candidate, ChatClient, ChatMessage, ChatReply, ChatRequest};
pub use config::{ExecutionLimits, LlmConfig};
pub use exec::{execute_candidate, run_program, ProgramOutput};
pub use extract::{extract_concepts, extraction_prompt, parse_concept_response, tree_listing, MAX_TREE_PATHS};
pub use prompt::{build_prompt, PromptBundle};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("environment variable {0} holding the API key is not set")]
    MissingKey(String),
    #[error("transport failed after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited")]
    RateLimited,
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed completion: {0}")]
    MalformedResponse(String),
    #[error("empty task prompt")]
    EmptyPrompt,
    #[error("completion has no fenced code block")]
    NoCodeBlock,
    #[error("could not start interpreter: {0}")]
    Spawn(String),
    #[error("program exceeded {seconds} s")]
    Timeout { seconds: f64, stderr: String },
    #[error("program exited with status {code:?}")]
    NonzeroExit { code: Option<i32>, stderr: String },
    #[error("program output is not a solution: {message}")]
    ParseFailure { message: String, stderr: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
}

impl LlmError {
    /// Short tag stored in traces.
    pub fn kind(&self) -> &'static str {
        match self {
            LlmError::MissingKey(_) => "MissingKey",
            LlmError::Transport { .. } => "TransportError",
            LlmError::RateLimited => "RateLimited",
            LlmError::Http { .. } => "HttpError",
            LlmError::MalformedResponse(_) => "MalformedResponse",
            LlmError::EmptyPrompt => "EmptyPrompt",
            LlmError::NoCodeBlock => "NoCodeBlock",
            LlmError::Spawn(_) => "SpawnFailure",
            LlmError::Timeout { .. } => "Timeout",
            LlmError::NonzeroExit { .. } => "NonzeroExit",
            LlmError::ParseFailure { .. } => "ParseFailure",
            LlmError::InvalidConfig(_) => "InvalidConfig",
        }
    }

    pub fn stderr(&self) -> Option<&str> {
        match self {
            LlmError::Timeout { stderr, .. }
            | LlmError::NonzeroExit { stderr, .. }
            | LlmError::ParseFailure { stderr, .. } => Some(stderr),
            _ => None,
        }
    }

    fn stderr_suffix(&self) -> String {
        match self.stderr().map(str::trim) {
            Some(s) if !s.is_empty() => format!("\nstderr:\n{s}"),
            _ => String::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ccts_core::{ConceptTree, TaskId};

    #[test]
    fn prompt_sections() {
        let minimal = build_prompt(&PromptBundle { task_prompt: "Pack circles.".into(), ..Default::default() }).unwrap();
        assert_eq!(minimal.matches("## ").count(), 2);
        assert!(minimal.starts_with("## TASK\nPack circles.\n"));
        assert!(minimal.contains("## OUTPUT FORMAT\n"));

        let bundle = PromptBundle {
            task_prompt: "Pack circles.".into(),
            context: "Parent score: 1".into(),
            directive: Some("hex-lattice".into()),
        };
        let full = build_prompt(&bundle).unwrap();
        assert!(full.contains("Try to incorporate concept hex-lattice"));
        assert!(full.contains("## CONTEXT\nParent score: 1\n"));
        assert_eq!(full, build_prompt(&bundle).unwrap());

        assert!(matches!(build_prompt(&PromptBundle::default()), Err(LlmError::EmptyPrompt)));
    }

    #[test]
    fn candidate_blocks() {
        assert_eq!(parse_candidate("intro\n```python\nprint(1)\n```\nbye").unwrap(), "print(1)");
        assert_eq!(parse_candidate("```\na\n```\n```\nb\n```").unwrap(), "a");
        assert!(matches!(parse_candidate("just prose"), Err(LlmError::NoCodeBlock)));
        assert!(matches!(parse_candidate("```python\nunterminated"), Err(LlmError::NoCodeBlock)));
    }

    #[test]
    fn concept_responses() {
        let mut tree = ConceptTree::new("root").unwrap();
        let set = parse_concept_response("path: root/geometry", &mut tree);
        assert_eq!(tree.len(), 2);
        assert_eq!(set.len(), 2);

        let mut a = ConceptTree::new("root").unwrap();
        let once = parse_concept_response("path: root/x/y\npath: root/z", &mut a);
        let mut b = ConceptTree::new("root").unwrap();
        let twice = parse_concept_response("path: root/x/y\npath: root/z\nPATH: Root/X/Y", &mut b);
        assert_eq!(once, twice);
        assert_eq!(a.path_lines(), b.path_lines());

        let mut c = ConceptTree::new("root").unwrap();
        assert_eq!(parse_concept_response("no concepts", &mut c), ccts_core::ConceptSet::root_only());
        assert_eq!(parse_concept_response("path: other/a", &mut c), ccts_core::ConceptSet::root_only());
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn listing_keeps_deepest_paths() {
        let mut tree = ConceptTree::new("root").unwrap();
        for i in 0..150 {
            tree.resolve_path(&["root", "shallow", &format!("s{i}")]).unwrap();
        }
        for i in 0..150 {
            tree.resolve_path(&["root", "deep", "mid", &format!("d{i}")]).unwrap();
        }
        let listing = tree_listing(&tree);
        assert_eq!(listing.lines().count(), MAX_TREE_PATHS);
        assert_eq!(listing.lines().filter(|l| l.starts_with("root/deep/mid/")).count(), 150);
    }

    #[test]
    fn task_prompts_name_the_task() {
        for task in [TaskId::CirclePacking, TaskId::Heilbronn, TaskId::Squares, TaskId::Kakeya] {
            assert!(prompt::task_prompt(task, None).contains(&format!("\"{}\"", task.name())));
        }
    }

    #[test]
    fn config_defaults() {
        let c = LlmConfig::default();
        assert_eq!(c.model_name, "gemini-2.0-flash");
        assert_eq!(c.temperature, 0.75);
        c.validate().unwrap();
        assert!(LlmConfig { temperature: -0.1, ..c }.validate().is_err());
        assert_eq!(ExecutionLimits::default().wall_time_s, 10.0);
        assert_eq!(ExecutionLimits::default().memory_mb, 512);
    }
}
