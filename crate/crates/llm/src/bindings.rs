use ccts_core::{
    CandidateFailure, ConceptSet, ConceptTree, Evaluation, Evaluator, Extractor, GenerationRequest, Generator,
    TaskConfig,
};
use rand::RngCore;

use crate::prompt::{build_context, build_prompt, task_prompt, PromptBundle};
use crate::{execute_candidate, extract_concepts, parse_candidate, ChatClient, ExecutionLimits, LlmError};

pub const LLM_ROOT_LABEL: &str = "root";

/// Candidate payload: program source text.
pub type Program = String;

impl From<LlmError> for CandidateFailure {
    fn from(e: LlmError) -> Self {
        CandidateFailure::new(e.kind(), e.to_string())
    }
}

/// Prompts the model for a child program.
pub struct LlmGenerator {
    client: ChatClient,
    task_prompt: String,
    pub calls: usize,
    pub retries: u32,
}

impl LlmGenerator {
    pub fn new(client: ChatClient, task: &TaskConfig) -> Self {
        Self { client, task_prompt: task_prompt(task.task, task.count), calls: 0, retries: 0 }
    }

    pub fn with_task_prompt(mut self, text: impl Into<String>) -> Self {
        self.task_prompt = text.into();
        self
    }

    pub fn prompt_for(&self, request: &GenerationRequest<'_, Program>) -> Result<String, LlmError> {
        let context = build_context(
            request.parent.map(String::as_str),
            request.parent_score,
            request.best_score,
            request.last_failure,
        );
        build_prompt(&PromptBundle {
            task_prompt: self.task_prompt.clone(),
            context,
            directive: request.directive.map(str::to_string),
        })
    }
}

impl Generator<Program> for LlmGenerator {
    fn generate(
        &mut self,
        request: &GenerationRequest<'_, Program>,
        _rng: &mut dyn RngCore,
    ) -> Result<Program, CandidateFailure> {
        let prompt = self.prompt_for(request)?;
        self.calls += 1;
        let reply = self.client.call_chat(&prompt)?;
        self.retries += reply.retries;
        Ok(parse_candidate(&reply.text)?)
    }
}

/// Runs candidate programs and scores their output.
pub struct LlmEvaluator {
    pub task: TaskConfig,
    pub limits: ExecutionLimits,
}

impl Evaluator<Program> for LlmEvaluator {
    fn evaluate(&mut self, program: &Program) -> Evaluation {
        let floor = self.task.task.floor_score();
        match execute_candidate(program, &self.limits, &self.task) {
            Ok(solution) => {
                let score = self.task.evaluate(&solution);
                match score.value {
                    Some(v) => Evaluation {
                        fitness: v,
                        valid: true,
                        feedback: (!score.diagnostics.is_empty()).then(|| score.diagnostics.join("; ")),
                    },
                    None => Evaluation::invalid(floor, format!("Invalid: {}", score.diagnostics.join("; "))),
                }
            }
            Err(e) => Evaluation::invalid(floor, format!("{}: {e}{}", e.kind(), e.stderr_suffix())),
        }
    }

    fn floor_score(&self) -> f64 {
        self.task.task.floor_score()
    }
}

/// Asks the model which concepts a program uses.
pub struct LlmExtractor {
    client: ChatClient,
}

impl LlmExtractor {
    pub fn new(client: ChatClient) -> Self {
        Self { client }
    }
}

impl Extractor<Program> for LlmExtractor {
    fn root_label(&self) -> &str {
        LLM_ROOT_LABEL
    }

    fn extract(&mut self, program: &Program, tree: &mut ConceptTree) -> Result<ConceptSet, CandidateFailure> {
        Ok(extract_concepts(&self.client, program, tree)?)
    }
}
