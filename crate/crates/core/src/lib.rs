//! Contrastive concept-tree search.
//!
//! Parent selection in an evolutionary generate/evaluate loop is guided by a
//! contrastive model over a hierarchy of semantic concepts. The crate holds
//! the concept tree, the contrastive model, the search loop, a synthetic
//! teacher/student environment and the deterministic task evaluators.

pub mod concept_tree;
pub mod contrastive;
pub mod search;
pub mod synthetic;
pub mod tasks;
pub mod trace;

pub use concept_tree::{ConceptId, ConceptSet, ConceptTree, TreeError};
pub use contrastive::{ContrastiveModel, ModelError, ModelParams, PartitionResult, UtilityRow};
pub use search::{
    run, ArchiveEntry, Bindings, Branch, CandidateFailure, Evaluation, Evaluator, Extractor,
    GenerationRequest, Generator, PolicyKind, RunConfig, RunOutcome, SearchError, SearchState,
    SelectionPolicy,
};
pub use synthetic::{run_synthetic, LatentAlgorithm, TeacherParams, TeacherWorld};
pub use tasks::{TaskConfig, TaskId, TaskScore, TaskSolution};
pub use trace::{IterationRecord, RunTrace, TraceError, TraceHeader, TraceSummary};
