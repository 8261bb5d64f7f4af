//! Hierarchical summarization over a level plan.

pub mod backend;
pub mod prompt;
mod run;
pub mod schema;

pub use backend::{BackendError, ExtractiveBackend, Generator, HttpLlmBackend, LlmEndpoint, ReplayBackend};
pub use prompt::{child_context, render_prompt, ChildEntry, PromptTemplate, TemplateError};
pub use run::{
    modules_to_jsonl, process_levels, summarize_modules, summarize_node, IndexEntry, LevelRun, ModuleSummary,
    NodeSummary, ProcessOptions, SummarizeError, SummaryCache, SummaryStore, Warning,
};
pub use schema::{Dependency, NamedDescription, StructuredSummary};
