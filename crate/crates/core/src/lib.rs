//! Chart-script synthesis with an execute/reflect/rewrite repair loop, and the
//! metric suite used to evaluate the generated scripts and images.
//!
//! Module map:
//!
//! - [`corpus`]: benchmark task sets loaded from JSON-lines files
//! - [`gateway`]: OpenAI-compatible chat client, retry policy and a scripted mock
//! - [`pipeline`]: drafting and repair agents, plus the loop that supervises them
//! - [`sandbox`]: isolated script execution and traceback classification
//! - [`pylang`]: Python tokenizer, concrete syntax tree and def-use extraction
//! - [`metrics`]: error ratios, METEOR, CodeBLEU, SSIM and iteration counts
//! - [`judge`]: multimodal LLM judging (perceptual score, colorblind audit)
//! - [`report`]: CSV/JSON table renderers over the metric results

pub mod corpus;
pub mod gateway;
pub mod judge;
pub mod metrics;
pub mod pipeline;
pub mod pylang;
pub mod report;
pub mod sandbox;

pub use corpus::{category_of, load_taskset, CategoryLabel, ChartTask, DataFile, LayoutSpec, TaskSet};
pub use gateway::{complete, ChatCompletion, ChatMessage, ChatRequest, GatewayError, ProviderHandle};
pub use pipeline::{run_suite, run_task, PipelineConfig, PipelineRecord, PromptMode};
pub use sandbox::{ExecBackend, ExecutionOutcome, Limits};
