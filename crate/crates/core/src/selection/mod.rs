//! Variable selection for model-based clustering.
//!
//! A candidate X_i is scored against the selected set S by
//!
//! ```text
//! diff = BIC_clust(S ∪ {i}) − (BIC_clust(S) + BIC_reg(X_i | S))
//! ```
//!
//! where BIC_clust is the best mixture BIC with at least two components and
//! BIC_reg the regression of X_i on (a subset of) S. Positive values favour
//! clustering on X_i.

mod engine;
mod options;
mod search;
mod trace;

pub use engine::{bic_diff, propose_add, propose_remove, run_parallel, BicDiffResult, Evaluator};
pub use options::{defaults, parse_g_range, parse_models, Direction, SearchKind, SearchOptions};
pub use search::{greedy_search, headlong_search, search, SearchResult};
pub use trace::{render_report, render_trace, trace_from_jsonl, trace_to_jsonl, Decision, StepType, TraceEntry};
