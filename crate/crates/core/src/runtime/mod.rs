//! Online inference: per-frame model ranking, the LFU model cache, trace
//! metrics and the comparison baselines.

pub mod baselines;
pub mod cache;
pub mod summary;
pub mod trace;

pub use baselines::{
    run_baselines, train_baseline, train_baselines, BaselineConfig, Baselines, Method, Routing, TrainedBaseline,
};
pub use cache::{CacheOutcome, CacheSlot, ModelCache};
pub use summary::{quartiles, summarize, top_k_coverage, Quartiles, TraceSummary};
pub use trace::{run_trace, FrameRecord, Selector, TraceMetrics, DEFAULT_WINDOW};
