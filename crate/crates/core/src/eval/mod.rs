//! Temporal query generation, ranking metrics, the retrieval benchmark and
//! the threshold sweep.

pub mod benchmark;
pub mod metrics;
pub mod queries;
pub mod sweep;

pub use benchmark::{run_benchmark, write_survival_tsv, BenchmarkReport, MethodRow};
pub use metrics::{metrics, RankMetrics};
pub use queries::{current_at, generate_queries, QuerySet, TemporalQuery};
pub use sweep::{threshold_sweep, ReferenceLabels, SweepRow};
