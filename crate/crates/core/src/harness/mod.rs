//! Experiment orchestration: configuration, training loop, offline novelty studies, grids,
//! metrics and plots.

pub mod config;
pub mod corpus;
pub mod experiments;
pub mod kl;
pub mod metrics;
pub mod plot;
pub mod train;

pub use config::{EnvName, RunConfig};
pub use experiments::{count_vs_score, eval_novelty_settings, grid_search, spearman, CountVsScore, GridParam, GridResult, NoveltyEval};
pub use metrics::{read_metrics, MetricsRecord, MetricsWriter};
pub use plot::emit_plots;
pub use train::{train, train_to_dir, TrainOutcome, Trainer};
