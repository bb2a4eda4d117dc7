//! Configurations, pipelines of analyses and report output.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{parse_config, AnalysisConfig, ChainMode, ConfigError, Pipeline};
pub use pipeline::{run_analysis, run_batch, run_pipeline, DriverError, FinalReport, StageReport, StageResult, StageStats};
