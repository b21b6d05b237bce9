// SPDX-License-Identifier: MIT OR Apache-2.0

//! Dataset ingestion, batch experiments, reports and artifact files.

pub mod attn_dump;
pub mod config;
pub mod dataset;
pub mod runner;

pub use attn_dump::{cross_heatmap, dump_attention, dump_cross_heatmap, load_attention};
pub use config::{load_config, parse_config};
pub use dataset::{builtin_dataset, load_dataset, parse_dataset, Axis, EditType, PromptPair};
pub use runner::{
    compare_blending, run_dataset, sweep_strength, write_records, AggregateTable, BlendingReport,
    RunRecord, RunSettings, Stat, StrengthSweep, DEFAULT_SEEDS, DEFAULT_STRENGTHS,
};
