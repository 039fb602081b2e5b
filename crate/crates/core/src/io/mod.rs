//! Configuration ingestion and result serialization.

pub mod config;
pub mod csv;

pub use config::{load_config, parse_config, resolve_seed, Experiment, Format, RunConfig, SEED_ENV};
pub use csv::{parse_csv, write_table, write_trace_csv, Table, TRACE_HEADER};
