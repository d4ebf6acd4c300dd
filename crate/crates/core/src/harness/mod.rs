//! Configuration, file formats, the replicated benchmark, and single-dataset runs.

pub mod benchmark;
pub mod config;
pub mod io;
pub mod run;

pub use benchmark::{run_benchmark, BenchmarkReport, MethodReport, Outcome};
pub use config::{BenchmarkConfig, PolicyClassConfig, PolicyRule, RunConfig, SpecConfig};
pub use io::{read_dataset, read_dataset_file, write_dataset, write_dataset_file, DatasetSchema};
pub use run::{emit_bounds_scatter, run_on_dataset, run_single, Scatter};
