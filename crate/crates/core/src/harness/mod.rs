//! Seeded experiment families, aggregation and result files.

mod config;
mod output;
mod run;
mod summary;

pub use config::{
    shift_grid, EnvironmentSpec, ExperimentConfig, Family, Task, SIGMA_AY_GRID,
    SIGMA_AY_GRID_LITERAL,
};
pub use output::{
    family_dir, read_replication, read_results, replication_file_name, write_outputs,
    write_replication, RESULT_HEADER,
};
pub use run::{quantity, run_family, run_replication, FamilyRun, Record, ReplicationResult};
pub use summary::{
    method_pairs, summarize, Failure, QuantitySummary, Summary, VerdictCount, WinRate,
};
