//! Run configuration, report format and the commands behind the `trajsynth` binary.

pub mod commands;
pub mod config;
pub mod report;

pub use commands::{
    cmd_attack, cmd_evaluate, cmd_fit, cmd_generate, cmd_ingest, cmd_simulate, load_targets, output_root,
    run_attacks, write_targets, RunOutput, DEFAULT_OUTPUT_ROOT, OUTPUT_ENV, TIMINGS_FILE,
};
pub use config::{ModelType, RunConfig};
pub use report::{load_report, save_report, Block, EvalReport, InputDigest, MiPair, Timings, REPORT_FORMAT_VERSION};
