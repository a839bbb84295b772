//! Experiment harness: benchmark grids over the surrogate models, mean
//! relative-error/time summaries, CSV persistence and SVG trade-off plots.

pub mod config;
pub mod plot;
pub mod runner;

pub use config::{preset_configs, ExperimentConfig, Preset};
pub use plot::emit_plot;
pub use runner::{
    read_records_csv, read_summary_csv, run_experiment, summarize, write_records_csv,
    write_summary_csv, ExperimentRecord, SummaryRow,
};

/// Environment variable capping the worker pool size.
pub const THREADS_ENV: &str = "GEKRIG_THREADS";

/// Run `f` inside a rayon pool sized by `GEKRIG_THREADS` (default pool when
/// unset or invalid).
pub fn with_pool<T: Send>(f: impl FnOnce() -> T + Send) -> T {
    let requested = std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|v| *v > 0);
    match requested {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .expect("failed to build worker pool")
            .install(f),
        None => f(),
    }
}
