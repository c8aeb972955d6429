//! Scenario configs, canonical presets, persistence, and the selftest
//! corpus — the orchestration layer behind the `mtflow` CLI.

mod config;
mod presets;
mod scenario;
mod selftest;

pub use config::{
    AnalysisSpec, ConstraintSpec, DtSpec, GridSpec, NeckSpec, ScenarioConfig, SeedSpec,
    SnapshotSpec, StopSpec, SweepSpec,
};
pub use presets::{preset, presets, PRESET_NAMES};
pub use scenario::{run_scenario, ExitStatus, ScenarioOutcome};
pub use selftest::{selftest, SelfTestResult};

use std::sync::OnceLock;

/// Shared analysis pool, sized by `MTFLOW_THREADS` (unset or 0 means the
/// rayon default).
pub(crate) fn analysis_pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let threads = std::env::var("MTFLOW_THREADS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("failed to build the analysis thread pool")
    })
}
