//! Configuration-driven pipeline around `ddfem-core`: snapshot generation,
//! basis training, reduced solves, basis-size sweeps and pinned
//! reproductions, each leaving reproducible artifacts and a manifest.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::{parse_config, ConfigError, PipelineConfig};
pub use error::{CliError, Result};

/// Sizes the global worker pool; 0 keeps the default (one per core). Only
/// the first call has an effect.
pub fn init_threads(n: usize) {
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
}
