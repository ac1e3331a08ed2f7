//! Dataset ingestion, configuration, and result persistence.

pub mod config;
pub mod dataset;
pub mod idx;
pub mod results;
pub mod synth;

pub use config::{DatasetSource, ExperimentConfig};
pub use dataset::{Dataset, Portion};
pub use idx::load_idx;
pub use results::{read_results, write_results, ResultRow};
pub use synth::{synth_dataset, SynthSpec};
