//! Experiment harness: synthetic data, dataset IO, attack and defence
//! evaluation, sweeps and report emission.

mod config;
mod dataset;
mod experiment;
mod report;
mod sweep;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{
    AttackEntry, DataSource, ExperimentConfig, NetworkConfig, NetworkPreset, SweepAxis, SweepConfig,
};
pub use dataset::{load_dataset, Dataset, DatasetManifest, ManifestEntry, Split};
pub use experiment::{
    evaluate_attack, prepare_trial, run_experiment, train_network, AttackStats, ReportRow, TrialData,
};
pub use report::{emit_report, read_json_report, ReportFormat, DEVIATIONS};
pub use sweep::{pearson, sweep, sweep_prepared, write_sweep_csv, SweepPoint};
pub use synth::{synth_dataset, write_synth, SynthSet};

use crate::attacks::AttackError;
use crate::defences::DefenceError;
use crate::gradnet::NetError;
use crate::imagekit::ImageError;
use crate::metrics::MetricError;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{}: file not found", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {msg}", path.display())]
    BadFormat { path: PathBuf, msg: String },
    #[error("{}: label {label} is not 0 or 1", path.display())]
    BadLabel { path: PathBuf, label: i64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("no report rows to emit")]
    EmptyReport,
    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<BenchError>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Defence(#[from] DefenceError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Image(#[from] ImageError),
}

impl BenchError {
    pub(crate) fn in_stage(self, stage: impl Into<String>) -> Self {
        BenchError::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }
}
