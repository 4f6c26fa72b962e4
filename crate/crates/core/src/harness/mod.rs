//! Experiment engine: Γ calibration, the variant matrix, statistics and reports.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::genetic::GeneticError;
use crate::instance::InstanceError;
use crate::localsearch::LsError;
use crate::relatedness::RelatednessError;
use crate::splittour::SplitError;

pub mod calibration;
pub mod matrix;
pub mod reports;
pub mod stats;

pub use calibration::{calibration_protocol, CalibrationOptions, CalibrationRow, CalibrationSummary, CalibrationTable};
pub use matrix::{
    assign_references, load_matrix_instances, run_matrix, run_matrix_with, Budget, ExperimentMatrix, HeatmapSource,
    InstanceSource, ReferenceMode, RunRecord,
};
pub use reports::{compare_variants, emit_reports, ComparisonRow, ReportFiles};
pub use stats::{gap_percent, wilcoxon_paired, StatsError, WilcoxonResult};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("report: {0}")]
    Report(String),
    #[error(transparent)]
    Instance(#[from] InstanceError),
    #[error(transparent)]
    Relatedness(#[from] RelatednessError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    LocalSearch(#[from] LsError),
    #[error(transparent)]
    Genetic(#[from] GeneticError),
    #[error(transparent)]
    Stats(#[from] StatsError),
}

impl HarnessError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
