//! Synthetic datasets, experiment drivers and report tables for `ovcsort`.

pub mod datagen;
pub mod experiments;
pub mod report;

pub use datagen::{generate, DatasetSpec, Layout};
pub use experiments::{run_experiment, Params, EXPERIMENTS};
pub use report::{ReportFormat, Table};
