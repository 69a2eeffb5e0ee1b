//! File formats: binary datasets, TUM trajectories and run configuration.

pub mod config;
pub mod dataset;
pub mod trajectory_file;

pub use config::{ConfigError, RunConfig, SimConfig};
pub use dataset::{open_dataset, read_dataset, write_dataset, DatasetError, DatasetHeader, DatasetReader, DatasetWriter};
pub use trajectory_file::{format_tum, parse_tum, read_tum, write_tum, TrajectoryFileError};
