//! File formats: IDX and CSV data, checkpoints, run configs, PGM images and
//! training traces.

pub mod checkpoint;
pub mod config;
pub mod csv;
pub mod idx;
pub mod pgm;
pub mod trace;

use std::path::Path;

pub use self::checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Provenance};
pub use self::config::{load_run_config, DataFormat, RunConfig};
pub use self::csv::{load_csv, save_csv};
pub use self::idx::{load_idx, write_idx};
pub use self::pgm::emit_centroid_grid;
pub use self::trace::emit_schedule_trace;

use crate::error::Result;
use crate::model::DataSet;

/// Loads a data file in the given format (or by extension when `None`).
pub fn load_dataset(path: impl AsRef<Path>, format: Option<DataFormat>) -> Result<DataSet> {
    let path = path.as_ref();
    match format.unwrap_or_else(|| DataFormat::from_path(path)) {
        DataFormat::Idx => load_idx(path),
        DataFormat::Csv => load_csv(path),
    }
}
