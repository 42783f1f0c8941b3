//! Gaussian mixture models trained by stochastic gradient descent, with an
//! annealed neighborhood-smoothed loss that turns a tied spherical mixture
//! into an energy-based self-organizing map.
//!
//! ```no_run
//! use somgmm::{train, DataSet, TrainConfig};
//! # fn main() -> somgmm::Result<()> {
//! let data = somgmm::io::load_idx("train-images.idx3-ubyte")?;
//! let config = TrainConfig::reference(25, 24_000, 1)?;
//! let outcome = train(&config, &data)?;
//! println!("{:?}", outcome.history.last());
//! # Ok(())
//! # }
//! ```

pub mod error;
pub mod inference;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod som;
pub mod synthetic;
pub mod topology;
pub mod trainer;

pub use error::{Error, Result};
pub use inference::{
    assign_cluster, assign_clusters, outlier_report, outlier_score, outlier_scores, sample,
    sample_parallel, Calibration, OutlierReport,
};
pub use model::{
    full_log_likelihood, max_component_log_likelihood, responsibilities, smoothed_log_likelihood,
    DataSet, DataSource, DataStats, MixtureModel, Responsibilities,
};
pub use som::{som_energy, som_update, verify_equivalence, EquivalenceReport, SomView};
pub use topology::{
    build_kernel, AnnealingSchedule, GridKind, GridTopology, NeighborhoodKernel, Schedule,
    TauConvention,
};
pub use trainer::{
    detect_collapse, train, BatchSampling, CentroidInit, CollapseThresholds, Diagnosis,
    Gradients, HistoryRow, InitSpec, LossRegime, ResumeState, TrainConfig, TrainOutcome,
    TrainState,
};
