//! End-to-end training run driven by a [`RunConfig`]: load data, train,
//! write the checkpoint, centroid image and schedule trace.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::io::checkpoint::{load_checkpoint, save_checkpoint, sha256_hex, Checkpoint, Provenance};
use crate::io::config::RunConfig;
use crate::io::{emit_centroid_grid, emit_schedule_trace, load_dataset};
use crate::model::{DataSet, MixtureModel};
use crate::trainer::{Diagnosis, HistoryRow, TrainState};

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const CENTROID_IMAGE_FILE: &str = "centroids.pgm";
pub const TRACE_FILE: &str = "schedule.csv";
pub const ABORT_SNAPSHOT_FILE: &str = "abort_snapshot.ckpt";

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Checkpoint to continue from.
    pub resume: Option<PathBuf>,
    /// Stop after this iteration instead of the configured total. The
    /// checkpoint written then can be resumed.
    pub stop_at: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub checkpoint: PathBuf,
    pub centroid_image: PathBuf,
    pub trace: PathBuf,
    pub model: MixtureModel,
    pub iteration: u64,
    pub history: Vec<HistoryRow>,
    pub diagnosis: Diagnosis,
}

/// Loads the configured data set, applying `data_limit`.
pub fn load_run_data(run: &RunConfig) -> Result<(DataSet, String)> {
    let bytes = std::fs::read(&run.data)?;
    let hash = sha256_hex(&bytes);
    let data = load_dataset(&run.data, Some(run.data_format))?;
    let data = match run.data_limit {
        Some(n) if n < data.len() => data.truncated(n)?,
        _ => data,
    };
    Ok((data, hash))
}

/// `(height, width)` of one centroid tile.
pub fn image_shape(run: &RunConfig, data: &DataSet) -> (usize, usize) {
    if let Some(shape) = run.image_shape {
        return shape;
    }
    match data.source().item_shape.as_slice() {
        [h, w] if h * w == data.dim() => (*h, *w),
        _ => (1, data.dim()),
    }
}

fn check_resume(run: &RunConfig, ckpt: &Checkpoint, data_hash: &str) -> Result<()> {
    let t = &run.train;
    if ckpt.resume.is_none() {
        return Err(Error::usage("checkpoint carries no resume state"));
    }
    if ckpt.seed != t.seed || ckpt.regime != t.regime || ckpt.sigma != t.sigma || ckpt.epsilon != t.epsilon {
        return Err(Error::usage("checkpoint was written by a different configuration"));
    }
    if ckpt.provenance.data_hash != data_hash {
        return Err(Error::usage("checkpoint was trained on different data"));
    }
    Ok(())
}

pub fn run_training(run: &RunConfig, options: &RunOptions) -> Result<RunArtifacts> {
    let config = &run.train;
    let (data, data_hash) = load_run_data(run)?;
    let provenance = Provenance {
        data_hash: data_hash.clone(),
        config_hash: run.hash.clone(),
    };
    std::fs::create_dir_all(&run.output_dir)?;
    let abort = |err: Error| -> Error {
        if let Error::NumericAbort { iteration, snapshot, .. } = &err {
            let ckpt = Checkpoint {
                regime: config.regime,
                topology: config.topology().expect("validated config"),
                model: (**snapshot).clone(),
                sigma: config.sigma,
                epsilon: config.epsilon,
                iteration: *iteration,
                seed: config.seed,
                provenance: provenance.clone(),
                resume: None,
            };
            if let Err(save_err) = save_checkpoint(run.output_dir.join(ABORT_SNAPSHOT_FILE), &ckpt) {
                return save_err;
            }
        }
        err
    };
    let mut state = match &options.resume {
        None => TrainState::new(config, &data).map_err(abort)?,
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            check_resume(run, &ckpt, &data_hash)?;
            let resume = ckpt.resume.as_ref().expect("checked above");
            TrainState::resume(config, &data, ckpt.model, ckpt.iteration, resume)?
        }
    };
    let until = options.stop_at.unwrap_or(config.iterations);
    state.run_until(config, &data, until).map_err(abort)?;

    let checkpoint = Checkpoint {
        regime: config.regime,
        topology: *state.topology(),
        model: state.model.clone(),
        sigma: config.sigma,
        epsilon: config.epsilon,
        iteration: state.t,
        seed: config.seed,
        provenance: provenance.clone(),
        resume: Some(state.resume_state()),
    };
    let out = |name: &str| run.output_dir.join(name);
    save_checkpoint(out(CHECKPOINT_FILE), &checkpoint)?;
    emit_centroid_grid(&state.model, state.topology(), image_shape(run, &data), out(CENTROID_IMAGE_FILE))?;
    emit_schedule_trace(&state.history, out(TRACE_FILE))?;
    let diagnosis = state
        .history
        .last()
        .map(|r| r.diagnosis)
        .unwrap_or(Diagnosis::Healthy);
    Ok(RunArtifacts {
        checkpoint: out(CHECKPOINT_FILE),
        centroid_image: out(CENTROID_IMAGE_FILE),
        trace: out(TRACE_FILE),
        model: state.model,
        iteration: state.t,
        history: state.history,
        diagnosis,
    })
}

/// Convenience wrapper: load a config file and run it to completion.
pub fn run_config_file(path: impl AsRef<Path>) -> Result<RunArtifacts> {
    let run = crate::io::load_run_config(path)?;
    run_training(&run, &RunOptions::default())
}
