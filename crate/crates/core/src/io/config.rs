//! Run configuration file: flat TOML key/value pairs. Unknown keys are
//! rejected. Relative paths resolve against the file's directory.
//!
//! ```toml
//! data = "train-images.idx3-ubyte"
//! output_dir = "run"
//! components = 25
//! iterations = 24000
//! seed = 1
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::error::Result;
use crate::io::checkpoint::sha256_hex;
use crate::topology::{AnnealingSchedule, GridKind, Schedule, TauConvention};
use crate::trainer::{
    BatchSampling, CentroidInit, CollapseThresholds, InitSpec, LossRegime, TrainConfig,
};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Idx,
    Csv,
}

impl DataFormat {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "idx" => Some(DataFormat::Idx),
            "csv" => Some(DataFormat::Csv),
            _ => None,
        }
    }

    /// `.csv` files are CSV, everything else IDX.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => DataFormat::Csv,
            _ => DataFormat::Idx,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    data: PathBuf,
    data_format: Option<String>,
    data_limit: Option<usize>,
    output_dir: PathBuf,
    regime: Option<String>,
    components: usize,
    grid: Option<String>,
    periodic: Option<bool>,
    batch_size: Option<usize>,
    iterations: u64,
    sigma_start: Option<f64>,
    sigma_end: Option<f64>,
    epsilon_start: Option<f64>,
    epsilon_end: Option<f64>,
    t0: Option<u64>,
    t_inf: Option<u64>,
    t0_fraction: Option<f64>,
    t_inf_fraction: Option<f64>,
    tau_convention: Option<String>,
    init_precision: Option<f64>,
    centroid_init: Option<String>,
    centroid_init_scale: Option<f64>,
    train_weights: Option<bool>,
    train_precisions: Option<bool>,
    tied_spherical: Option<bool>,
    sampling: Option<String>,
    seed: Option<u64>,
    history_every: Option<u64>,
    probe_size: Option<usize>,
    image_height: Option<usize>,
    image_width: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub data: PathBuf,
    pub data_format: DataFormat,
    /// Use only the first `n` samples.
    pub data_limit: Option<usize>,
    pub output_dir: PathBuf,
    /// `(height, width)` for the centroid image.
    pub image_shape: Option<(usize, usize)>,
    /// SHA-256 of the config file contents.
    pub hash: String,
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

fn pick<T>(raw: Option<String>, default: T, parse: fn(&str) -> Option<T>, key: &str) -> std::result::Result<T, ConfigError> {
    match raw {
        None => Ok(default),
        Some(s) => parse(&s).ok_or_else(|| invalid(format!("unknown value {s:?} for {key}"))),
    }
}

fn window(
    abs: Option<u64>,
    frac: Option<f64>,
    default_frac: f64,
    iterations: u64,
    key: &str,
) -> std::result::Result<u64, ConfigError> {
    match (abs, frac) {
        (Some(_), Some(_)) => Err(invalid(format!("give either {key} or {key}_fraction, not both"))),
        (Some(t), None) => Ok(t),
        (None, f) => {
            let f = f.unwrap_or(default_frac);
            if !(0.0..=1.0).contains(&f) {
                return Err(invalid(format!("{key}_fraction must lie in [0, 1]")));
            }
            Ok((f * iterations as f64).round() as u64)
        }
    }
}

fn schedule(
    start: f64,
    end: f64,
    t0: u64,
    t_inf: u64,
    convention: TauConvention,
    what: &str,
) -> std::result::Result<Schedule, ConfigError> {
    if start == end {
        return Ok(Schedule::Constant(start));
    }
    AnnealingSchedule::with_convention(start, end, t0, t_inf, convention)
        .map(Schedule::Annealed)
        .map_err(|e| invalid(format!("{what}: {e}")))
}

/// Parses config text. `base` is the directory relative paths resolve against.
pub fn parse_run_config(text: &str, base: &Path) -> std::result::Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
    let seed = raw
        .seed
        .ok_or_else(|| invalid("seed is required for reproducible training"))?;
    let iterations = raw.iterations;
    let t0 = window(raw.t0, raw.t0_fraction, 0.3, iterations, "t0")?;
    let t_inf = window(raw.t_inf, raw.t_inf_fraction, 0.8, iterations, "t_inf")?;
    let convention = pick(raw.tau_convention, TauConvention::Continuous, TauConvention::parse, "tau_convention")?;
    let sigma = schedule(
        raw.sigma_start.unwrap_or(1.2),
        raw.sigma_end.unwrap_or(0.01),
        t0,
        t_inf,
        convention,
        "sigma",
    )?;
    let epsilon = schedule(
        raw.epsilon_start.unwrap_or(0.05),
        raw.epsilon_end.unwrap_or(0.009),
        t0,
        t_inf,
        convention,
        "epsilon",
    )?;
    let centroids = match raw.centroid_init.as_deref() {
        None | Some("uniform") => CentroidInit::SmallUniform(raw.centroid_init_scale.unwrap_or(0.01)),
        Some("data_mean") => CentroidInit::DataMean,
        Some(other) => return Err(invalid(format!("unknown value {other:?} for centroid_init"))),
    };
    let train = TrainConfig {
        regime: pick(raw.regime, LossRegime::Smoothed, LossRegime::parse, "regime")?,
        components: raw.components,
        grid: pick(raw.grid, GridKind::Square, GridKind::parse, "grid")?,
        periodic: raw.periodic.unwrap_or(true),
        batch_size: raw.batch_size.unwrap_or(1),
        iterations,
        sigma,
        epsilon,
        init: InitSpec {
            centroids,
            precision: raw.init_precision.unwrap_or(5.0),
        },
        train_weights: raw.train_weights.unwrap_or(true),
        train_precisions: raw.train_precisions.unwrap_or(true),
        tied_spherical: raw.tied_spherical.unwrap_or(false),
        sampling: pick(raw.sampling, BatchSampling::WithReplacement, BatchSampling::parse, "sampling")?,
        seed,
        history_every: raw.history_every.unwrap_or(100),
        probe_size: raw.probe_size.unwrap_or(200),
        collapse: CollapseThresholds::default(),
    };
    train.validate().map_err(|e| invalid(e.to_string()))?;

    let image_shape = match (raw.image_height, raw.image_width) {
        (Some(h), Some(w)) => Some((h, w)),
        (None, None) => None,
        _ => return Err(invalid("image_height and image_width go together")),
    };
    let data = base.join(&raw.data);
    let data_format = match raw.data_format {
        Some(s) => DataFormat::parse(&s).ok_or_else(|| invalid(format!("unknown data_format {s:?}")))?,
        None => DataFormat::from_path(&data),
    };
    Ok(RunConfig {
        train,
        data,
        data_format,
        data_limit: raw.data_limit,
        output_dir: base.join(raw.output_dir),
        image_shape,
        hash: sha256_hex(text.as_bytes()),
    })
}

pub fn load_run_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parse_run_config(&text, base)?)
}
