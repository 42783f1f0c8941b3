//! Versioned checkpoint container.
//!
//! ```text
//! somgmm-checkpoint v1
//! key=value            (text metadata, one per line)
//! ...
//! checksum=<sha256 hex of everything above this line plus the payload>
//! <payload: little-endian f64 weights, centroids, precision roots,
//!  then u64 sampler order and probe indices>
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::error::Result;
use crate::model::MixtureModel;
use crate::topology::{AnnealingSchedule, GridKind, GridTopology, Schedule, TauConvention};
use crate::trainer::{LossRegime, ResumeState};

pub const CHECKPOINT_MAGIC: &str = "somgmm-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CheckpointError {
    #[error("not a checkpoint file")]
    NotACheckpoint,
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    Version { found: String, expected: u32 },
    #[error("checkpoint checksum mismatch (file truncated or corrupted)")]
    Checksum,
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    /// SHA-256 of the training data file.
    pub data_hash: String,
    /// SHA-256 of the run configuration file.
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub regime: LossRegime,
    pub topology: GridTopology,
    pub model: MixtureModel,
    pub sigma: Schedule,
    pub epsilon: Schedule,
    pub iteration: u64,
    pub seed: u64,
    pub provenance: Provenance,
    /// Present when the checkpoint can continue a training run.
    pub resume: Option<ResumeState>,
}

fn encode_schedule(s: &Schedule) -> String {
    match s {
        Schedule::Constant(v) => format!("constant:{v}"),
        Schedule::Annealed(a) => format!(
            "annealed:{},{},{},{},{}",
            a.start(),
            a.end(),
            a.t0(),
            a.t_inf(),
            a.convention().as_str()
        ),
    }
}

fn decode_schedule(s: &str) -> Option<Schedule> {
    if let Some(v) = s.strip_prefix("constant:") {
        return v.parse().ok().map(Schedule::Constant);
    }
    let parts: Vec<&str> = s.strip_prefix("annealed:")?.split(',').collect();
    if parts.len() != 5 {
        return None;
    }
    AnnealingSchedule::with_convention(
        parts[0].parse().ok()?,
        parts[1].parse().ok()?,
        parts[2].parse().ok()?,
        parts[3].parse().ok()?,
        TauConvention::parse(parts[4])?,
    )
    .ok()
    .map(Schedule::Annealed)
}

fn digest(header: &[u8], payload: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(header);
    h.update(payload);
    hex::encode(h.finalize())
}

pub fn encode_checkpoint(c: &Checkpoint) -> Vec<u8> {
    let m = &c.model;
    let mut header = format!("{CHECKPOINT_MAGIC} v{CHECKPOINT_VERSION}\n");
    let mut line = |k: &str, v: String| {
        header.push_str(k);
        header.push('=');
        header.push_str(&v);
        header.push('\n');
    };
    line("regime", c.regime.as_str().into());
    line("grid", c.topology.kind().as_str().into());
    line("periodic", c.topology.is_periodic().to_string());
    line("components", m.components().to_string());
    line("dim", m.dim().to_string());
    line("tied_spherical", m.is_tied().to_string());
    line("sigma_schedule", encode_schedule(&c.sigma));
    line("epsilon_schedule", encode_schedule(&c.epsilon));
    line("iteration", c.iteration.to_string());
    line("seed", c.seed.to_string());
    line("data_hash", c.provenance.data_hash.clone());
    line("config_hash", c.provenance.config_hash.clone());

    let mut payload = Vec::new();
    for v in m.weights().iter().chain(m.centroids().iter()).chain(m.precision_roots().iter()) {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    match &c.resume {
        Some(r) => {
            line("resume", "true".into());
            line("rng_word_pos", r.rng_word_pos.to_string());
            line(
                "kernel_sigma",
                r.kernel_sigma.map_or("none".into(), |s| s.to_string()),
            );
            line("sampler_len", r.sampler_order.len().to_string());
            line("sampler_cursor", r.sampler_cursor.to_string());
            line("probe_len", r.probe.len().to_string());
            for i in r.sampler_order.iter().chain(&r.probe) {
                payload.extend_from_slice(&(*i as u64).to_le_bytes());
            }
        }
        None => line("resume", "false".into()),
    }
    line("payload_bytes", payload.len().to_string());

    let checksum = digest(header.as_bytes(), &payload);
    let mut out = header.into_bytes();
    out.extend_from_slice(format!("checksum={checksum}\n").as_bytes());
    out.extend_from_slice(&payload);
    out
}

struct Header<'a> {
    entries: Vec<(&'a str, &'a str)>,
}

impl<'a> Header<'a> {
    fn get(&self, key: &str) -> std::result::Result<&'a str, CheckpointError> {
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| *v)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing key {key}")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> std::result::Result<T, CheckpointError> {
        self.get(key)?
            .parse()
            .map_err(|_| CheckpointError::Malformed(format!("bad value for {key}")))
    }
}

fn next_line(bytes: &[u8], pos: &mut usize) -> Option<std::result::Result<String, CheckpointError>> {
    let rest = bytes.get(*pos..)?;
    let end = rest.iter().position(|b| *b == b'\n')?;
    *pos += end + 1;
    Some(
        std::str::from_utf8(&rest[..end])
            .map(str::to_owned)
            .map_err(|_| CheckpointError::Malformed("header is not UTF-8".into())),
    )
}

pub fn decode_checkpoint(bytes: &[u8]) -> std::result::Result<Checkpoint, CheckpointError> {
    let mut pos = 0;
    let first = next_line(bytes, &mut pos).ok_or(CheckpointError::NotACheckpoint)??;
    let version = first
        .strip_prefix(CHECKPOINT_MAGIC)
        .and_then(|r| r.strip_prefix(" v"))
        .ok_or(CheckpointError::NotACheckpoint)?;
    if version != CHECKPOINT_VERSION.to_string() {
        return Err(CheckpointError::Version {
            found: version.to_string(),
            expected: CHECKPOINT_VERSION,
        });
    }
    let mut lines = Vec::new();
    let (header_end, checksum) = loop {
        let start = pos;
        let line = next_line(bytes, &mut pos).ok_or(CheckpointError::Checksum)??;
        if let Some(sum) = line.strip_prefix("checksum=") {
            break (start, sum.to_string());
        }
        lines.push(line);
    };
    let payload = &bytes[pos..];
    if digest(&bytes[..header_end], payload) != checksum {
        return Err(CheckpointError::Checksum);
    }

    let entries = lines
        .iter()
        .map(|l| {
            l.split_once('=')
                .ok_or_else(|| CheckpointError::Malformed(format!("bad header line {l:?}")))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let h = Header { entries };
    let bad = |what: &str| CheckpointError::Malformed(what.to_string());

    let regime = LossRegime::parse(h.get("regime")?).ok_or_else(|| bad("regime"))?;
    let kind = GridKind::parse(h.get("grid")?).ok_or_else(|| bad("grid"))?;
    let k: usize = h.parse("components")?;
    let dim: usize = h.parse("dim")?;
    let topology = GridTopology::new(kind, k, h.parse("periodic")?).map_err(|e| bad(&e.to_string()))?;
    let tied: bool = h.parse("tied_spherical")?;
    let sigma = decode_schedule(h.get("sigma_schedule")?).ok_or_else(|| bad("sigma_schedule"))?;
    let epsilon = decode_schedule(h.get("epsilon_schedule")?).ok_or_else(|| bad("epsilon_schedule"))?;
    let payload_bytes: usize = h.parse("payload_bytes")?;
    if payload_bytes != payload.len() {
        return Err(CheckpointError::Checksum);
    }

    let n_float = k + 2 * k * dim;
    if payload.len() < 8 * n_float {
        return Err(bad("payload too short"));
    }
    let words: Vec<[u8; 8]> = payload
        .chunks_exact(8)
        .map(|c| c.try_into().expect("chunk of 8"))
        .collect();
    let floats: Vec<f64> = words[..n_float].iter().map(|w| f64::from_le_bytes(*w)).collect();
    let weights = Array1::from(floats[..k].to_vec());
    let centroids = Array2::from_shape_vec((k, dim), floats[k..k + k * dim].to_vec()).map_err(|_| bad("shape"))?;
    let roots = Array2::from_shape_vec((k, dim), floats[k + k * dim..].to_vec()).map_err(|_| bad("shape"))?;
    let model = MixtureModel::from_parts_unchecked(weights, centroids, roots, tied);
    model.validate().map_err(|e| bad(&e.to_string()))?;

    let resume = if h.parse::<bool>("resume")? {
        let sampler_len: usize = h.parse("sampler_len")?;
        let probe_len: usize = h.parse("probe_len")?;
        if words.len() != n_float + sampler_len + probe_len {
            return Err(bad("payload length does not match header"));
        }
        let ints: Vec<usize> = words[n_float..]
            .iter()
            .map(|w| u64::from_le_bytes(*w) as usize)
            .collect();
        let kernel_sigma = match h.get("kernel_sigma")? {
            "none" => None,
            s => Some(s.parse().map_err(|_| bad("kernel_sigma"))?),
        };
        Some(ResumeState {
            rng_word_pos: h.parse("rng_word_pos")?,
            kernel_sigma,
            sampler_order: ints[..sampler_len].to_vec(),
            sampler_cursor: h.parse("sampler_cursor")?,
            probe: ints[sampler_len..].to_vec(),
        })
    } else {
        if words.len() != n_float {
            return Err(bad("payload length does not match header"));
        }
        None
    };

    Ok(Checkpoint {
        regime,
        topology,
        model,
        sigma,
        epsilon,
        iteration: h.parse("iteration")?,
        seed: h.parse("seed")?,
        provenance: Provenance {
            data_hash: h.get("data_hash")?.to_string(),
            config_hash: h.get("config_hash")?.to_string(),
        },
        resume,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, checkpoint: &Checkpoint) -> Result<()> {
    std::fs::write(path, encode_checkpoint(checkpoint))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    Ok(decode_checkpoint(&bytes)?)
}

/// Hex SHA-256 of a byte string, used for provenance hashes.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
