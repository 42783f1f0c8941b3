//! Using a trained mixture: outlier scores, cluster assignment, sampling.

use ndarray::Array2;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{argmax, DataSet, LogJoint, MixtureModel};

/// Default number of consecutive samples averaged into one window score.
pub const DEFAULT_WINDOW: usize = 10;

/// Single-sample max-component log-likelihood `max_k [log π_k + log p_k(x)]`.
/// Higher means more typical.
pub fn outlier_score(x: &[f64], model: &MixtureModel) -> Result<f64> {
    model.check_sample(x)?;
    let mut terms = vec![0.0; model.components()];
    LogJoint::new(model).eval(x, &mut terms);
    Ok(terms[argmax(&terms)])
}

/// Component with the largest `log π_k + log p_k(x)`; lowest index on ties.
pub fn assign_cluster(x: &[f64], model: &MixtureModel) -> Result<usize> {
    model.check_sample(x)?;
    let mut terms = vec![0.0; model.components()];
    LogJoint::new(model).eval(x, &mut terms);
    Ok(argmax(&terms))
}

pub fn assign_clusters(data: &DataSet, model: &MixtureModel) -> Result<Vec<usize>> {
    model.check_data(data)?;
    let joint = LogJoint::new(model);
    let mut terms = vec![0.0; model.components()];
    Ok(data
        .rows()
        .map(|x| {
            joint.eval(x, &mut terms);
            argmax(&terms)
        })
        .collect())
}

pub fn outlier_scores(data: &DataSet, model: &MixtureModel) -> Result<Vec<f64>> {
    model.check_data(data)?;
    let joint = LogJoint::new(model);
    let mut terms = vec![0.0; model.components()];
    Ok(data
        .rows()
        .map(|x| {
            joint.eval(x, &mut terms);
            terms[argmax(&terms)]
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierReport {
    /// Per-sample score in nats.
    pub scores: Vec<f64>,
    pub window: usize,
    /// Mean score of each run of `window` consecutive samples (last run may be shorter).
    pub window_means: Vec<f64>,
    /// Score below which a sample is flagged, when a reference batch was given.
    pub threshold: Option<f64>,
    /// `true` marks an outlier.
    pub verdicts: Option<Vec<bool>>,
}

impl OutlierReport {
    /// Window mean covering sample `n`.
    pub fn window_mean_of(&self, n: usize) -> f64 {
        self.window_means[n / self.window]
    }
}

/// Reference batch plus the percentile of its scores used as threshold.
pub struct Calibration<'a> {
    pub reference: &'a DataSet,
    /// In `[0, 100]`.
    pub percentile: f64,
}

pub fn outlier_report(
    data: &DataSet,
    model: &MixtureModel,
    window: usize,
    calibration: Option<Calibration<'_>>,
) -> Result<OutlierReport> {
    if window == 0 {
        return Err(Error::usage("window size must be at least 1"));
    }
    let scores = outlier_scores(data, model)?;
    let window_means = scores
        .chunks(window)
        .map(|c| c.iter().sum::<f64>() / c.len() as f64)
        .collect();
    let (threshold, verdicts) = match calibration {
        Some(cal) => {
            if !(0.0..=100.0).contains(&cal.percentile) {
                return Err(Error::usage("percentile must lie in [0, 100]"));
            }
            let mut reference = outlier_scores(cal.reference, model)?;
            reference.sort_by(|a, b| a.total_cmp(b));
            let threshold = percentile(&reference, cal.percentile);
            let verdicts = scores.iter().map(|s| *s < threshold).collect();
            (Some(threshold), Some(verdicts))
        }
        None => (None, None),
    };
    Ok(OutlierReport {
        scores,
        window,
        window_means,
        threshold,
        verdicts,
    })
}

/// Linear-interpolated percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Draws `n` samples: a component (uniform for tied models, by weight
/// otherwise), then each coordinate from `N(μ_ki, 1/d_ki²)`.
pub fn sample<R: Rng + ?Sized>(model: &MixtureModel, n: usize, rng: &mut R) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::usage("sample count must be at least 1"));
    }
    let mut out = Array2::zeros((n, model.dim()));
    draw_into(model, rng, out.as_slice_mut().expect("standard layout"))?;
    Ok(out)
}

fn draw_into<R: Rng + ?Sized>(model: &MixtureModel, rng: &mut R, out: &mut [f64]) -> Result<()> {
    let k = model.components();
    let dim = model.dim();
    let weighted = if model.is_tied() {
        None
    } else {
        Some(
            WeightedIndex::new(model.weights().iter().copied())
                .map_err(|e| Error::input(format!("invalid weights for sampling: {e}")))?,
        )
    };
    for row in out.chunks_mut(dim) {
        let c = match &weighted {
            None => rng.random_range(0..k),
            Some(w) => w.sample(rng),
        };
        let mu = model.centroid(c);
        for i in 0..dim {
            let z: f64 = rng.sample(StandardNormal);
            row[i] = mu[i] + z / model.precision_roots()[[c, i]];
        }
    }
    Ok(())
}

/// Parallel sampling with one ChaCha stream per task. Task `t` draws rows
/// `[t·chunk, (t+1)·chunk)` from `ChaCha8Rng::seed_from_u64(seed)` on stream
/// `t`, so the output depends only on `(seed, n, tasks)`.
pub fn sample_parallel(model: &MixtureModel, n: usize, seed: u64, tasks: usize) -> Result<Array2<f64>> {
    if n == 0 {
        return Err(Error::usage("sample count must be at least 1"));
    }
    let tasks = tasks.clamp(1, n);
    let dim = model.dim();
    let chunk = n.div_ceil(tasks);
    let mut out = Array2::zeros((n, dim));
    let buf = out.as_slice_mut().expect("standard layout");
    std::thread::scope(|scope| -> Result<()> {
        let handles: Vec<_> = buf
            .chunks_mut(chunk * dim)
            .enumerate()
            .map(|(t, part)| {
                scope.spawn(move || {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(t as u64);
                    draw_into(model, &mut rng, part)
                })
            })
            .collect();
        for h in handles {
            h.join().expect("sampling task panicked")?;
        }
        Ok(())
    })?;
    Ok(out)
}
