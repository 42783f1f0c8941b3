//! Stochastic gradient training of the mixture under the exact,
//! max-component or smoothed objective.
//!
//! Gradients are gradients of the maximized objective and the parameter
//! update is an ascent step; the logged `loss` is the negated objective so
//! that it decreases during training.

use std::collections::VecDeque;
use std::fmt;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{
    self, argmax, normalize_log_terms, row_slice, smooth_terms, DataSet, DataStats, LogJoint,
    MixtureModel, PRECISION_ROOT_MAX, PRECISION_ROOT_MIN, WEIGHT_FLOOR,
};
use crate::topology::{
    build_kernel, AnnealingSchedule, GridKind, GridTopology, NeighborhoodKernel, Schedule,
};

/// Relative change in σ that triggers a kernel rebuild.
const KERNEL_REFRESH_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossRegime {
    Exact,
    MaxComponent,
    Smoothed,
}

impl LossRegime {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossRegime::Exact => "exact",
            LossRegime::MaxComponent => "max_component",
            LossRegime::Smoothed => "smoothed",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "exact" => Some(LossRegime::Exact),
            "max_component" => Some(LossRegime::MaxComponent),
            "smoothed" => Some(LossRegime::Smoothed),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum BatchSampling {
    /// Independent uniform draws.
    #[default]
    WithReplacement,
    /// A fresh random permutation of the data every epoch.
    EpochPermutation,
}

impl BatchSampling {
    pub fn as_str(&self) -> &'static str {
        match self {
            BatchSampling::WithReplacement => "replacement",
            BatchSampling::EpochPermutation => "epoch",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "replacement" => Some(BatchSampling::WithReplacement),
            "epoch" => Some(BatchSampling::EpochPermutation),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CentroidInit {
    /// Independent uniform draws in `[-scale, scale]`.
    SmallUniform(f64),
    /// Every centroid at the data mean.
    DataMean,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitSpec {
    pub centroids: CentroidInit,
    /// Initial precision `d²`, identical for every component and coordinate.
    pub precision: f64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            centroids: CentroidInit::SmallUniform(0.01),
            precision: 5.0,
        }
    }
}

/// Thresholds for `detect_collapse`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollapseThresholds {
    /// Max pairwise centroid distance, as a fraction of the data scale.
    pub centroid_spread: f64,
    /// Max deviation of responsibilities from `1/K`.
    pub uniformity: f64,
    /// Weight above which one component is said to have taken over.
    pub single_weight: f64,
    /// A component is alive when its weight exceeds `alive_factor / K`.
    pub alive_factor: f64,
    /// Sparse when fewer than `ceil(alive_fraction · K)` components are alive.
    pub alive_fraction: f64,
}

impl Default for CollapseThresholds {
    fn default() -> Self {
        CollapseThresholds {
            centroid_spread: 1e-3,
            uniformity: 1e-3,
            single_weight: 0.95,
            alive_factor: 0.1,
            alive_fraction: 0.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub regime: LossRegime,
    pub components: usize,
    pub grid: GridKind,
    pub periodic: bool,
    pub batch_size: usize,
    pub iterations: u64,
    pub sigma: Schedule,
    pub epsilon: Schedule,
    pub init: InitSpec,
    pub train_weights: bool,
    pub train_precisions: bool,
    pub tied_spherical: bool,
    pub sampling: BatchSampling,
    pub seed: u64,
    /// History cadence in iterations.
    pub history_every: u64,
    /// Size of the moving window of recent samples used for loss logging.
    pub probe_size: usize,
    pub collapse: CollapseThresholds,
}

impl TrainConfig {
    /// Reference hyperparameters: square periodic grid, batch size 1,
    /// σ 1.2 → 0.01 and ε 0.05 → 0.009 annealed between 0.3·T and 0.8·T,
    /// initial precision 5, centroids uniform in ±0.01.
    pub fn reference(components: usize, iterations: u64, seed: u64) -> Result<Self> {
        let t0 = (0.3 * iterations as f64).round() as u64;
        let t_inf = (0.8 * iterations as f64).round() as u64;
        Ok(TrainConfig {
            regime: LossRegime::Smoothed,
            components,
            grid: GridKind::Square,
            periodic: true,
            batch_size: 1,
            iterations,
            sigma: Schedule::Annealed(AnnealingSchedule::new(1.2, 0.01, t0, t_inf)?),
            epsilon: Schedule::Annealed(AnnealingSchedule::new(0.05, 0.009, t0, t_inf)?),
            init: InitSpec::default(),
            train_weights: true,
            train_precisions: true,
            tied_spherical: false,
            sampling: BatchSampling::WithReplacement,
            seed,
            history_every: 100,
            probe_size: 200,
            collapse: CollapseThresholds::default(),
        })
    }

    pub fn topology(&self) -> Result<GridTopology> {
        GridTopology::new(self.grid, self.components, self.periodic)
    }

    pub fn validate(&self) -> Result<()> {
        self.topology()?;
        if self.batch_size == 0 {
            return Err(Error::usage("batch_size must be at least 1"));
        }
        if self.iterations == 0 {
            return Err(Error::usage("iterations must be at least 1"));
        }
        if self.history_every == 0 {
            return Err(Error::usage("history cadence must be at least 1"));
        }
        if self.probe_size == 0 {
            return Err(Error::usage("probe size must be at least 1"));
        }
        self.sigma.validate("sigma")?;
        self.epsilon.validate("epsilon")?;
        let p = self.init.precision;
        let (lo, hi) = (PRECISION_ROOT_MIN * PRECISION_ROOT_MIN, PRECISION_ROOT_MAX * PRECISION_ROOT_MAX);
        if !(lo..=hi).contains(&p) {
            return Err(Error::usage(format!(
                "initial precision {p} outside [{lo}, {hi}]"
            )));
        }
        if let CentroidInit::SmallUniform(s) = self.init.centroids {
            if !(s.is_finite() && s >= 0.0) {
                return Err(Error::usage("centroid init scale must be finite and non-negative"));
            }
        }
        Ok(())
    }

    pub fn sigma_at(&self, t: u64) -> f64 {
        self.sigma.value_at(t)
    }

    pub fn epsilon_at(&self, t: u64) -> f64 {
        self.epsilon.value_at(t)
    }

    fn weights_frozen(&self) -> bool {
        self.tied_spherical || !self.train_weights
    }

    fn precisions_frozen(&self) -> bool {
        self.tied_spherical || !self.train_precisions
    }
}

/// Initial model: equal weights, uniform precision, centroids per `config.init`.
pub fn init_model<R: Rng>(config: &TrainConfig, data: &DataSet, rng: &mut R) -> Result<MixtureModel> {
    config.validate()?;
    let k = config.components;
    let dim = data.dim();
    let centroids = match config.init.centroids {
        CentroidInit::SmallUniform(scale) => {
            Array2::from_shape_fn((k, dim), |_| rng.random_range(-1.0..=1.0) * scale)
        }
        CentroidInit::DataMean => {
            let mean = data.stats().mean;
            Array2::from_shape_fn((k, dim), |(_, i)| mean[i])
        }
    };
    let root = config.init.precision.sqrt();
    if config.tied_spherical {
        MixtureModel::tied(centroids, root)
    } else {
        MixtureModel::new(
            Array1::from_elem(k, 1.0 / k as f64),
            centroids,
            Array2::from_elem((k, dim), root),
        )
    }
}

/// Partial derivatives of an objective with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub centroids: Array2<f64>,
    pub precision_roots: Array2<f64>,
    pub weights: Array1<f64>,
}

impl Gradients {
    fn zeros(k: usize, dim: usize) -> Self {
        Gradients {
            centroids: Array2::zeros((k, dim)),
            precision_roots: Array2::zeros((k, dim)),
            weights: Array1::zeros(k),
        }
    }

    fn scale(&mut self, factor: f64) {
        self.centroids.mapv_inplace(|v| v / factor);
        self.precision_roots.mapv_inplace(|v| v / factor);
        self.weights.mapv_inplace(|v| v / factor);
    }

    /// Rate of change of the weights under "ascent step, then renormalize",
    /// i.e. `g − π Σ_j g_j`.
    pub fn projected_weights(&self, model: &MixtureModel) -> Array1<f64> {
        let total = self.weights.sum();
        &self.weights - &(model.weights() * total)
    }

    /// Euclidean norm over all parameters, with the weight part projected.
    pub fn projected_norm(&self, model: &MixtureModel) -> f64 {
        let sq = |a: f64, v: &f64| a + v * v;
        (self.centroids.iter().fold(0.0, sq)
            + self.precision_roots.iter().fold(0.0, sq)
            + self.projected_weights(model).iter().fold(0.0, sq))
        .sqrt()
    }

    fn accumulate(&mut self, model: &MixtureModel, x: &[f64], j: usize, coef: f64) {
        let mu = model.centroid(j);
        let d = row_slice(model.precision_roots().view(), j);
        let mut gm = self.centroids.row_mut(j);
        let gm = gm.as_slice_mut().expect("standard layout");
        let mut gd = self.precision_roots.row_mut(j);
        let gd = gd.as_slice_mut().expect("standard layout");
        for i in 0..x.len() {
            let r = x[i] - mu[i];
            gm[i] += (coef * (d[i] * d[i])) * r;
            gd[i] += coef * (1.0 / d[i] - d[i] * r * r);
        }
        self.weights[j] += coef / model.weights()[j];
    }
}

fn check_batch(batch: &ArrayView2<'_, f64>, model: &MixtureModel) -> Result<()> {
    if batch.nrows() == 0 {
        return Err(Error::usage("gradient batch is empty"));
    }
    if batch.ncols() != model.dim() {
        return Err(Error::usage(format!(
            "batch has dimension {}, model expects {}",
            batch.ncols(),
            model.dim()
        )));
    }
    Ok(())
}

fn batch_rows<'a>(batch: &'a ArrayView2<'a, f64>) -> impl Iterator<Item = &'a [f64]> + 'a {
    (0..batch.nrows()).map(move |n| row_slice(batch.view(), n))
}

/// Gradients of the exact log-likelihood, weighted by responsibilities.
pub fn grad_exact(batch: ArrayView2<'_, f64>, model: &MixtureModel) -> Result<Gradients> {
    check_batch(&batch, model)?;
    let k = model.components();
    let joint = LogJoint::new(model);
    let mut grads = Gradients::zeros(k, model.dim());
    let mut terms = vec![0.0; k];
    let mut gamma = vec![0.0; k];
    for x in batch_rows(&batch) {
        joint.eval(x, &mut terms);
        normalize_log_terms(&terms, &mut gamma);
        for (j, g) in gamma.iter().enumerate() {
            if *g != 0.0 {
                grads.accumulate(model, x, j, *g);
            }
        }
    }
    grads.scale(batch.nrows() as f64);
    Ok(grads)
}

/// Gradients of the smoothed objective. Each sample contributes through the
/// winning row `k*` only, with coupling `g_{k*j}` to component `j`.
pub fn grad_smoothed(
    batch: ArrayView2<'_, f64>,
    model: &MixtureModel,
    kernel: &NeighborhoodKernel,
) -> Result<Gradients> {
    model::check_kernel(model, kernel)?;
    hard_gradients(batch, model, Some(kernel))
}

/// Gradients of the max-component objective (hard assignment to the winner).
pub fn grad_max_component(batch: ArrayView2<'_, f64>, model: &MixtureModel) -> Result<Gradients> {
    hard_gradients(batch, model, None)
}

fn hard_gradients(
    batch: ArrayView2<'_, f64>,
    model: &MixtureModel,
    kernel: Option<&NeighborhoodKernel>,
) -> Result<Gradients> {
    check_batch(&batch, model)?;
    let k = model.components();
    let joint = LogJoint::new(model);
    let mut grads = Gradients::zeros(k, model.dim());
    let mut terms = vec![0.0; k];
    let mut smoothed = vec![0.0; k];
    for x in batch_rows(&batch) {
        joint.eval(x, &mut terms);
        match kernel.filter(|kern| !kern.is_identity()) {
            Some(kern) => {
                smooth_terms(kern, &terms, &mut smoothed);
                let winner = argmax(&smoothed);
                for j in 0..k {
                    let coef = kern.matrix()[[winner, j]];
                    if coef != 0.0 {
                        grads.accumulate(model, x, j, coef);
                    }
                }
            }
            None => grads.accumulate(model, x, argmax(&terms), 1.0),
        }
    }
    grads.scale(batch.nrows() as f64);
    Ok(grads)
}

/// Gradients for the given regime. `kernel` is used by the smoothed regime only.
pub fn regime_gradients(
    regime: LossRegime,
    batch: ArrayView2<'_, f64>,
    model: &MixtureModel,
    kernel: Option<&NeighborhoodKernel>,
) -> Result<Gradients> {
    match regime {
        LossRegime::Exact => grad_exact(batch, model),
        LossRegime::MaxComponent => grad_max_component(batch, model),
        LossRegime::Smoothed => {
            let kernel = kernel.ok_or_else(|| Error::usage("smoothed regime requires a kernel"))?;
            grad_smoothed(batch, model, kernel)
        }
    }
}

/// Restores the parameter invariants after an update: weights on the
/// simplex with a floor, precision roots clamped, tied models re-tied.
pub fn enforce_constraints(model: &mut MixtureModel) {
    let k = model.components();
    if model.is_tied() {
        model.weights_mut().fill(1.0 / k as f64);
        let roots = model.precision_roots_mut();
        let first = roots[[0, 0]];
        if roots.iter().any(|d| *d != first) {
            let mean = roots.sum() / roots.len() as f64;
            roots.fill(mean);
        }
    } else {
        let weights = model.weights_mut();
        let sum = weights.sum();
        if sum != 1.0 {
            weights.mapv_inplace(|w| w / sum);
        }
        if weights.iter().any(|w| *w < WEIGHT_FLOOR) {
            weights.mapv_inplace(|w| w.max(WEIGHT_FLOOR));
            let sum = weights.sum();
            weights.mapv_inplace(|w| w / sum);
        }
    }
    model
        .precision_roots_mut()
        .mapv_inplace(|d| d.clamp(PRECISION_ROOT_MIN, PRECISION_ROOT_MAX));
}

/// Ascent update `θ ← θ + lr·∇θ` for the trainable parameter groups.
pub fn apply_gradients(
    model: &mut MixtureModel,
    grads: &Gradients,
    lr: f64,
    train_precisions: bool,
    train_weights: bool,
) {
    fn step(param: &mut [f64], grad: &[f64], lr: f64) {
        for (p, g) in param.iter_mut().zip(grad) {
            *p += lr * g;
        }
    }
    step(
        model.centroids_mut().as_slice_mut().expect("standard layout"),
        grads.centroids.as_slice().expect("standard layout"),
        lr,
    );
    if train_precisions && !model.is_tied() {
        step(
            model.precision_roots_mut().as_slice_mut().expect("standard layout"),
            grads.precision_roots.as_slice().expect("standard layout"),
            lr,
        );
    }
    if train_weights && !model.is_tied() {
        step(
            model.weights_mut().as_slice_mut().expect("contiguous"),
            grads.weights.as_slice().expect("contiguous"),
            lr,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Diagnosis {
    Healthy,
    Degenerate,
    SingleComponent,
    Sparse,
}

impl Diagnosis {
    pub fn as_str(&self) -> &'static str {
        match self {
            Diagnosis::Healthy => "healthy",
            Diagnosis::Degenerate => "degenerate",
            Diagnosis::SingleComponent => "single_component",
            Diagnosis::Sparse => "sparse",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "healthy" => Some(Diagnosis::Healthy),
            "degenerate" => Some(Diagnosis::Degenerate),
            "single_component" => Some(Diagnosis::SingleComponent),
            "sparse" => Some(Diagnosis::Sparse),
            _ => None,
        }
    }
}

impl fmt::Display for Diagnosis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Classifies the model against the known unwanted optima: identical
/// components (degenerate), one component holding nearly all weight, or
/// too few components with non-negligible weight.
pub fn detect_collapse(
    model: &MixtureModel,
    stats: &DataStats,
    probe: &DataSet,
    thresholds: &CollapseThresholds,
) -> Result<Diagnosis> {
    model.check_data(probe)?;
    let k = model.components();
    if k < 2 {
        return Ok(Diagnosis::Healthy);
    }
    let mut spread: f64 = 0.0;
    for a in 0..k {
        for b in a + 1..k {
            let d2: f64 = model
                .centroid(a)
                .iter()
                .zip(model.centroid(b))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            spread = spread.max(d2.sqrt());
        }
    }
    if spread < thresholds.centroid_spread * stats.scale() {
        let gamma = model::responsibilities(probe, model)?;
        let uniform = 1.0 / k as f64;
        if gamma.gamma.iter().all(|g| (g - uniform).abs() <= thresholds.uniformity) {
            return Ok(Diagnosis::Degenerate);
        }
    }
    let weights = model.weights();
    if weights.iter().any(|w| *w > thresholds.single_weight) {
        return Ok(Diagnosis::SingleComponent);
    }
    let alive = weights
        .iter()
        .filter(|w| **w > thresholds.alive_factor / k as f64)
        .count();
    let needed = (thresholds.alive_fraction * k as f64).ceil() as usize;
    if alive < needed {
        return Ok(Diagnosis::Sparse);
    }
    Ok(Diagnosis::Healthy)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HistoryRow {
    pub t: u64,
    /// Negated objective on the probe window.
    pub loss: f64,
    pub sigma: f64,
    pub epsilon: f64,
    pub diagnosis: Diagnosis,
}

/// State that must survive a checkpoint for training to resume bit-exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct ResumeState {
    pub rng_word_pos: u128,
    pub kernel_sigma: Option<f64>,
    pub sampler_order: Vec<usize>,
    pub sampler_cursor: usize,
    pub probe: Vec<usize>,
}

pub struct TrainState {
    pub model: MixtureModel,
    pub t: u64,
    pub history: Vec<HistoryRow>,
    rng: ChaCha8Rng,
    topology: GridTopology,
    kernel: Option<NeighborhoodKernel>,
    order: Vec<usize>,
    cursor: usize,
    probe: VecDeque<usize>,
    stats: DataStats,
}

impl TrainState {
    /// Fresh state: seeds the generator, initializes the model and logs row `t = 0`.
    pub fn new(config: &TrainConfig, data: &DataSet) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let model = init_model(config, data, &mut rng)?;
        let probe = (0..config.probe_size.min(data.len())).collect();
        let mut state = TrainState {
            model,
            t: 0,
            history: Vec::new(),
            rng,
            topology: config.topology()?,
            kernel: None,
            order: Vec::new(),
            cursor: 0,
            probe,
            stats: data.stats(),
        };
        state.record(config, data)?;
        Ok(state)
    }

    /// Rebuilds a state from a checkpointed model and resume record. No
    /// history row is logged for the resume point.
    pub fn resume(
        config: &TrainConfig,
        data: &DataSet,
        model: MixtureModel,
        t: u64,
        resume: &ResumeState,
    ) -> Result<Self> {
        config.validate()?;
        model.check_data(data)?;
        if model.components() != config.components {
            return Err(Error::usage("checkpoint component count does not match config"));
        }
        if t > config.iterations {
            return Err(Error::usage("checkpoint iteration is past the configured total"));
        }
        if resume.probe.iter().chain(&resume.sampler_order).any(|i| *i >= data.len()) {
            return Err(Error::usage("checkpoint refers to samples outside the data set"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        rng.set_word_pos(resume.rng_word_pos);
        let topology = config.topology()?;
        let kernel = resume
            .kernel_sigma
            .map(|s| build_kernel(&topology, s))
            .transpose()?;
        Ok(TrainState {
            model,
            t,
            history: Vec::new(),
            rng,
            topology,
            kernel,
            order: resume.sampler_order.clone(),
            cursor: resume.sampler_cursor,
            probe: resume.probe.iter().copied().collect(),
            stats: data.stats(),
        })
    }

    pub fn resume_state(&self) -> ResumeState {
        ResumeState {
            rng_word_pos: self.rng.get_word_pos(),
            kernel_sigma: self.kernel.as_ref().map(|k| k.sigma()),
            sampler_order: self.order.clone(),
            sampler_cursor: self.cursor,
            probe: self.probe.iter().copied().collect(),
        }
    }

    pub fn topology(&self) -> &GridTopology {
        &self.topology
    }

    /// Kernel currently in use by the smoothed regime.
    pub fn kernel(&self) -> Option<&NeighborhoodKernel> {
        self.kernel.as_ref()
    }

    pub fn stats(&self) -> &DataStats {
        &self.stats
    }

    /// Draws the indices of the next batch.
    pub fn next_batch(&mut self, config: &TrainConfig, n_data: usize) -> Vec<usize> {
        (0..config.batch_size)
            .map(|_| match config.sampling {
                BatchSampling::WithReplacement => self.rng.random_range(0..n_data),
                BatchSampling::EpochPermutation => {
                    if self.cursor >= self.order.len() {
                        self.order = (0..n_data).collect();
                        self.order.shuffle(&mut self.rng);
                        self.cursor = 0;
                    }
                    self.cursor += 1;
                    self.order[self.cursor - 1]
                }
            })
            .collect()
    }

    fn refresh_kernel(&mut self, sigma: f64) -> Result<()> {
        let stale = match &self.kernel {
            Some(k) => ((sigma - k.sigma()) / k.sigma()).abs() > KERNEL_REFRESH_TOLERANCE,
            None => true,
        };
        if stale {
            self.kernel = Some(build_kernel(&self.topology, sigma)?);
        }
        Ok(())
    }

    fn probe_set(&self, data: &DataSet) -> Result<DataSet> {
        let idx: Vec<usize> = self.probe.iter().copied().collect();
        DataSet::new(data.samples().select(Axis(0), &idx), data.source().clone())
    }

    fn objective(&self, config: &TrainConfig, probe: &DataSet) -> Result<f64> {
        match config.regime {
            LossRegime::Exact => model::full_log_likelihood(probe, &self.model),
            LossRegime::MaxComponent => model::max_component_log_likelihood(probe, &self.model),
            LossRegime::Smoothed => match &self.kernel {
                Some(kernel) => model::smoothed_log_likelihood(probe, &self.model, kernel),
                None => {
                    let kernel = build_kernel(&self.topology, config.sigma_at(self.t))?;
                    model::smoothed_log_likelihood(probe, &self.model, &kernel)
                }
            },
        }
    }

    fn record(&mut self, config: &TrainConfig, data: &DataSet) -> Result<()> {
        let probe = self.probe_set(data)?;
        let loss = -self.objective(config, &probe)?;
        if !loss.is_finite() {
            return Err(Error::NumericAbort {
                iteration: self.t,
                reason: format!("loss is {loss}"),
                snapshot: Box::new(self.model.clone()),
            });
        }
        let diagnosis = detect_collapse(&self.model, &self.stats, &probe, &config.collapse)?;
        self.history.push(HistoryRow {
            t: self.t,
            loss,
            sigma: config.sigma_at(self.t),
            epsilon: config.epsilon_at(self.t),
            diagnosis,
        });
        Ok(())
    }

    /// One update on the given batch of sample indices.
    pub fn step(&mut self, config: &TrainConfig, data: &DataSet, batch: &[usize]) -> Result<()> {
        if self.t >= config.iterations {
            return Err(Error::usage("training already reached the configured iterations"));
        }
        if batch.is_empty() || batch.iter().any(|i| *i >= data.len()) {
            return Err(Error::usage("batch indices out of range"));
        }
        let sigma = config.sigma_at(self.t);
        let lr = config.epsilon_at(self.t);
        let kernel = match config.regime {
            LossRegime::Smoothed => {
                self.refresh_kernel(sigma)?;
                self.kernel.as_ref()
            }
            _ => None,
        };
        let rows = data.samples().select(Axis(0), batch);
        let grads = regime_gradients(config.regime, rows.view(), &self.model, kernel)?;

        let before = self.model.clone();
        apply_gradients(
            &mut self.model,
            &grads,
            lr,
            !config.precisions_frozen(),
            !config.weights_frozen(),
        );
        enforce_constraints(&mut self.model);
        let finite = self.model.centroids().iter().all(|v| v.is_finite())
            && self.model.weights().iter().all(|v| v.is_finite());
        if !finite {
            return Err(Error::NumericAbort {
                iteration: self.t,
                reason: "parameters became non-finite".into(),
                snapshot: Box::new(before),
            });
        }

        self.t += 1;
        for i in batch {
            if self.probe.len() == config.probe_size {
                self.probe.pop_front();
            }
            self.probe.push_back(*i);
        }
        if self.t.is_multiple_of(config.history_every) || self.t == config.iterations {
            self.record(config, data)?;
        }
        Ok(())
    }

    /// Runs until `config.iterations`.
    pub fn run(&mut self, config: &TrainConfig, data: &DataSet) -> Result<()> {
        self.run_until(config, data, config.iterations)
    }

    pub fn run_until(&mut self, config: &TrainConfig, data: &DataSet, until: u64) -> Result<()> {
        let until = until.min(config.iterations);
        while self.t < until {
            let batch = self.next_batch(config, data.len());
            self.step(config, data, &batch)?;
        }
        Ok(())
    }
}

/// Free-function form of [`TrainState::step`].
pub fn sgd_step(
    state: &mut TrainState,
    data: &DataSet,
    batch: &[usize],
    config: &TrainConfig,
) -> Result<()> {
    state.step(config, data, batch)
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: MixtureModel,
    pub history: Vec<HistoryRow>,
}

/// Full training run; deterministic for a fixed config and data set.
pub fn train(config: &TrainConfig, data: &DataSet) -> Result<TrainOutcome> {
    let mut state = TrainState::new(config, data)?;
    state.run(config, data)?;
    Ok(TrainOutcome {
        model: state.model,
        history: state.history,
    })
}
