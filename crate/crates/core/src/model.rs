//! Mixture parameters, per-component Gaussian log-densities and the three
//! log-likelihood objectives (exact, max-component, smoothed).
//!
//! Covariances are diagonal and parameterized by their precision roots:
//! component `k` has precision `d_ki²` along coordinate `i`, so the implied
//! variance `1 / d_ki²` is positive for every admissible parameter value.
//!
//! All objectives are per-sample averages and are *maximized*.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::topology::NeighborhoodKernel;

/// Lower bound for every precision root.
pub const PRECISION_ROOT_MIN: f64 = 1e-3;
/// Upper bound for every precision root.
pub const PRECISION_ROOT_MAX: f64 = 1e3;
/// Smallest weight kept after renormalization in the trainer.
pub const WEIGHT_FLOOR: f64 = 1e-8;

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;
pub(crate) const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    weights: Array1<f64>,
    centroids: Array2<f64>,
    precision_roots: Array2<f64>,
    tied_spherical: bool,
}

impl MixtureModel {
    /// Builds an untied model after checking every invariant.
    pub fn new(
        weights: Array1<f64>,
        centroids: Array2<f64>,
        precision_roots: Array2<f64>,
    ) -> Result<Self> {
        let model = MixtureModel {
            weights,
            centroids: centroids.as_standard_layout().into_owned(),
            precision_roots: precision_roots.as_standard_layout().into_owned(),
            tied_spherical: false,
        };
        model.validate()?;
        Ok(model)
    }

    /// Tied spherical model: equal weights `1/K` and one shared precision
    /// root `d` for every component and coordinate.
    pub fn tied(centroids: Array2<f64>, precision_root: f64) -> Result<Self> {
        let (k, dim) = centroids.dim();
        if k == 0 {
            return Err(Error::usage("model needs at least one component"));
        }
        let model = MixtureModel {
            weights: Array1::from_elem(k, 1.0 / k as f64),
            centroids: centroids.as_standard_layout().into_owned(),
            precision_roots: Array2::from_elem((k, dim), precision_root),
            tied_spherical: true,
        };
        model.validate()?;
        Ok(model)
    }

    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        let k = self.weights.len();
        if k == 0 {
            return Err(Error::usage("model needs at least one component"));
        }
        let (ck, dim) = self.centroids.dim();
        if ck != k || dim == 0 {
            return Err(Error::usage(format!(
                "centroids have shape {ck}x{dim}, expected {k} rows and at least one column"
            )));
        }
        if self.precision_roots.dim() != (k, dim) {
            return Err(Error::usage(format!(
                "precision roots have shape {:?}, expected ({k}, {dim})",
                self.precision_roots.dim()
            )));
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::input("weights must be finite and non-negative"));
        }
        let sum: f64 = self.weights.sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(Error::input(format!("weights sum to {sum}, expected 1")));
        }
        if self.centroids.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("centroids must be finite"));
        }
        if let Some(d) = self
            .precision_roots
            .iter()
            .find(|d| !(PRECISION_ROOT_MIN..=PRECISION_ROOT_MAX).contains(*d))
        {
            return Err(Error::input(format!(
                "precision root {d} outside [{PRECISION_ROOT_MIN}, {PRECISION_ROOT_MAX}]"
            )));
        }
        if self.tied_spherical {
            let d0 = self.precision_roots[[0, 0]];
            if self.precision_roots.iter().any(|d| *d != d0) {
                return Err(Error::input("tied model has unequal precision roots"));
            }
            let w0 = 1.0 / k as f64;
            if self.weights.iter().any(|w| *w != w0) {
                return Err(Error::input("tied model must have weights 1/K"));
            }
        }
        Ok(())
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    pub fn weights(&self) -> &Array1<f64> {
        &self.weights
    }

    pub fn centroids(&self) -> &Array2<f64> {
        &self.centroids
    }

    pub fn precision_roots(&self) -> &Array2<f64> {
        &self.precision_roots
    }

    pub fn is_tied(&self) -> bool {
        self.tied_spherical
    }

    /// The shared precision root of a tied model.
    pub fn shared_precision_root(&self) -> Option<f64> {
        self.tied_spherical.then(|| self.precision_roots[[0, 0]])
    }

    pub fn centroid(&self, k: usize) -> &[f64] {
        row_slice(self.centroids.view(), k)
    }

    pub(crate) fn centroids_mut(&mut self) -> &mut Array2<f64> {
        &mut self.centroids
    }

    pub(crate) fn precision_roots_mut(&mut self) -> &mut Array2<f64> {
        &mut self.precision_roots
    }

    pub(crate) fn weights_mut(&mut self) -> &mut Array1<f64> {
        &mut self.weights
    }

    /// Assembles a model from raw parts without validation. Used by the
    /// checkpoint reader, which validates afterwards.
    pub(crate) fn from_parts_unchecked(
        weights: Array1<f64>,
        centroids: Array2<f64>,
        precision_roots: Array2<f64>,
        tied_spherical: bool,
    ) -> Self {
        MixtureModel {
            weights,
            centroids,
            precision_roots,
            tied_spherical,
        }
    }

    /// `log p_k(x)` for the diagonal Gaussian of component `k`, in nats.
    pub fn component_log_density(&self, x: &[f64], k: usize) -> Result<f64> {
        if k >= self.components() {
            return Err(Error::usage(format!(
                "component {k} out of range for K={}",
                self.components()
            )));
        }
        self.check_sample(x)?;
        let mu = self.centroid(k);
        let d = row_slice(self.precision_roots.view(), k);
        Ok(x.iter()
            .zip(mu)
            .zip(d)
            .map(|((xi, mi), di)| {
                let r = xi - mi;
                di.ln() - HALF_LN_2PI - 0.5 * di * di * r * r
            })
            .sum())
    }

    pub(crate) fn check_sample(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::usage(format!(
                "sample has dimension {}, model expects {}",
                x.len(),
                self.dim()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("sample contains non-finite values"));
        }
        Ok(())
    }

    pub(crate) fn check_data(&self, data: &DataSet) -> Result<()> {
        if data.dim() != self.dim() {
            return Err(Error::usage(format!(
                "data has dimension {}, model expects {}",
                data.dim(),
                self.dim()
            )));
        }
        Ok(())
    }
}

pub(crate) fn row_slice(m: ArrayView2<'_, f64>, k: usize) -> &[f64] {
    let row = m.index_axis_move(Axis(0), k);
    row.to_slice().expect("standard layout")
}

/// Per-component constants `log π_k + Σ_i log d_ki − (D/2) log 2π`, cached
/// so a sample costs one quadratic form per component.
pub(crate) struct LogJoint<'a> {
    model: &'a MixtureModel,
    offsets: Vec<f64>,
}

impl<'a> LogJoint<'a> {
    pub(crate) fn new(model: &'a MixtureModel) -> Self {
        let dim = model.dim() as f64;
        let offsets = (0..model.components())
            .map(|k| {
                let log_det: f64 = model.precision_roots.row(k).iter().map(|d| d.ln()).sum();
                model.weights[k].ln() + log_det - dim * HALF_LN_2PI
            })
            .collect();
        LogJoint { model, offsets }
    }

    /// Writes `log π_k + log p_k(x)` for every component into `out`.
    pub(crate) fn eval(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            let mu = self.model.centroid(k);
            let d = row_slice(self.model.precision_roots.view(), k);
            let mut quad = 0.0;
            for i in 0..x.len() {
                let r = x[i] - mu[i];
                quad += d[i] * d[i] * r * r;
            }
            *o = self.offsets[k] - 0.5 * quad;
        }
    }
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = k;
        }
    }
    best
}

/// Index of the smallest value; the lowest index wins ties.
pub(crate) fn argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate().skip(1) {
        if *v < values[best] {
            best = k;
        }
    }
    best
}

pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Convolves per-component log terms with the kernel rows:
/// `out[k] = Σ_j g_kj terms[j]`. Zero couplings are skipped so that
/// components with zero weight (`log π = −∞`) do not poison other rows.
pub(crate) fn smooth_terms(kernel: &NeighborhoodKernel, terms: &[f64], out: &mut [f64]) {
    if kernel.is_identity() {
        out.copy_from_slice(terms);
        return;
    }
    let g = kernel.matrix();
    for (k, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, t) in terms.iter().enumerate() {
            let w = g[[k, j]];
            if w != 0.0 {
                acc += w * t;
            }
        }
        *o = acc;
    }
}

/// Incomplete-data log-likelihood `(1/N) Σ_n log Σ_k π_k p_k(x_n)`.
pub fn full_log_likelihood(data: &DataSet, model: &MixtureModel) -> Result<f64> {
    model.check_data(data)?;
    let joint = LogJoint::new(model);
    let mut terms = vec![0.0; model.components()];
    let total: f64 = data
        .rows()
        .map(|x| {
            joint.eval(x, &mut terms);
            log_sum_exp(&terms)
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Max-component bound `(1/N) Σ_n max_k [log π_k + log p_k(x_n)]`.
pub fn max_component_log_likelihood(data: &DataSet, model: &MixtureModel) -> Result<f64> {
    model.check_data(data)?;
    let joint = LogJoint::new(model);
    let mut terms = vec![0.0; model.components()];
    let total: f64 = data
        .rows()
        .map(|x| {
            joint.eval(x, &mut terms);
            terms[argmax(&terms)]
        })
        .sum();
    Ok(total / data.len() as f64)
}

/// Smoothed max-component objective
/// `(1/N) Σ_n max_k Σ_j g_kj [log π_j + log p_j(x_n)]`.
pub fn smoothed_log_likelihood(
    data: &DataSet,
    model: &MixtureModel,
    kernel: &NeighborhoodKernel,
) -> Result<f64> {
    model.check_data(data)?;
    check_kernel(model, kernel)?;
    let joint = LogJoint::new(model);
    let k = model.components();
    let mut terms = vec![0.0; k];
    let mut smoothed = vec![0.0; k];
    let total: f64 = data
        .rows()
        .map(|x| {
            joint.eval(x, &mut terms);
            smooth_terms(kernel, &terms, &mut smoothed);
            smoothed[argmax(&smoothed)]
        })
        .sum();
    Ok(total / data.len() as f64)
}

pub(crate) fn check_kernel(model: &MixtureModel, kernel: &NeighborhoodKernel) -> Result<()> {
    if kernel.components() != model.components() {
        return Err(Error::usage(format!(
            "kernel is {0}x{0} but the model has {1} components",
            kernel.components(),
            model.components()
        )));
    }
    Ok(())
}

/// Posterior component memberships, one row per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    pub gamma: Array2<f64>,
}

impl Responsibilities {
    pub fn row(&self, n: usize) -> ArrayView1<'_, f64> {
        self.gamma.row(n)
    }
}

/// `γ_nk = π_k p_k(x_n) / Σ_j π_j p_j(x_n)`, normalized in log space.
pub fn responsibilities(data: &DataSet, model: &MixtureModel) -> Result<Responsibilities> {
    model.check_data(data)?;
    let joint = LogJoint::new(model);
    let k = model.components();
    let mut gamma = Array2::zeros((data.len(), k));
    let mut terms = vec![0.0; k];
    for (n, x) in data.rows().enumerate() {
        joint.eval(x, &mut terms);
        normalize_log_terms(&terms, gamma.row_mut(n).as_slice_mut().expect("standard layout"));
    }
    Ok(Responsibilities { gamma })
}

pub(crate) fn normalize_log_terms(terms: &[f64], out: &mut [f64]) {
    let lse = log_sum_exp(terms);
    for (o, t) in out.iter_mut().zip(terms) {
        *o = (t - lse).exp();
    }
}

/// Where a data set came from and what was done to it on load.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DataSource {
    pub origin: String,
    pub normalization: String,
    /// Shape of one item before flattening (e.g. `[28, 28]` for images).
    pub item_shape: Vec<usize>,
}

/// `N × D` matrix of finite samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DataSet {
    samples: Array2<f64>,
    source: DataSource,
}

impl DataSet {
    pub fn new(samples: Array2<f64>, source: DataSource) -> Result<Self> {
        let (n, d) = samples.dim();
        if n == 0 {
            return Err(Error::input("data set is empty"));
        }
        if d == 0 {
            return Err(Error::input("data set has zero dimensions"));
        }
        if samples.iter().any(|v| !v.is_finite()) {
            return Err(Error::input("data set contains non-finite values"));
        }
        let mut source = source;
        if source.item_shape.is_empty() {
            source.item_shape = vec![d];
        }
        Ok(DataSet {
            samples: samples.as_standard_layout().into_owned(),
            source,
        })
    }

    /// Convenience constructor for in-memory data.
    pub fn from_array(samples: Array2<f64>) -> Result<Self> {
        DataSet::new(
            samples,
            DataSource {
                origin: "memory".into(),
                normalization: "none".into(),
                item_shape: Vec::new(),
            },
        )
    }

    pub fn len(&self) -> usize {
        self.samples.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.ncols()
    }

    pub fn samples(&self) -> &Array2<f64> {
        &self.samples
    }

    pub fn source(&self) -> &DataSource {
        &self.source
    }

    pub fn sample(&self, n: usize) -> &[f64] {
        row_slice(self.samples.view(), n)
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.len()).map(move |n| self.sample(n))
    }

    /// Keeps the first `n` samples.
    pub fn truncated(&self, n: usize) -> Result<DataSet> {
        let n = n.min(self.len());
        DataSet::new(
            self.samples.slice(ndarray::s![..n, ..]).to_owned(),
            self.source.clone(),
        )
    }

    pub fn stats(&self) -> DataStats {
        let mean = self.samples.mean_axis(Axis(0)).expect("non-empty");
        let variance = self.samples.var_axis(Axis(0), 0.0);
        DataStats {
            mean: mean.to_vec(),
            variance: variance.to_vec(),
        }
    }
}

/// Per-coordinate mean and (population) variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DataStats {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
}

impl DataStats {
    /// Root of the total variance; the length scale used by diagnostics.
    pub fn scale(&self) -> f64 {
        self.variance.iter().sum::<f64>().sqrt()
    }
}
