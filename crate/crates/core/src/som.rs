//! Energy-based self-organizing map as a tied spherical mixture.
//!
//! With equal weights and one shared precision root `d`, the smoothed
//! max-component objective of a sample equals
//! `−ln K + D (ln d − ½ ln 2π) − (d²/2) min_k Σ_j g_kj |x − μ_j|²`,
//! so maximizing it is minimizing the SOM energy.

use crate::error::{Error, Result};
use crate::model::{self, argmax, argmin, smooth_terms, DataSet, LogJoint, MixtureModel, HALF_LN_2PI};
use crate::topology::{GridTopology, NeighborhoodKernel};

/// A tied spherical mixture viewed as a map of prototypes on a grid.
#[derive(Debug, Clone)]
pub struct SomView {
    model: MixtureModel,
    topology: GridTopology,
    kernel: NeighborhoodKernel,
}

impl SomView {
    pub fn new(model: MixtureModel, topology: GridTopology, kernel: NeighborhoodKernel) -> Result<Self> {
        if !model.is_tied() {
            return Err(Error::usage("SOM view requires a tied spherical model"));
        }
        if topology.components() != model.components() {
            return Err(Error::usage("grid size does not match the model"));
        }
        model::check_kernel(&model, &kernel)?;
        Ok(SomView {
            model,
            topology,
            kernel,
        })
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    pub fn into_model(self) -> MixtureModel {
        self.model
    }

    pub fn topology(&self) -> &GridTopology {
        &self.topology
    }

    pub fn kernel(&self) -> &NeighborhoodKernel {
        &self.kernel
    }

    pub fn set_kernel(&mut self, kernel: NeighborhoodKernel) -> Result<()> {
        model::check_kernel(&self.model, &kernel)?;
        self.kernel = kernel;
        Ok(())
    }

    pub fn prototype(&self, k: usize) -> &[f64] {
        self.model.centroid(k)
    }

    /// The shared precision root `d`.
    pub fn precision_root(&self) -> f64 {
        self.model.shared_precision_root().expect("tied model")
    }

    fn sq_distances(&self, x: &[f64], out: &mut [f64]) {
        for (k, o) in out.iter_mut().enumerate() {
            *o = x
                .iter()
                .zip(self.model.centroid(k))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
        }
    }

    /// `Σ_j g_kj |x − μ_j|²` for every `k`.
    fn convolved_distances(&self, x: &[f64], out: &mut [f64]) {
        let mut dist = vec![0.0; out.len()];
        self.sq_distances(x, &mut dist);
        smooth_terms(&self.kernel, &dist, out);
    }

    /// Best-matching unit: argmin of the convolved squared distance, lowest
    /// index on ties.
    pub fn bmu(&self, x: &[f64]) -> Result<usize> {
        self.model.check_sample(x)?;
        let mut conv = vec![0.0; self.model.components()];
        self.convolved_distances(x, &mut conv);
        Ok(argmin(&conv))
    }

    /// `μ_k ← μ_k + ε g_{k,bmu} (x − μ_k)` for every prototype.
    pub fn update(&mut self, x: &[f64], epsilon: f64) -> Result<usize> {
        if !(epsilon >= 0.0 && epsilon.is_finite()) {
            return Err(Error::usage(format!("learning rate must be non-negative, got {epsilon}")));
        }
        let winner = self.bmu(x)?;
        let k = self.model.components();
        let dim = self.model.dim();
        let g = self.kernel.matrix().row(winner).to_owned();
        let centroids = self.model.centroids_mut();
        for j in 0..k {
            let coupling = g[j];
            if coupling == 0.0 {
                continue;
            }
            for i in 0..dim {
                let r = x[i] - centroids[[j, i]];
                centroids[[j, i]] += epsilon * (coupling * r);
            }
        }
        Ok(winner)
    }

    /// Energy `(1/N) Σ_n min_k Σ_j g_kj |x_n − μ_j|²`.
    pub fn energy(&self, data: &DataSet) -> Result<f64> {
        self.model.check_data(data)?;
        let mut conv = vec![0.0; self.model.components()];
        let total: f64 = data
            .rows()
            .map(|x| {
                self.convolved_distances(x, &mut conv);
                conv[argmin(&conv)]
            })
            .sum();
        Ok(total / data.len() as f64)
    }

    /// Evaluates both sides of the mixture/SOM identity per sample.
    pub fn verify_equivalence(&self, data: &DataSet) -> Result<EquivalenceReport> {
        self.model.check_data(data)?;
        let k = self.model.components();
        let d = self.precision_root();
        let normalizer = self.model.dim() as f64 * (d.ln() - HALF_LN_2PI);
        let offset = -(k as f64).ln() + normalizer;
        let half_precision = 0.5 * d * d;

        let joint = LogJoint::new(&self.model);
        let mut terms = vec![0.0; k];
        let mut smoothed = vec![0.0; k];
        let mut conv = vec![0.0; k];
        let (mut lhs_sum, mut rhs_sum, mut max_abs_err) = (0.0, 0.0, 0.0f64);
        for x in data.rows() {
            joint.eval(x, &mut terms);
            smooth_terms(&self.kernel, &terms, &mut smoothed);
            let lhs = smoothed[argmax(&smoothed)];
            self.convolved_distances(x, &mut conv);
            let rhs = offset - half_precision * conv[argmin(&conv)];
            max_abs_err = max_abs_err.max((lhs - rhs).abs());
            lhs_sum += lhs;
            rhs_sum += rhs;
        }
        let n = data.len() as f64;
        let (lhs, rhs) = (lhs_sum / n, rhs_sum / n);
        Ok(EquivalenceReport {
            lhs,
            rhs,
            normalizer,
            max_abs_err: max_abs_err.max((lhs - rhs).abs()),
        })
    }
}

/// Outcome of [`SomView::verify_equivalence`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceReport {
    /// Smoothed max-component objective.
    pub lhs: f64,
    /// `−ln K + normalizer − (d²/2) · energy`.
    pub rhs: f64,
    /// Gaussian normalization `D (ln d − ½ ln 2π)` carried by the constant.
    pub normalizer: f64,
    /// Largest per-sample or aggregate discrepancy.
    pub max_abs_err: f64,
}

pub fn som_energy(data: &DataSet, view: &SomView) -> Result<f64> {
    view.energy(data)
}

pub fn bmu(x: &[f64], view: &SomView) -> Result<usize> {
    view.bmu(x)
}

pub fn som_update(view: &mut SomView, x: &[f64], epsilon: f64) -> Result<usize> {
    view.update(x, epsilon)
}

pub fn verify_equivalence(data: &DataSet, view: &SomView) -> Result<EquivalenceReport> {
    view.verify_equivalence(data)
}
