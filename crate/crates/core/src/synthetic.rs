//! Synthetic data: isotropic Gaussian blobs with known centers.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::model::{DataSet, DataSource, MixtureModel};
use crate::topology::{AnnealingSchedule, GridKind, Schedule};
use crate::trainer::{CentroidInit, LossRegime, TrainConfig};

#[derive(Debug, Clone)]
pub struct Blobs {
    pub data: DataSet,
    /// Generating component of each sample.
    pub labels: Vec<usize>,
}

/// `n` samples spread evenly over `centers` (sample `i` comes from center
/// `i mod K`), each coordinate drawn as `center + std · z`.
pub fn gaussian_blobs(centers: &Array2<f64>, std: f64, n: usize, seed: u64) -> Result<Blobs> {
    if centers.nrows() == 0 || n == 0 {
        return Err(Error::usage("need at least one center and one sample"));
    }
    if !(std >= 0.0 && std.is_finite()) {
        return Err(Error::usage(format!("standard deviation must be finite and non-negative, got {std}")));
    }
    let k = centers.nrows();
    let dim = centers.ncols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let samples = Array2::from_shape_fn((n, dim), |(i, j)| {
        let z: f64 = rng.sample(StandardNormal);
        centers[[labels[i], j]] + std * z
    });
    let data = DataSet::new(
        samples,
        DataSource {
            origin: format!("gaussian_blobs(k={k}, std={std}, seed={seed})"),
            normalization: "none".into(),
            item_shape: vec![dim],
        },
    )?;
    Ok(Blobs { data, labels })
}

/// Four centers at `(±a, ±a)`.
pub fn square_centers(a: f64) -> Array2<f64> {
    ndarray::array![[-a, -a], [-a, a], [a, -a], [a, a]]
}

/// Smallest root-mean-square centroid error over all matchings of model
/// components to `centers`: `min_perm sqrt((1/K) Σ_k |μ_perm(k) − c_k|²)`.
/// Exhaustive, so only meant for small `K`.
pub fn matched_rmse(model: &MixtureModel, centers: &Array2<f64>) -> Result<f64> {
    let k = centers.nrows();
    if model.components() != k || model.dim() != centers.ncols() {
        return Err(Error::usage("model and centers disagree in shape"));
    }
    if k > 9 {
        return Err(Error::usage("matched_rmse enumerates permutations; K must be at most 9"));
    }
    let cost = Array2::from_shape_fn((k, k), |(a, b)| {
        model
            .centroid(a)
            .iter()
            .zip(centers.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
    });
    let mut perm: Vec<usize> = (0..k).collect();
    let mut best = f64::INFINITY;
    permute(&mut perm, 0, &mut |p| {
        let total: f64 = p.iter().enumerate().map(|(c, m)| cost[[*m, c]]).sum();
        best = best.min(total);
    });
    Ok((best / k as f64).sqrt())
}

fn permute(p: &mut [usize], start: usize, visit: &mut impl FnMut(&[usize])) {
    if start == p.len() {
        visit(p);
        return;
    }
    for i in start..p.len() {
        p.swap(start, i);
        permute(p, start + 1, visit);
        p.swap(start, i);
    }
}

/// Four well-separated 2-D clusters and a 2×2 map, sized to run at desk scale.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourClusterBenchmark {
    /// Centers sit at `(±offset, ±offset)`.
    pub offset: f64,
    pub cluster_std: f64,
    pub samples: usize,
    pub iterations: u64,
}

impl Default for FourClusterBenchmark {
    fn default() -> Self {
        FourClusterBenchmark {
            offset: 2.5,
            cluster_std: 0.5,
            samples: 4000,
            iterations: 4000,
        }
    }
}

impl FourClusterBenchmark {
    pub fn centers(&self) -> Array2<f64> {
        square_centers(self.offset)
    }

    /// Data for one repetition. Data seeds are offset from training seeds
    /// so the two streams never coincide.
    pub fn data(&self, seed: u64) -> Result<Blobs> {
        gaussian_blobs(&self.centers(), self.cluster_std, self.samples, 1000 + seed)
    }

    /// Annealed smoothed regime. σ0 is the reference 1.2 for a 5×5 map
    /// scaled to a 2×2 map; ε decays to 3e-4 so the final centroids settle
    /// well inside a tenth of the cluster spread. Precision roots stay at
    /// the initial `√5`, weights are trained.
    pub fn annealed_config(&self, seed: u64) -> Result<TrainConfig> {
        let t = self.iterations;
        let t0 = t / 10;
        let t_inf = 2 * t / 5;
        let mut c = TrainConfig::reference(4, t, seed)?;
        c.grid = GridKind::Square;
        c.sigma = Schedule::Annealed(AnnealingSchedule::new(0.48, 0.01, t0, t_inf)?);
        c.epsilon = Schedule::Annealed(AnnealingSchedule::new(0.05, 3e-4, t0, t_inf)?);
        c.train_precisions = false;
        c.train_weights = true;
        Ok(c)
    }

    /// Same run without annealing: max-component loss (the σ = σ∞ limit)
    /// from every centroid at the data mean.
    pub fn unannealed_config(&self, seed: u64) -> Result<TrainConfig> {
        let mut c = self.annealed_config(seed)?;
        c.regime = LossRegime::MaxComponent;
        c.sigma = Schedule::Constant(0.01);
        c.init.centroids = CentroidInit::DataMean;
        Ok(c)
    }
}

/// Polyline templates on a 28×28 canvas, one per class, loosely shaped
/// like handwritten digits.
const STROKES: [&[(f64, f64)]; 10] = [
    &[(14.0, 5.0), (20.0, 9.0), (21.0, 18.0), (14.0, 23.0), (8.0, 18.0), (8.0, 9.0), (14.0, 5.0)],
    &[(11.0, 8.0), (15.0, 5.0), (15.0, 23.0)],
    &[(8.0, 9.0), (14.0, 5.0), (20.0, 9.0), (8.0, 23.0), (21.0, 23.0)],
    &[(8.0, 6.0), (20.0, 6.0), (13.0, 13.0), (20.0, 18.0), (14.0, 23.0), (7.0, 21.0)],
    &[(17.0, 23.0), (17.0, 5.0), (7.0, 17.0), (21.0, 17.0)],
    &[(20.0, 5.0), (9.0, 5.0), (8.0, 13.0), (18.0, 13.0), (20.0, 19.0), (14.0, 23.0), (7.0, 21.0)],
    &[(18.0, 5.0), (10.0, 12.0), (8.0, 19.0), (14.0, 23.0), (20.0, 19.0), (15.0, 14.0), (9.0, 16.0)],
    &[(7.0, 5.0), (21.0, 5.0), (12.0, 23.0)],
    &[(14.0, 14.0), (9.0, 9.0), (14.0, 5.0), (19.0, 9.0), (14.0, 14.0), (8.0, 19.0), (14.0, 23.0), (20.0, 19.0), (14.0, 14.0)],
    &[(20.0, 12.0), (14.0, 15.0), (9.0, 10.0), (14.0, 5.0), (20.0, 9.0), (19.0, 23.0)],
];

/// Side length of the images from [`stroke_images`].
pub const STROKE_IMAGE_SIDE: usize = 28;

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (cx, cy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (cx * cx + cy * cy).sqrt()
}

/// `n` grayscale 28×28 images quantized to `k/255`, cycling through ten
/// stroke templates with random shift, scale, stroke width and jitter.
/// Stands in for handwritten-digit data when none is at hand.
pub fn stroke_images(n: usize, seed: u64) -> Result<Blobs> {
    if n == 0 {
        return Err(Error::usage("need at least one image"));
    }
    let side = STROKE_IMAGE_SIDE;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut samples = Array2::zeros((n, side * side));
    let mut labels = Vec::with_capacity(n);
    for (i, mut row) in samples.rows_mut().into_iter().enumerate() {
        let class = i % STROKES.len();
        labels.push(class);
        let shift = (rng.random_range(-2.0..=2.0), rng.random_range(-2.0..=2.0));
        let scale = rng.random_range(0.85..=1.1);
        let width = rng.random_range(1.0..=2.0);
        let points: Vec<(f64, f64)> = STROKES[class]
            .iter()
            .map(|(x, y)| {
                let jx: f64 = rng.random_range(-0.8..=0.8);
                let jy: f64 = rng.random_range(-0.8..=0.8);
                (14.0 + (x - 14.0) * scale + shift.0 + jx, 14.0 + (y - 14.0) * scale + shift.1 + jy)
            })
            .collect();
        for py in 0..side {
            for px in 0..side {
                let p = (px as f64 + 0.5, py as f64 + 0.5);
                let dist = points
                    .windows(2)
                    .map(|w| segment_distance(p, w[0], w[1]))
                    .fold(f64::INFINITY, f64::min);
                let ink = (1.0 - (dist - width)).clamp(0.0, 1.0);
                row[py * side + px] = (ink * 255.0).round() / 255.0;
            }
        }
    }
    let data = DataSet::new(
        samples,
        DataSource {
            origin: format!("stroke_images(n={n}, seed={seed})"),
            normalization: "u8/255".into(),
            item_shape: vec![side, side],
        },
    )?;
    Ok(Blobs { data, labels })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stroke_images_survive_idx_encoding() {
        let imgs = stroke_images(20, 4).unwrap();
        let bytes = crate::io::idx::encode_idx(&imgs.data).unwrap();
        let back = crate::io::idx::parse_idx(&bytes, "mem").unwrap();
        assert_eq!(back.samples(), imgs.data.samples());
        assert_eq!(back.source().item_shape, vec![28, 28]);
        let ink: f64 = imgs.data.sample(0).iter().sum();
        assert!(ink > 20.0 && ink < 400.0);
    }

    #[test]
    fn matched_rmse_finds_the_permutation() {
        let centers = square_centers(1.0);
        let shuffled = ndarray::array![[1.0, 1.0], [-1.0, 1.0], [1.0, -1.0], [-1.0, -1.1]];
        let m = MixtureModel::tied(shuffled, 1.0).unwrap();
        let r = matched_rmse(&m, &centers).unwrap();
        assert!((r - (0.01f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn blobs_are_reproducible_and_centered() {
        let c = square_centers(2.5);
        let a = gaussian_blobs(&c, 0.5, 4000, 9).unwrap();
        let b = gaussian_blobs(&c, 0.5, 4000, 9).unwrap();
        assert_eq!(a.data, b.data);
        for k in 0..4 {
            let rows: Vec<&[f64]> = a.data.rows().zip(&a.labels).filter(|(_, l)| **l == k).map(|(r, _)| r).collect();
            for j in 0..2 {
                let mean = rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64;
                assert!((mean - c[[k, j]]).abs() < 0.05);
            }
        }
    }
}
