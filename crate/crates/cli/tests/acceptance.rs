//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use somgmm::io::checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, Provenance};
use somgmm::io::csv::{parse_csv, write_csv};
use somgmm::io::idx::{encode_idx, parse_idx};
use somgmm::synthetic::{gaussian_blobs, stroke_images, FourClusterBenchmark};
use somgmm::trainer::{grad_exact, grad_max_component, grad_smoothed, Gradients};
use somgmm::{
    assign_cluster, build_kernel, detect_collapse, full_log_likelihood,
    max_component_log_likelihood, outlier_report, outlier_scores, sample, smoothed_log_likelihood,
    som_energy, train, BatchSampling, Calibration, CollapseThresholds, DataSet, Diagnosis,
    GridKind, GridTopology, MixtureModel, NeighborhoodKernel, ResumeState, Schedule, SomView,
    TrainConfig, TrainState,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

const LN_2PI: f64 = 1.837_877_066_409_345_3;

// ---------------------------------------------------------------------------
// Independent loss oracle with free (unnormalized) weights.

#[derive(Clone)]
struct Params {
    k: usize,
    dim: usize,
    w: Vec<f64>,
    mu: Vec<f64>,
    d: Vec<f64>,
}

impl Params {
    fn terms(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|k| {
                let mut t = self.w[k].ln();
                for i in 0..self.dim {
                    let d = self.d[k * self.dim + i];
                    let r = x[i] - self.mu[k * self.dim + i];
                    t += d.ln() - 0.5 * LN_2PI - 0.5 * d * d * r * r;
                }
                t
            })
            .collect()
    }

    fn model(&self) -> MixtureModel {
        MixtureModel::new(
            Array1::from(self.w.clone()),
            Array2::from_shape_vec((self.k, self.dim), self.mu.clone()).unwrap(),
            Array2::from_shape_vec((self.k, self.dim), self.d.clone()).unwrap(),
        )
        .unwrap()
    }
}

#[derive(Clone, Copy, Debug)]
enum Loss {
    Exact,
    Max,
    Smoothed,
}

fn smooth(g: &Array2<f64>, t: &[f64]) -> Vec<f64> {
    (0..t.len())
        .map(|k| (0..t.len()).map(|j| g[[k, j]] * t[j]).sum())
        .collect()
}

/// Loss value and the gap between the two best rows (infinite for K = 1).
fn oracle(p: &Params, data: &Array2<f64>, loss: Loss, g: &Array2<f64>) -> (f64, f64) {
    let mut total = 0.0;
    let mut gap = f64::INFINITY;
    for x in data.rows() {
        let t = p.terms(x.as_slice().unwrap());
        let row = match loss {
            Loss::Exact => {
                let m = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                total += m + t.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
                continue;
            }
            Loss::Max => t,
            Loss::Smoothed => smooth(g, &t),
        };
        let mut sorted = row.clone();
        sorted.sort_by(|a, b| b.total_cmp(a));
        total += sorted[0];
        if sorted.len() > 1 {
            gap = gap.min(sorted[0] - sorted[1]);
        }
    }
    (total / data.nrows() as f64, gap)
}

fn random_instance(rng: &mut ChaCha8Rng) -> (Params, Array2<f64>, GridTopology, f64) {
    let k = [1, 4, 9][rng.random_range(0..3)];
    let dim = [1, 3, 8][rng.random_range(0..3)];
    let n = rng.random_range(1..=16);
    let scale = [0.3, 1.0, 3.0][rng.random_range(0..3)];
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    let p = Params {
        k,
        dim,
        w: raw.iter().map(|v| v / sum).collect(),
        mu: (0..k * dim).map(|_| rng.random_range(-2.0..2.0)).collect(),
        d: (0..k * dim).map(|_| scale * rng.random_range(0.5f64..2.0)).collect(),
    };
    let data = Array2::from_shape_fn((n, dim), |_| rng.random_range(-2.5..2.5));
    let topo = if k == 1 {
        GridTopology::line(1, false).unwrap()
    } else {
        GridTopology::square(k, rng.random_bool(0.5)).unwrap()
    };
    (p, data, topo, rng.random_range(0.3..2.0))
}

fn analytic(loss: Loss, data: &Array2<f64>, model: &MixtureModel, kernel: &NeighborhoodKernel) -> Gradients {
    match loss {
        Loss::Exact => grad_exact(data.view(), model).unwrap(),
        Loss::Max => grad_max_component(data.view(), model).unwrap(),
        Loss::Smoothed => grad_smoothed(data.view(), model, kernel).unwrap(),
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let (mut instances, mut skipped, mut checked, mut failures) = (0, 0, 0usize, 0usize);
    let mut worst: f64 = 0.0;
    while instances < 50 {
        let (p, data, topo, sigma) = random_instance(&mut rng);
        let kernel = build_kernel(&topo, sigma).unwrap();
        let g = kernel.matrix().clone();
        let model = p.model();
        let tie = [Loss::Max, Loss::Smoothed]
            .iter()
            .any(|l| oracle(&p, &data, *l, &g).1 < 1e-4);
        if tie {
            skipped += 1;
            continue;
        }
        instances += 1;
        for loss in [Loss::Exact, Loss::Max, Loss::Smoothed] {
            let grads = analytic(loss, &data, &model, &kernel);
            let mut check = |analytic: f64, bump: &dyn Fn(&mut Params, f64), theta: f64| {
                let h = 1e-6 * theta.abs().max(1.0);
                let mut plus = p.clone();
                bump(&mut plus, h);
                let mut minus = p.clone();
                bump(&mut minus, -h);
                let fd = (oracle(&plus, &data, loss, &g).0 - oracle(&minus, &data, loss, &g).0) / (2.0 * h);
                let err = (analytic - fd).abs();
                let tol = (1e-4 * analytic.abs().max(fd.abs())).max(1e-7);
                worst = worst.max(err / tol);
                checked += 1;
                if err > tol {
                    failures += 1;
                }
            };
            for j in 0..p.k {
                check(grads.weights[j], &|q, h| q.w[j] += h, p.w[j]);
                for i in 0..p.dim {
                    let at = j * p.dim + i;
                    check(grads.centroids[[j, i]], &|q, h| q.mu[at] += h, p.mu[at]);
                    check(grads.precision_roots[[j, i]], &|q, h| q.d[at] += h, p.d[at]);
                }
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        failures == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{instances} instances ({skipped} near-tie draws skipped), {checked} partials, {failures} outside tolerance, worst err/tol {worst:.3}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

// ---------------------------------------------------------------------------

fn random_model(rng: &mut ChaCha8Rng, k: usize, dim: usize) -> MixtureModel {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    let sum: f64 = raw.iter().sum();
    MixtureModel::new(
        Array1::from_iter(raw.iter().map(|v| v / sum)),
        Array2::from_shape_fn((k, dim), |_| rng.random_range(-3.0..3.0)),
        Array2::from_shape_fn((k, dim), |_| rng.random_range(0.1..4.0)),
    )
    .unwrap()
}

fn random_data(rng: &mut ChaCha8Rng, n: usize, dim: usize, spread: f64) -> DataSet {
    DataSet::from_array(Array2::from_shape_fn((n, dim), |_| rng.random_range(-spread..spread))).unwrap()
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut violations = 0;
    let mut min_gap = f64::INFINITY;
    for _ in 0..1000 {
        let k = rng.random_range(1..=12);
        let dim = rng.random_range(1..=10);
        let n = rng.random_range(1..=40);
        let model = random_model(&mut rng, k, dim);
        let data = random_data(&mut rng, n, dim, 5.0);
        let exact = full_log_likelihood(&data, &model).unwrap();
        let bound = max_component_log_likelihood(&data, &model).unwrap();
        min_gap = min_gap.min(exact - bound);
        if bound > exact {
            violations += 1;
        }
    }
    outcome(
        violations == 0,
        format!("1000 instances, {violations} violations, smallest L - L_max {min_gap:.3e}"),
    )
}

fn criterion_3() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let topo = GridTopology::square(25, true).unwrap();
    let narrow = build_kernel(&topo, 1e-3).unwrap();
    let identity = NeighborhoodKernel::identity(25);
    let (mut exact_mismatch, mut worst) = (0, 0.0f64);
    for _ in 0..100 {
        let dim = rng.random_range(1..=6);
        let model = random_model(&mut rng, 25, dim);
        let data = random_data(&mut rng, 30, dim, 4.0);
        let max = max_component_log_likelihood(&data, &model).unwrap();
        if smoothed_log_likelihood(&data, &model, &identity).unwrap() != max {
            exact_mismatch += 1;
        }
        worst = worst.max((smoothed_log_likelihood(&data, &model, &narrow).unwrap() - max).abs());
    }
    outcome(
        exact_mismatch == 0 && worst <= 1e-9,
        format!("identity kernel: {exact_mismatch}/100 inexact; sigma=1e-3 on 5x5: max diff {worst:.1e}"),
    )
}

fn random_tied(rng: &mut ChaCha8Rng, d: f64) -> (SomView, DataSet) {
    let k = [4, 9, 16, 25][rng.random_range(0..4)];
    let dim = rng.random_range(1..=8);
    let topo = GridTopology::square(k, rng.random_bool(0.5)).unwrap();
    let kernel = build_kernel(&topo, rng.random_range(0.2..2.0)).unwrap();
    let centroids = Array2::from_shape_fn((k, dim), |_| rng.random_range(-1.0..1.0));
    let view = SomView::new(MixtureModel::tied(centroids, d).unwrap(), topo, kernel).unwrap();
    let n = rng.random_range(1..=60);
    (view, random_data(rng, n, dim, 1.5))
}

fn criterion_4() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let d = rng.random_range(0.3..3.0);
        let (view, data) = random_tied(&mut rng, d);
        let k = view.model().components() as f64;
        let dim = view.model().dim() as f64;
        let lhs = smoothed_log_likelihood(&data, view.model(), view.kernel()).unwrap();
        let energy = som_energy(&data, &view).unwrap();
        let normalizer = dim * (d.ln() - 0.5 * LN_2PI);
        let rhs = -k.ln() + normalizer - 0.5 * d * d * energy;
        worst = worst.max((lhs - rhs).abs());
    }
    let mut worst_bare: f64 = 0.0;
    let unit_normalizer = (2.0 * std::f64::consts::PI).sqrt();
    for _ in 0..100 {
        let (view, data) = random_tied(&mut rng, unit_normalizer);
        let k = view.model().components() as f64;
        let lhs = smoothed_log_likelihood(&data, view.model(), view.kernel()).unwrap();
        let energy = som_energy(&data, &view).unwrap();
        let d = unit_normalizer;
        worst_bare = worst_bare.max((lhs - (-k.ln() - 0.5 * d * d * energy)).abs());
    }
    outcome(
        worst <= 1e-10 && worst_bare <= 1e-10,
        format!(
            "100 random tied models: max |L_sigma - (-ln K + D(ln d - ln 2pi/2) - d^2/2 E)| = {worst:.1e}; \
             with d = sqrt(2 pi) (normalizer 0): max |L_sigma - (-ln K - d^2/2 E)| = {worst_bare:.1e}"
        ),
    )
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut mismatches = 0;
    for _ in 0..100 {
        let d = [0.5, 1.0, 2.0, 4.0][rng.random_range(0..4)];
        let k = [4, 9, 16][rng.random_range(0..3)];
        let dim = rng.random_range(1..=6);
        let periodic = rng.random_bool(0.5);
        let sigma = rng.random_range(0.2..2.0);
        let epsilon = rng.random_range(0.001..0.5);
        let centroids = Array2::from_shape_fn((k, dim), |_| rng.random_range(-1.0..1.0));
        let x: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.5..1.5)).collect();
        let model = MixtureModel::tied(centroids, d).unwrap();

        let mut config = TrainConfig::reference(k, 1, 0).unwrap();
        config.grid = GridKind::Square;
        config.periodic = periodic;
        config.tied_spherical = true;
        config.sigma = Schedule::Constant(sigma);
        config.epsilon = Schedule::Constant(epsilon / (d * d));
        let data = DataSet::from_array(Array2::from_shape_vec((1, dim), x.clone()).unwrap()).unwrap();
        let resume = ResumeState {
            rng_word_pos: 0,
            kernel_sigma: None,
            sampler_order: Vec::new(),
            sampler_cursor: 0,
            probe: vec![0],
        };
        let mut state = TrainState::resume(&config, &data, model.clone(), 0, &resume).unwrap();
        state.step(&config, &data, &[0]).unwrap();

        let topo = GridTopology::square(k, periodic).unwrap();
        let mut view = SomView::new(model, topo, build_kernel(&topo, sigma).unwrap()).unwrap();
        view.update(&x, epsilon).unwrap();

        let same = |a: &Array2<f64>, b: &Array2<f64>| a.iter().zip(b).all(|(p, q)| p.to_bits() == q.to_bits());
        let m = view.model();
        if !(same(state.model.centroids(), m.centroids())
            && same(state.model.precision_roots(), m.precision_roots())
            && state.model.weights() == m.weights())
        {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("100 single-sample cases, d in {{0.5, 1, 2, 4}}, rate eps/d^2: {mismatches} not bitwise equal"),
    )
}

fn criterion_6() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let thresholds = CollapseThresholds::default();

    // Four points (±1, ±1): mean 0, variance 1 per coordinate.
    let square = DataSet::from_array(ndarray::array![[-1.0, -1.0], [-1.0, 1.0], [1.0, -1.0], [1.0, 1.0]]).unwrap();
    let degenerate = MixtureModel::new(Array1::from_elem(4, 0.25), Array2::zeros((4, 2)), Array2::ones((4, 2))).unwrap();
    let norm = grad_exact(square.samples().view(), &degenerate).unwrap().projected_norm(&degenerate);
    let label = detect_collapse(&degenerate, &square.stats(), &square, &thresholds).unwrap();
    pass &= norm < 1e-10 && label == Diagnosis::Degenerate;
    notes.push(format!("degenerate: |grad| {norm:.1e} -> {label}"));

    let single = MixtureModel::new(
        ndarray::array![1.0, 0.0, 0.0, 0.0],
        ndarray::array![[0.0, 0.0], [10.0, 10.0], [-10.0, 10.0], [10.0, -10.0]],
        Array2::ones((4, 2)),
    )
    .unwrap();
    for (name, grads) in [
        ("exact", grad_exact(square.samples().view(), &single).unwrap()),
        ("max_component", grad_max_component(square.samples().view(), &single).unwrap()),
    ] {
        let norm = grads.projected_norm(&single);
        pass &= norm < 1e-10;
        notes.push(format!("single/{name}: |grad| {norm:.1e}"));
    }
    let label = detect_collapse(&single, &square.stats(), &square, &thresholds).unwrap();
    pass &= label == Diagnosis::SingleComponent;
    notes.push(format!("-> {label}"));

    // Two clusters {-1.5, -0.5} and {4.5, 5.5}: means -1 and 5, precision root 2.
    let pairs = DataSet::from_array(ndarray::array![[-1.5], [-0.5], [4.5], [5.5]]).unwrap();
    let mut w = Array1::zeros(9);
    w[0] = 0.5;
    w[1] = 0.5;
    let mut mu = Array2::from_elem((9, 1), 20.0);
    mu[[0, 0]] = -1.0;
    mu[[1, 0]] = 5.0;
    let sparse = MixtureModel::new(w, mu, Array2::from_elem((9, 1), 2.0)).unwrap();
    let norm = grad_max_component(pairs.samples().view(), &sparse).unwrap().projected_norm(&sparse);
    let label = detect_collapse(&sparse, &pairs.stats(), &pairs, &thresholds).unwrap();
    pass &= norm < 1e-10 && label == Diagnosis::Sparse;
    notes.push(format!("sparse/max_component: |grad| {norm:.1e} -> {label}"));

    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------------------

/// Brute-force matching over all 24 assignments of four centroids.
fn rmse_oracle(model: &MixtureModel, centers: &Array2<f64>) -> f64 {
    let mut best = f64::INFINITY;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| p[i] != p[j]));
                    if !distinct {
                        continue;
                    }
                    let sq: f64 = (0..4)
                        .map(|k| {
                            model
                                .centroid(p[k])
                                .iter()
                                .zip(centers.row(k))
                                .map(|(x, y)| (x - y) * (x - y))
                                .sum::<f64>()
                        })
                        .sum();
                    best = best.min((sq / 4.0).sqrt());
                }
            }
        }
    }
    best
}

struct BenchmarkRuns {
    annealed_healthy: usize,
    annealed_ok: usize,
    worst_rmse: f64,
    unannealed_unhealthy: usize,
    unannealed_labels: Vec<Diagnosis>,
    elapsed_annealed: Duration,
    first_model: MixtureModel,
}

fn benchmark_runs() -> BenchmarkRuns {
    let bench = FourClusterBenchmark::default();
    let centers = bench.centers();
    let limit = 0.1 * bench.cluster_std;
    let start = Instant::now();
    let (mut healthy, mut ok, mut worst) = (0, 0, 0.0f64);
    let mut first_model = None;
    for seed in 0..100 {
        let data = bench.data(seed).unwrap().data;
        let out = train(&bench.annealed_config(seed).unwrap(), &data).unwrap();
        let label = out.history.last().unwrap().diagnosis;
        let rmse = rmse_oracle(&out.model, &centers);
        worst = worst.max(rmse);
        if label == Diagnosis::Healthy {
            healthy += 1;
            if rmse <= limit {
                ok += 1;
            }
        }
        first_model.get_or_insert(out.model);
    }
    let elapsed_annealed = start.elapsed();
    let mut labels = Vec::new();
    for seed in 0..100 {
        let data = bench.data(seed).unwrap().data;
        let out = train(&bench.unannealed_config(seed).unwrap(), &data).unwrap();
        labels.push(out.history.last().unwrap().diagnosis);
    }
    BenchmarkRuns {
        annealed_healthy: healthy,
        annealed_ok: ok,
        worst_rmse: worst,
        unannealed_unhealthy: labels.iter().filter(|l| **l != Diagnosis::Healthy).count(),
        unannealed_labels: labels,
        elapsed_annealed,
        first_model: first_model.unwrap(),
    }
}

fn criterion_7(runs: &BenchmarkRuns) -> Outcome {
    outcome(
        runs.annealed_ok >= 95 && runs.elapsed_annealed < Duration::from_secs(300),
        format!(
            "{}/100 healthy, {}/100 healthy with matched RMSE <= 0.05 (0.1 x cluster std), worst RMSE {:.3}, {:.1}s",
            runs.annealed_healthy,
            runs.annealed_ok,
            runs.worst_rmse,
            runs.elapsed_annealed.as_secs_f64()
        ),
    )
}

fn criterion_8(runs: &BenchmarkRuns) -> Outcome {
    let annealed_unhealthy = 100 - runs.annealed_healthy;
    let count = |d: Diagnosis| runs.unannealed_labels.iter().filter(|l| **l == d).count();
    outcome(
        runs.unannealed_unhealthy > annealed_unhealthy,
        format!(
            "non-healthy without annealing {} (single_component {}, sparse {}, degenerate {}) vs annealed {annealed_unhealthy}",
            runs.unannealed_unhealthy,
            count(Diagnosis::SingleComponent),
            count(Diagnosis::Sparse),
            count(Diagnosis::Degenerate)
        ),
    )
}

fn criterion_9(model: &MixtureModel) -> Outcome {
    let bench = FourClusterBenchmark::default();
    let inliers = gaussian_blobs(&bench.centers(), bench.cluster_std, 1000, 7001).unwrap().data;
    let reference = gaussian_blobs(&bench.centers(), bench.cluster_std, 1000, 7002).unwrap().data;
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let noise = random_data(&mut rng, 1000, 2, 8.0);

    let cal = |r| Some(Calibration { reference: r, percentile: 5.0 });
    let inlier_report = outlier_report(&inliers, model, 10, cal(&reference)).unwrap();
    let noise_report = outlier_report(&noise, model, 10, cal(&reference)).unwrap();
    let min_inlier_window = inlier_report.window_means.iter().cloned().fold(f64::INFINITY, f64::min);
    let max_noise_window = noise_report.window_means.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let frac = |v: &[bool]| v.iter().filter(|b| **b).count() as f64 / v.len() as f64;
    let noise_flagged = frac(noise_report.verdicts.as_ref().unwrap());
    let inliers_flagged = frac(inlier_report.verdicts.as_ref().unwrap());
    let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    let separated = min_inlier_window > max_noise_window
        && noise_flagged >= 0.9
        && inliers_flagged <= 0.1
        && mean(&outlier_scores(&inliers, model).unwrap()) > mean(&noise_report.scores);

    let tied = MixtureModel::tied(
        ndarray::array![[-10.0, -10.0], [-10.0, 10.0], [10.0, -10.0], [10.0, 10.0]],
        1.0,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9090);
    let draws = sample(&tied, 10_000, &mut rng).unwrap();
    let mut counts = [0usize; 4];
    for row in draws.rows() {
        counts[assign_cluster(row.as_slice().unwrap(), &tied).unwrap()] += 1;
    }
    let expected = 2500.0;
    let chi2: f64 = counts.iter().map(|c| (*c as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(3.0).unwrap().cdf(chi2);

    outcome(
        separated && p > 0.01,
        format!(
            "inlier window min {min_inlier_window:.2} > noise window max {max_noise_window:.2}; \
             flagged at 5th pct: noise {:.1}%, inliers {:.1}%; tied counts {counts:?}, chi2 {chi2:.2}, p {p:.3}",
            100.0 * noise_flagged,
            100.0 * inliers_flagged
        ),
    )
}

fn criterion_10() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);

    let images = stroke_images(50, 3).unwrap().data;
    let bytes = encode_idx(&images).unwrap();
    let back = parse_idx(&bytes, "mem").unwrap();
    let idx_ok = encode_idx(&back).unwrap() == bytes
        && back.samples().iter().zip(images.samples()).all(|(a, b)| a.to_bits() == b.to_bits());
    pass &= idx_ok;
    notes.push(format!("idx {}", if idx_ok { "bitwise" } else { "MISMATCH" }));

    let values = Array2::from_shape_fn((40, 7), |(n, i)| match (n + i) % 4 {
        0 => rng.random_range(-1e3..1e3),
        1 => rng.random::<f64>() * 1e-300,
        2 => -rng.random::<f64>() * 1e300,
        _ => rng.random::<f64>(),
    });
    let mut buf = Vec::new();
    write_csv(&mut buf, &values).unwrap();
    let parsed = parse_csv(buf.as_slice(), "mem").unwrap();
    let csv_ok = parsed.samples().iter().zip(&values).all(|(a, b)| a.to_bits() == b.to_bits());
    pass &= csv_ok;
    notes.push(format!("csv {}", if csv_ok { "bitwise" } else { "MISMATCH" }));

    let bench = FourClusterBenchmark::default();
    let data = bench.data(3).unwrap().data;
    for sampling in [BatchSampling::WithReplacement, BatchSampling::EpochPermutation] {
        let mut config = bench.annealed_config(3).unwrap();
        config.iterations = 1000;
        config.sampling = sampling;
        config.history_every = 50;
        config.train_precisions = true;

        let mut full = TrainState::new(&config, &data).unwrap();
        full.run(&config, &data).unwrap();

        let mut first = TrainState::new(&config, &data).unwrap();
        first.run_until(&config, &data, 437).unwrap();
        let ckpt = Checkpoint {
            regime: config.regime,
            topology: config.topology().unwrap(),
            model: first.model.clone(),
            sigma: config.sigma,
            epsilon: config.epsilon,
            iteration: first.t,
            seed: config.seed,
            provenance: Provenance::default(),
            resume: Some(first.resume_state()),
        };
        let encoded = encode_checkpoint(&ckpt);
        let decoded = decode_checkpoint(&encoded).unwrap();
        let ckpt_ok = decoded == ckpt && encode_checkpoint(&decoded) == encoded;
        let mut resumed = TrainState::resume(
            &config,
            &data,
            decoded.model,
            decoded.iteration,
            decoded.resume.as_ref().unwrap(),
        )
        .unwrap();
        resumed.run(&config, &data).unwrap();
        let tail: Vec<_> = full.history.iter().filter(|r| r.t > 437).cloned().collect();
        let resume_ok = resumed.model == full.model && resumed.history == tail;
        pass &= ckpt_ok && resume_ok;
        notes.push(format!(
            "checkpoint {} / resume ({}) {}",
            if ckpt_ok { "bitwise" } else { "MISMATCH" },
            sampling.as_str(),
            if resume_ok { "identical" } else { "DIVERGED" }
        ));
    }
    outcome(pass, notes.join("; "))
}

// ---------------------------------------------------------------------------

fn cli_subset_run() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let images = stroke_images(500, 2024).unwrap().data;
    let data_path = dir.path().join("train-images.idx3-ubyte");
    somgmm::io::write_idx(&data_path, &images).unwrap();

    let reference = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/reference.toml")).unwrap();
    let config = reference
        .lines()
        .map(|l| {
            if l.starts_with("data =") {
                format!("data = {:?}", data_path.display().to_string())
            } else if l.starts_with("output_dir =") {
                "output_dir = \"run\"".to_string()
            } else {
                l.to_string()
            }
        })
        .collect::<Vec<_>>()
        .join("\n");
    let config_path = dir.path().join("reference.toml");
    std::fs::write(&config_path, config).unwrap();

    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_somgmm"))
        .args(["train", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let run = dir.path().join("run");
    let image = std::fs::read(run.join("centroids.pgm")).unwrap_or_default();
    let pgm = somgmm::io::pgm::parse_pgm(&image);
    let trace = std::fs::read_to_string(run.join("schedule.csv")).unwrap_or_default();
    let rows = trace.lines().count().saturating_sub(1);
    let pass = out.status.code() == Some(0)
        && run.join("model.ckpt").exists()
        && pgm.as_ref().is_some_and(|p| p.width == 5 * 28 + 4 && p.height == 5 * 28 + 4)
        && rows == 241;
    let stdout = String::from_utf8_lossy(&out.stdout);
    let diagnosis = stdout.lines().find(|l| l.starts_with("diagnosis")).unwrap_or("diagnosis: ?");
    outcome(
        pass,
        format!(
            "exit {:?}, centroid image {}, {rows} trace rows, {diagnosis}, {elapsed:.1}s{}",
            out.status.code(),
            pgm.map(|p| format!("{}x{}", p.width, p.height)).unwrap_or_else(|| "missing".into()),
            if out.status.success() { String::new() } else { format!(" stderr: {}", String::from_utf8_lossy(&out.stderr).trim()) }
        ),
    )
}

fn main() -> ExitCode {
    let mut failed = 0;
    let mut report = |name: &str, o: Outcome| {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    };
    report("criterion 1 (gradient correctness)", criterion_1());
    report("criterion 2 (max-component bound)", criterion_2());
    report("criterion 3 (Kronecker limit)", criterion_3());
    report("criterion 4 (SOM energy identity)", criterion_4());
    report("criterion 5 (update rule equivalence)", criterion_5());
    report("criterion 6 (collapse taxonomy)", criterion_6());
    let runs = benchmark_runs();
    report("criterion 7 (100-seed benchmark)", criterion_7(&runs));
    report("criterion 8 (annealing benefit)", criterion_8(&runs));
    report("criterion 9 (outliers and sampling)", criterion_9(&runs.first_model));
    report("criterion 10 (IO round trips and resume)", criterion_10());
    report("cli (500-image IDX subset, reference config)", cli_subset_run());
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} failed");
        ExitCode::FAILURE
    }
}
