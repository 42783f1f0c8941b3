use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use somgmm::io::{load_checkpoint, load_dataset, load_run_config, DataFormat};
use somgmm::pipeline::{run_training, RunOptions};
use somgmm::{build_kernel, Calibration, DataSet, Error, Result, SomView};

#[derive(Debug, Parser)]
#[command(name = "somgmm", version, about = "Train and use SGD Gaussian mixture models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train from a run configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Stop after this iteration and write a resumable checkpoint.
        #[arg(long)]
        stop_at: Option<u64>,
    },
    /// Per-sample outlier scores and window means as CSV.
    Score {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<DataFormat>,
        #[arg(long, default_value_t = somgmm::inference::DEFAULT_WINDOW)]
        window: usize,
        /// Inlier batch used to calibrate the outlier threshold.
        #[arg(long)]
        reference: Option<PathBuf>,
        #[arg(long, default_value_t = 5.0, requires = "reference")]
        percentile: f64,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Most likely component of every sample as CSV.
    Cluster {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<DataFormat>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Draw samples from a trained model as CSV.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(short = 'n', long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        /// Number of parallel sampling tasks; output depends on it.
        #[arg(long, default_value_t = 1)]
        tasks: usize,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Check the mixture/SOM identity for a tied model on a data set.
    VerifyEquivalence {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_format)]
        format: Option<DataFormat>,
        /// Kernel radius; defaults to the schedule value at the checkpoint.
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Write a synthetic data set: `strokes` (28x28 IDX images) or `blobs`
    /// (four 2-D Gaussian clusters as CSV).
    Generate {
        #[arg(value_parser = ["strokes", "blobs"])]
        kind: String,
        #[arg(short = 'n', long)]
        count: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        output: PathBuf,
    },
    /// Print a checkpoint summary.
    Inspect {
        #[arg(long)]
        model: PathBuf,
    },
}

fn parse_format(s: &str) -> std::result::Result<DataFormat, String> {
    DataFormat::parse(s).ok_or_else(|| format!("unknown format {s:?} (expected idx or csv)"))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(std::io::BufWriter::new(std::fs::File::create(p)?)),
        None => Box::new(std::io::BufWriter::new(std::io::stdout().lock())),
    })
}

fn load(path: &Path, format: Option<DataFormat>) -> Result<DataSet> {
    load_dataset(path, format)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train {
            config,
            resume,
            stop_at,
        } => {
            let run = load_run_config(&config)?;
            let out = run_training(&run, &RunOptions { resume, stop_at })?;
            let last = out.history.last();
            println!("iterations: {}", out.iteration);
            if let Some(row) = last {
                println!("loss: {}", row.loss);
            }
            println!("diagnosis: {}", out.diagnosis);
            println!("checkpoint: {}", out.checkpoint.display());
            println!("centroids: {}", out.centroid_image.display());
            println!("trace: {}", out.trace.display());
        }
        Command::Score {
            model,
            data,
            format,
            window,
            reference,
            percentile,
            output,
        } => {
            let ckpt = load_checkpoint(&model)?;
            let data = load(&data, format)?;
            let reference = reference.map(|p| load(&p, format)).transpose()?;
            let calibration = reference.as_ref().map(|r| Calibration {
                reference: r,
                percentile,
            });
            let report = somgmm::outlier_report(&data, &ckpt.model, window, calibration)?;
            let mut w = open_output(output.as_deref())?;
            match &report.verdicts {
                Some(_) => writeln!(w, "index,score,window_mean,outlier")?,
                None => writeln!(w, "index,score,window_mean")?,
            }
            for (n, score) in report.scores.iter().enumerate() {
                write!(w, "{n},{score},{}", report.window_mean_of(n))?;
                if let Some(v) = &report.verdicts {
                    write!(w, ",{}", v[n])?;
                }
                writeln!(w)?;
            }
            w.flush()?;
            if let Some(t) = report.threshold {
                eprintln!("threshold: {t}");
            }
        }
        Command::Cluster {
            model,
            data,
            format,
            output,
        } => {
            let ckpt = load_checkpoint(&model)?;
            let data = load(&data, format)?;
            let labels = somgmm::assign_clusters(&data, &ckpt.model)?;
            let mut w = open_output(output.as_deref())?;
            writeln!(w, "index,cluster")?;
            for (n, k) in labels.iter().enumerate() {
                writeln!(w, "{n},{k}")?;
            }
            w.flush()?;
        }
        Command::Sample {
            model,
            count,
            seed,
            tasks,
            output,
        } => {
            let ckpt = load_checkpoint(&model)?;
            let samples = somgmm::sample_parallel(&ckpt.model, count, seed, tasks)?;
            let w = open_output(output.as_deref())?;
            somgmm::io::csv::write_csv(w, &samples)?;
        }
        Command::VerifyEquivalence {
            model,
            data,
            format,
            sigma,
        } => {
            let ckpt = load_checkpoint(&model)?;
            let data = load(&data, format)?;
            let sigma = sigma.unwrap_or_else(|| ckpt.sigma.value_at(ckpt.iteration));
            let kernel = build_kernel(&ckpt.topology, sigma)?;
            let view = SomView::new(ckpt.model, ckpt.topology, kernel)?;
            let report = view.verify_equivalence(&data)?;
            println!("sigma: {sigma}");
            println!("smoothed_objective: {}", report.lhs);
            println!("som_form: {}", report.rhs);
            println!("normalizer: {}", report.normalizer);
            println!("max_abs_err: {:e}", report.max_abs_err);
        }
        Command::Generate {
            kind,
            count,
            seed,
            output,
        } => {
            if kind == "strokes" {
                let images = somgmm::synthetic::stroke_images(count, seed)?;
                somgmm::io::write_idx(&output, &images.data)?;
            } else {
                let bench = somgmm::synthetic::FourClusterBenchmark::default();
                let blobs = somgmm::synthetic::gaussian_blobs(&bench.centers(), bench.cluster_std, count, seed)?;
                somgmm::io::save_csv(&output, &blobs.data)?;
            }
        }
        Command::Inspect { model } => {
            let ckpt = load_checkpoint(&model)?;
            let m = &ckpt.model;
            println!("regime: {}", ckpt.regime.as_str());
            println!(
                "grid: {} {}x{}{}",
                ckpt.topology.kind().as_str(),
                ckpt.topology.rows(),
                ckpt.topology.cols(),
                if ckpt.topology.is_periodic() { " periodic" } else { "" }
            );
            println!("components: {}", m.components());
            println!("dim: {}", m.dim());
            println!("tied: {}", m.is_tied());
            println!("iteration: {}", ckpt.iteration);
            println!("seed: {}", ckpt.seed);
            println!("sigma_now: {}", ckpt.sigma.value_at(ckpt.iteration));
            println!("epsilon_now: {}", ckpt.epsilon.value_at(ckpt.iteration));
            println!("resumable: {}", ckpt.resume.is_some());
            println!("data_sha256: {}", ckpt.provenance.data_hash);
            println!("config_sha256: {}", ckpt.provenance.config_hash);
            let w: Vec<String> = m.weights().iter().map(|w| format!("{w:.4}")).collect();
            println!("weights: {}", w.join(" "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Error::NumericAbort { .. } = e {
                eprintln!("a snapshot of the last finite model was written to the output directory");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
