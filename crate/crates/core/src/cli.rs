//! Command-line interface.
//!
//! Exit codes: 0 on success, 2 for configuration/usage errors (including
//! unknown `--set` keys), 1 for runtime failures.

use clap::{Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::contmetric::ContinuityReport;
use crate::experiment::{
    dataset::DatasetMeta, eval, Dataset, ExperimentConfig, Model, ModelKind,
};
use crate::gauss::{entropy_mc_with_stderr, DensityTruncation, So3Gaussian};
use crate::so3::{self, Rotation, Vec3};
use crate::wigner::make_toy_dataset;
use crate::{Error, Result};

#[derive(Parser)]
#[command(name = "so3vae", version, about = "Rotation-group variational autoencoding toolkit")]
pub struct Cli {
    /// JSON configuration file; defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for generated files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Flat config overrides, repeatable: --set key=value.
    #[arg(long = "set", global = true)]
    pub sets: Vec<String>,
    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand)]
pub enum Cmd {
    /// Generates toy train/eval datasets into the output directory.
    GenData,
    /// Trains a model on a dataset and writes model, metadata and results.
    Train {
        /// Training CSV; defaults to <out-dir>/train.csv.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Evaluation CSV used for the results row; defaults to <out-dir>/eval.csv.
        #[arg(long)]
        eval_data: Option<PathBuf>,
    },
    /// Re-evaluates a saved model on a dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        /// Evaluation CSV; defaults to <out-dir>/eval.csv.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Draws rotations from the rotation-valued posterior at a given scale.
    Sample {
        /// Comma-separated scale, one or three components.
        #[arg(long)]
        sigma: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
    },
    /// Evaluates the pushforward log-density at an axis-angle rotation.
    Density {
        #[arg(long)]
        sigma: String,
        /// Comma-separated rotation axis (normalized internally).
        #[arg(long, default_value = "0,0,1")]
        axis: String,
        #[arg(long)]
        angle: f64,
    },
    /// Monte Carlo entropy of the pushforward at a given scale.
    Entropy {
        #[arg(long)]
        sigma: String,
        #[arg(long, default_value_t = 100_000)]
        n_samples: usize,
    },
    /// Continuity report for a saved model's encoder.
    Continuity {
        #[arg(long)]
        model: PathBuf,
    },
    /// Encodes and reconstructs one S^1 orbit with a saved model.
    Trajectory {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value = "0,0,1")]
        axis: String,
        #[arg(long, default_value_t = 100)]
        steps: usize,
    },
}

/// Runs the CLI and maps errors to process exit codes.
pub fn run() -> i32 {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e @ Error::Config(_)) | Err(e @ Error::InvalidParameter(_)) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => ExperimentConfig::default(),
    };
    cfg.apply_overrides(&cli.sets)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_sigma(s: &str) -> Result<Vec3> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad sigma component: {e}")))
        })
        .collect::<Result<_>>()?;
    match parts.as_slice() {
        [s] => Ok([*s, *s, *s]),
        [a, b, c] => Ok([*a, *b, *c]),
        _ => Err(Error::InvalidParameter(
            "sigma needs one or three comma-separated components".into(),
        )),
    }
}

fn parse_axis(s: &str) -> Result<Vec3> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .map_err(|e| Error::InvalidParameter(format!("bad axis component: {e}")))
        })
        .collect::<Result<_>>()?;
    let [a, b, c] = parts.as_slice() else {
        return Err(Error::InvalidParameter(
            "axis needs three comma-separated components".into(),
        ));
    };
    let n = so3::norm3(&[*a, *b, *c]);
    if n < 1e-12 {
        return Err(Error::InvalidParameter("axis must be nonzero".into()));
    }
    Ok([a / n, b / n, c / n])
}

#[derive(Serialize)]
struct RunMetadata<'a> {
    label: String,
    config_hash: String,
    seed: u64,
    content_seed: u64,
    config: &'a ExperimentConfig,
    version: &'static str,
}

fn write_metadata(cfg: &ExperimentConfig, label: &str, path: &Path) -> Result<()> {
    let meta = RunMetadata {
        label: label.to_string(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        content_seed: cfg.content_seed,
        config: cfg,
        version: env!("CARGO_PKG_VERSION"),
    };
    std::fs::write(path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

fn build_dataset(cfg: &ExperimentConfig, n: usize, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let spec = cfg.rep_spec()?;
    let pairs = make_toy_dataset(&spec, cfg.content_seed, n, rng)?;
    Dataset::new(
        pairs,
        DatasetMeta {
            n,
            total_dim: spec.total_dim(),
            blocks: spec.blocks().to_vec(),
            content_seed: cfg.content_seed,
            seed: cfg.seed,
        },
    )
}

fn run_label(cfg: &ExperimentConfig) -> Result<String> {
    Ok(match cfg.model_kind()? {
        ModelKind::VaeNormal3 => cfg.model.clone(),
        _ => format!("{}-{}", cfg.model, cfg.head),
    })
}

fn dispatch(cli: &Cli) -> Result<()> {
    std::fs::create_dir_all(&cli.out_dir)?;
    match &cli.cmd {
        Cmd::GenData => {
            let cfg = load_config(cli)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let train = build_dataset(&cfg, cfg.n_train, &mut rng)?;
            let evald = build_dataset(&cfg, cfg.n_eval, &mut rng)?;
            let train_path = cli.out_dir.join("train.csv");
            let eval_path = cli.out_dir.join("eval.csv");
            train.save(&train_path)?;
            evald.save(&eval_path)?;
            println!(
                "wrote {} ({} rows) and {} ({} rows)",
                train_path.display(),
                train.len(),
                eval_path.display(),
                evald.len()
            );
            Ok(())
        }
        Cmd::Train { data, eval_data } => {
            let cfg = load_config(cli)?;
            let train_path = data.clone().unwrap_or_else(|| cli.out_dir.join("train.csv"));
            let eval_path = eval_data
                .clone()
                .unwrap_or_else(|| cli.out_dir.join("eval.csv"));
            let train_d = Dataset::load(&train_path)?;
            let eval_d = Dataset::load(&eval_path)?;
            let label = run_label(&cfg)?;
            let out = crate::experiment::train(&cfg, &train_d)?;
            let row = eval::evaluate(&out.model, &cfg, &eval_d, out.seconds)?;
            let model_path = cli.out_dir.join(format!("model-{label}-{}.json", cfg.seed));
            out.model.save(&model_path)?;
            write_metadata(
                &cfg,
                &label,
                &cli.out_dir
                    .join(format!("run-{label}-{}.meta.json", cfg.seed)),
            )?;
            eval::append_results(&cli.out_dir.join("results.csv"), &[row.clone()])?;
            println!("{}", eval::RESULTS_HEADER);
            println!("{}", row.to_csv_line());
            println!("model written to {}", model_path.display());
            Ok(())
        }
        Cmd::Eval { model, data } => {
            let cfg = load_config(cli)?;
            let eval_path = data.clone().unwrap_or_else(|| cli.out_dir.join("eval.csv"));
            let eval_d = Dataset::load(&eval_path)?;
            let m = Model::load(model)?;
            let row = eval::evaluate(&m, &cfg, &eval_d, 0.0)?;
            eval::append_results(&cli.out_dir.join("results.csv"), &[row.clone()])?;
            println!("{}", eval::RESULTS_HEADER);
            println!("{}", row.to_csv_line());
            Ok(())
        }
        Cmd::Sample { sigma, n } => {
            let cfg = load_config(cli)?;
            let sigma = parse_sigma(sigma)?;
            let d = So3Gaussian::new(Rotation::identity(), sigma)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let path = cli.out_dir.join("samples.csv");
            let mut f = std::fs::File::create(&path)?;
            writeln!(f, "r00,r01,r02,r10,r11,r12,r20,r21,r22,theta")?;
            for _ in 0..*n {
                let (r, _) = d.sample(&mut rng);
                let flat = r.to_flat();
                let fields: Vec<String> = flat.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(f, "{},{:.16e}", fields.join(","), so3::theta_of(&r))?;
            }
            println!("wrote {} samples to {}", n, path.display());
            Ok(())
        }
        Cmd::Density { sigma, axis, angle } => {
            let cfg = load_config(cli)?;
            let sigma = parse_sigma(sigma)?;
            let axis = parse_axis(axis)?;
            let d = So3Gaussian::new(Rotation::identity(), sigma)?;
            let r = so3::exp_map(&[axis[0] * angle, axis[1] * angle, axis[2] * angle]);
            let trunc = DensityTruncation::new(cfg.k_max)?;
            let ld = d.log_density(&r, trunc, cfg.haar)?;
            println!(
                "{}",
                serde_json::json!({
                    "log_density": ld,
                    "density": ld.exp(),
                    "angle": angle,
                    "haar": cfg.haar,
                })
            );
            Ok(())
        }
        Cmd::Entropy { sigma, n_samples } => {
            let cfg = load_config(cli)?;
            let sigma = parse_sigma(sigma)?;
            let d = So3Gaussian::new(Rotation::identity(), sigma)?;
            let trunc = DensityTruncation::new(cfg.k_max)?;
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let (h, se) = entropy_mc_with_stderr(&d, *n_samples, trunc, cfg.haar, &mut rng);
            println!(
                "{}",
                serde_json::json!({
                    "entropy": h,
                    "stderr": se,
                    "n_samples": n_samples,
                    "haar": cfg.haar,
                })
            );
            Ok(())
        }
        Cmd::Continuity { model } => {
            let cfg = load_config(cli)?;
            let m = Model::load(model)?;
            let report: ContinuityReport = eval::disc_metric(&m, &cfg)?;
            let path = cli.out_dir.join("continuity.json");
            std::fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            println!(
                "{}",
                serde_json::json!({
                    "disc_fraction": report.disc_fraction,
                    "n_paths": report.n_paths,
                    "report": path.display().to_string(),
                })
            );
            Ok(())
        }
        Cmd::Trajectory { model, axis, steps } => {
            let cfg = load_config(cli)?;
            let m = Model::load(model)?;
            let axis = parse_axis(axis)?;
            let pts = eval::reconstruct_trajectory(&m, &cfg, &axis, *steps)?;
            let path = cli.out_dir.join("trajectory.csv");
            let mut f = std::fs::File::create(&path)?;
            writeln!(
                f,
                "step,phi,recon_err,r00,r01,r02,r10,r11,r12,r20,r21,r22"
            )?;
            for p in &pts {
                let fields: Vec<String> =
                    p.r_flat.iter().map(|v| format!("{v:.16e}")).collect();
                writeln!(
                    f,
                    "{},{:.16e},{:.16e},{}",
                    p.step,
                    p.phi,
                    p.recon_err,
                    fields.join(",")
                )?;
            }
            let max_err = pts.iter().map(|p| p.recon_err).fold(0.0, f64::max);
            println!(
                "{}",
                serde_json::json!({
                    "points": pts.len(),
                    "max_recon_err": max_err,
                    "csv": path.display().to_string(),
                })
            );
            Ok(())
        }
    }
}
