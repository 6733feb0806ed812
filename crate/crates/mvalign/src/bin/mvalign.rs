//! Command-line front end: reproducible generate/train/align/evaluate
//! pipelines over the library, emitting JSON reports and CSV matrices.
//!
//! Exit codes: 0 success, 2 usage or configuration problems, 3 numeric
//! failures.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mvalign::aligner::AlignmentRecord;
use mvalign::datagen::{generate_toy, read_bundle, write_bundle, ToyConfig};
use mvalign::experiment::{
    align_stage, prepare_dataset, score_alignment, train_stage, CurveConfig, DatasetSpec,
    ExperimentConfig,
};
use mvalign::metrics::{kendall_tau_against, Permutation};
use mvalign::model::TwoViewModel;
use mvalign::{AlignMethod, Error};

#[derive(Parser)]
#[command(
    name = "mvalign",
    about = "Learn a shared/private two-view latent model from anchor pairs and recover the correspondence of the remaining points",
    version
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalArgs {
    /// Configuration file (JSON); meaning depends on the subcommand.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed override: replaces every seed in the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for intra-run parallelism (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Treat the first row of input CSV files as a header.
    #[arg(long, global = true, default_value_t = false)]
    has_header: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a toy dataset bundle (view1.csv, view2.csv, meta.json).
    Gen,
    /// Train the anchor model on a dataset bundle; writes checkpoint.json.
    Train {
        /// Dataset bundle directory (from `gen`).
        #[arg(long)]
        data: PathBuf,
    },
    /// Align the unaligned rows against a trained checkpoint.
    Align {
        /// Dataset bundle directory.
        #[arg(long)]
        data: PathBuf,
        /// Trained checkpoint (from `train`).
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "nonmyopic")]
        method: MethodArg,
    },
    /// Print the Kendall-tau distance of an alignment against a ground
    /// truth permutation (identity when no truth is given).
    Eval {
        /// alignment.json produced by `align` or `experiment`.
        #[arg(long)]
        alignment: PathBuf,
        /// Ground truth: a JSON file holding either a permutation array or
        /// an object with a "permutation" / "ground_truth_permutation" key.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Run the full pipeline from an experiment config.
    Experiment,
    /// Mis-alignment sensitivity curve: free energy against Kendall-tau.
    Curve,
}

#[derive(clap::ValueEnum, Clone, Copy)]
enum MethodArg {
    Myopic,
    Nonmyopic,
}

impl From<MethodArg> for AlignMethod {
    fn from(m: MethodArg) -> AlignMethod {
        match m {
            MethodArg::Myopic => AlignMethod::Myopic,
            MethodArg::Nonmyopic => AlignMethod::Nonmyopic,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.global.threads {
        // Ignore failure: the pool can only be built once per process.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

fn require_config(global: &GlobalArgs) -> Result<&Path, Error> {
    global
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("this subcommand requires --config <path>".into()))
}

fn run(cli: &Cli) -> Result<(), Error> {
    let global = &cli.global;
    match &cli.command {
        Command::Gen => {
            let path = require_config(global)?;
            if !path.exists() {
                return Err(Error::MissingArtifact(path.display().to_string()));
            }
            let mut toy: ToyConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            if let Some(seed) = global.seed {
                toy.seed = seed;
            }
            toy.validate()?;
            let dataset = generate_toy(&toy)?;
            write_bundle(&global.out, &dataset)?;
            println!(
                "wrote {} ({} x {} / {} x {})",
                global.out.display(),
                dataset.view1.nrows(),
                dataset.view1.ncols(),
                dataset.view2.nrows(),
                dataset.view2.ncols()
            );
            Ok(())
        }
        Command::Train { data } => {
            let cfg = load_experiment_config(global, Some(data.clone()))?;
            let prepared = prepare_dataset(&cfg.dataset)?;
            let (model, anchors, rest) = train_stage(&prepared, &cfg)?;
            std::fs::create_dir_all(&global.out)?;
            let ckpt = global.out.join("checkpoint.json");
            model.save_checkpoint(&ckpt)?;
            std::fs::write(
                global.out.join("split.json"),
                serde_json::to_string_pretty(&serde_json::json!({
                    "schema_version": 1,
                    "anchor_indices": anchors,
                    "b_indices": rest,
                }))?,
            )?;
            let fe = model
                .trace
                .last()
                .map(|t| t.free_energy)
                .unwrap_or(f64::NAN);
            println!("wrote {} (free energy {fe})", ckpt.display());
            Ok(())
        }
        Command::Align {
            data,
            checkpoint,
            method,
        } => {
            let mut cfg = load_experiment_config(global, Some(data.clone()))?;
            cfg.method = (*method).into();
            let prepared = prepare_dataset(&cfg.dataset)?;
            let model = TwoViewModel::load_checkpoint(checkpoint)?;
            let split_path = checkpoint
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join("split.json");
            if !split_path.exists() {
                return Err(Error::MissingArtifact(split_path.display().to_string()));
            }
            let split: serde_json::Value =
                serde_json::from_str(&std::fs::read_to_string(&split_path)?)?;
            let rest: Vec<usize> = serde_json::from_value(
                split
                    .get("b_indices")
                    .cloned()
                    .ok_or_else(|| Error::Config("split.json lacks b_indices".into()))?,
            )?;
            let alignment = align_stage(&model, &prepared, &rest, &cfg)?;
            std::fs::create_dir_all(&global.out)?;
            let align_path = global.out.join("alignment.json");
            alignment.save_json(&align_path)?;
            if let Some(dm) = &alignment.distance_matrix {
                dm.write_csv(&global.out.join("distance_matrix.csv"))?;
            }
            if let Some(tau) = score_alignment(&alignment, &prepared, &rest)? {
                println!("wrote {} (kendall_tau {tau})", align_path.display());
            } else {
                println!("wrote {}", align_path.display());
            }
            Ok(())
        }
        Command::Eval { alignment, truth } => {
            if !alignment.exists() {
                return Err(Error::MissingArtifact(alignment.display().to_string()));
            }
            let record: AlignmentRecord =
                serde_json::from_str(&std::fs::read_to_string(alignment)?)?;
            let perm = Permutation::new(record.permutation)?;
            let truth_perm = match truth {
                Some(path) => load_truth(path, perm.len())?,
                None => Permutation::identity(perm.len()),
            };
            let tau = kendall_tau_against(&perm, &truth_perm)?;
            println!("{tau}");
            Ok(())
        }
        Command::Experiment => {
            let path = require_config(global)?;
            let mut cfg = ExperimentConfig::from_json_file(path)?;
            if global.has_header {
                match &mut cfg.dataset {
                    DatasetSpec::Files { has_header, .. }
                    | DatasetSpec::SplitFile { has_header, .. } => *has_header = true,
                    _ => {}
                }
            }
            if let Some(seed) = global.seed {
                cfg.override_seed(seed);
            }
            let report = mvalign::run_experiment(&cfg, &global.out)?;
            println!(
                "report: {} (kendall_tau {})",
                global.out.join("report.json").display(),
                report
                    .kendall_tau
                    .map(|t| t.to_string())
                    .unwrap_or_else(|| "n/a".into())
            );
            Ok(())
        }
        Command::Curve => {
            let path = require_config(global)?;
            let mut cfg = CurveConfig::from_json_file(path)?;
            if let Some(seed) = global.seed {
                cfg.seed = seed;
                cfg.toy.seed = seed;
            }
            let summary = mvalign::run_curve(&cfg, &global.out)?;
            println!(
                "curve: {} (spearman {})",
                global.out.join("curve.csv").display(),
                summary
                    .spearman
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| "n/a".into())
            );
            Ok(())
        }
    }
}

/// Experiment config for the staged subcommands: from --config when given,
/// with the dataset source replaced by the staged bundle directory.
fn load_experiment_config(
    global: &GlobalArgs,
    bundle: Option<PathBuf>,
) -> Result<ExperimentConfig, Error> {
    let mut cfg = match &global.config {
        Some(path) => ExperimentConfig::from_json_file(path)?,
        None => {
            let dir = bundle
                .clone()
                .ok_or_else(|| Error::Config("either --config or --data is required".into()))?;
            // Minimal defaults around the bundle; n_init from the bundle size.
            let (v1, _, _) = read_bundle(&dir)?;
            let n = v1.nrows();
            ExperimentConfig {
                dataset: DatasetSpec::Bundle { dir },
                n_init: (n / 10).max(2),
                anchor_strategy: mvalign::AnchorStrategy::Random,
                anchor_seed: 0,
                model: Default::default(),
                method: AlignMethod::Nonmyopic,
            }
        }
    };
    if let Some(dir) = bundle {
        cfg.dataset = DatasetSpec::Bundle { dir };
    }
    if global.has_header {
        match &mut cfg.dataset {
            DatasetSpec::Files { has_header, .. } | DatasetSpec::SplitFile { has_header, .. } => {
                *has_header = true;
            }
            _ => {}
        }
    }
    if let Some(seed) = global.seed {
        cfg.override_seed(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Ground truth file: a bare JSON array, or an object carrying
/// "ground_truth_permutation" (bundle meta.json) or "permutation".
fn load_truth(path: &Path, expected_len: usize) -> Result<Permutation, Error> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let value: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(path)?)?;
    let array = if value.is_array() {
        value
    } else {
        value
            .get("ground_truth_permutation")
            .or_else(|| value.get("permutation"))
            .cloned()
            .ok_or_else(|| {
                Error::Config(format!(
                    "{} holds neither a permutation array nor a permutation key",
                    path.display()
                ))
            })?
    };
    let mapping: Vec<usize> = serde_json::from_value(array)?;
    if mapping.len() != expected_len {
        return Err(Error::Config(format!(
            "truth permutation has length {}, alignment has {expected_len}",
            mapping.len()
        )));
    }
    Permutation::new(mapping)
}
