//! End-to-end experiment driver: dataset preparation, anchor training,
//! alignment, scoring, and machine-readable reports. The CLI subcommands
//! are thin wrappers over this module, and the staged subcommands
//! (gen/train/align/eval) produce identical results to a single
//! `run_experiment` call with the same seeds.

use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::aligner::{
    align_myopic, align_nonmyopic, AlignMethod, AlignmentResult, InferenceOptions,
};
use crate::datagen::{
    anchor_split, bundle_ground_truth, generate_toy, load_matrix, read_bundle, select_rows,
    split_views, write_bundle, AnchorStrategy, SplitRule, ToyConfig,
};
use crate::error::{Error, Result};
use crate::kernel::KernelKind;
use crate::metrics::{kendall_tau_against, misalignment_curve, CurveModelConfig, Permutation};
use crate::model::{relevance_profile, train, TwoViewModel};
use crate::optimize::OptimizerConfig;

/// Where the two views come from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum DatasetSpec {
    /// Generate a synthetic two-view dataset.
    Toy { toy: ToyConfig },
    /// Load two aligned view matrices from CSV files.
    Files {
        view1: PathBuf,
        view2: PathBuf,
        #[serde(default)]
        has_header: bool,
    },
    /// Load one matrix and split its columns into two views.
    SplitFile {
        path: PathBuf,
        rule: SplitRule,
        #[serde(default)]
        has_header: bool,
    },
    /// Read a previously written dataset bundle directory.
    Bundle { dir: PathBuf },
}

/// Model and inference settings for one experiment.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub q_latent_dim: usize,
    /// Inducing point count; defaults to min(|A|, 30).
    pub inducing: Option<usize>,
    pub kernel: KernelKind,
    pub ard_threshold: f64,
    pub optimizer: OptimizerConfig,
    pub inference: InferenceOptions,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            q_latent_dim: 6,
            inducing: None,
            kernel: KernelKind::ArdRbf,
            ard_threshold: 0.05,
            optimizer: OptimizerConfig::default(),
            inference: InferenceOptions::default(),
            seed: 0,
        }
    }
}

/// Full experiment description, readable from JSON.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub n_init: usize,
    #[serde(default = "default_anchor_strategy")]
    pub anchor_strategy: AnchorStrategy,
    #[serde(default)]
    pub anchor_seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default = "default_method")]
    pub method: AlignMethod,
}

fn default_anchor_strategy() -> AnchorStrategy {
    AnchorStrategy::Random
}

fn default_method() -> AlignMethod {
    AlignMethod::Nonmyopic
}

impl ExperimentConfig {
    pub fn from_json_file(path: &Path) -> Result<ExperimentConfig> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: ExperimentConfig = serde_json::from_str(&text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_init == 0 {
            return Err(Error::Config("n_init must be >= 1".into()));
        }
        if let DatasetSpec::Toy { toy } = &self.dataset {
            toy.validate()?;
            if self.n_init >= toy.n_points {
                return Err(Error::Config(format!(
                    "n_init {} must be below n_points {}",
                    self.n_init, toy.n_points
                )));
            }
        }
        Ok(())
    }

    /// Override every seed in the config with one master seed.
    pub fn override_seed(&mut self, seed: u64) {
        if let DatasetSpec::Toy { toy } = &mut self.dataset {
            toy.seed = seed;
        }
        self.anchor_seed = seed;
        self.model.seed = seed;
        self.model.inference.seed = seed;
    }
}

/// Wall-clock seconds per pipeline phase. Excluded from report
/// reproducibility comparisons.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub prepare_s: f64,
    pub train_s: f64,
    pub align_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ArtifactPaths {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset_dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alignment: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub distance_matrix_csv: Option<PathBuf>,
}

/// Machine-readable result of one experiment run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kendall_tau: Option<f64>,
    pub n: usize,
    pub n_init: usize,
    pub method: AlignMethod,
    pub shared_dim_count: usize,
    pub private_dim_count_view1: usize,
    pub private_dim_count_view2: usize,
    pub final_free_energy: f64,
    pub permutation: Vec<usize>,
    pub config: ExperimentConfig,
    pub artifacts: ArtifactPaths,
    pub timings: PhaseTimings,
    /// Set when the run failed partway; the report then carries whatever
    /// stages completed.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub partial: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExperimentReport {
    pub fn save_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Materialized dataset: both views plus ground truth when known.
pub struct PreparedDataset {
    pub view1: DMatrix<f64>,
    pub view2: DMatrix<f64>,
    pub ground_truth: Option<Permutation>,
}

pub fn prepare_dataset(spec: &DatasetSpec) -> Result<PreparedDataset> {
    match spec {
        DatasetSpec::Toy { toy } => {
            let ds = generate_toy(toy)?;
            let n = ds.view1.nrows();
            Ok(PreparedDataset {
                view1: ds.view1,
                view2: ds.view2,
                ground_truth: Some(Permutation::identity(n)),
            })
        }
        DatasetSpec::Files {
            view1,
            view2,
            has_header,
        } => {
            let v1 = load_matrix(view1, *has_header)?;
            let v2 = load_matrix(view2, *has_header)?;
            if v1.nrows() != v2.nrows() {
                return Err(Error::AnchorMismatch {
                    left: v1.nrows(),
                    right: v2.nrows(),
                });
            }
            // File rows are taken as aligned (that is what anchor training
            // assumes); scoring against a different truth goes through eval.
            let n = v1.nrows();
            Ok(PreparedDataset {
                view1: v1,
                view2: v2,
                ground_truth: Some(Permutation::identity(n)),
            })
        }
        DatasetSpec::SplitFile {
            path,
            rule,
            has_header,
        } => {
            let y = load_matrix(path, *has_header)?;
            let (v1, v2) = split_views(&y, *rule)?;
            let n = v1.nrows();
            Ok(PreparedDataset {
                view1: v1,
                view2: v2,
                ground_truth: Some(Permutation::identity(n)),
            })
        }
        DatasetSpec::Bundle { dir } => {
            let (v1, v2, meta) = read_bundle(dir)?;
            let truth = bundle_ground_truth(&meta)?;
            Ok(PreparedDataset {
                view1: v1,
                view2: v2,
                ground_truth: truth,
            })
        }
    }
}

/// Train the anchor model for a prepared dataset and experiment config.
/// Returns the trained model together with the anchor/unaligned index sets.
pub fn train_stage(
    data: &PreparedDataset,
    cfg: &ExperimentConfig,
) -> Result<(TwoViewModel, Vec<usize>, Vec<usize>)> {
    let n = data.view1.nrows();
    if cfg.n_init >= n {
        return Err(Error::Config(format!(
            "n_init {} must be below the dataset size {n}",
            cfg.n_init
        )));
    }
    let (anchors, rest) = anchor_split(n, cfg.n_init, cfg.anchor_strategy, cfg.anchor_seed)?;
    let y1a = select_rows(&data.view1, &anchors);
    let y2a = select_rows(&data.view2, &anchors);
    let m = cfg
        .model
        .inducing
        .unwrap_or_else(|| cfg.n_init.min(30))
        .min(cfg.n_init);
    let mut model = TwoViewModel::initialize_with_kernel(
        cfg.model.kernel,
        &y1a,
        &y2a,
        cfg.model.q_latent_dim,
        m,
        cfg.model.seed,
    )?;
    model.ard_threshold = cfg.model.ard_threshold;
    let trained = train(&model, &y1a, &y2a, &cfg.model.optimizer)?;
    Ok((trained.model, anchors, rest))
}

/// Align the unaligned rows with the requested method.
pub fn align_stage(
    model: &TwoViewModel,
    data: &PreparedDataset,
    rest: &[usize],
    cfg: &ExperimentConfig,
) -> Result<AlignmentResult> {
    let y1b = select_rows(&data.view1, rest);
    let y2b = select_rows(&data.view2, rest);
    match cfg.method {
        AlignMethod::Nonmyopic => {
            align_nonmyopic(model, &y1b, &y2b, model.ard_threshold, &cfg.model.inference)
        }
        AlignMethod::Myopic => {
            let stream = (0..y2b.nrows())
                .map(|i| nalgebra::DVector::from_fn(y2b.ncols(), |j, _| y2b[(i, j)]))
                .collect::<Vec<_>>();
            align_myopic(
                model,
                &y1b,
                stream,
                model.ard_threshold,
                &cfg.model.inference,
            )
        }
    }
}

/// Kendall-tau of an alignment of the B rows against the dataset ground
/// truth, when the truth is known. Both views use the same B index set, so
/// an identity ground truth over the full dataset restricts to the identity
/// over B positions.
pub fn score_alignment(
    result: &AlignmentResult,
    data: &PreparedDataset,
    rest: &[usize],
) -> Result<Option<f64>> {
    let truth_full = match &data.ground_truth {
        Some(t) => t,
        None => return Ok(None),
    };
    // Restrict the truth to B positions: view-1 B-position i corresponds to
    // the view-2 row truth[rest[i]], which sits at some B position j.
    let mut pos_of_row = std::collections::HashMap::new();
    for (j, &row) in rest.iter().enumerate() {
        pos_of_row.insert(row, j);
    }
    let mut truth_b = Vec::with_capacity(rest.len());
    for &row in rest {
        let target = truth_full.as_slice()[row];
        match pos_of_row.get(&target) {
            Some(&j) => truth_b.push(j),
            // The truth maps a B row outside B; no consistent restriction.
            None => return Ok(None),
        }
    }
    let truth = Permutation::new(truth_b)?;
    let perm = Permutation::new(result.permutation.clone())?;
    Ok(Some(kendall_tau_against(&perm, &truth)?))
}

/// Run the full pipeline (prepare, split, train, align, score) and write
/// all artifacts under `out_dir`. A failure after the configuration stage
/// still writes a report flagged `partial` carrying whatever completed.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: &Path) -> Result<ExperimentReport> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir)?;
    let total_start = Instant::now();
    let mut report = ExperimentReport {
        schema_version: 1,
        kendall_tau: None,
        n: 0,
        n_init: cfg.n_init,
        method: cfg.method,
        shared_dim_count: 0,
        private_dim_count_view1: 0,
        private_dim_count_view2: 0,
        final_free_energy: f64::NAN,
        permutation: Vec::new(),
        config: cfg.clone(),
        artifacts: ArtifactPaths::default(),
        timings: PhaseTimings::default(),
        partial: false,
        error: None,
    };

    match run_stages(cfg, out_dir, total_start, &mut report) {
        Ok(()) => {
            report.save_json(&out_dir.join("report.json"))?;
            Ok(report)
        }
        Err(err) => {
            report.partial = true;
            report.error = Some(err.to_string());
            report.timings.total_s = total_start.elapsed().as_secs_f64();
            let _ = report.save_json(&out_dir.join("report.json"));
            Err(err)
        }
    }
}

fn run_stages(
    cfg: &ExperimentConfig,
    out_dir: &Path,
    total_start: Instant,
    report: &mut ExperimentReport,
) -> Result<()> {
    let prep_start = Instant::now();
    let data = prepare_dataset(&cfg.dataset)?;
    report.n = data.view1.nrows();
    if let DatasetSpec::Toy { toy } = &cfg.dataset {
        let ds = crate::datagen::ToyDataset {
            view1: data.view1.clone(),
            view2: data.view2.clone(),
            generating_latent: DMatrix::zeros(0, 0),
            config: toy.clone(),
        };
        let dir = out_dir.join("dataset");
        write_bundle(&dir, &ds)?;
        report.artifacts.dataset_dir = Some(dir);
    }
    report.timings.prepare_s = prep_start.elapsed().as_secs_f64();

    let train_start = Instant::now();
    let (model, _anchors, rest) = train_stage(&data, cfg)?;
    report.timings.train_s = train_start.elapsed().as_secs_f64();
    let ckpt_path = out_dir.join("checkpoint.json");
    model.save_checkpoint(&ckpt_path)?;
    report.artifacts.checkpoint = Some(ckpt_path);
    report.final_free_energy = model
        .trace
        .last()
        .map(|t| t.free_energy)
        .unwrap_or(f64::NAN);
    let profile = relevance_profile(&model, model.ard_threshold)?;
    report.shared_dim_count = profile.shared_dims.len();
    report.private_dim_count_view1 = profile.private_dims_view1.len();
    report.private_dim_count_view2 = profile.private_dims_view2.len();

    let align_start = Instant::now();
    let alignment = align_stage(&model, &data, &rest, cfg)?;
    report.timings.align_s = align_start.elapsed().as_secs_f64();
    let align_path = out_dir.join("alignment.json");
    alignment.save_json(&align_path)?;
    report.artifacts.alignment = Some(align_path);
    if let Some(dm) = &alignment.distance_matrix {
        let dm_path = out_dir.join("distance_matrix.csv");
        dm.write_csv(&dm_path)?;
        report.artifacts.distance_matrix_csv = Some(dm_path);
    }

    report.kendall_tau = score_alignment(&alignment, &data, &rest)?;
    report.permutation = alignment.permutation.clone();
    report.timings.total_s = total_start.elapsed().as_secs_f64();
    Ok(())
}

/// Configuration of the mis-alignment sensitivity curve run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveConfig {
    pub toy: ToyConfig,
    pub swap_levels: Vec<usize>,
    #[serde(default)]
    pub model: CurveModelConfig,
    #[serde(default)]
    pub seed: u64,
}

impl CurveConfig {
    pub fn from_json_file(path: &Path) -> Result<CurveConfig> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        let text = std::fs::read_to_string(path)?;
        let cfg: CurveConfig = serde_json::from_str(&text)?;
        cfg.toy.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurveSummary {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spearman: Option<f64>,
    pub points: Vec<crate::metrics::CurvePoint>,
    pub config: CurveConfig,
}

/// Run the sensitivity curve and write curve.csv plus summary.json.
pub fn run_curve(cfg: &CurveConfig, out_dir: &Path) -> Result<CurveSummary> {
    std::fs::create_dir_all(out_dir)?;
    let curve = misalignment_curve(&cfg.toy, &cfg.swap_levels, &cfg.model, cfg.seed)?;
    curve.write_csv(&out_dir.join("curve.csv"))?;
    let spearman = curve.spearman().ok();
    let summary = CurveSummary {
        schema_version: 1,
        spearman,
        points: curve.points.clone(),
        config: cfg.clone(),
    };
    std::fs::write(
        out_dir.join("summary.json"),
        serde_json::to_string_pretty(&summary)?,
    )?;
    Ok(summary)
}
