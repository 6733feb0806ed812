//! Two-view latent alignment.
//!
//! Given two observation matrices ("views") whose rows correspond but whose
//! correspondence is only known for a small set of anchor pairs, this crate
//! learns a shared/private factorized Gaussian-process latent variable model
//! on the anchors and then recovers the permutation of the remaining points
//! by matching per-view posterior modes in the shared latent subspace —
//! either greedily over a stream of arriving points or optimally in batch
//! via the Hungarian method.
//!
//! The runnable examples under `examples/` walk through each capability:
//! data generation, model training, both aligners, mis-alignment
//! sensitivity, and the end-to-end experiment driver. The `mvalign` binary
//! wires the same pipeline into `gen`, `train`, `align`, `eval`,
//! `experiment`, and `curve` subcommands.

pub mod aligner;
pub mod datagen;
pub mod error;
pub mod experiment;
pub mod kernel;
pub mod metrics;
pub mod model;
pub mod optimize;

pub use aligner::{
    align_myopic, align_nonmyopic, distance_matrix, hungarian_assignment, infer_latent,
    infer_latent_batch, AlignMethod, AlignmentRecord, AlignmentResult, DistanceMatrix,
    InferenceOptions, LatentModes, ViewId, ViewPredictor,
};
pub use datagen::{
    anchor_split, generate_toy, load_matrix, save_matrix, split_views, AnchorStrategy, BundleMeta,
    MappingKind, SplitRule, ToyConfig, ToyDataset,
};
pub use error::{Error, Result};
pub use experiment::{
    run_curve, run_experiment, CurveConfig, CurveSummary, DatasetSpec, ExperimentConfig,
    ExperimentReport, ModelConfig,
};
pub use kernel::{ArdKernelParams, GaussianLatent, InducingInputs, KernelKind, PsiStatistics};
pub use metrics::{
    generate_misalignment, kendall_tau_against, kendall_tau_distance, misalignment_curve,
    spearman_correlation, CurveModelConfig, CurvePoint, MisalignmentCurve, Permutation,
};
pub use model::{
    free_energy, free_energy_with_grads, relevance_profile, train, Checkpoint, ModelGrads,
    RelevanceProfile, TracePoint, TrainResult, TrainStatus, TwoViewModel, ViewModel,
};
pub use optimize::{minimize, MinimizeResult, OptimizerConfig, StopReason};
