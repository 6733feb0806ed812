//! The experiment driver behind the `mvalign experiment` subcommand: one
//! config describes data, split, model, and matcher; one call runs the
//! pipeline and writes every artifact plus a JSON report.
//!
//! ```bash
//! cargo run --release --example full_experiment
//! ```

use mvalign::experiment::{DatasetSpec, ExperimentConfig, ModelConfig};
use mvalign::{
    run_experiment, AlignMethod, AnchorStrategy, InferenceOptions, OptimizerConfig, ToyConfig,
};

fn main() -> mvalign::Result<()> {
    let cfg = ExperimentConfig {
        dataset: DatasetSpec::Toy {
            toy: ToyConfig::linear_fully_shared(100, 0),
        },
        n_init: 8,
        anchor_strategy: AnchorStrategy::Random,
        anchor_seed: 0,
        model: ModelConfig {
            optimizer: OptimizerConfig {
                max_iters: 1500,
                rel_tol: 1e-8,
                ..OptimizerConfig::default()
            },
            inference: InferenceOptions::default(),
            seed: 0,
            ..ModelConfig::default()
        },
        method: AlignMethod::Nonmyopic,
    };

    let out_dir = std::env::temp_dir().join("mvalign_example_experiment");
    let report = run_experiment(&cfg, &out_dir)?;

    println!("n = {}, anchors = {}", report.n, report.n_init);
    println!(
        "kendall-tau: {}",
        report
            .kendall_tau
            .map(|t| format!("{t:.4}"))
            .unwrap_or_else(|| "unknown (no ground truth)".into())
    );
    println!(
        "latent usage: {} shared, {}/{} private dimensions",
        report.shared_dim_count, report.private_dim_count_view1, report.private_dim_count_view2
    );
    println!("final free energy: {:.2}", report.final_free_energy);
    println!(
        "phases: prepare {:.2}s, train {:.2}s, align {:.2}s",
        report.timings.prepare_s, report.timings.train_s, report.timings.align_s
    );
    println!("artifacts under {}", out_dir.display());
    Ok(())
}
