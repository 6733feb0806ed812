//! How sharply the trained free energy reacts to mis-aligned pairings:
//! permute one view's rows by an increasing number of transpositions,
//! retrain, and watch the final free energy fall as Kendall-tau grows.
//!
//! ```bash
//! cargo run --release --example misalignment_sensitivity
//! ```

use mvalign::{misalignment_curve, CurveModelConfig, OptimizerConfig, ToyConfig};

fn main() -> mvalign::Result<()> {
    let toy = ToyConfig::linear_fully_shared(40, 0);
    let model = CurveModelConfig {
        optimizer: OptimizerConfig {
            max_iters: 800,
            rel_tol: 1e-8,
            ..OptimizerConfig::default()
        },
        ..CurveModelConfig::default()
    };

    let curve = misalignment_curve(&toy, &[0, 1, 2, 4, 8, 16], &model, 0)?;

    println!("swaps  kendall-tau  free energy");
    for p in &curve.points {
        match p.free_energy {
            Some(fe) => println!("{:>5}  {:>11.4}  {:>11.2}", p.num_swaps, p.kendall_tau, fe),
            None => println!(
                "{:>5}  {:>11.4}  failed: {}",
                p.num_swaps,
                p.kendall_tau,
                p.error.as_deref().unwrap_or("unknown")
            ),
        }
    }
    println!(
        "spearman correlation between tau and free energy: {:.3}",
        curve.spearman()?
    );

    let path = std::env::temp_dir().join("mvalign_example_curve.csv");
    curve.write_csv(&path)?;
    println!("curve written to {}", path.display());
    Ok(())
}
