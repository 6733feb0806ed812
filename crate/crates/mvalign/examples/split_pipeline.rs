//! Align two views obtained by splitting the columns of a single wide
//! dataset, the workflow for real data such as joint-coordinate tracks
//! (split half/half over features) or images (split into pixel halves).
//! Run here on a synthetic 59-column matrix.
//!
//! ```bash
//! cargo run --release --example split_pipeline
//! ```

use mvalign::datagen::{select_rows, split_views, SplitRule};
use mvalign::model::train;
use mvalign::{
    align_nonmyopic, anchor_split, generate_toy, kendall_tau_distance, AnchorStrategy,
    InferenceOptions, OptimizerConfig, Permutation, ToyConfig, TwoViewModel,
};

fn main() -> mvalign::Result<()> {
    // A 59-column dataset driven by smooth latent curves, standing in for a
    // motion-capture-style joint coordinate matrix.
    let toy = ToyConfig {
        output_dim: 59,
        ..ToyConfig::linear_fully_shared(120, 3)
    };
    let wide = generate_toy(&toy)?.view1;
    println!("full dataset: {}x{}", wide.nrows(), wide.ncols());

    // Split the 59 columns into a 30-column and a 29-column view.
    let (view1, view2) = split_views(&wide, SplitRule::HalfColumns)?;
    println!(
        "split views: {} and {} columns",
        view1.ncols(),
        view2.ncols()
    );

    let (anchors, rest) = anchor_split(wide.nrows(), 30, AnchorStrategy::Random, 3)?;
    let y1a = select_rows(&view1, &anchors);
    let y2a = select_rows(&view2, &anchors);
    let y1b = select_rows(&view1, &rest);
    let y2b = select_rows(&view2, &rest);

    let model = TwoViewModel::initialize(&y1a, &y2a, 6, 30, 3)?;
    let opt = OptimizerConfig {
        max_iters: 1500,
        rel_tol: 1e-8,
        ..OptimizerConfig::default()
    };
    let trained = train(&model, &y1a, &y2a, &opt)?.model;

    let result = align_nonmyopic(
        &trained,
        &y1b,
        &y2b,
        trained.ard_threshold,
        &InferenceOptions::default(),
    )?;
    let tau = kendall_tau_distance(&Permutation::new(result.permutation.clone())?)?;
    println!(
        "aligned {} held-out rows: kendall-tau {tau:.4} (random matching would be near 0.5)",
        result.permutation.len()
    );
    Ok(())
}
