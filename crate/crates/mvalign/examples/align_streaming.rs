//! Streaming (myopic) alignment: view-2 points arrive one at a time and
//! each is greedily matched to the nearest unmatched view-1 posterior mode,
//! costing one latent inference per arrival.
//!
//! ```bash
//! cargo run --release --example align_streaming
//! ```

use nalgebra::DVector;

use mvalign::datagen::select_rows;
use mvalign::model::train;
use mvalign::{
    align_myopic, anchor_split, generate_toy, kendall_tau_distance, AnchorStrategy,
    InferenceOptions, OptimizerConfig, Permutation, ToyConfig, TwoViewModel,
};

fn main() -> mvalign::Result<()> {
    let toy = ToyConfig::linear_fully_shared(100, 1);
    let dataset = generate_toy(&toy)?;
    let (anchors, rest) = anchor_split(100, 8, AnchorStrategy::Random, 1)?;
    let y1a = select_rows(&dataset.view1, &anchors);
    let y2a = select_rows(&dataset.view2, &anchors);
    let y1b = select_rows(&dataset.view1, &rest);
    let y2b = select_rows(&dataset.view2, &rest);

    let model = TwoViewModel::initialize(&y1a, &y2a, 6, 8, 1)?;
    let opt = OptimizerConfig {
        max_iters: 1500,
        rel_tol: 1e-8,
        ..OptimizerConfig::default()
    };
    let trained = train(&model, &y1a, &y2a, &opt)?.model;

    // The stream arrives in ground-truth order here, but the matcher never
    // uses that: each arrival is matched only through the latent space.
    let stream: Vec<DVector<f64>> = (0..y2b.nrows())
        .map(|i| DVector::from_fn(y2b.ncols(), |j, _| y2b[(i, j)]))
        .collect();

    let result = align_myopic(
        &trained,
        &y1b,
        stream,
        trained.ard_threshold,
        &InferenceOptions::default(),
    )?;

    let tau = kendall_tau_distance(&Permutation::new(result.permutation.clone())?)?;
    println!(
        "matched {} arrivals greedily (one inference each)",
        result.permutation.len()
    );
    println!("kendall-tau distance: {tau:.4}");
    println!("total greedy cost: {:.4}", result.total_cost);
    Ok(())
}
