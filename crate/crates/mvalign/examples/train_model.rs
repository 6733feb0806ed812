//! Train the two-view model on a handful of aligned anchor pairs and read
//! off which latent dimensions each view considers relevant.
//!
//! ```bash
//! cargo run --release --example train_model
//! ```

use mvalign::datagen::select_rows;
use mvalign::model::{free_energy, relevance_profile, train};
use mvalign::{
    anchor_split, generate_toy, AnchorStrategy, OptimizerConfig, ToyConfig, TwoViewModel,
};

fn main() -> mvalign::Result<()> {
    let toy = ToyConfig::linear_shared_private(100, 0);
    let dataset = generate_toy(&toy)?;

    // Twelve aligned anchor pairs train the model; the rest stay unaligned.
    let (anchors, _rest) = anchor_split(100, 12, AnchorStrategy::Random, 0)?;
    let y1 = select_rows(&dataset.view1, &anchors);
    let y2 = select_rows(&dataset.view2, &anchors);

    let model = TwoViewModel::initialize(&y1, &y2, 6, 12, 0)?;
    println!("initial free energy: {:.2}", free_energy(&model, &y1, &y2)?);

    let opt = OptimizerConfig {
        max_iters: 1500,
        rel_tol: 1e-8,
        ..OptimizerConfig::default()
    };
    let result = train(&model, &y1, &y2, &opt)?;
    let trained = result.model;
    println!(
        "trained free energy: {:.2} ({:?}, {} trace points)",
        free_energy(&trained, &y1, &y2)?,
        result.status,
        trained.trace.len()
    );

    // ARD weights, normalized per view: dimensions above the threshold in
    // both views are shared; in exactly one view, private.
    let profile = relevance_profile(&trained, trained.ard_threshold)?;
    println!(
        "normalized weights view 1: {:?}",
        rounded(&profile.normalized_weights[0])
    );
    println!(
        "normalized weights view 2: {:?}",
        rounded(&profile.normalized_weights[1])
    );
    println!("shared dimensions:  {:?}", profile.shared_dims);
    println!("private to view 1:  {:?}", profile.private_dims_view1);
    println!("private to view 2:  {:?}", profile.private_dims_view2);
    println!("switched off:       {:?}", profile.off_dims);

    // Checkpoints round-trip losslessly through JSON.
    let path = std::env::temp_dir().join("mvalign_example_checkpoint.json");
    trained.save_checkpoint(&path)?;
    let restored = TwoViewModel::load_checkpoint(&path)?;
    assert_eq!(trained.pack_params(), restored.pack_params());
    println!("checkpoint round-trip OK: {}", path.display());
    Ok(())
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
