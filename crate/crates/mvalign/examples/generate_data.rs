//! Generate the synthetic two-view datasets and inspect their structure.
//!
//! ```bash
//! cargo run --release --example generate_data
//! ```

use mvalign::{generate_toy, ToyConfig};

fn main() -> mvalign::Result<()> {
    // Fully shared: both views are random linear images of the same two
    // sinusoid dimensions.
    let shared = generate_toy(&ToyConfig::linear_fully_shared(100, 0))?;
    println!(
        "fully shared:  view1 {}x{}, view2 {}x{}",
        shared.view1.nrows(),
        shared.view1.ncols(),
        shared.view2.nrows(),
        shared.view2.ncols()
    );

    // Shared/private: each view additionally sees its own private sinusoid.
    let sp = generate_toy(&ToyConfig::linear_shared_private(100, 0))?;
    println!(
        "shared/private: generating latent {}x{} (2 shared + 1 private per view)",
        sp.generating_latent.nrows(),
        sp.generating_latent.ncols()
    );

    // The generating sinusoid columns are close to orthogonal.
    let latent = &sp.generating_latent;
    println!("normalized inner products of generating columns:");
    for a in 0..latent.ncols() {
        let mut row = String::new();
        for b in 0..latent.ncols() {
            let dot = latent.column(a).dot(&latent.column(b))
                / (latent.column(a).norm() * latent.column(b).norm());
            row.push_str(&format!("{dot:+.3} "));
        }
        println!("  {row}");
    }

    // Nonlinear mapping: random draws from a Gaussian process.
    let nl = generate_toy(&ToyConfig::nonlinear_shared_private(160, 0))?;
    println!(
        "nonlinear:     view1 {}x{} via GP draws",
        nl.view1.nrows(),
        nl.view1.ncols()
    );

    // Bundles are plain CSV plus a meta.json echo.
    let dir = std::env::temp_dir().join("mvalign_example_bundle");
    mvalign::datagen::write_bundle(&dir, &shared)?;
    println!("bundle written to {}", dir.display());
    Ok(())
}
