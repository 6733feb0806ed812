//! The closed-form kernel expectations under a factorized Gaussian density
//! (the psi statistics behind the variational bound), checked here against
//! plain Monte-Carlo averages.
//!
//! ```bash
//! cargo run --release --example kernel_expectations
//! ```

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use mvalign::kernel::{
    kernel_matrix, psi_statistics, ArdKernelParams, GaussianLatent, InducingInputs, KernelKind,
};

fn main() -> mvalign::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (n, m, q) = (3, 2, 2);

    let latent = GaussianLatent::new(
        DMatrix::from_fn(n, q, |_, _| rng.sample::<f64, _>(StandardNormal)),
        DMatrix::from_fn(n, q, |_, _| 0.2 + rng.random::<f64>()),
    )?;
    let inducing = InducingInputs::new(DMatrix::from_fn(m, q, |_, _| {
        rng.sample::<f64, _>(StandardNormal)
    }))?;
    let params = ArdKernelParams::new(KernelKind::ArdRbf, 1.3, DVector::from_vec(vec![0.8, 1.7]))?;

    let stats = psi_statistics(&latent, &inducing, &params)?;
    println!(
        "psi0 = {:.6} (closed form: N * signal variance = {:.6})",
        stats.psi0,
        3.0 * 1.3
    );

    // Monte-Carlo estimate of psi1[n, m] = E[k(x_n, z_m)].
    let samples = 200_000;
    let mut mc = DMatrix::<f64>::zeros(n, m);
    let normal = StandardNormal;
    let mut x = DMatrix::<f64>::zeros(1, q);
    for _ in 0..samples {
        for i in 0..n {
            for k in 0..q {
                let noise: f64 = normal.sample(&mut rng);
                x[(0, k)] = latent.means[(i, k)] + noise * latent.variances[(i, k)].sqrt();
            }
            let kv = kernel_matrix(&x, &inducing.locations, &params)?;
            for j in 0..m {
                mc[(i, j)] += kv[(0, j)] / samples as f64;
            }
        }
    }

    println!("psi1 closed form vs Monte-Carlo ({samples} samples):");
    for i in 0..n {
        for j in 0..m {
            println!(
                "  [{i},{j}]  {:.6}  vs  {:.6}",
                stats.psi1[(i, j)],
                mc[(i, j)]
            );
        }
    }

    // In the small-variance limit the expectations collapse to plain kernel
    // evaluations.
    let tight = GaussianLatent::new(latent.means.clone(), DMatrix::from_element(n, q, 1e-12))?;
    let stats_tight = psi_statistics(&tight, &inducing, &params)?;
    let exact = kernel_matrix(&latent.means, &inducing.locations, &params)?;
    let max_gap = (&stats_tight.psi1 - &exact).abs().max();
    println!("small-variance limit: max |psi1 - K| = {max_gap:.2e}");
    Ok(())
}
