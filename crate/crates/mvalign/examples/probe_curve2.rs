use mvalign::*;

fn main() {
    for seed in [0u64, 1, 2, 3, 4] {
        let toy = ToyConfig {
            n_points: 60,
            seed,
            ..ToyConfig::linear_fully_shared(60, seed)
        };
        let mc = CurveModelConfig {
            q_latent_dim: 6,
            inducing: None,
            kernel: mvalign::KernelKind::ArdLinear,
            inits: 3,
            optimizer: OptimizerConfig {
                max_iters: 800,
                rel_tol: 1e-8,
                ..OptimizerConfig::default()
            },
        };
        let levels = [0usize, 1, 2, 3, 5, 8];
        let curve = misalignment_curve(&toy, &levels, &mc, seed).unwrap();
        let rho = curve.spearman().unwrap();
        let pts: Vec<String> = curve
            .points
            .iter()
            .map(|p| {
                format!(
                    "({:.3},{:.1})",
                    p.kendall_tau,
                    p.free_energy.unwrap_or(f64::NAN)
                )
            })
            .collect();
        println!("seed {seed}: spearman {rho:.3} pts {}", pts.join(" "));
    }
}
