//! Permutation distance scoring, controlled mis-alignment generation, and
//! the free-energy sensitivity curve over increasing mis-alignment.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::datagen::{generate_toy, ToyConfig};
use crate::error::{Error, Result};
use crate::model::{free_energy, train, TwoViewModel};
use crate::optimize::OptimizerConfig;

/// A bijection on `{0..n-1}`, validated at construction.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(mapping: Vec<usize>) -> Result<Self> {
        let n = mapping.len();
        let mut seen = vec![false; n];
        for &v in &mapping {
            if v >= n || seen[v] {
                return Err(Error::InvalidPermutation(format!(
                    "mapping of length {n} is not a bijection"
                )));
            }
            seen[v] = true;
        }
        Ok(Permutation(mapping))
    }

    pub fn identity(n: usize) -> Self {
        Permutation((0..n).collect())
    }

    pub fn reversal(n: usize) -> Self {
        Permutation((0..n).rev().collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &v) in self.0.iter().enumerate() {
            inv[v] = i;
        }
        Permutation(inv)
    }

    /// `self` after `other`: `(self . other)[i] = self[other[i]]`.
    pub fn compose(&self, other: &Permutation) -> Result<Permutation> {
        if self.len() != other.len() {
            return Err(Error::InvalidPermutation(format!(
                "cannot compose permutations of lengths {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(Permutation(other.0.iter().map(|&i| self.0[i]).collect()))
    }
}

/// Normalized Kendall-tau distance to the identity: the fraction of the
/// n(n-1)/2 index pairs that the permutation orders discordantly.
/// 0 for the identity, 1 for the full reversal, about 0.5 for a uniformly
/// random permutation.
pub fn kendall_tau_distance(p: &Permutation) -> Result<f64> {
    let n = p.len();
    if n < 2 {
        return Err(Error::InvalidPermutation(
            "kendall_tau_distance needs at least 2 elements".into(),
        ));
    }
    let inversions = count_inversions(&mut p.0.clone());
    Ok(inversions as f64 / (n as f64 * (n as f64 - 1.0) / 2.0))
}

/// Kendall-tau distance of `p` against an arbitrary ground truth: the
/// distance of `truth^-1 . p` to the identity.
pub fn kendall_tau_against(p: &Permutation, truth: &Permutation) -> Result<f64> {
    kendall_tau_distance(&truth.inverse().compose(p)?)
}

/// Merge-sort inversion counting, O(n log n).
fn count_inversions(values: &mut [usize]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mut buffer = vec![0usize; n];
    sort_count(values, &mut buffer)
}

fn sort_count(values: &mut [usize], buffer: &mut [usize]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = values.split_at_mut(mid);
    let mut inversions =
        sort_count(left, &mut buffer[..mid]) + sort_count(right, &mut buffer[mid..]);
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buffer[k] = left[i];
            i += 1;
        } else {
            inversions += (left.len() - i) as u64;
            buffer[k] = right[j];
            j += 1;
        }
        k += 1;
    }
    while i < left.len() {
        buffer[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        buffer[k] = right[j];
        j += 1;
        k += 1;
    }
    values.copy_from_slice(&buffer[..n]);
    inversions
}

/// Apply `num_swaps` uniformly random transpositions (of distinct indices)
/// to the identity. More swaps give larger expected Kendall-tau distance.
pub fn generate_misalignment(n: usize, num_swaps: usize, seed: u64) -> Result<Permutation> {
    use rand::Rng;
    use rand::SeedableRng;
    if n < 2 {
        return Err(Error::InvalidPermutation(
            "misalignment needs at least 2 elements".into(),
        ));
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut mapping: Vec<usize> = (0..n).collect();
    for _ in 0..num_swaps {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        mapping.swap(i, j);
    }
    Ok(Permutation(mapping))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman_correlation(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Config(
            "spearman_correlation needs two equal-length series of >= 2 values".into(),
        ));
    }
    let rx = average_ranks(x);
    let ry = average_ranks(y);
    let n = x.len() as f64;
    let mean = (n + 1.0) / 2.0;
    let mut num = 0.0;
    let mut dx = 0.0;
    let mut dy = 0.0;
    for i in 0..x.len() {
        num += (rx[i] - mean) * (ry[i] - mean);
        dx += (rx[i] - mean).powi(2);
        dy += (ry[i] - mean).powi(2);
    }
    if dx == 0.0 || dy == 0.0 {
        return Err(Error::Config(
            "spearman_correlation undefined for a constant series".into(),
        ));
    }
    Ok(num / (dx * dy).sqrt())
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| {
        values[a]
            .partial_cmp(&values[b])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// One point of the mis-alignment sensitivity curve.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CurvePoint {
    pub num_swaps: usize,
    pub kendall_tau: f64,
    /// Final free energy of the model trained on the mis-aligned pairing;
    /// absent when that training failed.
    pub free_energy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Free energy of the trained model as a function of the Kendall-tau
/// distance of the row pairing, sorted by tau.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MisalignmentCurve {
    pub points: Vec<CurvePoint>,
}

impl MisalignmentCurve {
    /// Spearman correlation between tau and free energy over the points
    /// where training succeeded.
    pub fn spearman(&self) -> Result<f64> {
        let taus: Vec<f64> = self
            .points
            .iter()
            .filter(|p| p.free_energy.is_some())
            .map(|p| p.kendall_tau)
            .collect();
        let fes: Vec<f64> = self.points.iter().filter_map(|p| p.free_energy).collect();
        spearman_correlation(&taus, &fes)
    }

    /// Two-column CSV (kendall_tau, free_energy), one row per successful
    /// point.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = String::from("kendall_tau,free_energy\n");
        for p in &self.points {
            if let Some(fe) = p.free_energy {
                out.push_str(&format!("{},{}\n", p.kendall_tau, fe));
            }
        }
        std::fs::write(path, out)?;
        Ok(())
    }
}

/// Model settings for the sensitivity curve trainings.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct CurveModelConfig {
    pub q_latent_dim: usize,
    pub inducing: Option<usize>,
    pub kernel: crate::kernel::KernelKind,
    pub optimizer: OptimizerConfig,
    /// Independent training initializations per level; the best final free
    /// energy is kept. The free energy is a lower bound on the evidence, so
    /// the maximum over runs is the tightest available estimate and filters
    /// out runs stuck in poor optima.
    pub inits: usize,
}

impl Default for CurveModelConfig {
    fn default() -> Self {
        CurveModelConfig {
            q_latent_dim: 6,
            inducing: None,
            kernel: crate::kernel::KernelKind::ArdRbf,
            optimizer: OptimizerConfig::default(),
            inits: 3,
        }
    }
}

/// For each swap level, permute the second view's rows by a seeded
/// mis-alignment of that many transpositions, train on the permuted
/// pairing, and record (kendall-tau, final free energy). Level 0 is always
/// included. Training failures are recorded on their point rather than
/// failing the curve.
///
/// The levels share one seeded transposition sequence (each level takes a
/// prefix), so a higher level strictly extends the damage of a lower one.
/// Each level trains from `inits` fresh initializations plus a warm start
/// at the previous level's optimum, and keeps the best final free energy:
/// the bound is below the evidence, so the maximum over runs is the
/// tightest estimate, and the warm-start continuation keeps consecutive
/// levels in comparable optima.
pub fn misalignment_curve(
    toy: &ToyConfig,
    swap_levels: &[usize],
    model: &CurveModelConfig,
    seed: u64,
) -> Result<MisalignmentCurve> {
    let mut levels: Vec<usize> = swap_levels.to_vec();
    if !levels.contains(&0) {
        levels.insert(0, 0);
    }
    levels.sort_unstable();
    levels.dedup();

    let dataset = generate_toy(toy)?;
    let n = dataset.view1.nrows();
    let m = model.inducing.unwrap_or_else(|| n.min(30)).min(n);
    let inits = model.inits.max(1);

    let mut points: Vec<CurvePoint> = Vec::with_capacity(levels.len());
    let mut carry: Option<TwoViewModel> = None;
    for &num_swaps in &levels {
        let outcome = (|| -> Result<(f64, f64, TwoViewModel)> {
            let perm = generate_misalignment(n, num_swaps, seed)?;
            let tau = kendall_tau_distance(&perm)?;
            let y2 = DMatrix::from_fn(n, dataset.view2.ncols(), |i, j| {
                dataset.view2[(perm.as_slice()[i], j)]
            });

            // Fresh starts, in parallel. Retries perturb the latent start:
            // the PCA solution is deterministic in the data, so reseeding
            // alone would only move the inducing subsample.
            let fresh: Vec<Result<TwoViewModel>> = (0..inits as u64)
                .collect::<Vec<_>>()
                .par_iter()
                .map(|&init_idx| {
                    let init_seed = seed.wrapping_add(init_idx.wrapping_mul(1_000_003));
                    let mut init = TwoViewModel::initialize_with_kernel(
                        model.kernel,
                        &dataset.view1,
                        &y2,
                        model.q_latent_dim,
                        m,
                        init_seed,
                    )?;
                    if init_idx > 0 {
                        use rand::SeedableRng;
                        use rand_distr::Distribution;
                        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(init_seed);
                        let normal = rand_distr::StandardNormal;
                        for v in init.latent.means.iter_mut() {
                            let noise: f64 = normal.sample(&mut rng);
                            *v += 0.3 * noise;
                        }
                    }
                    Ok(train(&init, &dataset.view1, &y2, &model.optimizer)?.model)
                })
                .collect();

            let mut candidates: Vec<TwoViewModel> = Vec::new();
            let mut last_err: Option<Error> = None;
            for item in fresh {
                match item {
                    Ok(m) => candidates.push(m),
                    Err(e) => last_err = Some(e),
                }
            }
            if let Some(prev) = &carry {
                let mut warm = prev.clone();
                warm.trace.clear();
                if let Ok(result) = train(&warm, &dataset.view1, &y2, &model.optimizer) {
                    candidates.push(result.model);
                }
            }

            let mut best: Option<(f64, TwoViewModel)> = None;
            for cand in candidates {
                let fe = free_energy(&cand, &dataset.view1, &y2)?;
                if best.as_ref().is_none_or(|(bf, _)| fe > *bf) {
                    best = Some((fe, cand));
                }
            }
            match best {
                Some((fe, model)) => Ok((tau, fe, model)),
                None => Err(last_err.unwrap_or(Error::NumericalConditioning(
                    "all curve trainings failed",
                ))),
            }
        })();

        match outcome {
            Ok((tau, fe, best_model)) => {
                carry = Some(best_model);
                points.push(CurvePoint {
                    num_swaps,
                    kendall_tau: tau,
                    free_energy: Some(fe),
                    error: None,
                });
            }
            Err(e) => points.push(CurvePoint {
                num_swaps,
                kendall_tau: f64::NAN,
                free_energy: None,
                error: Some(e.to_string()),
            }),
        }
    }

    points.sort_by(|a, b| {
        a.kendall_tau
            .partial_cmp(&b.kendall_tau)
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    Ok(MisalignmentCurve { points })
}
