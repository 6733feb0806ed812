//! Synthetic two-view data generation, view-splitting for real datasets,
//! anchor/test splitting, and CSV matrix I/O.
//!
//! The toy construction draws latent sinusoid columns with distinct
//! frequencies over an even time grid, adds Gaussian noise to the latent,
//! and maps shared plus per-view private dimensions through either a random
//! linear map or a random function drawn from a Gaussian process, with
//! Gaussian noise added to the outputs as well. Rows of the two views are
//! in correspondence by construction.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::metrics::Permutation;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingKind {
    Linear,
    GpDraw,
}

/// Settings for [`generate_toy`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyConfig {
    pub n_points: usize,
    /// Latent dimensions shared by both views.
    pub shared_dims: usize,
    /// Latent dimensions private to each view.
    pub private_dims_per_view: usize,
    /// Output columns per view.
    pub output_dim: usize,
    pub mapping: MappingKind,
    pub noise_sd: f64,
    /// One frequency per generating dimension (shared then private); when
    /// empty, 1, 2, 3, ... cycles over the grid.
    #[serde(default)]
    pub frequencies: Vec<f64>,
    pub seed: u64,
}

impl ToyConfig {
    /// Fully shared linear construction: two shared sinusoid dimensions
    /// mapped linearly to 20 outputs per view, noise 0.1.
    pub fn linear_fully_shared(n_points: usize, seed: u64) -> Self {
        ToyConfig {
            n_points,
            shared_dims: 2,
            private_dims_per_view: 0,
            output_dim: 20,
            mapping: MappingKind::Linear,
            noise_sd: 0.1,
            frequencies: Vec::new(),
            seed,
        }
    }

    /// Shared/private linear construction: two shared dimensions plus one
    /// private dimension per view.
    pub fn linear_shared_private(n_points: usize, seed: u64) -> Self {
        ToyConfig {
            shared_dims: 2,
            private_dims_per_view: 1,
            ..ToyConfig::linear_fully_shared(n_points, seed)
        }
    }

    /// Shared/private construction mapped through random Gaussian-process
    /// draws instead of linear maps.
    pub fn nonlinear_shared_private(n_points: usize, seed: u64) -> Self {
        ToyConfig {
            mapping: MappingKind::GpDraw,
            ..ToyConfig::linear_shared_private(n_points, seed)
        }
    }

    pub fn generating_dims(&self) -> usize {
        self.shared_dims + 2 * self.private_dims_per_view
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_points < 2 {
            return Err(Error::Config("toy dataset needs at least 2 points".into()));
        }
        if self.generating_dims() == 0 {
            return Err(Error::Config(
                "toy dataset needs at least one generating dimension".into(),
            ));
        }
        if self.output_dim == 0 {
            return Err(Error::Config("output_dim must be >= 1".into()));
        }
        if !self.noise_sd.is_finite() || self.noise_sd < 0.0 {
            return Err(Error::Config("noise_sd must be >= 0".into()));
        }
        if !self.frequencies.is_empty() {
            if self.frequencies.len() != self.generating_dims() {
                return Err(Error::Config(format!(
                    "expected {} frequencies, got {}",
                    self.generating_dims(),
                    self.frequencies.len()
                )));
            }
            for (i, a) in self.frequencies.iter().enumerate() {
                if *a <= 0.0 || !a.is_finite() {
                    return Err(Error::Config("frequencies must be positive".into()));
                }
                for b in &self.frequencies[i + 1..] {
                    if a == b {
                        return Err(Error::Config(
                            "frequencies must be pairwise distinct".into(),
                        ));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Generated two-view dataset; rows are in correspondence (the ground-truth
/// alignment is the identity) and `generating_latent` holds the clean
/// sinusoid columns, ordered shared, view-1 private, view-2 private.
#[derive(Debug, Clone)]
pub struct ToyDataset {
    pub view1: DMatrix<f64>,
    pub view2: DMatrix<f64>,
    pub generating_latent: DMatrix<f64>,
    pub config: ToyConfig,
}

pub fn generate_toy(cfg: &ToyConfig) -> Result<ToyDataset> {
    cfg.validate()?;
    let n = cfg.n_points;
    let g = cfg.generating_dims();
    let freqs: Vec<f64> = if cfg.frequencies.is_empty() {
        (1..=g).map(|k| k as f64).collect()
    } else {
        cfg.frequencies.clone()
    };

    // Clean sinusoid columns over an even grid on [0, 2*pi].
    let latent = DMatrix::from_fn(n, g, |i, k| {
        let t = 2.0 * std::f64::consts::PI * i as f64 / (n as f64 - 1.0);
        (freqs[k] * t).sin()
    });

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = StandardNormal;
    let noisy = DMatrix::from_fn(n, g, |i, k| {
        let noise: f64 = normal.sample(&mut rng);
        latent[(i, k)] + cfg.noise_sd * noise
    });

    let shared = cfg.shared_dims;
    let private = cfg.private_dims_per_view;
    let inputs_for = |view: usize| -> DMatrix<f64> {
        let cols = shared + private;
        DMatrix::from_fn(n, cols, |i, k| {
            if k < shared {
                noisy[(i, k)]
            } else {
                noisy[(i, shared + (view - 1) * private + (k - shared))]
            }
        })
    };
    let inputs1 = inputs_for(1);
    let inputs2 = inputs_for(2);

    let mut map_view = |inputs: &DMatrix<f64>| -> Result<DMatrix<f64>> {
        let mut out = match cfg.mapping {
            MappingKind::Linear => {
                let w = DMatrix::from_fn(inputs.ncols(), cfg.output_dim, |_, _| {
                    normal.sample(&mut rng)
                });
                inputs * w
            }
            MappingKind::GpDraw => gp_draw(inputs, cfg.output_dim, &mut rng)?,
        };
        for v in out.iter_mut() {
            let noise: f64 = normal.sample(&mut rng);
            *v += cfg.noise_sd * noise;
        }
        Ok(out)
    };

    let view1 = map_view(&inputs1)?;
    let view2 = map_view(&inputs2)?;

    Ok(ToyDataset {
        view1,
        view2,
        generating_latent: latent,
        config: cfg.clone(),
    })
}

/// Sample a random function from a unit-variance, unit-lengthscale
/// exponentiated-quadratic GP at the given inputs, one independent draw per
/// output column. Duplicate input rows receive identical function values.
fn gp_draw(inputs: &DMatrix<f64>, output_dim: usize, rng: &mut ChaCha8Rng) -> Result<DMatrix<f64>> {
    let n = inputs.nrows();
    // Group exactly-equal rows so the draw is a function of the input.
    let mut unique_rows: Vec<usize> = Vec::new();
    let mut assignment = vec![0usize; n];
    for i in 0..n {
        let mut found = None;
        for (u, &r) in unique_rows.iter().enumerate() {
            if (0..inputs.ncols()).all(|k| inputs[(i, k)] == inputs[(r, k)]) {
                found = Some(u);
                break;
            }
        }
        match found {
            Some(u) => assignment[i] = u,
            None => {
                unique_rows.push(i);
                assignment[i] = unique_rows.len() - 1;
            }
        }
    }
    let nu = unique_rows.len();
    let mut gram = DMatrix::zeros(nu, nu);
    for a in 0..nu {
        for b in 0..nu {
            let mut dist = 0.0;
            for k in 0..inputs.ncols() {
                let d = inputs[(unique_rows[a], k)] - inputs[(unique_rows[b], k)];
                dist += d * d;
            }
            gram[(a, b)] = (-0.5 * dist).exp();
        }
        gram[(a, a)] += 1e-10;
    }
    let chol = nalgebra::Cholesky::new(gram)
        .ok_or(Error::NumericalConditioning("toy GP draw Gram matrix"))?;
    let l = chol.l();
    let normal = StandardNormal;
    let mut out = DMatrix::zeros(n, output_dim);
    for col in 0..output_dim {
        let xi: Vec<f64> = (0..nu).map(|_| normal.sample(rng)).collect();
        for u in 0..nu {
            let mut v = 0.0;
            for k in 0..=u {
                v += l[(u, k)] * xi[k];
            }
            for i in 0..n {
                if assignment[i] == u {
                    out[(i, col)] = v;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum SplitRule {
    /// First ceil(D/2) columns versus the rest.
    HalfColumns,
    /// Rows are flattened rows*cols images; the top ceil(rows/2) pixel rows
    /// versus the bottom rows, each flattened.
    PixelHalves { rows: usize, cols: usize },
}

/// Split one observation matrix into two views column-wise.
pub fn split_views(y: &DMatrix<f64>, rule: SplitRule) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let d = y.ncols();
    if d < 2 {
        return Err(Error::Config("need at least 2 columns to split".into()));
    }
    let column_split = |cols: Vec<usize>, rest: Vec<usize>| {
        let v1 = DMatrix::from_fn(y.nrows(), cols.len(), |i, j| y[(i, cols[j])]);
        let v2 = DMatrix::from_fn(y.nrows(), rest.len(), |i, j| y[(i, rest[j])]);
        (v1, v2)
    };
    match rule {
        SplitRule::HalfColumns => {
            let first = d.div_ceil(2);
            Ok(column_split((0..first).collect(), (first..d).collect()))
        }
        SplitRule::PixelHalves { rows, cols } => {
            if rows * cols != d {
                return Err(Error::ShapeMismatch {
                    context: "pixel split",
                    expected: format!("{rows}x{cols} = {} columns", rows * cols),
                    got: format!("{d} columns"),
                });
            }
            let top_rows = rows.div_ceil(2);
            let top: Vec<usize> = (0..top_rows * cols).collect();
            let bottom: Vec<usize> = (top_rows * cols..d).collect();
            Ok(column_split(top, bottom))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnchorStrategy {
    Prefix,
    Random,
}

/// Split `{0..n-1}` into the aligned anchor set A (size `n_init`) and the
/// unaligned set B. Both come back sorted.
pub fn anchor_split(
    n: usize,
    n_init: usize,
    strategy: AnchorStrategy,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if n_init == 0 || n_init >= n {
        return Err(Error::Config(format!(
            "n_init must be in 1..{n}, got {n_init}"
        )));
    }
    match strategy {
        AnchorStrategy::Prefix => Ok(((0..n_init).collect(), (n_init..n).collect())),
        AnchorStrategy::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut anchors = rand::seq::index::sample(&mut rng, n, n_init).into_vec();
            anchors.sort_unstable();
            let mut is_anchor = vec![false; n];
            for &a in &anchors {
                is_anchor[a] = true;
            }
            let rest = (0..n).filter(|i| !is_anchor[*i]).collect();
            Ok((anchors, rest))
        }
    }
}

/// Select the given rows of a matrix, in order.
pub fn select_rows(y: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), y.ncols(), |i, j| y[(rows[i], j)])
}

// ---- CSV matrix I/O ---------------------------------------------------------

/// Write a matrix as CSV, one data point per row. Values print in the
/// shortest form that parses back to the same float.
pub fn save_matrix(m: &DMatrix<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            out.push_str(&format!("{}", m[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Read a CSV matrix; `has_header` skips the first line. Ragged rows and
/// malformed numbers report their 1-based row and column.
pub fn load_matrix(path: &Path, has_header: bool) -> Result<DMatrix<f64>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (line_idx, line) in text.lines().enumerate() {
        if has_header && line_idx == 0 {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col_idx, field) in line.split(',').enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: line_idx + 1,
                col: col_idx + 1,
                message: format!("not a number: {:?}", field.trim()),
            })?;
            row.push(value);
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(Error::Parse {
                    row: line_idx + 1,
                    col: row.len(),
                    message: format!("expected {w} fields, found {}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Parse {
            row: 1,
            col: 1,
            message: "no data rows".into(),
        });
    }
    let cols = width.unwrap();
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

// ---- dataset bundle ----------------------------------------------------------

/// Sidecar metadata for a dataset bundle directory (view1.csv, view2.csv,
/// meta.json).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BundleMeta {
    pub schema_version: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub toy_config: Option<ToyConfig>,
    /// Row correspondence: view-1 row i pairs with view-2 row
    /// `ground_truth_permutation[i]`. Generated bundles are aligned, so this
    /// is the identity.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_truth_permutation: Option<Vec<usize>>,
}

pub fn write_bundle(dir: &Path, dataset: &ToyDataset) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    save_matrix(&dataset.view1, &dir.join("view1.csv"))?;
    save_matrix(&dataset.view2, &dir.join("view2.csv"))?;
    let meta = BundleMeta {
        schema_version: 1,
        toy_config: Some(dataset.config.clone()),
        ground_truth_permutation: Some((0..dataset.view1.nrows()).collect()),
    };
    std::fs::write(dir.join("meta.json"), serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<(DMatrix<f64>, DMatrix<f64>, BundleMeta)> {
    let view1 = load_matrix(&dir.join("view1.csv"), false)?;
    let view2 = load_matrix(&dir.join("view2.csv"), false)?;
    let meta_path = dir.join("meta.json");
    let meta = if meta_path.exists() {
        serde_json::from_str(&std::fs::read_to_string(&meta_path)?)?
    } else {
        BundleMeta {
            schema_version: 1,
            toy_config: None,
            ground_truth_permutation: None,
        }
    };
    if view1.nrows() != view2.nrows() {
        return Err(Error::AnchorMismatch {
            left: view1.nrows(),
            right: view2.nrows(),
        });
    }
    Ok((view1, view2, meta))
}

/// Ground truth from a bundle as a permutation, when present.
pub fn bundle_ground_truth(meta: &BundleMeta) -> Result<Option<Permutation>> {
    match &meta.ground_truth_permutation {
        Some(mapping) => Ok(Some(Permutation::new(mapping.clone())?)),
        None => Ok(None),
    }
}
