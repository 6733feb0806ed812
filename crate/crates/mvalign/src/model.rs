//! The two-view factorized latent variable model: a shared Gaussian latent
//! density over the anchor pairs, one GP mapping per view with ARD
//! relevance weights, a collapsed inducing-point bound on the log marginal
//! likelihood, quasi-Newton training, and shared/private dimension
//! determination from the learned weights.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{
    kernel_matrix, kernel_matrix_vjp, kl_to_prior, kl_to_prior_grad, psi_statistics,
    psi_statistics_vjp, ArdKernelParams, GaussianLatent, InducingInputs, KernelKind, PsiUpstream,
};
use crate::optimize::{minimize, MinimizeResult, OptimizerConfig, StopReason};

/// Base jitter added to inducing-point Gram matrices, as a fraction of the
/// signal variance. Escalated by 10x on factorization failure, three times.
const JITTER_COEFF: f64 = 1e-6;
const JITTER_RETRIES: usize = 3;

/// Per-view mapping parameters: ARD kernel, Gaussian noise variance, and
/// inducing input locations.
#[derive(Debug, Clone)]
pub struct ViewModel {
    pub kernel: ArdKernelParams,
    pub noise_variance: f64,
    pub inducing: InducingInputs,
}

impl ViewModel {
    pub fn validate(&self, q: usize) -> Result<()> {
        self.kernel.validate()?;
        if self.noise_variance <= 0.0 || !self.noise_variance.is_finite() {
            return Err(Error::NonPositive {
                what: "noise_variance",
            });
        }
        if self.kernel.latent_dim() != q || self.inducing.latent_dim() != q {
            return Err(Error::ShapeMismatch {
                context: "ViewModel",
                expected: format!("latent dim {q}"),
                got: format!(
                    "kernel {}, inducing {}",
                    self.kernel.latent_dim(),
                    self.inducing.latent_dim()
                ),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub free_energy: f64,
}

/// The trained (or in-training) two-view model over the anchor set.
///
/// The anchor observations are kept on the model so that downstream latent
/// inference can locate warm starts and the inducing-output posterior
/// without re-supplying the training data.
#[derive(Debug, Clone)]
pub struct TwoViewModel {
    pub latent: GaussianLatent,
    pub view1: ViewModel,
    pub view2: ViewModel,
    pub q_latent_dim: usize,
    pub trace: Vec<TracePoint>,
    pub anchors_view1: DMatrix<f64>,
    pub anchors_view2: DMatrix<f64>,
    pub ard_threshold: f64,
    pub init_warnings: Vec<String>,
}

impl TwoViewModel {
    /// Build an untrained model from aligned anchor observations.
    ///
    /// Latent means are the first `q` principal component scores of the
    /// column-concatenated, per-column standardized `[y1 | y2]`, scaled to
    /// unit variance; latent variances start at 0.5; inducing inputs are a
    /// seeded subsample of the latent means; each view starts with uniform
    /// ARD weights `1/q` and noise at 10% of its data variance.
    pub fn initialize(
        y1: &DMatrix<f64>,
        y2: &DMatrix<f64>,
        q: usize,
        m: usize,
        seed: u64,
    ) -> Result<TwoViewModel> {
        Self::initialize_with_kernel(KernelKind::ArdRbf, y1, y2, q, m, seed)
    }

    pub fn initialize_with_kernel(
        kind: KernelKind,
        y1: &DMatrix<f64>,
        y2: &DMatrix<f64>,
        q: usize,
        m: usize,
        seed: u64,
    ) -> Result<TwoViewModel> {
        use rand::SeedableRng;
        use rand_distr::Distribution;

        let n = y1.nrows();
        if y2.nrows() != n {
            return Err(Error::AnchorMismatch {
                left: n,
                right: y2.nrows(),
            });
        }
        if n < 2 {
            return Err(Error::Config(format!(
                "need at least 2 anchor pairs, got {n}"
            )));
        }
        if q == 0 {
            return Err(Error::Config("latent dimension must be >= 1".into()));
        }
        if m == 0 || m > n {
            return Err(Error::Config(format!(
                "inducing count must be in 1..={n}, got {m}"
            )));
        }
        if y1.iter().chain(y2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("anchor observations"));
        }

        let mut warnings = Vec::new();

        // Per-column standardization of the concatenated views.
        let d_total = y1.ncols() + y2.ncols();
        let mut concat = DMatrix::zeros(n, d_total);
        for i in 0..n {
            for j in 0..y1.ncols() {
                concat[(i, j)] = y1[(i, j)];
            }
            for j in 0..y2.ncols() {
                concat[(i, y1.ncols() + j)] = y2[(i, j)];
            }
        }
        for j in 0..d_total {
            let mean = concat.column(j).sum() / n as f64;
            let var = concat
                .column(j)
                .iter()
                .map(|v| (v - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            let sd = var.sqrt();
            for i in 0..n {
                concat[(i, j)] = if sd > 1e-12 {
                    (concat[(i, j)] - mean) / sd
                } else {
                    0.0
                };
            }
        }

        let svd = concat.clone().svd(true, false);
        let u = svd
            .u
            .as_ref()
            .ok_or(Error::NumericalConditioning("SVD for initialization"))?;
        let sv = &svd.singular_values;
        let max_sv = sv.iter().cloned().fold(0.0_f64, f64::max);
        let rank = sv
            .iter()
            .filter(|s| **s > 1e-9 * max_sv.max(1e-300))
            .count();
        if rank < q {
            warnings.push(format!(
                "data rank {rank} is below latent dimension {q}; trailing dimensions zero-padded"
            ));
        }
        let mut means = DMatrix::zeros(n, q);
        let sqrt_n = (n as f64).sqrt();
        for j in 0..q.min(rank).min(u.ncols()) {
            // Unit-variance component scores with a deterministic sign.
            let mut col: Vec<f64> = (0..n).map(|i| u[(i, j)] * sqrt_n).collect();
            let (mut max_abs, mut max_val) = (0.0, 0.0);
            for v in &col {
                if v.abs() > max_abs {
                    max_abs = v.abs();
                    max_val = *v;
                }
            }
            if max_val < 0.0 {
                for v in col.iter_mut() {
                    *v = -*v;
                }
            }
            for i in 0..n {
                means[(i, j)] = col[i];
            }
        }

        let variances = DMatrix::from_element(n, q, 0.5);
        let latent = GaussianLatent::new(means, variances)?;

        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut idx = rand::seq::index::sample(&mut rng, n, m).into_vec();
        idx.sort_unstable();
        let mut z = DMatrix::zeros(m, q);
        for (r, i) in idx.iter().enumerate() {
            for j in 0..q {
                z[(r, j)] = latent.means[(*i, j)];
            }
        }
        // Distinct inducing rows: nudge any duplicates.
        let normal = rand_distr::StandardNormal;
        loop {
            let mut nudged = false;
            for a in 0..m {
                for b in (a + 1)..m {
                    if (0..q).all(|j| z[(a, j)] == z[(b, j)]) {
                        for j in 0..q {
                            let noise: f64 = normal.sample(&mut rng);
                            z[(b, j)] += 1e-6 * noise;
                        }
                        nudged = true;
                    }
                }
            }
            if !nudged {
                break;
            }
        }
        let inducing = InducingInputs::new(z)?;

        let make_view = |y: &DMatrix<f64>, inducing: InducingInputs| -> Result<ViewModel> {
            let nrows = y.nrows() as f64;
            let mut var = 0.0;
            for j in 0..y.ncols() {
                let mean = y.column(j).sum() / nrows;
                var += y.column(j).iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nrows;
            }
            var /= y.ncols() as f64;
            let var = var.max(1e-8);
            Ok(ViewModel {
                kernel: ArdKernelParams::new(kind, var, DVector::from_element(q, 1.0 / q as f64))?,
                noise_variance: 0.1 * var,
                inducing,
            })
        };

        let view1 = make_view(y1, inducing.clone())?;
        let view2 = make_view(y2, inducing)?;

        Ok(TwoViewModel {
            latent,
            view1,
            view2,
            q_latent_dim: q,
            trace: Vec::new(),
            anchors_view1: y1.clone(),
            anchors_view2: y2.clone(),
            ard_threshold: 0.05,
            init_warnings: warnings,
        })
    }

    pub fn n_anchors(&self) -> usize {
        self.latent.n_points()
    }

    pub fn validate(&self) -> Result<()> {
        self.latent.validate()?;
        self.view1.validate(self.q_latent_dim)?;
        self.view2.validate(self.q_latent_dim)?;
        if self.latent.latent_dim() != self.q_latent_dim {
            return Err(Error::ShapeMismatch {
                context: "TwoViewModel latent",
                expected: format!("{} columns", self.q_latent_dim),
                got: format!("{} columns", self.latent.latent_dim()),
            });
        }
        Ok(())
    }
}

/// Gradients of the free energy with respect to one view's parameters, in
/// the optimizer's coordinates (positive parameters in log space).
#[derive(Debug, Clone)]
pub struct ViewGrads {
    pub log_weights: DVector<f64>,
    pub log_signal_variance: f64,
    pub log_noise_variance: f64,
    pub inducing: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub latent_means: DMatrix<f64>,
    pub latent_log_variances: DMatrix<f64>,
    pub view1: ViewGrads,
    pub view2: ViewGrads,
}

/// Intermediate results of one view's collapsed bound.
struct ViewBound {
    value: f64,
    g_psi0: f64,
    g_psi1: DMatrix<f64>,
    g_psi2: DMatrix<f64>,
    g_kuu: DMatrix<f64>,
    g_noise_natural: f64,
    jitter_coeff: f64,
}

fn view_bound(
    latent: &GaussianLatent,
    view: &ViewModel,
    y: &DMatrix<f64>,
    want_grads: bool,
) -> Result<ViewBound> {
    if y.nrows() != latent.n_points() {
        return Err(Error::ShapeMismatch {
            context: "view_bound observations",
            expected: format!("{} rows", latent.n_points()),
            got: format!("{} rows", y.nrows()),
        });
    }
    let n = latent.n_points() as f64;
    let d = y.ncols() as f64;
    let m_count = view.inducing.count();
    let sn = view.noise_variance;
    let sf2 = view.kernel.signal_variance;

    let psi = psi_statistics(latent, &view.inducing, &view.kernel)?;
    let kuu_raw = kernel_matrix(
        &view.inducing.locations,
        &view.inducing.locations,
        &view.kernel,
    )?;

    // Factor through B = I + L^-1 Psi2 L^-T / noise (with K = L L^T), which
    // stays well conditioned for the Cholesky even when the Gram matrix is
    // nearly singular: |A| = noise^M |K| |B| and A^-1 is recovered through
    // triangular solves.
    let mut jitter_coeff = JITTER_COEFF;
    let mut attempt = 0;
    let (kuu, chol_k, chol_b) = loop {
        let mut kuu = kuu_raw.clone();
        for i in 0..m_count {
            kuu[(i, i)] += jitter_coeff * sf2;
        }
        if let Some(ck) = nalgebra::Cholesky::new(kuu.clone()) {
            let l = ck.l();
            if let Some(x) = l.solve_lower_triangular(&psi.psi2) {
                if let Some(wt) = l.solve_lower_triangular(&x.transpose()) {
                    let mut b = wt / sn;
                    for i in 0..m_count {
                        b[(i, i)] += 1.0;
                    }
                    // symmetrize against rounding
                    b = (&b + b.transpose()) * 0.5;
                    if let Some(cb) = nalgebra::Cholesky::new(b) {
                        break (kuu, ck, cb);
                    }
                }
            }
        }
        if attempt >= JITTER_RETRIES {
            return Err(Error::NumericalConditioning(
                "inducing Gram factorization failed",
            ));
        }
        attempt += 1;
        jitter_coeff *= 10.0;
    };

    let l_k = chol_k.l();
    let l_b = chol_b.l();
    let logdet_b: f64 = 2.0 * l_b.diagonal().iter().map(|v| v.ln()).sum::<f64>();

    // W = L^-1 Psi2 L^-T; tr(K^-1 Psi2) = tr(W).
    let x = l_k
        .solve_lower_triangular(&psi.psi2)
        .ok_or(Error::NumericalConditioning("triangular solve"))?;
    let w_mat = l_k
        .solve_lower_triangular(&x.transpose())
        .ok_or(Error::NumericalConditioning("triangular solve"))?;
    let tr_kinv_psi2 = w_mat.trace();

    let c = psi.psi1.transpose() * y; // M x D
    let t = l_k
        .solve_lower_triangular(&c)
        .ok_or(Error::NumericalConditioning("triangular solve"))?;
    let u = l_b
        .solve_lower_triangular(&t)
        .ok_or(Error::NumericalConditioning("triangular solve"))?;
    // C^T A^-1 C = |U|^2 / noise.
    let data_fit = u.norm_squared() / sn;

    let two_pi = 2.0 * std::f64::consts::PI;
    let value = d
        * (-(n / 2.0) * (two_pi * sn).ln() - 0.5 * logdet_b - psi.psi0 / (2.0 * sn)
            + tr_kinv_psi2 / (2.0 * sn))
        - y.norm_squared() / (2.0 * sn)
        + data_fit / (2.0 * sn);

    if !value.is_finite() {
        return Err(Error::NonFinite("free energy"));
    }

    if !want_grads {
        return Ok(ViewBound {
            value,
            g_psi0: 0.0,
            g_psi1: DMatrix::zeros(0, 0),
            g_psi2: DMatrix::zeros(0, 0),
            g_kuu: DMatrix::zeros(0, 0),
            g_noise_natural: 0.0,
            jitter_coeff,
        });
    }

    // P = L^-1, Q = L_B^-1 P; then K^-1 = P^T P and A^-1 = Q^T Q / noise.
    let eye = DMatrix::identity(m_count, m_count);
    let p = l_k
        .solve_lower_triangular(&eye)
        .ok_or(Error::NumericalConditioning("triangular solve"))?;
    let q_mat = l_b
        .solve_lower_triangular(&p)
        .ok_or(Error::NumericalConditioning("triangular solve"))?;
    let kinv = p.transpose() * &p;
    let ainv = q_mat.transpose() * &q_mat / sn;
    // E1 = A^-1 C, recovered from the already-solved U.
    let e1 = q_mat.transpose() * &u / sn;

    let g_psi0 = -d / (2.0 * sn);
    let g_psi1 = y * e1.transpose() / sn;
    let e1_outer = &e1 * e1.transpose();
    let g_psi2 = -(d / 2.0) * &ainv + (d / (2.0 * sn)) * &kinv - e1_outer.clone() / (2.0 * sn);
    let kinv_psi2_kinv = p.transpose() * &w_mat * &p;
    let g_kuu = (d / 2.0) * &kinv
        - (d * sn / 2.0) * &ainv
        - (d / (2.0 * sn)) * kinv_psi2_kinv
        - 0.5 * e1_outer;

    // tr(A^-1 K) = tr(B^-1) / noise.
    let tr_ainv_k = l_b
        .solve_lower_triangular(&eye)
        .ok_or(Error::NumericalConditioning("triangular solve"))?
        .norm_squared()
        / sn;
    let tr_e1_k_e1 = (&kuu * &e1).component_mul(&e1).sum();
    let g_noise_natural = d
        * (-n / (2.0 * sn) - 0.5 * (tr_ainv_k - m_count as f64 / sn) + psi.psi0 / (2.0 * sn * sn)
            - tr_kinv_psi2 / (2.0 * sn * sn))
        + y.norm_squared() / (2.0 * sn * sn)
        - data_fit / (2.0 * sn * sn)
        - tr_e1_k_e1 / (2.0 * sn);

    Ok(ViewBound {
        value,
        g_psi0,
        g_psi1,
        g_psi2,
        g_kuu,
        g_noise_natural,
        jitter_coeff,
    })
}

/// The collapsed variational lower bound on the two-view log marginal
/// likelihood: per-view inducing-point bounds minus the latent KL.
pub fn free_energy(model: &TwoViewModel, y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> Result<f64> {
    model.validate()?;
    let b1 = view_bound(&model.latent, &model.view1, y1, false)?;
    let b2 = view_bound(&model.latent, &model.view2, y2, false)?;
    let kl = kl_to_prior(&model.latent)?;
    Ok(b1.value + b2.value - kl)
}

/// Free energy plus its gradient with respect to every free parameter,
/// positive parameters in log space.
pub fn free_energy_with_grads(
    model: &TwoViewModel,
    y1: &DMatrix<f64>,
    y2: &DMatrix<f64>,
) -> Result<(f64, ModelGrads)> {
    model.validate()?;
    let b1 = view_bound(&model.latent, &model.view1, y1, true)?;
    let b2 = view_bound(&model.latent, &model.view2, y2, true)?;
    let kl = kl_to_prior(&model.latent)?;
    let value = b1.value + b2.value - kl;

    let mut d_means = DMatrix::zeros(model.latent.n_points(), model.q_latent_dim);
    let mut d_vars = DMatrix::zeros(model.latent.n_points(), model.q_latent_dim);

    let mut assemble = |view: &ViewModel, bound: &ViewBound| -> Result<ViewGrads> {
        let psi_vjp = psi_statistics_vjp(
            &model.latent,
            &view.inducing,
            &view.kernel,
            &PsiUpstream {
                psi0: bound.g_psi0,
                psi1: bound.g_psi1.clone(),
                psi2: bound.g_psi2.clone(),
            },
        )?;
        let k_vjp = kernel_matrix_vjp(
            &view.inducing.locations,
            &view.inducing.locations,
            &view.kernel,
            &bound.g_kuu,
        )?;
        d_means += &psi_vjp.means;
        d_vars += &psi_vjp.variances;
        let w = &view.kernel.weights;
        let log_weights = DVector::from_fn(w.len(), |k, _| {
            (psi_vjp.weights[k] + k_vjp.weights[k]) * w[k]
        });
        let jitter_grad = bound.jitter_coeff * bound.g_kuu.trace();
        let log_signal_variance = (psi_vjp.signal_variance + k_vjp.signal_variance + jitter_grad)
            * view.kernel.signal_variance;
        let log_noise_variance = bound.g_noise_natural * view.noise_variance;
        let inducing = psi_vjp.inducing + k_vjp.x1 + k_vjp.x2;
        Ok(ViewGrads {
            log_weights,
            log_signal_variance,
            log_noise_variance,
            inducing,
        })
    };

    let view1 = assemble(&model.view1, &b1)?;
    let view2 = assemble(&model.view2, &b2)?;

    let (kl_mu, kl_s) = kl_to_prior_grad(&model.latent)?;
    d_means -= &kl_mu;
    d_vars -= &kl_s;
    let latent_log_variances = d_vars.component_mul(&model.latent.variances);

    Ok((
        value,
        ModelGrads {
            latent_means: d_means,
            latent_log_variances,
            view1,
            view2,
        },
    ))
}

// ---- parameter packing ---------------------------------------------------

impl TwoViewModel {
    /// Flatten all free parameters into the optimizer's coordinate vector:
    /// latent means, latent log-variances, then per view log-weights,
    /// log signal variance, log noise variance, and inducing inputs
    /// (matrices row-major).
    pub fn pack_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        push_matrix(&mut out, &self.latent.means, false);
        push_matrix(&mut out, &self.latent.variances, true);
        for view in [&self.view1, &self.view2] {
            out.extend(view.kernel.weights.iter().map(|w| w.max(1e-300).ln()));
            out.push(view.kernel.signal_variance.ln());
            out.push(view.noise_variance.ln());
            push_matrix(&mut out, &view.inducing.locations, false);
        }
        out
    }

    pub fn param_count(&self) -> usize {
        let nq = self.latent.n_points() * self.q_latent_dim;
        let per_view =
            |v: &ViewModel| v.kernel.weights.len() + 2 + v.inducing.count() * self.q_latent_dim;
        2 * nq + per_view(&self.view1) + per_view(&self.view2)
    }

    /// Rebuild a model from the flat parameter vector, keeping everything
    /// else (anchors, trace, threshold) from `self`.
    pub fn unpack_params(&self, x: &[f64]) -> TwoViewModel {
        assert_eq!(x.len(), self.param_count(), "parameter vector length");
        let mut model = self.clone();
        let mut pos = 0;
        read_matrix(x, &mut pos, &mut model.latent.means, false);
        read_matrix(x, &mut pos, &mut model.latent.variances, true);
        for view in [&mut model.view1, &mut model.view2] {
            for k in 0..view.kernel.weights.len() {
                view.kernel.weights[k] = x[pos].exp();
                pos += 1;
            }
            view.kernel.signal_variance = x[pos].exp();
            pos += 1;
            view.noise_variance = x[pos].exp();
            pos += 1;
            read_matrix(x, &mut pos, &mut view.inducing.locations, false);
        }
        model
    }
}

fn push_matrix(out: &mut Vec<f64>, m: &DMatrix<f64>, log_space: bool) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(if log_space { m[(i, j)].ln() } else { m[(i, j)] });
        }
    }
}

fn read_matrix(x: &[f64], pos: &mut usize, m: &mut DMatrix<f64>, log_space: bool) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            m[(i, j)] = if log_space { x[*pos].exp() } else { x[*pos] };
            *pos += 1;
        }
    }
}

/// Indices (in the packed parameter layout) of the ARD weights and noise
/// variances, the parameters held fixed during training warmup.
fn frozen_param_indices(model: &TwoViewModel) -> Vec<usize> {
    let nq = model.latent.n_points() * model.q_latent_dim;
    let mut indices = Vec::new();
    let mut pos = 2 * nq;
    for view in [&model.view1, &model.view2] {
        let q = view.kernel.weights.len();
        indices.extend(pos..pos + q); // log weights
        pos += q;
        pos += 1; // log signal variance stays free
        indices.push(pos); // log noise variance
        pos += 1;
        pos += view.inducing.count() * model.q_latent_dim;
    }
    indices
}

pub fn grads_to_vec(model: &TwoViewModel, grads: &ModelGrads) -> Vec<f64> {
    let mut out = Vec::with_capacity(model.param_count());
    push_matrix(&mut out, &grads.latent_means, false);
    push_matrix(&mut out, &grads.latent_log_variances, false);
    for vg in [&grads.view1, &grads.view2] {
        out.extend(vg.log_weights.iter());
        out.push(vg.log_signal_variance);
        out.push(vg.log_noise_variance);
        push_matrix(&mut out, &vg.inducing, false);
    }
    out
}

// ---- training --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainStatus {
    Converged,
    MaxIters,
    /// Line search could make no further progress; usually convergence at
    /// numerical precision.
    Stalled,
    /// The free energy or its gradient became non-finite; the returned model
    /// is the last finite state.
    NonFiniteAbort,
}

#[derive(Debug, Clone)]
pub struct TrainResult {
    pub model: TwoViewModel,
    pub status: TrainStatus,
}

/// Maximize the free energy over all free parameters. The returned model is
/// the best state seen, so its free energy is never below the input's, and
/// the appended trace is non-decreasing up to evaluation precision.
///
/// The quasi-Newton memory is rebuilt every `opt.restart_every` iterations
/// (within the overall `opt.max_iters` budget); training ends early when a
/// round converges or a fresh round makes no further progress.
pub fn train(
    model: &TwoViewModel,
    y1: &DMatrix<f64>,
    y2: &DMatrix<f64>,
    opt: &OptimizerConfig,
) -> Result<TrainResult> {
    // Surface errors on the initial state directly.
    let f0 = free_energy(model, y1, y2)?;

    // Keep the exact input parameters unless the optimizer strictly improves
    // on them (packing positive parameters through log space is not a
    // bit-exact round trip).
    let mut best_model = model.clone();
    let mut best_f = f0;
    let mut trace = model.trace.clone();
    let mut iteration = trace.len();
    trace.push(TracePoint {
        iteration,
        free_energy: f0,
    });

    let objective = |x: &[f64]| {
        let candidate = model.unpack_params(x);
        match free_energy_with_grads(&candidate, y1, y2) {
            Ok((value, grads)) => {
                let g = grads_to_vec(&candidate, &grads);
                (-value, g.into_iter().map(|v| -v).collect())
            }
            Err(_) => (f64::NAN, vec![f64::NAN; x.len()]),
        }
    };

    let mut status = TrainStatus::MaxIters;
    let mut remaining = opt.max_iters;

    // Warmup: same objective with the relevance weights and noise variances
    // held at their current values (their gradient entries masked to zero),
    // so the latent layout settles before any dimension can be pruned.
    let warmup = opt.warmup_iters.min(remaining);
    if warmup > 0 {
        let frozen = frozen_param_indices(model);
        let masked = |x: &[f64]| {
            let (f, mut g) = objective(x);
            for &i in &frozen {
                g[i] = 0.0;
            }
            (f, g)
        };
        let warm_cfg = OptimizerConfig {
            max_iters: warmup,
            ..opt.clone()
        };
        let result = minimize(masked, &best_model.pack_params(), &warm_cfg);
        for v in result.trace.iter().skip(1) {
            iteration += 1;
            trace.push(TracePoint {
                iteration,
                free_energy: -v,
            });
        }
        remaining = remaining.saturating_sub(result.iterations.max(1));
        let round_f = -result.value;
        if round_f.is_finite() && round_f > best_f {
            best_f = round_f;
            best_model = model.unpack_params(&result.x);
        }
    }
    while remaining > 0 {
        let round_cfg = OptimizerConfig {
            max_iters: remaining.min(opt.restart_every.max(1)),
            ..opt.clone()
        };
        let x0 = best_model.pack_params();
        let result: MinimizeResult = minimize(objective, &x0, &round_cfg);
        for v in result.trace.iter().skip(1) {
            iteration += 1;
            trace.push(TracePoint {
                iteration,
                free_energy: -v,
            });
        }
        remaining = remaining.saturating_sub(result.iterations.max(1));
        let round_f = -result.value;
        let improved = round_f.is_finite() && round_f > best_f;
        if improved {
            best_f = round_f;
            best_model = model.unpack_params(&result.x);
        }
        match result.reason {
            StopReason::Converged => {
                status = TrainStatus::Converged;
                break;
            }
            StopReason::NonFiniteAbort => {
                status = TrainStatus::NonFiniteAbort;
                break;
            }
            StopReason::LineSearchStalled => {
                status = TrainStatus::Stalled;
                if !improved {
                    break;
                }
            }
            StopReason::MaxIters => {
                status = TrainStatus::MaxIters;
            }
        }
    }

    let mut trained = best_model;
    trained.anchors_view1 = y1.clone();
    trained.anchors_view2 = y2.clone();

    if opt.latent_sweeps > 0 && opt.max_iters > 0 {
        let mut swept = trained.clone();
        let sweep_ok = crate::aligner::refine_anchor_latents(
            &mut swept,
            opt.latent_sweeps,
            &OptimizerConfig::for_inference(),
        )
        .is_ok();
        if sweep_ok {
            if let Ok(f_sweep) = free_energy(&swept, y1, y2) {
                if f_sweep >= best_f {
                    trained = swept;
                    iteration += 1;
                    trace.push(TracePoint {
                        iteration,
                        free_energy: f_sweep,
                    });
                }
            }
        }
    }

    trained.trace = trace;
    Ok(TrainResult {
        model: trained,
        status,
    })
}

// ---- relevance profile -----------------------------------------------------

/// Shared/private factorization of the latent dimensions, read off the two
/// views' normalized ARD weights at a threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelevanceProfile {
    /// Each view's weights divided by that view's maximum weight.
    pub normalized_weights: [Vec<f64>; 2],
    pub shared_dims: Vec<usize>,
    pub private_dims_view1: Vec<usize>,
    pub private_dims_view2: Vec<usize>,
    pub off_dims: Vec<usize>,
}

pub fn relevance_profile(model: &TwoViewModel, threshold: f64) -> Result<RelevanceProfile> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(format!(
            "relevance threshold must be in (0, 1), got {threshold}"
        )));
    }
    let normalize = |w: &DVector<f64>| -> Vec<f64> {
        let max = w.iter().cloned().fold(0.0_f64, f64::max);
        if max > 0.0 {
            w.iter().map(|v| v / max).collect()
        } else {
            vec![0.0; w.len()]
        }
    };
    let w1 = normalize(&model.view1.kernel.weights);
    let w2 = normalize(&model.view2.kernel.weights);
    let mut shared = Vec::new();
    let mut private1 = Vec::new();
    let mut private2 = Vec::new();
    let mut off = Vec::new();
    for q in 0..model.q_latent_dim {
        let on1 = w1[q] > threshold;
        let on2 = w2[q] > threshold;
        match (on1, on2) {
            (true, true) => shared.push(q),
            (true, false) => private1.push(q),
            (false, true) => private2.push(q),
            (false, false) => off.push(q),
        }
    }
    Ok(RelevanceProfile {
        normalized_weights: [w1, w2],
        shared_dims: shared,
        private_dims_view1: private1,
        private_dims_view2: private2,
        off_dims: off,
    })
}

// ---- checkpoint serialization ----------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ViewCheckpoint {
    pub kernel_kind: KernelKind,
    pub signal_variance: f64,
    pub weights: Vec<f64>,
    pub noise_variance: f64,
    pub inducing: Vec<Vec<f64>>,
}

/// JSON model checkpoint. All matrices are row-major nested arrays; values
/// round-trip losslessly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub q_latent_dim: usize,
    pub m_inducing: usize,
    pub ard_threshold: f64,
    pub latent_means: Vec<Vec<f64>>,
    pub latent_variances: Vec<Vec<f64>>,
    pub view1: ViewCheckpoint,
    pub view2: ViewCheckpoint,
    pub trace: Vec<(usize, f64)>,
    pub anchors_view1: Vec<Vec<f64>>,
    pub anchors_view2: Vec<Vec<f64>>,
    #[serde(default)]
    pub init_warnings: Vec<String>,
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Err(Error::Config("empty matrix in checkpoint".into()));
    }
    let cols = rows[0].len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != cols {
            return Err(Error::ShapeMismatch {
                context: "checkpoint matrix",
                expected: format!("{cols} columns"),
                got: format!("{} columns in row {i}", r.len()),
            });
        }
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| rows[i][j]))
}

impl TwoViewModel {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let view_ck = |v: &ViewModel| ViewCheckpoint {
            kernel_kind: v.kernel.kind,
            signal_variance: v.kernel.signal_variance,
            weights: v.kernel.weights.iter().cloned().collect(),
            noise_variance: v.noise_variance,
            inducing: matrix_to_rows(&v.inducing.locations),
        };
        Checkpoint {
            schema_version: 1,
            q_latent_dim: self.q_latent_dim,
            m_inducing: self.view1.inducing.count(),
            ard_threshold: self.ard_threshold,
            latent_means: matrix_to_rows(&self.latent.means),
            latent_variances: matrix_to_rows(&self.latent.variances),
            view1: view_ck(&self.view1),
            view2: view_ck(&self.view2),
            trace: self
                .trace
                .iter()
                .map(|t| (t.iteration, t.free_energy))
                .collect(),
            anchors_view1: matrix_to_rows(&self.anchors_view1),
            anchors_view2: matrix_to_rows(&self.anchors_view2),
            init_warnings: self.init_warnings.clone(),
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<TwoViewModel> {
        let view = |v: &ViewCheckpoint| -> Result<ViewModel> {
            Ok(ViewModel {
                kernel: ArdKernelParams::new(
                    v.kernel_kind,
                    v.signal_variance,
                    DVector::from_vec(v.weights.clone()),
                )?,
                noise_variance: v.noise_variance,
                inducing: InducingInputs::new(rows_to_matrix(&v.inducing)?)?,
            })
        };
        let model = TwoViewModel {
            latent: GaussianLatent::new(
                rows_to_matrix(&ck.latent_means)?,
                rows_to_matrix(&ck.latent_variances)?,
            )?,
            view1: view(&ck.view1)?,
            view2: view(&ck.view2)?,
            q_latent_dim: ck.q_latent_dim,
            trace: ck
                .trace
                .iter()
                .map(|(i, f)| TracePoint {
                    iteration: *i,
                    free_energy: *f,
                })
                .collect(),
            anchors_view1: rows_to_matrix(&ck.anchors_view1)?,
            anchors_view2: rows_to_matrix(&ck.anchors_view2)?,
            ard_threshold: ck.ard_threshold,
            init_warnings: ck.init_warnings.clone(),
        };
        model.validate()?;
        Ok(model)
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(&self.to_checkpoint())?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<TwoViewModel> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.display().to_string()));
        }
        let json = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&json)?;
        Self::from_checkpoint(&ck)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn random_matrix(r: usize, c: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| rng.sample::<f64, _>(StandardNormal))
    }

    fn small_instance(seed: u64, kind: KernelKind) -> (TwoViewModel, DMatrix<f64>, DMatrix<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, q, m, d1, d2) = (5, 3, 3, 4, 3);
        let y1 = random_matrix(n, d1, &mut rng);
        let y2 = random_matrix(n, d2, &mut rng);
        let mut model = TwoViewModel::initialize_with_kernel(kind, &y1, &y2, q, m, seed).unwrap();
        // Randomize away from the initialization to get a generic point.
        for v in [&mut model.view1, &mut model.view2] {
            for k in 0..q {
                v.kernel.weights[k] = 0.3 + rng.random::<f64>();
            }
            v.kernel.signal_variance = 0.5 + rng.random::<f64>();
            v.noise_variance = 0.2 + 0.5 * rng.random::<f64>();
            v.inducing.locations = random_matrix(m, q, &mut rng);
        }
        model.latent.means = random_matrix(n, q, &mut rng);
        model.latent.variances = DMatrix::from_fn(n, q, |_, _| 0.2 + rng.random::<f64>());
        (model, y1, y2)
    }

    #[test]
    fn initialize_shape_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let y = random_matrix(10, 4, &mut rng);
        let model = TwoViewModel::initialize(&y, &y, 2, 5, 42).unwrap();
        assert_eq!(model.latent.n_points(), 10);
        assert_eq!(model.latent.latent_dim(), 2);
        assert_eq!(model.view1.inducing.count(), 5);
        assert!(model
            .latent
            .variances
            .iter()
            .all(|v| (*v - 0.5).abs() < 1e-15));
    }

    #[test]
    fn initialize_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let y1 = random_matrix(8, 5, &mut rng);
        let y2 = random_matrix(8, 6, &mut rng);
        let a = TwoViewModel::initialize(&y1, &y2, 3, 4, 7).unwrap();
        let b = TwoViewModel::initialize(&y1, &y2, 3, 4, 7).unwrap();
        assert_eq!(a.pack_params(), b.pack_params());
    }

    #[test]
    fn initialize_rejects_row_mismatch() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let y1 = random_matrix(8, 5, &mut rng);
        let y2 = random_matrix(7, 5, &mut rng);
        assert!(matches!(
            TwoViewModel::initialize(&y1, &y2, 2, 4, 0),
            Err(Error::AnchorMismatch { .. })
        ));
    }

    #[test]
    fn initialize_zero_pads_beyond_rank() {
        // Rank-1 data in both views.
        let col = DVector::from_fn(10, |i, _| i as f64 - 4.5);
        let y = DMatrix::from_fn(10, 4, |i, j| col[i] * (j as f64 + 1.0));
        let model = TwoViewModel::initialize(&y, &y, 4, 5, 3).unwrap();
        assert!(!model.init_warnings.is_empty());
        // Trailing latent columns are exactly zero.
        for j in 1..4 {
            assert!(model.latent.means.column(j).iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn free_energy_symmetric_under_view_swap() {
        let (model, y1, y2) = small_instance(9, KernelKind::ArdRbf);
        let mut swapped = model.clone();
        std::mem::swap(&mut swapped.view1, &mut swapped.view2);
        std::mem::swap(&mut swapped.anchors_view1, &mut swapped.anchors_view2);
        let f = free_energy(&model, &y1, &y2).unwrap();
        let g = free_energy(&swapped, &y2, &y1).unwrap();
        assert_eq!(f, g);
    }

    #[test]
    fn free_energy_invariant_under_latent_dimension_permutation() {
        let (model, y1, y2) = small_instance(11, KernelKind::ArdRbf);
        let f = free_energy(&model, &y1, &y2).unwrap();
        // Rotate latent dimensions by one in every parameter that indexes them.
        let q = model.q_latent_dim;
        let perm: Vec<usize> = (0..q).map(|i| (i + 1) % q).collect();
        let mut permuted = model.clone();
        for (j, &src) in perm.iter().enumerate() {
            for i in 0..model.latent.n_points() {
                permuted.latent.means[(i, j)] = model.latent.means[(i, src)];
                permuted.latent.variances[(i, j)] = model.latent.variances[(i, src)];
            }
            permuted.view1.kernel.weights[j] = model.view1.kernel.weights[src];
            permuted.view2.kernel.weights[j] = model.view2.kernel.weights[src];
            for r in 0..model.view1.inducing.count() {
                permuted.view1.inducing.locations[(r, j)] =
                    model.view1.inducing.locations[(r, src)];
                permuted.view2.inducing.locations[(r, j)] =
                    model.view2.inducing.locations[(r, src)];
            }
        }
        let g = free_energy(&permuted, &y1, &y2).unwrap();
        let scale = f.abs().max(1.0);
        assert!((f - g).abs() / scale < 1e-9, "{f} vs {g}");
    }

    /// Independently coded dense evaluation of the same bound, using naive
    /// loops, LU inversion and determinants instead of the Cholesky path.
    fn dense_free_energy(model: &TwoViewModel, y1: &DMatrix<f64>, y2: &DMatrix<f64>) -> f64 {
        let dense_view = |view: &ViewModel, y: &DMatrix<f64>| -> f64 {
            let n = model.latent.n_points();
            let q = model.q_latent_dim;
            let m = view.inducing.count();
            let mu = &model.latent.means;
            let s = &model.latent.variances;
            let z = &view.inducing.locations;
            let w = &view.kernel.weights;
            let sf2 = view.kernel.signal_variance;
            let sn = view.noise_variance;
            assert_eq!(view.kernel.kind, KernelKind::ArdRbf);

            let psi0 = n as f64 * sf2;
            let mut psi1 = DMatrix::zeros(n, m);
            for i in 0..n {
                for j in 0..m {
                    let mut v = sf2;
                    for k in 0..q {
                        let c = w[k] * s[(i, k)] + 1.0;
                        let d = mu[(i, k)] - z[(j, k)];
                        v *= c.powf(-0.5) * (-0.5 * w[k] * d * d / c).exp();
                    }
                    psi1[(i, j)] = v;
                }
            }
            let mut psi2 = DMatrix::zeros(m, m);
            for a in 0..m {
                for b in 0..m {
                    let mut total = 0.0;
                    for i in 0..n {
                        let mut v = sf2 * sf2;
                        for k in 0..q {
                            let dd = 2.0 * w[k] * s[(i, k)] + 1.0;
                            let delta = z[(a, k)] - z[(b, k)];
                            let zbar = 0.5 * (z[(a, k)] + z[(b, k)]);
                            let e = mu[(i, k)] - zbar;
                            v *= dd.powf(-0.5)
                                * (-0.25 * w[k] * delta * delta - w[k] * e * e / dd).exp();
                        }
                        total += v;
                    }
                    psi2[(a, b)] = total;
                }
            }
            let mut kuu = DMatrix::zeros(m, m);
            for a in 0..m {
                for b in 0..m {
                    let mut dist = 0.0;
                    for k in 0..q {
                        let d = z[(a, k)] - z[(b, k)];
                        dist += w[k] * d * d;
                    }
                    kuu[(a, b)] = sf2 * (-0.5 * dist).exp();
                }
                kuu[(a, a)] += JITTER_COEFF * sf2;
            }
            let kuu_inv = kuu.clone().try_inverse().unwrap();
            let inner = &kuu + &psi2 / sn;
            let big = &kuu * sn + &psi2;
            let big_inv = big.clone().try_inverse().unwrap();
            let d_out = y.ncols() as f64;
            let two_pi = 2.0 * std::f64::consts::PI;
            d_out
                * (-(n as f64 / 2.0) * (two_pi * sn).ln() + 0.5 * kuu.determinant().ln()
                    - 0.5 * inner.determinant().ln()
                    - psi0 / (2.0 * sn)
                    + (&kuu_inv * &psi2).trace() / (2.0 * sn))
                - (y * y.transpose()).trace() / (2.0 * sn)
                + (y.transpose() * &psi1 * &big_inv * psi1.transpose() * y).trace() / (2.0 * sn)
        };
        let mut kl = 0.0;
        for i in 0..model.latent.n_points() {
            for k in 0..model.q_latent_dim {
                let m = model.latent.means[(i, k)];
                let s = model.latent.variances[(i, k)];
                kl += 0.5 * (m * m + s - s.ln() - 1.0);
            }
        }
        dense_view(&model.view1, y1) + dense_view(&model.view2, y2) - kl
    }

    #[test]
    fn free_energy_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (n, q, m) = (4, 1, 2);
        let y1 = random_matrix(n, 3, &mut rng);
        let y2 = random_matrix(n, 2, &mut rng);
        let mut model = TwoViewModel::initialize(&y1, &y2, q, m, 5).unwrap();
        model.latent.means = random_matrix(n, q, &mut rng);
        model.latent.variances = DMatrix::from_fn(n, q, |_, _| 0.3 + rng.random::<f64>());
        model.view1.inducing.locations = random_matrix(m, q, &mut rng);
        model.view2.inducing.locations = random_matrix(m, q, &mut rng);

        let fast = free_energy(&model, &y1, &y2).unwrap();
        let dense = dense_free_energy(&model, &y1, &y2);
        let scale = fast.abs().max(dense.abs()).max(1.0);
        assert!(
            (fast - dense).abs() / scale < 1e-8,
            "fast {fast} vs dense {dense}"
        );

        // And on a slightly larger instance.
        let (model, y1, y2) = small_instance(33, KernelKind::ArdRbf);
        let fast = free_energy(&model, &y1, &y2).unwrap();
        let dense = dense_free_energy(&model, &y1, &y2);
        let scale = fast.abs().max(dense.abs()).max(1.0);
        assert!(
            (fast - dense).abs() / scale < 1e-8,
            "fast {fast} vs dense {dense}"
        );
    }

    #[test]
    fn free_energy_gradients_match_finite_differences() {
        for kind in [KernelKind::ArdRbf, KernelKind::ArdLinear] {
            let (model, y1, y2) = small_instance(17, kind);
            let x0 = model.pack_params();
            let (_, grads) = free_energy_with_grads(&model, &y1, &y2).unwrap();
            let gvec = grads_to_vec(&model, &grads);
            let h = 1e-5;
            for i in 0..x0.len() {
                let mut plus = x0.clone();
                plus[i] += h;
                let mut minus = x0.clone();
                minus[i] -= h;
                let fp = free_energy(&model.unpack_params(&plus), &y1, &y2).unwrap();
                let fm = free_energy(&model.unpack_params(&minus), &y1, &y2).unwrap();
                let numeric = (fp - fm) / (2.0 * h);
                let scale = gvec[i].abs().max(numeric.abs()).max(1e-4);
                assert!(
                    (gvec[i] - numeric).abs() / scale < 1e-4,
                    "kind {kind:?} param {i}: analytic {} vs numeric {numeric}",
                    gvec[i]
                );
            }
        }
    }

    #[test]
    fn train_zero_iterations_is_identity_with_one_trace_entry() {
        let (model, y1, y2) = small_instance(23, KernelKind::ArdRbf);
        let opt = OptimizerConfig {
            max_iters: 0,
            ..OptimizerConfig::default()
        };
        let result = train(&model, &y1, &y2, &opt).unwrap();
        assert_eq!(result.model.pack_params(), model.pack_params());
        assert_eq!(result.model.trace.len(), 1);
        let f = free_energy(&model, &y1, &y2).unwrap();
        assert_eq!(result.model.trace[0].free_energy, f);
    }

    #[test]
    fn train_improves_and_trace_is_monotone() {
        let (model, y1, y2) = small_instance(29, KernelKind::ArdRbf);
        let f0 = free_energy(&model, &y1, &y2).unwrap();
        let opt = OptimizerConfig {
            max_iters: 60,
            ..OptimizerConfig::default()
        };
        let result = train(&model, &y1, &y2, &opt).unwrap();
        let f1 = free_energy(&result.model, &y1, &y2).unwrap();
        assert!(f1 >= f0, "{f1} < {f0}");
        for pair in result.model.trace.windows(2) {
            assert!(pair[1].free_energy >= pair[0].free_energy - 1e-12);
        }
    }

    #[test]
    fn relevance_profile_threshold_example() {
        let (mut model, _, _) = small_instance(31, KernelKind::ArdRbf);
        model.view1.kernel.weights = DVector::from_vec(vec![1.0, 0.9, 0.001]);
        model.view2.kernel.weights = DVector::from_vec(vec![0.95, 0.002, 0.8]);
        let profile = relevance_profile(&model, 0.05).unwrap();
        assert_eq!(profile.shared_dims, vec![0]);
        assert_eq!(profile.private_dims_view1, vec![1]);
        assert_eq!(profile.private_dims_view2, vec![2]);
        assert!(profile.off_dims.is_empty());
    }

    #[test]
    fn relevance_profile_all_shared() {
        let (mut model, _, _) = small_instance(37, KernelKind::ArdRbf);
        model.view1.kernel.weights = DVector::from_vec(vec![1.0, 0.5, 0.9]);
        model.view2.kernel.weights = DVector::from_vec(vec![0.7, 1.0, 0.6]);
        let profile = relevance_profile(&model, 0.05).unwrap();
        assert_eq!(profile.shared_dims, vec![0, 1, 2]);
        assert!(profile.private_dims_view1.is_empty());
        assert!(profile.private_dims_view2.is_empty());
    }

    #[test]
    fn relevance_profile_partitions_dimensions() {
        let (model, _, _) = small_instance(41, KernelKind::ArdRbf);
        let profile = relevance_profile(&model, 0.3).unwrap();
        let mut all: Vec<usize> = profile
            .shared_dims
            .iter()
            .chain(&profile.private_dims_view1)
            .chain(&profile.private_dims_view2)
            .chain(&profile.off_dims)
            .cloned()
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..model.q_latent_dim).collect::<Vec<_>>());
    }

    #[test]
    fn checkpoint_roundtrip_is_lossless() {
        let (mut model, y1, y2) = small_instance(43, KernelKind::ArdRbf);
        let result = train(
            &model,
            &y1,
            &y2,
            &OptimizerConfig {
                max_iters: 5,
                ..OptimizerConfig::default()
            },
        )
        .unwrap();
        model = result.model;
        let json = serde_json::to_string(&model.to_checkpoint()).unwrap();
        let ck: Checkpoint = serde_json::from_str(&json).unwrap();
        let restored = TwoViewModel::from_checkpoint(&ck).unwrap();
        assert_eq!(model.pack_params(), restored.pack_params());
        assert_eq!(model.trace.len(), restored.trace.len());
        for (a, b) in model.trace.iter().zip(restored.trace.iter()) {
            assert_eq!(a.free_energy, b.free_energy);
        }
        assert_eq!(model.anchors_view1, restored.anchors_view1);
    }
}
