//! ARD kernels, their expectations under factorized Gaussian densities
//! (the psi statistics), and the latent-prior KL term.
//!
//! Everything here is a pure function of its inputs and safe to call from
//! any number of threads.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Covariance function family used by a view.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    /// Exponentiated-quadratic with one inverse squared lengthscale per
    /// latent dimension.
    #[default]
    ArdRbf,
    /// Linear kernel with one relevance weight per latent dimension.
    ArdLinear,
}

/// ARD kernel hyperparameters.
///
/// `signal_variance` is the output scale sigma_f^2; `weights[q]` is the
/// relevance of latent dimension `q` (an inverse squared lengthscale for the
/// exponentiated-quadratic kernel). A weight near zero switches the
/// dimension off for the view that owns these parameters.
#[derive(Debug, Clone)]
pub struct ArdKernelParams {
    pub kind: KernelKind,
    pub signal_variance: f64,
    pub weights: DVector<f64>,
}

impl ArdKernelParams {
    pub fn new(kind: KernelKind, signal_variance: f64, weights: DVector<f64>) -> Result<Self> {
        let params = ArdKernelParams {
            kind,
            signal_variance,
            weights,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if self.signal_variance <= 0.0 || !self.signal_variance.is_finite() {
            return Err(Error::NonPositive {
                what: "signal_variance",
            });
        }
        if self.weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::NonFinite("kernel weights (must be >= 0)"));
        }
        Ok(())
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.len()
    }
}

/// Factorized Gaussian density over an N x Q latent block: one independent
/// normal per point and dimension, with means `means[(n, q)]` and variances
/// `variances[(n, q)]`.
#[derive(Debug, Clone)]
pub struct GaussianLatent {
    pub means: DMatrix<f64>,
    pub variances: DMatrix<f64>,
}

impl GaussianLatent {
    pub fn new(means: DMatrix<f64>, variances: DMatrix<f64>) -> Result<Self> {
        let latent = GaussianLatent { means, variances };
        latent.validate()?;
        Ok(latent)
    }

    pub fn validate(&self) -> Result<()> {
        if self.means.shape() != self.variances.shape() {
            return Err(Error::ShapeMismatch {
                context: "GaussianLatent",
                expected: format!("{:?}", self.means.shape()),
                got: format!("{:?}", self.variances.shape()),
            });
        }
        if self.means.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("latent means"));
        }
        if self.variances.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
            return Err(Error::NonPositive {
                what: "latent variances",
            });
        }
        Ok(())
    }

    pub fn n_points(&self) -> usize {
        self.means.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.means.ncols()
    }

    /// The single-point density at row `n`.
    pub fn point(&self, n: usize) -> GaussianLatent {
        GaussianLatent {
            means: DMatrix::from_fn(1, self.latent_dim(), |_, q| self.means[(n, q)]),
            variances: DMatrix::from_fn(1, self.latent_dim(), |_, q| self.variances[(n, q)]),
        }
    }
}

/// Variational inducing input locations, an M x Q matrix.
#[derive(Debug, Clone)]
pub struct InducingInputs {
    pub locations: DMatrix<f64>,
}

impl InducingInputs {
    pub fn new(locations: DMatrix<f64>) -> Result<Self> {
        if locations.nrows() == 0 {
            return Err(Error::Config("need at least one inducing point".into()));
        }
        if locations.iter().any(|z| !z.is_finite()) {
            return Err(Error::NonFinite("inducing inputs"));
        }
        for i in 0..locations.nrows() {
            for j in (i + 1)..locations.nrows() {
                if (0..locations.ncols()).all(|q| locations[(i, q)] == locations[(j, q)]) {
                    return Err(Error::Config(format!(
                        "inducing rows {i} and {j} are duplicates"
                    )));
                }
            }
        }
        Ok(InducingInputs { locations })
    }

    pub fn count(&self) -> usize {
        self.locations.nrows()
    }

    pub fn latent_dim(&self) -> usize {
        self.locations.ncols()
    }
}

fn check_inputs(x: &DMatrix<f64>, q: usize, context: &'static str) -> Result<()> {
    if x.ncols() != q {
        return Err(Error::ShapeMismatch {
            context,
            expected: format!("{q} columns"),
            got: format!("{} columns", x.ncols()),
        });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(context));
    }
    Ok(())
}

/// Cross-covariance matrix: entry `[i, j] = k(x1_i, x2_j)`.
///
/// For the exponentiated-quadratic kernel this is
/// `sigma_f^2 * exp(-0.5 * sum_q w_q (x1[i,q] - x2[j,q])^2)`; for the linear
/// kernel `sigma_f^2 * sum_q w_q x1[i,q] x2[j,q]`.
pub fn kernel_matrix(
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    params: &ArdKernelParams,
) -> Result<DMatrix<f64>> {
    params.validate()?;
    let q = params.latent_dim();
    check_inputs(x1, q, "kernel_matrix x1")?;
    check_inputs(x2, q, "kernel_matrix x2")?;
    let sf2 = params.signal_variance;
    let w = &params.weights;
    let out = match params.kind {
        KernelKind::ArdRbf => DMatrix::from_fn(x1.nrows(), x2.nrows(), |i, j| {
            let mut dist = 0.0;
            for k in 0..q {
                let d = x1[(i, k)] - x2[(j, k)];
                dist += w[k] * d * d;
            }
            sf2 * (-0.5 * dist).exp()
        }),
        KernelKind::ArdLinear => DMatrix::from_fn(x1.nrows(), x2.nrows(), |i, j| {
            let mut dot = 0.0;
            for k in 0..q {
                dot += w[k] * x1[(i, k)] * x2[(j, k)];
            }
            sf2 * dot
        }),
    };
    Ok(out)
}

/// Gradients of `<upstream, kernel_matrix(x1, x2, params)>` with respect to
/// every input. When `x1` and `x2` alias the same matrix, the caller adds
/// `x1` and `x2` contributions.
#[derive(Debug, Clone)]
pub struct KernelVjp {
    pub x1: DMatrix<f64>,
    pub x2: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub signal_variance: f64,
}

pub fn kernel_matrix_vjp(
    x1: &DMatrix<f64>,
    x2: &DMatrix<f64>,
    params: &ArdKernelParams,
    upstream: &DMatrix<f64>,
) -> Result<KernelVjp> {
    let kmat = kernel_matrix(x1, x2, params)?;
    if upstream.shape() != kmat.shape() {
        return Err(Error::ShapeMismatch {
            context: "kernel_matrix_vjp upstream",
            expected: format!("{:?}", kmat.shape()),
            got: format!("{:?}", upstream.shape()),
        });
    }
    let q = params.latent_dim();
    let sf2 = params.signal_variance;
    let w = &params.weights;
    let mut gx1 = DMatrix::zeros(x1.nrows(), q);
    let mut gx2 = DMatrix::zeros(x2.nrows(), q);
    let mut gw = DVector::zeros(q);
    let mut gsf2 = 0.0;
    for i in 0..x1.nrows() {
        for j in 0..x2.nrows() {
            let g = upstream[(i, j)];
            if g == 0.0 {
                continue;
            }
            let kv = kmat[(i, j)];
            gsf2 += g * kv / sf2;
            match params.kind {
                KernelKind::ArdRbf => {
                    for k in 0..q {
                        let d = x1[(i, k)] - x2[(j, k)];
                        gx1[(i, k)] += g * kv * (-w[k] * d);
                        gx2[(j, k)] += g * kv * (w[k] * d);
                        gw[k] += g * kv * (-0.5 * d * d);
                    }
                }
                KernelKind::ArdLinear => {
                    for k in 0..q {
                        gx1[(i, k)] += g * sf2 * w[k] * x2[(j, k)];
                        gx2[(j, k)] += g * sf2 * w[k] * x1[(i, k)];
                        gw[k] += g * sf2 * x1[(i, k)] * x2[(j, k)];
                    }
                }
            }
        }
    }
    Ok(KernelVjp {
        x1: gx1,
        x2: gx2,
        weights: gw,
        signal_variance: gsf2,
    })
}

/// Kernel expectations under a factorized Gaussian density:
/// `psi0 = sum_n E[k(x_n, x_n)]`, `psi1[n, m] = E[k(x_n, z_m)]`,
/// `psi2[m, m'] = sum_n E[k(x_n, z_m) k(x_n, z_m')]`.
#[derive(Debug, Clone)]
pub struct PsiStatistics {
    pub psi0: f64,
    pub psi1: DMatrix<f64>,
    pub psi2: DMatrix<f64>,
}

pub fn psi_statistics(
    q: &GaussianLatent,
    z: &InducingInputs,
    params: &ArdKernelParams,
) -> Result<PsiStatistics> {
    q.validate()?;
    params.validate()?;
    let dim = params.latent_dim();
    if q.latent_dim() != dim || z.latent_dim() != dim {
        return Err(Error::ShapeMismatch {
            context: "psi_statistics",
            expected: format!("latent dim {dim}"),
            got: format!("q: {}, z: {}", q.latent_dim(), z.latent_dim()),
        });
    }
    let n = q.n_points();
    let m = z.count();
    let sf2 = params.signal_variance;
    let w = &params.weights;
    let mu = &q.means;
    let s = &q.variances;
    let zl = &z.locations;

    match params.kind {
        KernelKind::ArdRbf => {
            let psi0 = n as f64 * sf2;
            let psi1 = DMatrix::from_fn(n, m, |i, j| {
                let mut log_term = 0.0;
                for k in 0..dim {
                    let c = w[k] * s[(i, k)] + 1.0;
                    let d = mu[(i, k)] - zl[(j, k)];
                    log_term += -0.5 * c.ln() - 0.5 * w[k] * d * d / c;
                }
                sf2 * log_term.exp()
            });
            let mut psi2 = DMatrix::zeros(m, m);
            for a in 0..m {
                for b in a..m {
                    let mut total = 0.0;
                    for i in 0..n {
                        let mut log_term = 0.0;
                        for k in 0..dim {
                            let d2 = 2.0 * w[k] * s[(i, k)] + 1.0;
                            let delta = zl[(a, k)] - zl[(b, k)];
                            let zbar = 0.5 * (zl[(a, k)] + zl[(b, k)]);
                            let e = mu[(i, k)] - zbar;
                            log_term +=
                                -0.5 * d2.ln() - 0.25 * w[k] * delta * delta - w[k] * e * e / d2;
                        }
                        total += sf2 * sf2 * log_term.exp();
                    }
                    psi2[(a, b)] = total;
                    psi2[(b, a)] = total;
                }
            }
            Ok(PsiStatistics { psi0, psi1, psi2 })
        }
        KernelKind::ArdLinear => {
            let mut psi0 = 0.0;
            for i in 0..n {
                for k in 0..dim {
                    psi0 += w[k] * (mu[(i, k)] * mu[(i, k)] + s[(i, k)]);
                }
            }
            psi0 *= sf2;
            let psi1 = DMatrix::from_fn(n, m, |i, j| {
                let mut dot = 0.0;
                for k in 0..dim {
                    dot += w[k] * mu[(i, k)] * zl[(j, k)];
                }
                sf2 * dot
            });
            let mut psi2 = DMatrix::zeros(m, m);
            for a in 0..m {
                for b in a..m {
                    let mut total = 0.0;
                    for i in 0..n {
                        let mut pa = 0.0;
                        let mut pb = 0.0;
                        let mut svar = 0.0;
                        for k in 0..dim {
                            pa += w[k] * zl[(a, k)] * mu[(i, k)];
                            pb += w[k] * zl[(b, k)] * mu[(i, k)];
                            svar += w[k] * w[k] * zl[(a, k)] * zl[(b, k)] * s[(i, k)];
                        }
                        total += sf2 * sf2 * (pa * pb + svar);
                    }
                    psi2[(a, b)] = total;
                    psi2[(b, a)] = total;
                }
            }
            Ok(PsiStatistics { psi0, psi1, psi2 })
        }
    }
}

/// Upstream cotangents for [`psi_statistics_vjp`]: the gradient of some
/// scalar objective with respect to each psi statistic.
#[derive(Debug, Clone)]
pub struct PsiUpstream {
    pub psi0: f64,
    pub psi1: DMatrix<f64>,
    pub psi2: DMatrix<f64>,
}

/// Gradients of `g0*psi0 + <G1, psi1> + <G2, psi2>` with respect to the
/// latent density, kernel parameters, and inducing inputs.
#[derive(Debug, Clone)]
pub struct PsiVjp {
    pub means: DMatrix<f64>,
    pub variances: DMatrix<f64>,
    pub weights: DVector<f64>,
    pub signal_variance: f64,
    pub inducing: DMatrix<f64>,
}

pub fn psi_statistics_vjp(
    q: &GaussianLatent,
    z: &InducingInputs,
    params: &ArdKernelParams,
    upstream: &PsiUpstream,
) -> Result<PsiVjp> {
    let stats = psi_statistics(q, z, params)?;
    let n = q.n_points();
    let m = z.count();
    let dim = params.latent_dim();
    if upstream.psi1.shape() != (n, m) || upstream.psi2.shape() != (m, m) {
        return Err(Error::ShapeMismatch {
            context: "psi_statistics_vjp upstream",
            expected: format!("psi1 {:?}, psi2 {:?}", (n, m), (m, m)),
            got: format!(
                "psi1 {:?}, psi2 {:?}",
                upstream.psi1.shape(),
                upstream.psi2.shape()
            ),
        });
    }
    let sf2 = params.signal_variance;
    let w = &params.weights;
    let mu = &q.means;
    let s = &q.variances;
    let zl = &z.locations;

    let mut g_mu = DMatrix::zeros(n, dim);
    let mut g_s = DMatrix::zeros(n, dim);
    let mut g_w = DVector::zeros(dim);
    let mut g_sf2 = 0.0;
    let mut g_z = DMatrix::zeros(m, dim);

    match params.kind {
        KernelKind::ArdRbf => {
            // psi0 = N * sf2
            g_sf2 += upstream.psi0 * n as f64;

            for i in 0..n {
                for j in 0..m {
                    let g = upstream.psi1[(i, j)];
                    if g == 0.0 {
                        continue;
                    }
                    let p = stats.psi1[(i, j)];
                    g_sf2 += g * p / sf2;
                    for k in 0..dim {
                        let c = w[k] * s[(i, k)] + 1.0;
                        let d = mu[(i, k)] - zl[(j, k)];
                        g_mu[(i, k)] += g * p * (-w[k] * d / c);
                        g_z[(j, k)] += g * p * (w[k] * d / c);
                        g_s[(i, k)] += g * p * (0.5 * w[k] / c) * (w[k] * d * d / c - 1.0);
                        g_w[k] += g * p * (-0.5 * s[(i, k)] / c - 0.5 * d * d / (c * c));
                    }
                }
            }

            // Loop over ordered pairs so that row and column appearances of
            // each inducing point are both accumulated.
            for a in 0..m {
                for b in 0..m {
                    let g = upstream.psi2[(a, b)];
                    if g == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        let mut log_term = 0.0;
                        for k in 0..dim {
                            let d2 = 2.0 * w[k] * s[(i, k)] + 1.0;
                            let delta = zl[(a, k)] - zl[(b, k)];
                            let zbar = 0.5 * (zl[(a, k)] + zl[(b, k)]);
                            let e = mu[(i, k)] - zbar;
                            log_term +=
                                -0.5 * d2.ln() - 0.25 * w[k] * delta * delta - w[k] * e * e / d2;
                        }
                        let t = sf2 * sf2 * log_term.exp();
                        let gt = g * t;
                        g_sf2 += 2.0 * gt / sf2;
                        for k in 0..dim {
                            let d2 = 2.0 * w[k] * s[(i, k)] + 1.0;
                            let delta = zl[(a, k)] - zl[(b, k)];
                            let zbar = 0.5 * (zl[(a, k)] + zl[(b, k)]);
                            let e = mu[(i, k)] - zbar;
                            g_mu[(i, k)] += gt * (-2.0 * w[k] * e / d2);
                            g_s[(i, k)] +=
                                gt * (-w[k] / d2 + 2.0 * w[k] * w[k] * e * e / (d2 * d2));
                            g_w[k] +=
                                gt * (-s[(i, k)] / d2 - 0.25 * delta * delta - e * e / (d2 * d2));
                            g_z[(a, k)] += gt * (-0.5 * w[k] * delta + w[k] * e / d2);
                            g_z[(b, k)] += gt * (0.5 * w[k] * delta + w[k] * e / d2);
                        }
                    }
                }
            }
        }
        KernelKind::ArdLinear => {
            // psi0 = sf2 * sum_{n,q} w_q (mu^2 + s)
            if upstream.psi0 != 0.0 {
                g_sf2 += upstream.psi0 * stats.psi0 / sf2;
                for i in 0..n {
                    for k in 0..dim {
                        g_mu[(i, k)] += upstream.psi0 * sf2 * w[k] * 2.0 * mu[(i, k)];
                        g_s[(i, k)] += upstream.psi0 * sf2 * w[k];
                        g_w[k] += upstream.psi0 * sf2 * (mu[(i, k)] * mu[(i, k)] + s[(i, k)]);
                    }
                }
            }

            for i in 0..n {
                for j in 0..m {
                    let g = upstream.psi1[(i, j)];
                    if g == 0.0 {
                        continue;
                    }
                    g_sf2 += g * stats.psi1[(i, j)] / sf2;
                    for k in 0..dim {
                        g_mu[(i, k)] += g * sf2 * w[k] * zl[(j, k)];
                        g_z[(j, k)] += g * sf2 * w[k] * mu[(i, k)];
                        g_w[k] += g * sf2 * mu[(i, k)] * zl[(j, k)];
                    }
                }
            }

            for a in 0..m {
                for b in 0..m {
                    let g = upstream.psi2[(a, b)];
                    if g == 0.0 {
                        continue;
                    }
                    for i in 0..n {
                        let mut pa = 0.0;
                        let mut pb = 0.0;
                        let mut svar = 0.0;
                        for k in 0..dim {
                            pa += w[k] * zl[(a, k)] * mu[(i, k)];
                            pb += w[k] * zl[(b, k)] * mu[(i, k)];
                            svar += w[k] * w[k] * zl[(a, k)] * zl[(b, k)] * s[(i, k)];
                        }
                        let sf4 = sf2 * sf2;
                        g_sf2 += g * 2.0 * sf2 * (pa * pb + svar);
                        for k in 0..dim {
                            g_mu[(i, k)] +=
                                g * sf4 * (w[k] * zl[(a, k)] * pb + pa * w[k] * zl[(b, k)]);
                            g_s[(i, k)] += g * sf4 * w[k] * w[k] * zl[(a, k)] * zl[(b, k)];
                            g_w[k] += g
                                * sf4
                                * (zl[(a, k)] * mu[(i, k)] * pb
                                    + pa * zl[(b, k)] * mu[(i, k)]
                                    + 2.0 * w[k] * zl[(a, k)] * zl[(b, k)] * s[(i, k)]);
                            g_z[(a, k)] += g
                                * sf4
                                * (w[k] * mu[(i, k)] * pb + w[k] * w[k] * zl[(b, k)] * s[(i, k)]);
                            g_z[(b, k)] += g
                                * sf4
                                * (pa * w[k] * mu[(i, k)] + w[k] * w[k] * zl[(a, k)] * s[(i, k)]);
                        }
                    }
                }
            }
        }
    }

    Ok(PsiVjp {
        means: g_mu,
        variances: g_s,
        weights: g_w,
        signal_variance: g_sf2,
        inducing: g_z,
    })
}

/// KL divergence from the factorized Gaussian `q` to the unit Gaussian prior:
/// `0.5 * sum_{n,q} (mu^2 + s - ln s - 1)`.
pub fn kl_to_prior(q: &GaussianLatent) -> Result<f64> {
    q.validate()?;
    let mut total = 0.0;
    for i in 0..q.n_points() {
        for k in 0..q.latent_dim() {
            let m = q.means[(i, k)];
            let s = q.variances[(i, k)];
            total += m * m + s - s.ln() - 1.0;
        }
    }
    Ok(0.5 * total)
}

/// Gradient of [`kl_to_prior`] with respect to means and variances.
pub fn kl_to_prior_grad(q: &GaussianLatent) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    q.validate()?;
    let g_mu = q.means.clone();
    let g_s = q.variances.map(|s| 0.5 * (1.0 - 1.0 / s));
    Ok((g_mu, g_s))
}
