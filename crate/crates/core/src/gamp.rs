//! Sparse recovery of the user channels from the tracked `Z = H X`.
//!
//! In the angular domain `H_a = H^T U` (with `U` the normalized DFT) each
//! user's channel concentrates in a few bins, and `Z^T U = X^T H_a`. Each
//! column of `H_a` is then estimated independently with sum-product GAMP
//! under a Bernoulli-Gaussian prior and an AWGN output channel.

use crate::channel::{PilotMatrix, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, frobenius_norm_sq, ComplexMatrix, ComplexVector};

#[derive(Debug, Clone, PartialEq)]
pub struct GampOptions {
    /// Iteration cap `T`.
    pub max_iters: usize,
    /// Stop once `||x_t - x_{t-1}|| / ||x_t||` falls below this.
    pub tol: f64,
    /// Weight of the new iterate, in (0, 1]; 1 disables damping.
    pub damping: f64,
    /// Bernoulli activity probability `rho`.
    pub prior_sparsity: f64,
    /// Variance of the active (Gaussian) component.
    pub prior_var: f64,
    /// AWGN variance of the observations.
    pub noise_var: f64,
    /// EM-update `rho`, the active variance and the noise variance each
    /// iteration. When set, the variances are initialized from the data and
    /// the values above only seed `rho`.
    pub learn_hyperparams: bool,
}

impl Default for GampOptions {
    fn default() -> Self {
        GampOptions {
            max_iters: 50,
            tol: 1e-8,
            damping: 0.9,
            prior_sparsity: 0.1,
            prior_var: 1.0,
            noise_var: 1e-2,
            learn_hyperparams: true,
        }
    }
}

impl GampOptions {
    /// Defaults for a scenario: `rho` starts at three times the fraction of
    /// active paths, to absorb leakage between DFT bins.
    pub fn for_config(cfg: &SystemConfig) -> Self {
        let paths: usize = cfg.n_paths_user.iter().sum();
        let rho = (3.0 * paths as f64 / (cfg.n_users * cfg.n_ris) as f64).min(1.0);
        GampOptions {
            prior_sparsity: rho,
            ..GampOptions::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("GAMP max_iters must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::invalid("GAMP tol must be positive"));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::invalid("GAMP damping must lie in (0, 1]"));
        }
        if !(self.prior_sparsity > 0.0 && self.prior_sparsity <= 1.0) {
            return Err(Error::invalid("GAMP prior_sparsity must lie in (0, 1]"));
        }
        if !(self.prior_var > 0.0) || !(self.noise_var >= 0.0) {
            return Err(Error::invalid("GAMP variances must be positive"));
        }
        Ok(())
    }
}

/// `H_a = H^T U`.
pub fn to_angular(h: &ComplexMatrix, u: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_transform(u, h.nrows())?;
    Ok(h.transpose() * u)
}

/// Exact inverse of [`to_angular`] for unitary `U`: `H = (H_a U^H)^T`.
pub fn from_angular(h_a: &ComplexMatrix, u: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_transform(u, h_a.ncols())?;
    Ok((h_a * u.adjoint()).transpose())
}

fn check_transform(u: &ComplexMatrix, k: usize) -> Result<()> {
    if !u.is_square() {
        return Err(Error::invalid(format!(
            "angular transform must be square, got {}x{}",
            u.nrows(),
            u.ncols()
        )));
    }
    if u.nrows() != k {
        return Err(Error::invalid(format!(
            "angular transform is {0}x{0} but the channel has K = {k}",
            u.nrows()
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDiagnostics {
    pub iters: usize,
    pub converged: bool,
    /// `||b - A x||` at exit.
    pub residual: f64,
    /// Final EM estimates (or the fixed values when learning is off).
    pub prior_sparsity: f64,
    pub prior_var: f64,
    pub noise_var: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct GampDiagnostics {
    pub columns: Vec<ColumnDiagnostics>,
}

impl GampDiagnostics {
    pub fn max_iters_used(&self) -> usize {
        self.columns.iter().map(|c| c.iters).max().unwrap_or(0)
    }
}

/// Estimates whose norm exceeds this multiple of the input scale count as
/// diverged.
const DIVERGENCE_FACTOR: f64 = 1e6;
const VAR_FLOOR: f64 = 1e-300;

/// Solve `b[:, k] = A x_k + w` for every column `k` with GAMP.
///
/// `a` is `S x M` and `b` is `S x K`; the result is `M x K`.
pub fn gamp_solve(
    a: &ComplexMatrix,
    b: &ComplexMatrix,
    opts: &GampOptions,
) -> Result<(ComplexMatrix, GampDiagnostics)> {
    opts.validate()?;
    if a.nrows() != b.nrows() {
        return Err(Error::invalid(format!(
            "gamp_solve: A has {} rows but b has {}",
            a.nrows(),
            b.nrows()
        )));
    }
    if !crate::linalg::all_finite(a) || !crate::linalg::all_finite(b) {
        return Err(Error::invalid("gamp_solve: non-finite input"));
    }
    let solver = ColumnSolver::new(a);
    let mut x = ComplexMatrix::zeros(a.ncols(), b.ncols());
    let mut diag = GampDiagnostics::default();
    for k in 0..b.ncols() {
        let y: ComplexVector = b.column(k).into_owned();
        match solver.solve(&y, opts) {
            Ok((xk, d)) => {
                x.set_column(k, &xk);
                diag.columns.push(d);
            }
            Err(ColumnFailure { message, last_stable }) => {
                x.set_column(k, &last_stable);
                return Err(Error::Divergence {
                    message: format!("GAMP column {k}: {message}"),
                    last_stable: Some(Box::new(x)),
                });
            }
        }
    }
    Ok((x, diag))
}

struct ColumnFailure {
    message: String,
    last_stable: ComplexVector,
}

struct ColumnSolver<'a> {
    a: &'a ComplexMatrix,
    /// `|A_ij|^2`, real.
    a2: nalgebra::DMatrix<f64>,
    a_fro_sq: f64,
}

/// Posterior of one coefficient under the Bernoulli-Gaussian prior.
struct Posterior {
    mean: num_complex::Complex64,
    var: f64,
    /// Probability the coefficient is active.
    active: f64,
    /// Conditional mean and variance given active.
    cond_mean: num_complex::Complex64,
    cond_var: f64,
}

fn bg_posterior(r: num_complex::Complex64, nu_r: f64, rho: f64, sigma2: f64) -> Posterior {
    let total = sigma2 + nu_r;
    let cond_mean = r * (sigma2 / total);
    let cond_var = sigma2 * nu_r / total;
    let active = if rho >= 1.0 {
        1.0
    } else {
        let log_ratio = (rho / (1.0 - rho)).ln() + (nu_r / total).ln() + r.norm_sqr() * (1.0 / nu_r - 1.0 / total);
        if log_ratio > 0.0 {
            1.0 / (1.0 + (-log_ratio).exp())
        } else {
            let e = log_ratio.exp();
            e / (1.0 + e)
        }
    };
    let mean = cond_mean * active;
    let var = (active * (cond_var + cond_mean.norm_sqr()) - mean.norm_sqr()).max(0.0);
    Posterior {
        mean,
        var,
        active,
        cond_mean,
        cond_var,
    }
}

impl<'a> ColumnSolver<'a> {
    fn new(a: &'a ComplexMatrix) -> Self {
        let a2 = a.map(|z| z.norm_sqr());
        ColumnSolver {
            a,
            a_fro_sq: a2.sum(),
            a2,
        }
    }

    fn solve(&self, y: &ComplexVector, opts: &GampOptions) -> std::result::Result<(ComplexVector, ColumnDiagnostics), ColumnFailure> {
        let (s, m) = self.a.shape();
        let y_energy = y.norm_squared();
        let mut rho = opts.prior_sparsity;
        let (mut sigma2, mut noise) = if opts.learn_hyperparams {
            // Start at 20 dB SNR, attributing the rest of the energy to the prior.
            let noise = (y_energy / (101.0 * s as f64)).max(VAR_FLOOR);
            let sig = ((y_energy - s as f64 * noise) / (self.a_fro_sq * rho)).max(VAR_FLOOR);
            (sig, noise)
        } else {
            (opts.prior_var, opts.noise_var)
        };
        if y_energy == 0.0 {
            // Zero-mean prior, zero observations: the posterior mean is zero.
            return Ok((
                ComplexVector::zeros(m),
                ColumnDiagnostics {
                    iters: 0,
                    converged: true,
                    residual: 0.0,
                    prior_sparsity: rho,
                    prior_var: sigma2,
                    noise_var: noise,
                },
            ));
        }
        let scale = y.norm() / (self.a_fro_sq / m as f64).sqrt().max(VAR_FLOOR);
        let beta = opts.damping;

        let mut x_hat = ComplexVector::zeros(m);
        let mut nu_x = nalgebra::DVector::<f64>::from_element(m, rho * sigma2);
        let mut s_hat = ComplexVector::zeros(s);
        let mut nu_s = nalgebra::DVector::<f64>::zeros(s);
        let mut iters = 0;
        let mut converged = false;

        for t in 0..opts.max_iters {
            iters = t + 1;
            // Output linear step.
            let nu_p = (&self.a2 * &nu_x).map(|v| v.max(VAR_FLOOR));
            let mut p = self.a * &x_hat;
            for i in 0..s {
                p[i] -= s_hat[i] * nu_p[i];
            }
            // AWGN output denoiser.
            let mut s_new = ComplexVector::zeros(s);
            let mut nu_s_new = nalgebra::DVector::<f64>::zeros(s);
            let mut z_err = 0.0;
            for i in 0..s {
                let denom = nu_p[i] + noise.max(VAR_FLOOR);
                s_new[i] = (y[i] - p[i]) / denom;
                nu_s_new[i] = 1.0 / denom;
                // Posterior of the noiseless output, for the noise EM step.
                let z_hat = (p[i] * noise + y[i] * nu_p[i]) / denom;
                let nu_z = nu_p[i] * noise / denom;
                z_err += (y[i] - z_hat).norm_sqr() + nu_z;
            }
            if t == 0 {
                s_hat = s_new;
                nu_s = nu_s_new;
            } else {
                s_hat = &s_new * crate::linalg::c64(beta, 0.0) + &s_hat * crate::linalg::c64(1.0 - beta, 0.0);
                nu_s = &nu_s_new * beta + &nu_s * (1.0 - beta);
            }
            // Input linear step.
            let nu_r = self.a2.tr_mul(&nu_s).map(|v| 1.0 / v.max(VAR_FLOOR));
            let back = self.a.ad_mul(&s_hat);
            // Bernoulli-Gaussian input denoiser.
            let mut x_new = ComplexVector::zeros(m);
            let mut nu_x_new = nalgebra::DVector::<f64>::zeros(m);
            let (mut sum_pi, mut sum_pi_energy) = (0.0, 0.0);
            for j in 0..m {
                let r = x_hat[j] + back[j] * nu_r[j];
                let post = bg_posterior(r, nu_r[j], rho, sigma2);
                x_new[j] = post.mean;
                nu_x_new[j] = post.var;
                sum_pi += post.active;
                sum_pi_energy += post.active * (post.cond_mean.norm_sqr() + post.cond_var);
            }
            let x_prev = x_hat.clone();
            x_hat = &x_new * crate::linalg::c64(beta, 0.0) + &x_hat * crate::linalg::c64(1.0 - beta, 0.0);
            nu_x = &nu_x_new * beta + &nu_x * (1.0 - beta);

            if !x_hat.iter().all(|z| z.is_finite()) || x_hat.norm() > DIVERGENCE_FACTOR * scale {
                return Err(ColumnFailure {
                    message: format!("estimate left the stable region at iteration {iters}"),
                    last_stable: x_prev,
                });
            }

            if opts.learn_hyperparams {
                rho = (sum_pi / m as f64).clamp(1e-6, 1.0);
                if sum_pi > 0.0 {
                    sigma2 = (sum_pi_energy / sum_pi).max(VAR_FLOOR);
                }
                noise = (z_err / s as f64).max(VAR_FLOOR);
            }

            let change = (&x_hat - &x_prev).norm();
            let size = x_hat.norm();
            if size == 0.0 || change <= opts.tol * size {
                converged = true;
                break;
            }
        }
        let residual = (y - self.a * &x_hat).norm();
        Ok((
            x_hat,
            ColumnDiagnostics {
                iters,
                converged,
                residual,
                prior_sparsity: rho,
                prior_var: sigma2,
                noise_var: noise,
            },
        ))
    }
}

/// Recover `H` (`K x M`) from `Z_hat = H X` via GAMP in the angular domain.
pub fn recover_h(z_hat: &ComplexMatrix, x: &PilotMatrix, opts: &GampOptions) -> Result<ComplexMatrix> {
    recover_h_with_diagnostics(z_hat, x, opts).map(|(h, _)| h)
}

pub fn recover_h_with_diagnostics(
    z_hat: &ComplexMatrix,
    x: &PilotMatrix,
    opts: &GampOptions,
) -> Result<(ComplexMatrix, GampDiagnostics)> {
    if z_hat.ncols() != x.len() {
        return Err(Error::invalid(format!(
            "recover_h: Z has {} columns but pilots have length {}",
            z_hat.ncols(),
            x.len()
        )));
    }
    let u = crate::linalg::dft_matrix(z_hat.nrows(), true)?;
    let b = z_hat.transpose() * &u;
    let a = x.matrix.transpose();
    let (h_a, diag) = gamp_solve(&a, &b, opts)?;
    Ok((from_angular(&h_a, &u)?, diag))
}

/// `H = Z X^H`, valid for orthonormal pilot rows (`S >= M`).
pub fn ls_orthogonal_baseline(z_hat: &ComplexMatrix, x: &PilotMatrix) -> Result<ComplexMatrix> {
    if x.len() < x.n_users() {
        return Err(Error::invalid(format!(
            "orthogonal pilots need S >= M (S = {}, M = {})",
            x.len(),
            x.n_users()
        )));
    }
    let defect = x.orthonormality_defect();
    if defect > 1e-10 {
        return Err(Error::invalid(format!("pilot rows are not orthonormal (defect {defect:.3e})")));
    }
    if z_hat.ncols() != x.len() {
        return Err(Error::invalid("ls_orthogonal_baseline: Z and X disagree on S"));
    }
    Ok(z_hat * x.matrix.adjoint())
}

/// Fraction of angular entries above `rel` times their column maximum,
/// averaged over the columns `h_m` of `H`.
pub fn angular_compressibility(h: &ComplexMatrix, rel: f64) -> Result<f64> {
    let u = crate::linalg::dft_matrix(h.nrows(), true)?;
    let h_a = to_angular(h, &u)?;
    let mut total = 0.0;
    for row in h_a.row_iter() {
        let max = row.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let count = row.iter().filter(|z| z.norm() > rel * max).count();
        total += count as f64 / row.len() as f64;
    }
    Ok(total / h_a.nrows() as f64)
}

/// Relative Frobenius error, used by tests and diagnostics.
pub fn relative_error(estimate: &ComplexMatrix, truth: &ComplexMatrix) -> f64 {
    let t = frobenius_norm(truth);
    if t == 0.0 {
        frobenius_norm(estimate)
    } else {
        (frobenius_norm_sq(&(estimate - truth))).sqrt() / t
    }
}
