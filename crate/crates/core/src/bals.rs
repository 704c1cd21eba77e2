//! Initial factor estimation with the phase-profile factor known.
//!
//! Bilinear ALS alternates two exact least-squares solves,
//!
//! ```text
//! G <- Y(1) [ (Phi <> Z^T)^T ]^+
//! Z <- (Phi <> G)^+ Y(2)^T
//! ```
//!
//! so the fit residual can never increase. The recovered factors carry a
//! column-wise diagonal ambiguity `(G D, D^-1 Z)`; products such as
//! `G diag(phi) Z` are unaffected, and [`resolve_scaling`] removes it when a
//! normalization is needed.

use rand::Rng;

use crate::channel::{complex_gaussian_matrix, PhaseProfileMatrix, SystemConfig};
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, pseudo_inverse_ranked, default_rank_tol, ComplexMatrix, ZERO};
use crate::tensor::{khatri_rao, SlotTensor};

/// Sufficient uniqueness conditions for the PARAFAC model with known `Phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identifiability {
    /// `L >= K`: `Phi` has full column rank.
    FullColumnRank,
    /// `L + S - 2 >= K`: generically unique.
    GenericUnique,
    /// Neither sufficient condition holds. Estimation may still work.
    NotGuaranteed,
}

impl Identifiability {
    pub fn as_str(self) -> &'static str {
        match self {
            Identifiability::FullColumnRank => "full_column_rank",
            Identifiability::GenericUnique => "generic_unique",
            Identifiability::NotGuaranteed => "not_guaranteed",
        }
    }
}

impl std::fmt::Display for Identifiability {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

pub fn check_identifiability(cfg: &SystemConfig) -> Identifiability {
    identifiability(cfg.n_profiles, cfg.pilot_len, cfg.n_ris)
}

pub fn identifiability(n_profiles: usize, pilot_len: usize, n_ris: usize) -> Identifiability {
    if n_profiles >= n_ris {
        Identifiability::FullColumnRank
    } else if n_profiles + pilot_len >= n_ris + 2 {
        Identifiability::GenericUnique
    } else {
        Identifiability::NotGuaranteed
    }
}

#[derive(Debug, Clone)]
pub enum BalsInit {
    /// `Z` drawn i.i.d. CN(0, 1).
    Random,
    /// Start from the given `(G, Z)`; the first half-step updates `G` from `Z`.
    Provided { g: ComplexMatrix, z: ComplexMatrix },
    /// Start from the LS Khatri-Rao factorization of `Phi^+ Y(3)`.
    /// Only meaningful when `L >= K`.
    LsKrf,
}

#[derive(Debug, Clone)]
pub struct BalsOptions {
    pub max_iters: usize,
    /// Stop once the relative change of the fit residual drops below this.
    pub rel_tol: f64,
    pub init: BalsInit,
}

impl Default for BalsOptions {
    fn default() -> Self {
        BalsOptions {
            max_iters: 200,
            rel_tol: 1e-6,
            init: BalsInit::Random,
        }
    }
}

impl BalsOptions {
    fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("BALS max_iters must be at least 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(Error::invalid("BALS rel_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FactorEstimate {
    /// `N_r x K`.
    pub g_hat: ComplexMatrix,
    /// `K x S`.
    pub z_hat: ComplexMatrix,
    /// Fit residual `||Y(1) - G (Phi <> Z^T)^T||_F` after each iteration.
    pub residual_history: Vec<f64>,
    pub iters_used: usize,
    pub converged: bool,
}

impl FactorEstimate {
    /// `G Z`, invariant to the diagonal ambiguity.
    pub fn composite(&self) -> ComplexMatrix {
        &self.g_hat * &self.z_hat
    }
}

/// Residual below this fraction of `||Y||_F` counts as an exact fit.
const EXACT_FIT: f64 = 1e-13;

pub fn bals<R: Rng + ?Sized>(
    t: &SlotTensor,
    phi: &PhaseProfileMatrix,
    opts: &BalsOptions,
    rng: &mut R,
) -> Result<FactorEstimate> {
    opts.validate()?;
    let k = phi.n_ris();
    if phi.n_profiles() != t.n_profiles() {
        return Err(Error::invalid(format!(
            "Phi has {} profiles but the tensor has {} slices",
            phi.n_profiles(),
            t.n_profiles()
        )));
    }
    let (n_rx, s) = (t.n_rx(), t.n_pilot());
    let y1 = t.unfold_mode1();
    let y2t = t.unfold_mode2_t();
    let y_norm = frobenius_norm(&y1);

    let mut z_hat = match &opts.init {
        BalsInit::Random => complex_gaussian_matrix(k, s, rng),
        BalsInit::Provided { g, z } => {
            if g.shape() != (n_rx, k) || z.shape() != (k, s) {
                return Err(Error::invalid(format!(
                    "provided init is G {}x{}, Z {}x{}; expected {n_rx}x{k} and {k}x{s}",
                    g.nrows(),
                    g.ncols(),
                    z.nrows(),
                    z.ncols()
                )));
            }
            z.clone()
        }
        BalsInit::LsKrf => ls_krf_from_tensor(t, phi)?.z_t.transpose(),
    };
    let mut g_hat = ComplexMatrix::zeros(n_rx, k);
    let mut history: Vec<f64> = Vec::new();
    let mut converged = false;

    for iter in 0..opts.max_iters {
        // G-step: G = Y(1) [(Phi <> Z^T)^T]^+ = Y(1) ((Phi <> Z^T)^+)^T.
        let b = khatri_rao(&phi.matrix, &z_hat.transpose())?;
        let (b_pinv, rank_b) = pseudo_inverse_ranked(&b, default_rank_tol(b.nrows(), b.ncols()))?;
        if rank_b < k {
            log::warn!("BALS iteration {iter}: Phi <> Z^T has rank {rank_b} < K = {k}");
        }
        g_hat = &y1 * b_pinv.transpose();

        // Z-step: Z = (Phi <> G)^+ Y(2)^T.
        let f = khatri_rao(&phi.matrix, &g_hat)?;
        let (f_pinv, rank_f) = pseudo_inverse_ranked(&f, default_rank_tol(f.nrows(), f.ncols()))?;
        if rank_f < k {
            log::warn!("BALS iteration {iter}: Phi <> G has rank {rank_f} < K = {k}");
        }
        z_hat = &f_pinv * &y2t;

        let residual = frobenius_norm(&(&y2t - &f * &z_hat));
        if !residual.is_finite() {
            return Err(Error::Divergence {
                message: format!("BALS residual became non-finite at iteration {}", iter + 1),
                last_stable: None,
            });
        }
        let prev = history.last().copied();
        history.push(residual);
        if residual <= EXACT_FIT * y_norm {
            converged = true;
            break;
        }
        if let Some(prev) = prev {
            if prev > 0.0 && (prev - residual).abs() / prev < opts.rel_tol {
                converged = true;
                break;
            }
        }
    }

    Ok(FactorEstimate {
        g_hat,
        z_hat,
        iters_used: history.len(),
        residual_history: history,
        converged,
    })
}

/// Columnwise rank-1 factors of a Khatri-Rao product estimate.
#[derive(Debug, Clone)]
pub struct LsKrfResult {
    /// `N_r x K`.
    pub g: ComplexMatrix,
    /// `S x K`, i.e. `Z^T`.
    pub z_t: ComplexMatrix,
    /// Columns that were identically zero and came back as zero factors.
    pub zero_columns: Vec<usize>,
}

/// Least-squares Khatri-Rao factorization of an `(S N_r) x K` estimate of
/// `Z^T <> G`: each column is reshaped (column-major) into the `N_r x S`
/// matrix `g_k z_k^T` and replaced by its dominant singular triplet.
pub fn ls_krf(kr_estimate: &ComplexMatrix, n_rx: usize) -> Result<LsKrfResult> {
    let (rows, k) = kr_estimate.shape();
    if n_rx == 0 || rows % n_rx != 0 {
        return Err(Error::invalid(format!(
            "ls_krf: {rows} rows is not a multiple of N_r = {n_rx}"
        )));
    }
    let s = rows / n_rx;
    let mut g = ComplexMatrix::zeros(n_rx, k);
    let mut z_t = ComplexMatrix::zeros(s, k);
    let mut zero_columns = Vec::new();
    for col in 0..k {
        let block = ComplexMatrix::from_column_slice(n_rx, s, kr_estimate.column(col).as_slice());
        if block.iter().all(|z| *z == ZERO) {
            log::warn!("ls_krf: column {col} is zero");
            zero_columns.push(col);
            continue;
        }
        let svd = crate::linalg::thin_svd(&block)?;
        let root = svd.s[0].sqrt();
        // block ~ sigma u v^H = (root u)(root conj(v))^T
        g.set_column(col, &(svd.u.column(0) * crate::linalg::c64(root, 0.0)));
        z_t.set_column(col, &(svd.v.column(0).map(|z| z.conj()) * crate::linalg::c64(root, 0.0)));
    }
    Ok(LsKrfResult { g, z_t, zero_columns })
}

/// LS-KRF applied to `(Phi^+ Y(3))^T`, the estimate of `Z^T <> G`.
pub fn ls_krf_from_tensor(t: &SlotTensor, phi: &PhaseProfileMatrix) -> Result<LsKrfResult> {
    if phi.n_profiles() != t.n_profiles() {
        return Err(Error::invalid("Phi and tensor disagree on L"));
    }
    let phi_pinv = crate::linalg::pinv(&phi.matrix)?;
    let kr = (phi_pinv * t.unfold_mode3()).transpose();
    ls_krf(&kr, t.n_rx())
}

/// Remove the column-wise scaling ambiguity of `(G, Z)`.
///
/// Without `g_true` each column of `G` is scaled to unit norm with its first
/// nonzero entry real and positive. With `g_true` (simulation only) the
/// diagonal `D` minimizing `||G_true D - G_hat||_F` is divided out of
/// `G_hat` and multiplied into the rows of `Z_hat`. The product `G Z` is
/// unchanged in both modes.
pub fn resolve_scaling(
    g_hat: &ComplexMatrix,
    z_hat: &ComplexMatrix,
    g_true: Option<&ComplexMatrix>,
) -> Result<(ComplexMatrix, ComplexMatrix)> {
    let k = g_hat.ncols();
    if z_hat.nrows() != k {
        return Err(Error::invalid(format!(
            "resolve_scaling: G has {k} columns but Z has {} rows",
            z_hat.nrows()
        )));
    }
    if let Some(gt) = g_true {
        if gt.shape() != g_hat.shape() {
            return Err(Error::invalid("resolve_scaling: G_true shape differs from G_hat"));
        }
    }
    let mut g_norm = g_hat.clone();
    let mut z_norm = z_hat.clone();
    for col in 0..k {
        let gk = g_hat.column(col);
        let norm = gk.norm();
        if norm == 0.0 {
            return Err(Error::AmbiguityUnresolvable { column: col });
        }
        let d = match g_true {
            None => {
                let first = gk.iter().find(|z| **z != ZERO).expect("nonzero column");
                first / first.norm() * norm
            }
            Some(gt) => {
                let tk = gt.column(col);
                let energy = tk.norm_squared();
                let d = tk.dotc(&gk) / energy;
                if energy == 0.0 || d == ZERO || !d.is_finite() {
                    return Err(Error::AmbiguityUnresolvable { column: col });
                }
                d
            }
        };
        let inv = d.inv();
        for v in g_norm.column_mut(col).iter_mut() {
            *v *= inv;
        }
        for v in z_norm.row_mut(col).iter_mut() {
            *v *= d;
        }
    }
    Ok((g_norm, z_norm))
}
