//! Slot-by-slot tracking of the user-side factor `Z[i]` while the RIS-BS
//! channel stays fixed.
//!
//! Two modes share one state:
//!
//! * [`TrackerState::track_direct`] applies the cached pseudo-inverse of
//!   `F = Phi <> G` to each new slot.
//! * [`TrackerState::track_recursive`] estimates `Z[i+1]` with the current
//!   `F`, folds it into exponentially weighted correlation accumulators and
//!   re-solves for the `F` minimizing
//!   `sum_tau lambda^(i+1-tau) ||Y(2)^T[tau] - F Z[tau]||_F^2`.
//!   Every per-slot solve is `K x K`.

use rand::Rng;

use crate::channel::{complex_gaussian_matrix, PhaseProfileMatrix};
use crate::error::{Error, Result};
use crate::linalg::{c64, hadamard, pinv, solve_hermitian_ridge, ComplexMatrix};
use crate::tensor::{khatri_rao, SlotTensor};

/// Relative ridge added to the `K x K` normal equations.
pub const RIDGE_REL: f64 = 1e-10;

/// How the `F` update treats the Khatri-Rao structure of `F = Phi <> G`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FactorUpdate {
    /// Minimize over `F = Phi <> G`, i.e. over `G` with `Phi` known. Keeps the
    /// estimate identifiable up to a diagonal scaling.
    #[default]
    KhatriRao,
    /// Minimize over an arbitrary `(N_r L) x K` matrix:
    /// `F = C_yz (C_zz + eps I)^-1`.
    Unconstrained,
}

#[derive(Debug, Clone)]
pub struct TrackerState {
    phi: ComplexMatrix,
    /// `(Phi^H Phi)^T`, the Hadamard weight of the structured update.
    phi_gram_t: ComplexMatrix,
    g_hat: ComplexMatrix,
    f_hat: ComplexMatrix,
    f_pinv_cache: Option<ComplexMatrix>,
    corr_zz: ComplexMatrix,
    corr_yz: ComplexMatrix,
    forgetting: f64,
    update: FactorUpdate,
    slot: usize,
    valid_through: Option<usize>,
}

impl TrackerState {
    /// Seed the tracker with the first-slot factors, e.g. from BALS.
    /// The cross accumulator starts at `F C_zz`, as if slot 1 had been fit
    /// exactly.
    pub fn init(
        g_hat: &ComplexMatrix,
        z1_hat: &ComplexMatrix,
        phi: &PhaseProfileMatrix,
        forgetting: f64,
    ) -> Result<Self> {
        let k = phi.n_ris();
        if g_hat.ncols() != k || z1_hat.nrows() != k {
            return Err(Error::invalid(format!(
                "tracker init: G is {}x{}, Z is {}x{}, K = {k}",
                g_hat.nrows(),
                g_hat.ncols(),
                z1_hat.nrows(),
                z1_hat.ncols()
            )));
        }
        if !(forgetting > 0.0 && forgetting <= 1.0) {
            return Err(Error::invalid(format!("forgetting factor must be in (0, 1], got {forgetting}")));
        }
        let f_hat = khatri_rao(&phi.matrix, g_hat)?;
        let corr_zz = z1_hat * z1_hat.adjoint();
        let corr_yz = &f_hat * &corr_zz;
        Ok(TrackerState {
            phi_gram_t: phi.matrix.ad_mul(&phi.matrix).transpose(),
            phi: phi.matrix.clone(),
            g_hat: g_hat.clone(),
            f_hat,
            f_pinv_cache: None,
            corr_zz,
            corr_yz,
            forgetting,
            update: FactorUpdate::default(),
            slot: 1,
            valid_through: None,
        })
    }

    /// Start from a random `G` with no prior estimation: `G` is drawn
    /// i.i.d. CN(0, 1) and `Z[1]` is its least-squares fit to `first`.
    /// Returns the state and that `Z[1]`.
    pub fn random_start<R: Rng + ?Sized>(
        first: &SlotTensor,
        phi: &PhaseProfileMatrix,
        forgetting: f64,
        rng: &mut R,
    ) -> Result<(Self, ComplexMatrix)> {
        let g0 = complex_gaussian_matrix(first.n_rx(), phi.n_ris(), rng);
        let zeros = ComplexMatrix::zeros(phi.n_ris(), first.n_pilot());
        let mut state = TrackerState::init(&g0, &zeros, phi, forgetting)?;
        let z1 = state.estimate_z(first)?;
        state.corr_zz = &z1 * z1.adjoint();
        state.corr_yz = &state.f_hat * &state.corr_zz;
        Ok((state, z1))
    }

    pub fn with_update(mut self, update: FactorUpdate) -> Self {
        self.update = update;
        self
    }

    /// Mark the state as valid for slots `start ..= start + period - 1`.
    /// Tracking past the last slot fails with [`Error::StaleState`].
    pub fn with_period(mut self, start: usize, period: usize) -> Self {
        self.slot = start;
        self.valid_through = Some(start + period.max(1) - 1);
        self
    }

    pub fn slot(&self) -> usize {
        self.slot
    }

    pub fn forgetting(&self) -> f64 {
        self.forgetting
    }

    pub fn f_hat(&self) -> &ComplexMatrix {
        &self.f_hat
    }

    pub fn corr_zz(&self) -> &ComplexMatrix {
        &self.corr_zz
    }

    pub fn corr_yz(&self) -> &ComplexMatrix {
        &self.corr_yz
    }

    pub fn has_pinv_cache(&self) -> bool {
        self.f_pinv_cache.is_some()
    }

    /// Current estimate of `G` (up to diagonal scaling). In unconstrained
    /// mode each column of `F` is projected onto its known `phi_k`.
    pub fn g_estimate(&self) -> ComplexMatrix {
        match self.update {
            FactorUpdate::KhatriRao => self.g_hat.clone(),
            FactorUpdate::Unconstrained => project_g(&self.f_hat, &self.phi),
        }
    }

    /// `G_hat Z`, the ambiguity-free composite for a given `Z` estimate.
    pub fn composite(&self, z: &ComplexMatrix) -> ComplexMatrix {
        self.g_estimate() * z
    }

    fn check_tensor(&self, t: &SlotTensor) -> Result<()> {
        if t.n_rx() * t.n_profiles() != self.f_hat.nrows() || t.n_profiles() != self.phi.nrows() {
            return Err(Error::invalid(format!(
                "tensor is {}x{}x{}, tracker expects N_r L = {} with L = {}",
                t.n_rx(),
                t.n_pilot(),
                t.n_profiles(),
                self.f_hat.nrows(),
                self.phi.nrows()
            )));
        }
        Ok(())
    }

    fn advance(&mut self) -> Result<()> {
        let next = self.slot + 1;
        if let Some(last) = self.valid_through {
            if next > last {
                return Err(Error::StaleState(format!(
                    "slot {next} lies past the G period ending at slot {last}; re-initialize the tracker"
                )));
            }
        }
        self.slot = next;
        Ok(())
    }

    /// `Z = F^+ Y(2)^T` with the pseudo-inverse computed once and cached.
    pub fn track_direct(&mut self, t_next: &SlotTensor) -> Result<ComplexMatrix> {
        self.check_tensor(t_next)?;
        self.advance()?;
        if self.f_pinv_cache.is_none() {
            self.f_pinv_cache = Some(pinv(&self.f_hat)?);
        }
        let f_pinv = self.f_pinv_cache.as_ref().expect("filled above");
        Ok(f_pinv * t_next.unfold_mode2_t())
    }

    /// Least-squares `Z` for the current `F` through the `K x K` normal
    /// equations.
    fn estimate_z(&self, t: &SlotTensor) -> Result<ComplexMatrix> {
        let gram = match self.update {
            FactorUpdate::KhatriRao => hadamard(&self.phi_gram_t.transpose(), &self.g_hat.ad_mul(&self.g_hat)),
            FactorUpdate::Unconstrained => self.f_hat.ad_mul(&self.f_hat),
        };
        let rhs = self.f_hat.ad_mul(&t.unfold_mode2_t());
        solve_hermitian_ridge(&gram, &rhs, ridge(&gram))
    }

    /// One RLS step: estimate `Z[i+1]` with the current `F`, then update the
    /// accumulators and `F`. Returns the `Z[i+1]` estimate.
    pub fn track_recursive(&mut self, t_next: &SlotTensor) -> Result<ComplexMatrix> {
        self.check_tensor(t_next)?;
        self.advance()?;
        let z = self.estimate_z(t_next)?;
        let y2t = t_next.unfold_mode2_t();
        let lambda = c64(self.forgetting, 0.0);
        self.corr_zz = &self.corr_zz * lambda + &z * z.adjoint();
        self.corr_yz = &self.corr_yz * lambda + &y2t * z.adjoint();
        self.refit_f()?;
        Ok(z)
    }

    fn refit_f(&mut self) -> Result<()> {
        match self.update {
            FactorUpdate::KhatriRao => {
                let a = hadamard(&self.corr_zz, &self.phi_gram_t);
                let b = matched_projection(&self.corr_yz, &self.phi);
                let g_h = solve_hermitian_ridge(&a, &b.adjoint(), ridge(&a))?;
                self.g_hat = g_h.adjoint();
                self.f_hat = khatri_rao(&self.phi, &self.g_hat)?;
            }
            FactorUpdate::Unconstrained => {
                let f_h = solve_hermitian_ridge(&self.corr_zz, &self.corr_yz.adjoint(), ridge(&self.corr_zz))?;
                self.f_hat = f_h.adjoint();
            }
        }
        self.f_pinv_cache = None;
        Ok(())
    }
}

fn ridge(a: &ComplexMatrix) -> f64 {
    let k = a.nrows().max(1);
    let trace: f64 = a.diagonal().iter().map(|z| z.re).sum();
    RIDGE_REL * trace.max(0.0) / k as f64
}

/// `B[:, k] = sum_l conj(Phi[l, k]) C[l-th N_r block, k]` for an
/// `(N_r L) x K` matrix `C`.
fn matched_projection(c: &ComplexMatrix, phi: &ComplexMatrix) -> ComplexMatrix {
    let (l_count, k) = phi.shape();
    let n_rx = c.nrows() / l_count;
    let mut out = ComplexMatrix::zeros(n_rx, k);
    for col in 0..k {
        let src = c.column(col);
        let mut dst = out.column_mut(col);
        for l in 0..l_count {
            let w = phi[(l, col)].conj();
            for r in 0..n_rx {
                dst[r] += w * src[l * n_rx + r];
            }
        }
    }
    out
}

/// Column-wise least-squares fit of `F[:, k] ~ phi_k (x) g_k` for `g_k`.
fn project_g(f: &ComplexMatrix, phi: &ComplexMatrix) -> ComplexMatrix {
    let mut g = matched_projection(f, phi);
    for (col, mut gk) in g.column_iter_mut().enumerate() {
        let energy: f64 = phi.column(col).iter().map(|z| z.norm_sqr()).sum();
        if energy > 0.0 {
            gk /= c64(energy, 0.0);
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{frobenius_norm, ONE};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn phi_dft(l: usize, k: usize) -> PhaseProfileMatrix {
        let phases = nalgebra::DMatrix::from_fn(l, k, |p, q| -2.0 * std::f64::consts::PI * (p * q) as f64 / k as f64);
        PhaseProfileMatrix::from_phases(phases)
    }

    #[test]
    fn scalar_chain_init() {
        let phi = phi_dft(2, 1);
        let g = ComplexMatrix::from_element(2, 1, ONE);
        let z = ComplexMatrix::from_row_slice(1, 3, &[c64(1.0, 1.0), c64(2.0, 0.0), c64(0.0, -1.0)]);
        let st = TrackerState::init(&g, &z, &phi, 0.5).unwrap();
        assert!((st.corr_zz()[(0, 0)] - c64(7.0, 0.0)).norm() < 1e-14);
        assert_eq!(st.slot(), 1);
        assert!(!st.has_pinv_cache());
    }

    #[test]
    fn f_columns_are_kronecker_products() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let phi = phi_dft(3, 4);
        let g = complex_gaussian_matrix(2, 4, &mut rng);
        let z = complex_gaussian_matrix(4, 5, &mut rng);
        let st = TrackerState::init(&g, &z, &phi, 1.0).unwrap();
        for k in 0..4 {
            let kron = phi.matrix.column(k).kronecker(&g.column(k));
            assert!((st.f_hat().column(k) - kron).norm() < 1e-14);
        }
    }

    #[test]
    fn init_rejects_bad_inputs() {
        let phi = phi_dft(3, 4);
        let g = ComplexMatrix::zeros(2, 4);
        let z = ComplexMatrix::zeros(4, 5);
        assert!(TrackerState::init(&g, &z, &phi, 0.0).is_err());
        assert!(TrackerState::init(&g, &z, &phi, 1.5).is_err());
        assert!(TrackerState::init(&ComplexMatrix::zeros(2, 3), &z, &phi, 0.5).is_err());
    }

    #[test]
    fn zero_tensor_gives_zero_z() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = phi_dft(4, 3);
        let g = complex_gaussian_matrix(2, 3, &mut rng);
        let z = complex_gaussian_matrix(3, 4, &mut rng);
        let mut st = TrackerState::init(&g, &z, &phi, 0.5).unwrap();
        let zt = SlotTensor::zeros(2, 4, 4);
        let zd = st.track_direct(&zt).unwrap();
        assert_eq!(frobenius_norm(&zd), 0.0);
        assert!(st.has_pinv_cache());
    }

    #[test]
    fn stale_state_past_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let phi = phi_dft(4, 3);
        let g = complex_gaussian_matrix(2, 3, &mut rng);
        let z = complex_gaussian_matrix(3, 4, &mut rng);
        let mut st = TrackerState::init(&g, &z, &phi, 0.5).unwrap().with_period(1, 2);
        let t = SlotTensor::from_factors(&g, &z, &phi.matrix).unwrap();
        st.track_recursive(&t).unwrap();
        assert!(matches!(st.track_recursive(&t), Err(Error::StaleState(_))));
    }

    #[test]
    fn tensor_shape_checked() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let phi = phi_dft(4, 3);
        let g = complex_gaussian_matrix(2, 3, &mut rng);
        let z = complex_gaussian_matrix(3, 4, &mut rng);
        let mut st = TrackerState::init(&g, &z, &phi, 0.5).unwrap();
        assert!(st.track_recursive(&SlotTensor::zeros(3, 4, 4)).is_err());
    }

    #[test]
    fn unconstrained_projection_recovers_g() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = phi_dft(4, 4);
        let g = complex_gaussian_matrix(3, 4, &mut rng);
        let z = complex_gaussian_matrix(4, 6, &mut rng);
        let st = TrackerState::init(&g, &z, &phi, 0.5)
            .unwrap()
            .with_update(FactorUpdate::Unconstrained);
        assert!(frobenius_norm(&(st.g_estimate() - &g)) < 1e-12);
    }
}
