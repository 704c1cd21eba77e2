//! Geometric channel synthesis and per-slot observation generation.
//!
//! Both arrays are uniform linear arrays; each channel is a sum of
//! steering-vector outer products with complex Gaussian path gains and
//! uniformly drawn directional cosines in `[-0.5, 0.5)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dft_block, ComplexMatrix, ComplexVector};
use crate::tensor::SlotTensor;

/// Scenario dimensions and algorithm hyperparameters.
///
/// Serialized as a flat JSON object with exactly these field names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    /// Base-station antennas (N_r).
    pub n_rx: usize,
    /// RIS elements (K).
    pub n_ris: usize,
    /// Single-antenna users (M).
    pub n_users: usize,
    /// Pilot sequence length (S).
    pub pilot_len: usize,
    /// RIS phase profiles per slot (L).
    pub n_profiles: usize,
    /// Coherence period of the RIS-BS channel in slots (I).
    pub n_slots: usize,
    pub snr_db: f64,
    /// RLS forgetting factor in (0, 1].
    pub forgetting: f64,
    /// Paths of the RIS-BS channel (P).
    pub n_paths_g: usize,
    /// Paths per user (J_m), one entry per user.
    pub n_paths_user: Vec<usize>,
    pub rng_seed: u64,
}

impl SystemConfig {
    /// Paper-scale scenario: 16 BS antennas, 64 RIS elements, 20 users with
    /// 4 paths each, forgetting factor 0.5.
    pub fn reference() -> Self {
        SystemConfig {
            n_rx: 16,
            n_ris: 64,
            n_users: 20,
            pilot_len: 20,
            n_profiles: 64,
            n_slots: 100,
            snr_db: 10.0,
            forgetting: 0.5,
            n_paths_g: 4,
            n_paths_user: vec![4; 20],
            rng_seed: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_rx", self.n_rx),
            ("n_ris", self.n_ris),
            ("n_users", self.n_users),
            ("pilot_len", self.pilot_len),
            ("n_profiles", self.n_profiles),
            ("n_slots", self.n_slots),
            ("n_paths_g", self.n_paths_g),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err(Error::Config(format!(
                "forgetting must lie in (0, 1], got {}",
                self.forgetting
            )));
        }
        if self.n_paths_user.len() != self.n_users {
            return Err(Error::Config(format!(
                "n_paths_user has {} entries for {} users",
                self.n_paths_user.len(),
                self.n_users
            )));
        }
        if self.n_paths_user.iter().any(|&j| j == 0) {
            return Err(Error::Config("every user needs at least one path".into()));
        }
        if !self.snr_db.is_finite() {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SystemConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("invalid SystemConfig JSON: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Draw from the standard circular complex Gaussian CN(0, 1).
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn complex_gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    // Fill column by column so the draw order is the storage order.
    let data: Vec<Complex64> = (0..rows * cols).map(|_| complex_gaussian(rng)).collect();
    ComplexMatrix::from_vec(rows, cols, data)
}

fn dir_cos<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random_range(-0.5..0.5)
}

/// ULA steering vector, entry `u` equal to `exp(-j 2 pi u dir_cos)`.
pub fn steering_vector(n_elems: usize, dir_cos: f64) -> ComplexVector {
    ComplexVector::from_fn(n_elems, |u, _| {
        // Wrap the phase so entry 0 is exactly 1 and large u stays accurate.
        let cycles = (u as f64 * dir_cos).rem_euclid(1.0);
        Complex64::from_polar(1.0, -2.0 * PI * cycles)
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathParamsG {
    pub gains: Vec<Complex64>,
    pub dir_cos_rx: Vec<f64>,
    pub dir_cos_ris: Vec<f64>,
}

impl PathParamsG {
    pub fn draw<R: Rng + ?Sized>(n_paths: usize, rng: &mut R) -> Self {
        let mut p = PathParamsG {
            gains: Vec::with_capacity(n_paths),
            dir_cos_rx: Vec::with_capacity(n_paths),
            dir_cos_ris: Vec::with_capacity(n_paths),
        };
        for _ in 0..n_paths {
            p.gains.push(complex_gaussian(rng));
            p.dir_cos_rx.push(dir_cos(rng));
            p.dir_cos_ris.push(dir_cos(rng));
        }
        p
    }

    /// `G = sum_p alpha_p a_Nr(psi_p) a_K(omega_p)^H`.
    pub fn build(&self, n_rx: usize, n_ris: usize) -> ComplexMatrix {
        let mut g = ComplexMatrix::zeros(n_rx, n_ris);
        for ((&alpha, &psi), &omega) in self.gains.iter().zip(&self.dir_cos_rx).zip(&self.dir_cos_ris) {
            let a_rx = steering_vector(n_rx, psi);
            let a_ris = steering_vector(n_ris, omega);
            g.gerc(alpha, &a_rx, &a_ris, Complex64::new(1.0, 0.0));
        }
        g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathParamsUser {
    pub gains: Vec<Complex64>,
    pub dir_cos: Vec<f64>,
}

impl PathParamsUser {
    pub fn draw<R: Rng + ?Sized>(n_paths: usize, rng: &mut R) -> Self {
        let mut p = PathParamsUser {
            gains: Vec::with_capacity(n_paths),
            dir_cos: Vec::with_capacity(n_paths),
        };
        for _ in 0..n_paths {
            p.gains.push(complex_gaussian(rng));
            p.dir_cos.push(dir_cos(rng));
        }
        p
    }

    /// `h_m = sum_j beta_j a_K(varphi_j)`.
    pub fn build(&self, n_ris: usize) -> ComplexVector {
        let mut h = ComplexVector::zeros(n_ris);
        for (&beta, &u) in self.gains.iter().zip(&self.dir_cos) {
            h.axpy(beta, &steering_vector(n_ris, u), Complex64::new(1.0, 0.0));
        }
        h
    }
}

pub fn gen_g<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> (PathParamsG, ComplexMatrix) {
    let paths = PathParamsG::draw(cfg.n_paths_g, rng);
    let g = paths.build(cfg.n_rx, cfg.n_ris);
    (paths, g)
}

pub fn gen_h<R: Rng + ?Sized>(cfg: &SystemConfig, rng: &mut R) -> (Vec<PathParamsUser>, ComplexMatrix) {
    let paths: Vec<PathParamsUser> = cfg
        .n_paths_user
        .iter()
        .map(|&j| PathParamsUser::draw(j, rng))
        .collect();
    let h = build_h(&paths, cfg.n_ris);
    (paths, h)
}

pub fn build_h(paths: &[PathParamsUser], n_ris: usize) -> ComplexMatrix {
    let mut h = ComplexMatrix::zeros(n_ris, paths.len());
    for (m, p) in paths.iter().enumerate() {
        h.set_column(m, &p.build(n_ris));
    }
    h
}

/// Ground truth for one slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    /// 1-based slot index.
    pub slot_index: usize,
    /// RIS-BS channel, `N_r x K`.
    pub g: ComplexMatrix,
    /// User-RIS channels, `K x M`.
    pub h: ComplexMatrix,
    pub g_paths: PathParamsG,
    pub h_paths: Vec<PathParamsUser>,
}

impl ChannelRealization {
    /// Pilot signal seen at the RIS elements, `Z = H X`.
    pub fn z(&self, x: &PilotMatrix) -> ComplexMatrix {
        &self.h * &x.matrix
    }
}

/// RIS phase profiles, row `l` holding `phi[l]^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseProfileMatrix {
    pub matrix: ComplexMatrix,
    /// `theta_k[l]` in `[0, 2 pi)`, laid out like `matrix`.
    pub phases: nalgebra::DMatrix<f64>,
}

impl PhaseProfileMatrix {
    pub fn from_phases(phases: nalgebra::DMatrix<f64>) -> Self {
        let phases = phases.map(|t| t.rem_euclid(2.0 * PI));
        let matrix = phases.map(|t| Complex64::from_polar(1.0, t));
        PhaseProfileMatrix { matrix, phases }
    }

    pub fn n_profiles(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn n_ris(&self) -> usize {
        self.matrix.ncols()
    }
}

/// First `L` rows of the unnormalized `K`-point DFT. For `L > K` the rows
/// wrap around and repeat.
pub fn gen_phase_profiles(cfg: &SystemConfig) -> PhaseProfileMatrix {
    let (l, k) = (cfg.n_profiles, cfg.n_ris);
    let phases = nalgebra::DMatrix::from_fn(l, k, |p, q| {
        let e = ((p as u128 * q as u128) % k as u128) as f64;
        (-2.0 * PI * e / k as f64).rem_euclid(2.0 * PI)
    });
    PhaseProfileMatrix {
        matrix: dft_block(l, k, k, None),
        phases,
    }
}

/// Pilot sequences, row `m` holding `x_m^T`.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotMatrix {
    pub matrix: ComplexMatrix,
}

impl PilotMatrix {
    pub fn n_users(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn len(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.ncols() == 0
    }

    /// Largest entry of `|X X^H - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let m = self.n_users();
        let gram = &self.matrix * self.matrix.adjoint();
        (gram - ComplexMatrix::identity(m, m))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }
}

/// `M x S` corner of the `max(M, S)`-point DFT, scaled by `1/sqrt(S)` so each
/// sequence has unit energy. Rows are orthonormal whenever `S >= M`.
pub fn gen_pilots(cfg: &SystemConfig) -> PilotMatrix {
    let (m, s) = (cfg.n_users, cfg.pilot_len);
    PilotMatrix {
        matrix: dft_block(m, s, m.max(s), Some(1.0 / (s as f64).sqrt())),
    }
}

fn check_slot_dims(chan: &ChannelRealization, x: &PilotMatrix, phi: &PhaseProfileMatrix) -> Result<()> {
    let (n_rx, k) = chan.g.shape();
    if chan.h.nrows() != k || phi.n_ris() != k || x.n_users() != chan.h.ncols() {
        return Err(Error::invalid(format!(
            "inconsistent dimensions: G {}x{k}, H {}x{}, X {}x{}, Phi {}x{}",
            n_rx,
            chan.h.nrows(),
            chan.h.ncols(),
            x.matrix.nrows(),
            x.matrix.ncols(),
            phi.matrix.nrows(),
            phi.matrix.ncols()
        )));
    }
    Ok(())
}

/// Noiseless observation tensor of a realization.
pub fn noiseless_slot(chan: &ChannelRealization, x: &PilotMatrix, phi: &PhaseProfileMatrix) -> Result<SlotTensor> {
    check_slot_dims(chan, x, phi)?;
    SlotTensor::from_factors(&chan.g, &chan.z(x), &phi.matrix)
}

/// Slices `G diag(phi[l]) H X + W[l]` with i.i.d. CN(0, `noise_var`) noise.
pub fn synthesize_slot<R: Rng + ?Sized>(
    chan: &ChannelRealization,
    x: &PilotMatrix,
    phi: &PhaseProfileMatrix,
    noise_var: f64,
    rng: &mut R,
) -> Result<SlotTensor> {
    if !(noise_var >= 0.0) || !noise_var.is_finite() {
        return Err(Error::invalid(format!("noise variance must be finite and >= 0, got {noise_var}")));
    }
    let mut t = noiseless_slot(chan, x, phi)?;
    add_noise(&mut t, noise_var, rng);
    Ok(t)
}

pub fn add_noise<R: Rng + ?Sized>(t: &mut SlotTensor, noise_var: f64, rng: &mut R) {
    if noise_var == 0.0 {
        return;
    }
    let sd = noise_var.sqrt();
    for y in t.slices_mut() {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng) * sd;
        }
    }
}

/// Noise variance giving `snr_db` relative to the mean per-entry power of
/// this realization's noiseless tensor.
pub fn noise_var_for_snr(
    chan: &ChannelRealization,
    x: &PilotMatrix,
    phi: &PhaseProfileMatrix,
    snr_db: f64,
) -> Result<f64> {
    let t = noiseless_slot(chan, x, phi)?;
    noise_var_for_power(t.mean_power(), snr_db)
}

pub(crate) fn noise_var_for_power(signal_power: f64, snr_db: f64) -> Result<f64> {
    if !snr_db.is_finite() {
        return Err(Error::invalid("snr_db must be finite"));
    }
    if !(signal_power > 0.0) {
        return Err(Error::invalid("channel realization carries no signal power"));
    }
    let var = signal_power * 10f64.powf(-snr_db / 10.0);
    Ok(var.min(f64::MAX))
}

/// Slot-by-slot channel generator. `G` is redrawn at slots `1, I+1, 2I+1, ...`
/// and `H` every slot.
pub struct ChannelProcess<R> {
    cfg: SystemConfig,
    rng: R,
    slot: usize,
    current_g: Option<(PathParamsG, ComplexMatrix)>,
}

impl<R: Rng> ChannelProcess<R> {
    pub fn new(cfg: SystemConfig, rng: R) -> Self {
        ChannelProcess {
            cfg,
            rng,
            slot: 0,
            current_g: None,
        }
    }

    /// True when the slot with this 1-based index starts a new `G` period.
    pub fn is_period_start(slot_index: usize, period: usize) -> bool {
        (slot_index - 1) % period == 0
    }

    pub fn next_slot(&mut self) -> ChannelRealization {
        self.slot += 1;
        if Self::is_period_start(self.slot, self.cfg.n_slots) || self.current_g.is_none() {
            self.current_g = Some(gen_g(&self.cfg, &mut self.rng));
        }
        let (g_paths, g) = self.current_g.clone().expect("drawn above");
        let (h_paths, h) = gen_h(&self.cfg, &mut self.rng);
        ChannelRealization {
            slot_index: self.slot,
            g,
            h,
            g_paths,
            h_paths,
        }
    }
}
