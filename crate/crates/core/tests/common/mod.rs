//! Oracles shared by the integration tests and the acceptance report.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ristrack_core::channel::{complex_gaussian, complex_gaussian_matrix, gen_pilots, PhaseProfileMatrix, SystemConfig};
use ristrack_core::gamp::{gamp_solve, GampOptions};
use ristrack_core::linalg::{c64, frobenius_norm, pinv, ComplexMatrix, ComplexVector};
use ristrack_core::tensor::{khatri_rao, SlotTensor};
use ristrack_core::tracker::{FactorUpdate, TrackerState};

pub fn rel(a: &ComplexMatrix, b: &ComplexMatrix) -> f64 {
    frobenius_norm(&(a - b)) / frobenius_norm(b)
}

pub fn random_phi(l: usize, k: usize, rng: &mut ChaCha8Rng) -> PhaseProfileMatrix {
    PhaseProfileMatrix::from_phases(nalgebra::DMatrix::from_fn(l, k, |_, _| rng.random_range(0.0..std::f64::consts::TAU)))
}

pub struct Setup {
    pub phi: PhaseProfileMatrix,
    pub g: ComplexMatrix,
    pub zs: Vec<ComplexMatrix>,
    pub slots: Vec<SlotTensor>,
}

/// Fixed `G`, fresh `Z` per slot, optional white noise on the slices.
pub fn setup(n_rx: usize, s: usize, k: usize, l: usize, n: usize, noise: f64, seed: u64) -> Setup {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = random_phi(l, k, &mut rng);
    let g = complex_gaussian_matrix(n_rx, k, &mut rng);
    let zs: Vec<_> = (0..n).map(|_| complex_gaussian_matrix(k, s, &mut rng)).collect();
    let slots = zs
        .iter()
        .map(|z| {
            let clean = SlotTensor::from_factors(&g, z, &phi.matrix).unwrap().unfold_mode1();
            let w = complex_gaussian_matrix(n_rx, s * l, &mut rng) * c64(noise, 0.0);
            SlotTensor::fold_mode1(&(clean + w), s).unwrap()
        })
        .collect();
    Setup { phi, g, zs, slots }
}

/// Batch minimizer of `sum_tau w_tau ||Y_tau - (Phi <> G) Z_tau||^2` over `G`,
/// solved row by row of `G` from explicitly stacked equations.
pub fn batch_structured(phi: &ComplexMatrix, history: &[(f64, ComplexMatrix, ComplexMatrix)], n_rx: usize) -> ComplexMatrix {
    let (l, k) = phi.shape();
    let s = history[0].2.ncols();
    let rows = history.len() * l * s;
    let mut g = ComplexMatrix::zeros(n_rx, k);
    for r in 0..n_rx {
        let mut a = ComplexMatrix::zeros(rows, k);
        let mut b = ComplexMatrix::zeros(rows, 1);
        let mut row = 0;
        for (w, y2t, z) in history {
            let sw = c64(w.sqrt(), 0.0);
            for li in 0..l {
                for si in 0..s {
                    for kk in 0..k {
                        a[(row, kk)] = sw * phi[(li, kk)] * z[(kk, si)];
                    }
                    b[(row, 0)] = sw * y2t[(li * n_rx + r, si)];
                    row += 1;
                }
            }
        }
        let x = pinv(&a).unwrap() * b;
        for kk in 0..k {
            g[(r, kk)] = x[(kk, 0)];
        }
    }
    g
}

/// Batch minimizer over an unstructured `F`.
pub fn batch_unconstrained(history: &[(f64, ComplexMatrix, ComplexMatrix)]) -> ComplexMatrix {
    let ys: Vec<_> = history.iter().map(|(w, y, _)| y * c64(w.sqrt(), 0.0)).collect();
    let zs: Vec<_> = history.iter().map(|(w, _, z)| z * c64(w.sqrt(), 0.0)).collect();
    let y = ComplexMatrix::from_columns(&ys.iter().flat_map(|m| m.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()).collect::<Vec<_>>());
    let z = ComplexMatrix::from_columns(&zs.iter().flat_map(|m| m.column_iter().map(|c| c.into_owned()).collect::<Vec<_>>()).collect::<Vec<_>>());
    y * pinv(&z).unwrap()
}

/// Runs the tracker from a noisy start and checks `F` against the batch
/// optimum over the pseudo-observation of the first slot plus every tracked
/// slot, weighted by `lambda`.
/// Returns the largest relative deviation seen.
pub fn optimality_gap(update: FactorUpdate, lambda: f64, seed: u64) -> f64 {
    let (n_rx, s, k, l, n) = (3, 4, 3, 4, 6);
    let su = setup(n_rx, s, k, l, n, 0.3, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let g0 = &su.g + complex_gaussian_matrix(n_rx, k, &mut rng) * c64(0.2, 0.0);
    let z1 = &su.zs[0] + complex_gaussian_matrix(k, s, &mut rng) * c64(0.2, 0.0);
    let mut st = TrackerState::init(&g0, &z1, &su.phi, lambda).unwrap().with_update(update);
    let f0 = khatri_rao(&su.phi.matrix, &g0).unwrap();
    let mut history = vec![(1.0, &f0 * &z1, z1.clone())];
    let mut worst = 0.0f64;
    for t in &su.slots[1..] {
        let z = st.track_recursive(t).unwrap();
        for h in history.iter_mut() {
            h.0 *= lambda;
        }
        history.push((1.0, t.unfold_mode2_t(), z));
        let f_batch = match update {
            FactorUpdate::KhatriRao => khatri_rao(&su.phi.matrix, &batch_structured(&su.phi.matrix, &history, n_rx)).unwrap(),
            FactorUpdate::Unconstrained => batch_unconstrained(&history),
        };
        worst = worst.max(rel(st.f_hat(), &f_batch));
    }
    worst
}

/// Best single-column fit by exhaustive search over all `M` supports.
pub fn exhaustive_support(a: &ComplexMatrix, y: &ComplexVector) -> usize {
    (0..a.ncols())
        .map(|j| {
            let col = a.column(j);
            let coef = col.dotc(y) / col.norm_squared();
            (j, (y - col * coef).norm_squared())
        })
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap()
        .0
}

/// Fraction of 1-sparse columns whose GAMP support (entries above 10% of the
/// column peak) is exactly the exhaustive-search support.
pub fn one_sparse_agreement(trials: usize) -> f64 {
    let (m, s, k) = (20, 10, 64);
    let a = gen_pilots(&scenario(m, s, k)).matrix.transpose();
    // Each column of `a` has unit power per observation on average: 1/S.
    let noise_var = (1.0 / s as f64) * 1e-3;
    let opts = GampOptions {
        prior_sparsity: 1.0 / m as f64,
        ..GampOptions::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut agree, mut total) = (0usize, 0usize);
    for _ in 0..trials {
        let mut x = ComplexMatrix::zeros(m, k);
        for col in 0..k {
            x[(rng.random_range(0..m), col)] = complex_gaussian(&mut rng);
        }
        let mut b = &a * &x;
        for v in b.iter_mut() {
            *v += complex_gaussian(&mut rng) * noise_var.sqrt();
        }
        let (est, _) = gamp_solve(&a, &b, &opts).unwrap();
        for col in 0..k {
            let y = b.column(col).into_owned();
            let oracle = exhaustive_support(&a, &y);
            let mags: Vec<f64> = est.column(col).iter().map(|z| z.norm()).collect();
            let max = mags.iter().cloned().fold(0.0, f64::max);
            let support: Vec<usize> = (0..m).filter(|&j| mags[j] >= 0.1 * max).collect();
            agree += usize::from(support == [oracle]);
            total += 1;
        }
    }
    agree as f64 / total as f64
}


pub fn scenario(m: usize, s: usize, k: usize) -> SystemConfig {
    SystemConfig {
        n_ris: k,
        n_users: m,
        pilot_len: s,
        n_profiles: k,
        n_paths_user: vec![4; m],
        ..SystemConfig::reference()
    }
}
