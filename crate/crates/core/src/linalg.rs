//! Dense complex kernels shared by the estimators.
//!
//! Matrices are `nalgebra` column-major `DMatrix<Complex64>`, so `vec(A)` is
//! the column-stacking of `A` and `A.as_slice()` is exactly that vector.

use std::cell::Cell;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type ComplexMatrix = DMatrix<Complex64>;
pub type ComplexVector = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
pub const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn frobenius_norm_sq(a: &ComplexMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

pub fn frobenius_norm(a: &ComplexMatrix) -> f64 {
    frobenius_norm_sq(a).sqrt()
}

pub fn all_finite(a: &ComplexMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Elementwise (Hadamard) product.
pub fn hadamard(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    a.component_mul(b)
}

/// Default singular-value cutoff, relative to the largest singular value.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    f64::EPSILON * rows.max(cols) as f64
}

/// Moore-Penrose pseudo-inverse with the default rank tolerance.
pub fn pinv(a: &ComplexMatrix) -> Result<ComplexMatrix> {
    pseudo_inverse(a, default_rank_tol(a.nrows(), a.ncols()))
}

/// Moore-Penrose pseudo-inverse via SVD. Singular values below
/// `rel_tol * sigma_max` are treated as zero.
///
/// Wide inputs go through the adjoint.
pub fn pseudo_inverse(a: &ComplexMatrix, rel_tol: f64) -> Result<ComplexMatrix> {
    pseudo_inverse_ranked(a, rel_tol).map(|(p, _)| p)
}

/// [`pseudo_inverse`] that also reports the numerical rank it kept.
pub fn pseudo_inverse_ranked(a: &ComplexMatrix, rel_tol: f64) -> Result<(ComplexMatrix, usize)> {
    if !all_finite(a) {
        return Err(Error::invalid("pseudo_inverse: non-finite entries"));
    }
    if !(rel_tol >= 0.0) {
        return Err(Error::invalid("pseudo_inverse: rel_tol must be non-negative"));
    }
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Ok((ComplexMatrix::zeros(n, m), 0));
    }
    if m < n {
        let (p, rank) = pseudo_inverse_ranked(&a.adjoint(), rel_tol)?;
        return Ok((p.adjoint(), rank));
    }
    probe::record(m.max(n));
    // Factor a copy scaled to unit max entry so large inputs cannot overflow
    // inside the SVD; pinv(a) = pinv(a / c) / c.
    let c = a.iter().map(|z| z.norm()).fold(0.0_f64, f64::max);
    if c == 0.0 {
        return Ok((ComplexMatrix::zeros(n, m), 0));
    }
    if !c.is_finite() {
        return Err(Error::numeric("pseudo_inverse: entry magnitudes overflow"));
    }
    let (p, rank) = svd_pinv(&a.unscale(c), rel_tol)?;
    let p = p.unscale(c);
    if !all_finite(&p) {
        return Err(Error::numeric("pseudo_inverse: result overflows"));
    }
    Ok((p, rank))
}

/// Thin SVD `A = U diag(s) V^H` with `s` in descending order.
pub(crate) struct ThinSvd {
    pub u: ComplexMatrix,
    pub s: Vec<f64>,
    pub v: ComplexMatrix,
}

/// Backed by faer. nalgebra 0.35's complex SVD returns wrong factors on some
/// rank-deficient inputs and never terminates on NaN.
pub(crate) fn thin_svd(a: &ComplexMatrix) -> Result<ThinSvd> {
    let (m, n) = a.shape();
    if !all_finite(a) {
        return Err(Error::invalid("svd: non-finite entries"));
    }
    let fa = faer::Mat::<Complex64>::from_fn(m, n, |i, j| a[(i, j)]);
    let svd = fa
        .thin_svd()
        .map_err(|e| Error::numeric(format!("SVD of {m}x{n} matrix failed: {e:?}")))?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let r = m.min(n);
    Ok(ThinSvd {
        u: ComplexMatrix::from_fn(m, r, |i, j| u[(i, j)]),
        s: (0..r).map(|k| s[k].re).collect(),
        v: ComplexMatrix::from_fn(n, r, |i, j| v[(i, j)]),
    })
}

fn svd_pinv(a: &ComplexMatrix, rel_tol: f64) -> Result<(ComplexMatrix, usize)> {
    let (m, n) = a.shape();
    let svd = thin_svd(a)?;
    let sigma_max = svd.s.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = rel_tol * sigma_max;
    // pinv = V * diag(1/s) * U^H, skipping truncated singular values.
    let mut out = ComplexMatrix::zeros(n, m);
    let mut rank = 0;
    for (k, &s) in svd.s.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        rank += 1;
        let v_col: ComplexVector = svd.v.column(k).into_owned();
        let u_col: ComplexVector = svd.u.column(k).into_owned();
        out.gerc(c64(1.0 / s, 0.0), &v_col, &u_col, ONE);
    }
    if !all_finite(&out) {
        return Err(Error::numeric("pseudo-inverse produced non-finite entries"));
    }
    Ok((out, rank))
}

/// DFT matrix with entry `(p, q) = exp(-j 2 pi p q / n)`, scaled by `1/sqrt(n)`
/// when `normalized`.
pub fn dft_matrix(n: usize, normalized: bool) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::invalid("dft_matrix: n must be at least 1"));
    }
    Ok(dft_block(n, n, n, normalized.then(|| 1.0 / (n as f64).sqrt())))
}

/// `rows x cols` top-left block of the `points`-point DFT, optionally scaled.
pub(crate) fn dft_block(rows: usize, cols: usize, points: usize, scale: Option<f64>) -> ComplexMatrix {
    let s = scale.unwrap_or(1.0);
    ComplexMatrix::from_fn(rows, cols, |p, q| {
        // Reduce the exponent modulo n first so large indices keep full accuracy.
        let e = ((p as u128 * q as u128) % points as u128) as f64;
        Complex64::from_polar(s, -2.0 * PI * e / points as f64)
    })
}

/// Solve `a * x = b` for Hermitian positive (semi)definite `a`, with a
/// diagonal ridge `ridge * I` added. Only `a.nrows()`-sized factorizations
/// are performed.
pub fn solve_hermitian_ridge(a: &ComplexMatrix, b: &ComplexMatrix, ridge: f64) -> Result<ComplexMatrix> {
    let k = a.nrows();
    if a.ncols() != k || b.nrows() != k {
        return Err(Error::invalid(format!(
            "solve_hermitian_ridge: {}x{} system with {}x{} right-hand side",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    probe::record(k);
    let mut m = a.clone();
    // Symmetrize so round-off never breaks the Cholesky precondition.
    for i in 0..k {
        for j in (i + 1)..k {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
        m[(i, i)] = c64(m[(i, i)].re + ridge, 0.0);
    }
    // Complex Cholesky takes complex square roots instead of failing, so
    // positivity is checked on the factor's diagonal.
    let factor = m.clone().cholesky().filter(|ch| {
        ch.l_dirty()
            .diagonal()
            .iter()
            .all(|d| d.re > 0.0 && d.im.abs() <= 1e-12 * d.re && d.re.is_finite())
    });
    match factor {
        Some(ch) => {
            let x = ch.solve(b);
            if all_finite(&x) {
                Ok(x)
            } else {
                Err(Error::numeric(format!(
                    "Hermitian solve produced non-finite values (condition number {:.3e})",
                    condition_number(&m)
                )))
            }
        }
        None => Err(Error::numeric(format!(
            "Hermitian system is not positive definite after ridge {ridge:.3e} (condition number {:.3e})",
            condition_number(&m)
        ))),
    }
}

/// 2-norm condition number via singular values; `inf` for singular input.
/// NaN when the input is not finite or the SVD stalls.
pub fn condition_number(a: &ComplexMatrix) -> f64 {
    if !all_finite(a) {
        return f64::NAN;
    }
    let Ok(svd) = thin_svd(a) else {
        return f64::NAN;
    };
    let sv = svd.s;
    let max = sv.iter().cloned().fold(0.0_f64, f64::max);
    let min = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Instrumentation of the largest factorization (SVD, QR, Cholesky) run on
/// the current thread. Used to check that tracking never factorizes
/// anything larger than `K x K`.
pub mod probe {
    use super::Cell;

    thread_local! {
        static LARGEST: Cell<usize> = const { Cell::new(0) };
        static COUNT: Cell<usize> = const { Cell::new(0) };
    }

    pub(crate) fn record(dim: usize) {
        LARGEST.with(|c| c.set(c.get().max(dim)));
        COUNT.with(|c| c.set(c.get() + 1));
    }

    pub fn reset() {
        LARGEST.with(|c| c.set(0));
        COUNT.with(|c| c.set(0));
    }

    /// Largest matrix dimension factorized since the last reset.
    pub fn largest() -> usize {
        LARGEST.with(|c| c.get())
    }

    /// Number of factorizations since the last reset.
    pub fn count() -> usize {
        COUNT.with(|c| c.get())
    }
}
