//! The per-slot observation tensor and its matricizations.
//!
//! Layouts (frontal slices `Y_l`, `l = 0..L`):
//!
//! * mode 1: `N_r x (S L)`, `[Y_0 Y_1 ... Y_{L-1}]`, equal to `G (Phi <> Z^T)^T`
//! * mode 2: `S x (N_r L)`, `[Y_0^T ... Y_{L-1}^T]`, equal to `Z^T (Phi <> G)^T`
//! * mode 3: `L x (N_r S)`, row `l` is `vec(Y_l)^T`, equal to `Phi (Z^T <> G)^T`
//!
//! where `<>` is the Khatri-Rao product and `vec` stacks columns.

use crate::error::{Error, Result};
use crate::linalg::{ComplexMatrix, ZERO};

/// Columnwise Kronecker product: column `k` of the `(J I) x K` result is
/// `kron(a[:, k], b[:, k])`.
pub fn khatri_rao(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    if a.ncols() != b.ncols() {
        return Err(Error::invalid(format!(
            "khatri_rao: column counts differ ({} vs {})",
            a.ncols(),
            b.ncols()
        )));
    }
    let (j_rows, i_rows, k_cols) = (a.nrows(), b.nrows(), a.ncols());
    let mut out = ComplexMatrix::zeros(j_rows * i_rows, k_cols);
    for k in 0..k_cols {
        let bk = b.column(k);
        let mut col = out.column_mut(k);
        for j in 0..j_rows {
            let ajk = a[(j, k)];
            for i in 0..i_rows {
                col[j * i_rows + i] = ajk * bk[i];
            }
        }
    }
    Ok(out)
}

/// `N_r x S x L` complex tensor stored as its `L` frontal slices.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotTensor {
    n_rx: usize,
    n_pilot: usize,
    slices: Vec<ComplexMatrix>,
}

impl SlotTensor {
    pub fn from_slices(slices: Vec<ComplexMatrix>) -> Result<Self> {
        let first = slices
            .first()
            .ok_or_else(|| Error::invalid("SlotTensor needs at least one frontal slice"))?;
        let (n_rx, n_pilot) = first.shape();
        if n_rx == 0 || n_pilot == 0 {
            return Err(Error::invalid("SlotTensor slices must be non-empty"));
        }
        if let Some((l, bad)) = slices.iter().enumerate().find(|(_, s)| s.shape() != (n_rx, n_pilot)) {
            return Err(Error::invalid(format!(
                "slice {l} is {}x{}, expected {n_rx}x{n_pilot}",
                bad.nrows(),
                bad.ncols()
            )));
        }
        Ok(SlotTensor { n_rx, n_pilot, slices })
    }

    pub fn zeros(n_rx: usize, n_pilot: usize, n_profiles: usize) -> Self {
        SlotTensor {
            n_rx,
            n_pilot,
            slices: vec![ComplexMatrix::zeros(n_rx, n_pilot); n_profiles],
        }
    }

    /// Noiseless tensor with slices `G diag(Phi[l, :]) Z`.
    pub fn from_factors(g: &ComplexMatrix, z: &ComplexMatrix, phi: &ComplexMatrix) -> Result<Self> {
        let k = g.ncols();
        if z.nrows() != k || phi.ncols() != k {
            return Err(Error::invalid(format!(
                "from_factors: G is {}x{}, Z is {}x{}, Phi is {}x{}",
                g.nrows(),
                g.ncols(),
                z.nrows(),
                z.ncols(),
                phi.nrows(),
                phi.ncols()
            )));
        }
        let slices = (0..phi.nrows())
            .map(|l| {
                let mut gd = g.clone();
                for (kk, mut col) in gd.column_iter_mut().enumerate() {
                    col *= phi[(l, kk)];
                }
                gd * z
            })
            .collect();
        SlotTensor::from_slices(slices)
    }

    pub fn n_rx(&self) -> usize {
        self.n_rx
    }

    pub fn n_pilot(&self) -> usize {
        self.n_pilot
    }

    pub fn n_profiles(&self) -> usize {
        self.slices.len()
    }

    pub fn slices(&self) -> &[ComplexMatrix] {
        &self.slices
    }

    pub fn slice(&self, l: usize) -> &ComplexMatrix {
        &self.slices[l]
    }

    pub(crate) fn slices_mut(&mut self) -> &mut [ComplexMatrix] {
        &mut self.slices
    }

    pub fn frobenius_norm_sq(&self) -> f64 {
        self.slices.iter().map(crate::linalg::frobenius_norm_sq).sum()
    }

    /// Mean per-entry power.
    pub fn mean_power(&self) -> f64 {
        self.frobenius_norm_sq() / (self.n_rx * self.n_pilot * self.n_profiles()) as f64
    }

    pub fn unfold_mode1(&self) -> ComplexMatrix {
        let (n, s) = (self.n_rx, self.n_pilot);
        let mut out = ComplexMatrix::from_element(n, s * self.n_profiles(), ZERO);
        for (l, y) in self.slices.iter().enumerate() {
            out.view_mut((0, l * s), (n, s)).copy_from(y);
        }
        out
    }

    pub fn unfold_mode2(&self) -> ComplexMatrix {
        let (n, s) = (self.n_rx, self.n_pilot);
        let mut out = ComplexMatrix::from_element(s, n * self.n_profiles(), ZERO);
        for (l, y) in self.slices.iter().enumerate() {
            out.view_mut((0, l * n), (s, n)).tr_copy_from(y);
        }
        out
    }

    /// Transpose of the mode-2 unfolding: the slices stacked vertically,
    /// `(N_r L) x S`. This is the orientation the `Z` solves consume.
    pub fn unfold_mode2_t(&self) -> ComplexMatrix {
        let (n, s) = (self.n_rx, self.n_pilot);
        let mut out = ComplexMatrix::from_element(n * self.n_profiles(), s, ZERO);
        for (l, y) in self.slices.iter().enumerate() {
            out.view_mut((l * n, 0), (n, s)).copy_from(y);
        }
        out
    }

    pub fn unfold_mode3(&self) -> ComplexMatrix {
        let len = self.n_rx * self.n_pilot;
        let mut out = ComplexMatrix::from_element(self.n_profiles(), len, ZERO);
        for (l, y) in self.slices.iter().enumerate() {
            for (idx, v) in y.as_slice().iter().enumerate() {
                out[(l, idx)] = *v;
            }
        }
        out
    }

    /// Inverse of [`SlotTensor::unfold_mode1`].
    pub fn fold_mode1(y1: &ComplexMatrix, n_pilot: usize) -> Result<Self> {
        if n_pilot == 0 || y1.ncols() % n_pilot != 0 {
            return Err(Error::invalid(format!(
                "fold_mode1: {} columns is not a multiple of S = {n_pilot}",
                y1.ncols()
            )));
        }
        let n_profiles = y1.ncols() / n_pilot;
        let slices = (0..n_profiles)
            .map(|l| y1.columns(l * n_pilot, n_pilot).into_owned())
            .collect();
        SlotTensor::from_slices(slices)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c64, frobenius_norm, ONE};

    fn real(rows: usize, cols: usize, vals: &[f64]) -> ComplexMatrix {
        ComplexMatrix::from_row_slice(rows, cols, &vals.iter().map(|&v| c64(v, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn khatri_rao_with_identity() {
        let a = ComplexMatrix::identity(2, 2);
        let b = real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let kr = khatri_rao(&a, &b).unwrap();
        let expected = real(4, 2, &[1.0, 0.0, 3.0, 0.0, 0.0, 2.0, 0.0, 4.0]);
        assert_eq!(kr, expected);
    }

    #[test]
    fn khatri_rao_all_ones() {
        let a = ComplexMatrix::from_element(2, 1, ONE);
        let kr = khatri_rao(&a, &a).unwrap();
        assert_eq!(kr, ComplexMatrix::from_element(4, 1, ONE));
    }

    #[test]
    fn khatri_rao_rejects_mismatch() {
        let a = ComplexMatrix::zeros(2, 2);
        let b = ComplexMatrix::zeros(2, 3);
        assert!(matches!(khatri_rao(&a, &b), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn single_slice_unfoldings() {
        let a = real(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let t = SlotTensor::from_slices(vec![a.clone()]).unwrap();
        assert_eq!(t.unfold_mode1(), a);
        assert_eq!(t.unfold_mode2(), a.transpose());
        let m3 = t.unfold_mode3();
        assert_eq!(m3.shape(), (1, 6));
        // column-major vec
        assert_eq!(m3[(0, 1)], c64(4.0, 0.0));
    }

    #[test]
    fn two_slice_mode1_is_concatenation() {
        let a = real(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let b = real(2, 2, &[5.0, 6.0, 7.0, 8.0]);
        let t = SlotTensor::from_slices(vec![a, b]).unwrap();
        let expected = real(2, 4, &[1.0, 2.0, 5.0, 6.0, 3.0, 4.0, 7.0, 8.0]);
        assert_eq!(t.unfold_mode1(), expected);
        assert_eq!(SlotTensor::fold_mode1(&expected, 2).unwrap(), t);
    }

    #[test]
    fn all_ones_mode3() {
        let t = SlotTensor::from_slices(vec![ComplexMatrix::from_element(2, 2, ONE); 2]).unwrap();
        assert_eq!(t.unfold_mode3(), ComplexMatrix::from_element(2, 4, ONE));
    }

    #[test]
    fn mode2_transpose_matches() {
        let a = real(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = real(2, 3, &[0.5, 1.5, 2.5, 3.5, 4.5, 5.5]);
        let t = SlotTensor::from_slices(vec![a, b]).unwrap();
        assert!(frobenius_norm(&(t.unfold_mode2().transpose() - t.unfold_mode2_t())) == 0.0);
    }

    #[test]
    fn rejects_ragged_slices() {
        let r = SlotTensor::from_slices(vec![ComplexMatrix::zeros(2, 2), ComplexMatrix::zeros(2, 3)]);
        assert!(r.is_err());
        assert!(SlotTensor::from_slices(vec![]).is_err());
    }
}
