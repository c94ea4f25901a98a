//! Small dense kernels shared by the decomposition and regression code.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Lower Cholesky factor `L` with `A = L Lᵀ`.
///
/// Fails with the offending pivot when a diagonal entry of the Schur complement
/// is not strictly positive relative to `min_pivot`.
pub fn cholesky(a: &DMatrix<f64>, min_pivot: f64) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    debug_assert_eq!(n, a.ncols());
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > min_pivot) {
            return Err(Error::NotPositiveDefinite { pivot: j, value: d });
        }
        let djj = libm::sqrt(d);
        l[(j, j)] = djj;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Solves `L X = B` in place for lower-triangular `L`.
pub fn solve_lower_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        let mut col = b.column_mut(c);
        for i in 0..n {
            let mut s = col[i];
            for k in 0..i {
                s -= l[(i, k)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
    }
}

/// Solves `Lᵀ X = B` in place for lower-triangular `L`.
pub fn solve_upper_transposed_in_place(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    let n = l.nrows();
    for c in 0..b.ncols() {
        let mut col = b.column_mut(c);
        for i in (0..n).rev() {
            let mut s = col[i];
            for k in (i + 1)..n {
                s -= l[(k, i)] * col[k];
            }
            col[i] = s / l[(i, i)];
        }
    }
}

/// Largest `|a_ij - a_ji|` relative to the largest `|a_ij|`.
pub fn relative_asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn symmetrize(a: &mut DMatrix<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted descending.
pub fn sym_eigen_desc(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let vectors = eig.eigenvectors.select_columns(order.iter());
    (values, vectors)
}

/// Flips each column so its largest-magnitude entry is positive.
/// Ties go to the lowest row index.
pub fn apply_sign_convention(w: &mut DMatrix<f64>) {
    for mut col in w.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0f64;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

pub fn trace(a: &DMatrix<f64>) -> f64 {
    a.diagonal().sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_reconstructs() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]);
        let l = cholesky(&a, 0.0).unwrap();
        let back = &l * l.transpose();
        assert!((back - &a).amax() < 1e-14);
        for i in 0..3 {
            for j in (i + 1)..3 {
                assert_eq!(l[(i, j)], 0.0);
            }
        }
    }

    #[test]
    fn cholesky_reports_pivot() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(matches!(
            cholesky(&a, 0.0),
            Err(Error::NotPositiveDefinite { pivot: 1, .. })
        ));
    }

    #[test]
    fn triangular_solves_invert() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 2.0, 0.4, 2.0, 5.0, 1.0, 0.4, 1.0, 3.0]);
        let l = cholesky(&a, 0.0).unwrap();
        let mut x = DMatrix::<f64>::identity(3, 3);
        solve_lower_in_place(&l, &mut x);
        solve_upper_transposed_in_place(&l, &mut x);
        assert!((&a * x - DMatrix::<f64>::identity(3, 3)).amax() < 1e-14);
    }

    #[test]
    fn sign_convention_ties_take_lowest_index() {
        let mut w = DMatrix::from_column_slice(3, 2, &[-1.0, 1.0, 0.5, 0.2, -0.9, 0.3]);
        apply_sign_convention(&mut w);
        assert_eq!(w.column(0).as_slice(), &[1.0, -1.0, -0.5]);
        assert_eq!(w.column(1).as_slice(), &[-0.2, 0.9, -0.3]);
    }

    #[test]
    fn eigen_sorted_descending() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = sym_eigen_desc(&a);
        assert_eq!(vals.as_slice(), &[3.0, 2.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-15);
    }
}
