//! Tiny dense kernels for the fixed-capacity matrices used at each grid point.

use crate::geometry::MAX_DIM;

pub(crate) type Square = [[f64; MAX_DIM]; MAX_DIM];

/// Cholesky factor of the leading `k x k` block of a symmetric positive
/// definite matrix. Returns `None` if a pivot is not strictly positive.
pub(crate) fn cholesky(a: &Square, k: usize) -> Option<Square> {
    let mut l = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..k {
        for j in 0..=i {
            let mut s = a[i][j];
            for p in 0..j {
                s -= l[i][p] * l[j][p];
            }
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Some(l)
}

/// Inverse and determinant of an SPD block through its Cholesky factor.
pub(crate) fn spd_inverse_det(a: &Square, k: usize) -> Option<(Square, f64)> {
    let l = cholesky(a, k)?;
    let mut det = 1.0;
    for i in 0..k {
        det *= l[i][i] * l[i][i];
    }
    // L^{-1} by forward substitution, then A^{-1} = L^{-T} L^{-1}.
    let mut linv = [[0.0; MAX_DIM]; MAX_DIM];
    for col in 0..k {
        for i in col..k {
            let mut s = if i == col { 1.0 } else { 0.0 };
            for p in col..i {
                s -= l[i][p] * linv[p][col];
            }
            linv[i][col] = s / l[i][i];
        }
    }
    let mut inv = [[0.0; MAX_DIM]; MAX_DIM];
    for i in 0..k {
        for j in 0..=i {
            let mut s = 0.0;
            for p in i.max(j)..k {
                s += linv[p][i] * linv[p][j];
            }
            inv[i][j] = s;
            inv[j][i] = s;
        }
    }
    Some((inv, det))
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inverse_of_spd_block() {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        a[0] = [4.0, 1.0, 0.5, 0.0];
        a[1] = [1.0, 3.0, 0.2, 0.0];
        a[2] = [0.5, 0.2, 2.0, 0.0];
        let (inv, det) = spd_inverse_det(&a, 3).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let prod: f64 = (0..3).map(|p| a[i][p] * inv[p][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((prod - expect).abs() < 1e-14);
            }
        }
        let by_cofactors = 4.0 * (3.0 * 2.0 - 0.04) - 1.0 * (2.0 - 0.1) + 0.5 * (0.2 - 1.5);
        assert!((det - by_cofactors).abs() < 1e-13);
    }

    #[test]
    fn rejects_indefinite() {
        let mut a = [[0.0; MAX_DIM]; MAX_DIM];
        a[0] = [1.0, 2.0, 0.0, 0.0];
        a[1] = [2.0, 1.0, 0.0, 0.0];
        assert!(cholesky(&a, 2).is_none());
    }
}
