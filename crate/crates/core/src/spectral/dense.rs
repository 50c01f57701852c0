//! Dense Hermitian diagonalization backed by nalgebra.

use nalgebra::{DMatrix, RealField, SymmetricEigen};

use super::{BlockVectors, EigenBlock, Spectrum};
use crate::error::{Error, Result};
use crate::hilbert::{hermitian_deviation, hermitian_tolerance, HermitianMatrix};
use crate::scalar::Real;

/// Full spectrum of a Hermitian matrix, ascending; real storage stays real.
pub fn eig_dense<T: Real + RealField>(h: &HermitianMatrix<T>, want_vectors: bool) -> Result<Spectrum<T>> {
    let n = h.dim();
    if n == 0 {
        return Err(Error::InvalidInput("cannot diagonalize an empty matrix".into()));
    }
    if let HermitianMatrix::Dense(m) = h {
        let dev = hermitian_deviation(m);
        let scale = m.iter().fold(T::one(), |acc, z| num_traits::Float::max(acc, z.norm()));
        if dev > hermitian_tolerance::<T>() * scale {
            return Err(Error::NotHermitian { deviation: dev.as_f64() });
        }
    }
    let (values, vectors) = if h.is_real() {
        let real: DMatrix<T> = match h {
            HermitianMatrix::Banded(b) => b.to_dense(),
            HermitianMatrix::Dense(m) => m.map(|z| z.re),
        };
        if want_vectors {
            let eig = SymmetricEigen::new(real);
            let (vals, cols) = sorted(eig.eigenvalues.iter().copied().collect());
            let z = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, cols[k])]);
            (vals, Some(BlockVectors::Real(z)))
        } else {
            let (vals, _) = sorted(real.symmetric_eigenvalues().iter().copied().collect());
            (vals, None)
        }
    } else {
        let HermitianMatrix::Dense(m) = h else { unreachable!("banded storage is real") };
        if want_vectors {
            let eig = SymmetricEigen::new(m.clone());
            let (vals, cols) = sorted(eig.eigenvalues.iter().copied().collect());
            let z = DMatrix::from_fn(n, n, |i, k| eig.eigenvectors[(i, cols[k])]);
            (vals, Some(BlockVectors::Complex(z)))
        } else {
            let (vals, _) = sorted(m.symmetric_eigenvalues().iter().copied().collect());
            (vals, None)
        }
    };
    let block = EigenBlock { support: (0..n).collect(), values, vectors, sector: None };
    Spectrum::from_blocks(n, vec![block], format!("dense n={n}"))
}

fn sorted<T: Real>(vals: Vec<T>) -> (Vec<T>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).unwrap_or(std::cmp::Ordering::Equal));
    (idx.iter().map(|&i| vals[i]).collect(), idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::to_complex;
    use crate::scalar::C;
    use approx::assert_relative_eq;

    #[test]
    fn diagonal_sorted() {
        let m = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, -3.0, 0.5]));
        let h = HermitianMatrix::from_real_dense(&m).unwrap();
        let s = eig_dense(&h, false).unwrap();
        assert_eq!(s.eigenvalues(), &[-3.0, 0.5, 2.0]);
    }

    #[test]
    fn two_level_closed_form() {
        let (delta, g) = (3.0f64, 0.8f64);
        let m = DMatrix::from_row_slice(2, 2, &[delta / 2.0, g, g, -delta / 2.0]);
        let s = eig_dense(&HermitianMatrix::from_real_dense(&m).unwrap(), true).unwrap();
        let r = (delta * delta / 4.0 + g * g).sqrt();
        assert_relative_eq!(s.eigenvalues()[0], -r, max_relative = 1e-14);
        assert_relative_eq!(s.eigenvalues()[1], r, max_relative = 1e-14);
    }

    #[test]
    fn complex_hermitian_with_vectors() {
        let i = C::new(0.0, 1.0);
        let m = DMatrix::from_row_slice(2, 2, &[C::new(1.0, 0.0), -i, i, C::new(1.0, 0.0)]);
        let h = HermitianMatrix::from_dense(m.clone()).unwrap();
        let s = eig_dense(&h, true).unwrap();
        assert_relative_eq!(s.eigenvalues()[0], 0.0, epsilon = 1e-14);
        assert_relative_eq!(s.eigenvalues()[1], 2.0, epsilon = 1e-14);
        for k in 0..2 {
            let v = s.eigenvector(k).unwrap();
            let hv = h.apply(&v);
            for (a, b) in hv.iter().zip(&v) {
                assert!((a - b.scale(s.eigenvalues()[k])).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let m = to_complex(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        let err = eig_dense(&HermitianMatrix::Dense(m), false).unwrap_err();
        assert!(matches!(err, Error::NotHermitian { .. }));
    }
}
