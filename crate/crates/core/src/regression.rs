//! Linear least squares via Householder QR.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct LinearFit<T> {
    pub coefficients: Vec<T>,
    /// Centered coefficient of determination, clamped to `[0, 1]`.
    pub r_squared: T,
    pub residual_ss: T,
}

/// Minimizes `|A beta - y|` where `columns[j]` is the j-th column of `A`.
pub fn least_squares<T: Real>(columns: &[Vec<T>], y: &[T]) -> Result<LinearFit<T>> {
    let p = columns.len();
    let n = y.len();
    if p == 0 || columns.iter().any(|c| c.len() != n) {
        return Err(Error::InvalidInput("design matrix columns must match the data length".into()));
    }
    if n < p {
        return Err(Error::InvalidInput(format!("{n} points cannot determine {p} coefficients")));
    }
    let mut a: Vec<Vec<T>> = columns.to_vec();
    let mut b = y.to_vec();
    for j in 0..p {
        let norm = a[j][j..].iter().map(|x| *x * *x).sum::<T>().sqrt();
        if norm == T::zero() {
            return Err(Error::InvalidInput(format!("design column {j} is rank deficient")));
        }
        let alpha = if a[j][j] > T::zero() { -norm } else { norm };
        let mut v: Vec<T> = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: T = v.iter().map(|x| *x * *x).sum();
        if vnorm2 > T::zero() {
            let apply = |col: &mut [T]| {
                let dot: T = v.iter().zip(col.iter()).map(|(x, y)| *x * *y).sum();
                let f = T::lit(2.0) * dot / vnorm2;
                for (c, vi) in col.iter_mut().zip(&v) {
                    *c -= f * *vi;
                }
            };
            for col in a.iter_mut().skip(j) {
                apply(&mut col[j..]);
            }
            apply(&mut b[j..]);
        }
    }
    let mut beta = vec![T::zero(); p];
    for j in (0..p).rev() {
        let mut s = b[j];
        for k in j + 1..p {
            s -= a[k][j] * beta[k];
        }
        if a[j][j].abs() <= T::epsilon() * T::lit(1e3) * a[0][0].abs() {
            return Err(Error::InvalidInput(format!("design column {j} is rank deficient")));
        }
        beta[j] = s / a[j][j];
    }
    let fitted = |i: usize| -> T { (0..p).map(|j| columns[j][i] * beta[j]).sum() };
    let residual_ss: T = (0..n).map(|i| (y[i] - fitted(i)).powi(2)).sum();
    let mean = y.iter().copied().sum::<T>() / T::from_usize_exact(n);
    let total_ss: T = y.iter().map(|v| (*v - mean).powi(2)).sum();
    let r_squared = if total_ss > T::zero() {
        (T::one() - residual_ss / total_ss).max(T::zero()).min(T::one())
    } else if residual_ss == T::zero() {
        T::one()
    } else {
        T::zero()
    };
    Ok(LinearFit { coefficients: beta, r_squared, residual_ss })
}

/// Straight line `y = slope x + intercept`; returns `(slope, intercept, r2)`.
pub fn line_fit<T: Real>(x: &[T], y: &[T]) -> Result<(T, T, T)> {
    let fit = least_squares(&[x.to_vec(), vec![T::one(); x.len()]], y)?;
    Ok((fit.coefficients[0], fit.coefficients[1], fit.r_squared))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(|i| i as f64 * 0.3).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.5 * v - 1.0).collect();
        let (m, c, r2) = line_fit(&x, &y).unwrap();
        assert!((m - 2.5).abs() < 1e-13 && (c + 1.0).abs() < 1e-13);
        assert!((r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn overdetermined_quadratic() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 / 7.0).collect();
        let y: Vec<f64> = x.iter().map(|v| 1.0 - 0.5 * v + 0.25 * v * v).collect();
        let cols = vec![vec![1.0; 30], x.clone(), x.iter().map(|v| v * v).collect()];
        let fit = least_squares(&cols, &y).unwrap();
        for (a, b) in fit.coefficients.iter().zip([1.0, -0.5, 0.25]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient() {
        let x = vec![1.0, 2.0, 3.0];
        assert!(least_squares(&[x.clone(), x.clone()], &[1.0, 2.0, 3.0]).is_err());
        assert!(least_squares(&[x], &[1.0, 2.0]).is_err());
    }
}
