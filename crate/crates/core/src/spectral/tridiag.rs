//! Symmetric tridiagonal eigensolvers.
//!
//! Eigenvalues come from value-only implicit QL, or from Sturm-sequence
//! bisection with recursive spectrum slicing on the rayon pool when requested.
//! Eigenvectors come from full QL for small blocks and from inverse iteration
//! (with Gram-Schmidt inside clusters of close eigenvalues) for large ones,
//! which keeps the cost quadratic in the block size.

use nalgebra::DMatrix;

use super::{BlockVectors, EigenBlock, Spectrum};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::symmetry::SymmetricTridiagonal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TridiagMethod {
    /// Full QL below [`QL_VECTOR_LIMIT`] rows when vectors are requested;
    /// otherwise eigenvalues from value-only QL, vectors by inverse iteration.
    Auto,
    ImplicitQl,
    BisectionInverse,
}

pub const QL_VECTOR_LIMIT: usize = 300;

/// Below this many eigenvalues a slice is bisected serially.
const PARALLEL_SLICE: usize = 256;

pub fn eig_tridiag<T: Real>(t: &SymmetricTridiagonal<T>, want_vectors: bool) -> Result<Spectrum<T>> {
    eig_tridiag_with(t, want_vectors, TridiagMethod::Auto)
}

pub fn eig_tridiag_with<T: Real>(
    t: &SymmetricTridiagonal<T>,
    want_vectors: bool,
    method: TridiagMethod,
) -> Result<Spectrum<T>> {
    let d = t.diag();
    let e = t.offdiag();
    let m = d.len();
    let method = match method {
        TridiagMethod::Auto if want_vectors && m <= QL_VECTOR_LIMIT => TridiagMethod::ImplicitQl,
        other => other,
    };
    let (values, vectors) = solve_split(d, e, want_vectors, method)?;
    let block = EigenBlock { support: (0..m).collect(), values, vectors, sector: t.sector() };
    Spectrum::from_blocks(m, vec![block], format!("tridiagonal m={m} ({method:?})"))
}

/// Splits at negligible off-diagonals and solves each unreduced piece.
fn solve_split<T: Real>(
    d: &[T],
    e: &[T],
    want_vectors: bool,
    method: TridiagMethod,
) -> Result<(Vec<T>, Option<BlockVectors<T>>)> {
    let m = d.len();
    let mut starts = vec![0];
    for i in 0..m.saturating_sub(1) {
        if e[i].abs() <= T::epsilon() * (d[i].abs() + d[i + 1].abs()) {
            starts.push(i + 1);
        }
    }
    if starts.len() == 1 {
        return solve_unreduced(d, e, want_vectors, method);
    }
    starts.push(m);
    let mut pairs: Vec<(T, usize, usize)> = Vec::with_capacity(m);
    let mut pieces = Vec::with_capacity(starts.len() - 1);
    for w in starts.windows(2) {
        let (a, b) = (w[0], w[1]);
        let (vals, z) = solve_unreduced(&d[a..b], &e[a..b - 1], want_vectors, method)?;
        for (k, v) in vals.iter().enumerate() {
            pairs.push((*v, pieces.len(), k));
        }
        pieces.push((a, z));
    }
    pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = if want_vectors {
        let mut full = DMatrix::<T>::zeros(m, m);
        for (col, &(_, piece, k)) in pairs.iter().enumerate() {
            let (offset, z) = &pieces[piece];
            if let Some(BlockVectors::Real(z)) = z {
                for r in 0..z.nrows() {
                    full[(offset + r, col)] = z[(r, k)];
                }
            }
        }
        Some(BlockVectors::Real(full))
    } else {
        None
    };
    Ok((values, vectors))
}

fn solve_unreduced<T: Real>(
    d: &[T],
    e: &[T],
    want_vectors: bool,
    method: TridiagMethod,
) -> Result<(Vec<T>, Option<BlockVectors<T>>)> {
    if d.len() == 1 {
        let z = want_vectors.then(|| BlockVectors::Real(DMatrix::from_element(1, 1, T::one())));
        return Ok((vec![d[0]], z));
    }
    Ok(match method {
        TridiagMethod::ImplicitQl => {
            let (vals, z) = implicit_ql(d, e, want_vectors)?;
            (vals, z.map(BlockVectors::Real))
        }
        TridiagMethod::BisectionInverse => {
            let vals = bisect_all(d, e);
            let z = want_vectors.then(|| BlockVectors::Real(inverse_iteration(d, e, &vals)));
            (vals, z)
        }
        TridiagMethod::Auto => {
            let (vals, _) = implicit_ql(d, e, false)?;
            let z = want_vectors.then(|| BlockVectors::Real(inverse_iteration(d, e, &vals)));
            (vals, z)
        }
    })
}

fn pivmin<T: Real>(e: &[T]) -> T {
    let max_e2 = e.iter().fold(T::one(), |acc, x| acc.max(*x * *x));
    T::min_positive_value() * max_e2
}

/// Number of eigenvalues strictly below `x`.
pub fn sturm_count<T: Real>(d: &[T], e: &[T], x: T) -> usize {
    sturm_count_with(d, e, x, pivmin(e))
}

#[inline]
fn sturm_count_with<T: Real>(d: &[T], e: &[T], x: T, pmin: T) -> usize {
    let mut count = 0;
    let mut q = d[0] - x;
    if q.abs() <= pmin {
        q = -pmin;
    }
    if q < T::zero() {
        count += 1;
    }
    for i in 1..d.len() {
        q = d[i] - x - e[i - 1] * e[i - 1] / q;
        if q.abs() <= pmin {
            q = -pmin;
        }
        if q < T::zero() {
            count += 1;
        }
    }
    count
}

fn gershgorin<T: Real>(d: &[T], e: &[T]) -> (T, T) {
    let m = d.len();
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for i in 0..m {
        let r = if i > 0 { e[i - 1].abs() } else { T::zero() } + if i + 1 < m { e[i].abs() } else { T::zero() };
        lo = lo.min(d[i] - r);
        hi = hi.max(d[i] + r);
    }
    let pad = T::lit(4.0) * T::epsilon() * lo.abs().max(hi.abs()) + T::lit(4.0) * pivmin(e);
    (lo - pad, hi + pad)
}

fn bisect_all<T: Real>(d: &[T], e: &[T]) -> Vec<T> {
    let m = d.len();
    let (lo, hi) = gershgorin(d, e);
    let pmin = pivmin(e);
    let mut out = vec![T::zero(); m];
    slice(d, e, pmin, lo, 0, hi, m, &mut out);
    out
}

/// Fills `out` with eigenvalues `klo..khi` known to lie in `[lo, hi)`.
#[allow(clippy::too_many_arguments)]
fn slice<T: Real>(d: &[T], e: &[T], pmin: T, lo: T, klo: usize, hi: T, khi: usize, out: &mut [T]) {
    if klo == khi {
        return;
    }
    let mid = (lo + hi) * T::lit(0.5);
    let width_tol = T::lit(2.0) * T::epsilon() * lo.abs().max(hi.abs()) + pmin;
    if hi - lo <= width_tol || mid <= lo || mid >= hi {
        for v in out.iter_mut() {
            *v = mid;
        }
        return;
    }
    let kmid = sturm_count_with(d, e, mid, pmin).clamp(klo, khi);
    let (left, right) = out.split_at_mut(kmid - klo);
    if khi - klo > PARALLEL_SLICE {
        rayon::join(|| slice(d, e, pmin, lo, klo, mid, kmid, left), || slice(d, e, pmin, mid, kmid, hi, khi, right));
    } else {
        slice(d, e, pmin, lo, klo, mid, kmid, left);
        slice(d, e, pmin, mid, kmid, hi, khi, right);
    }
}

/// Flip sign so the largest-magnitude component is positive.
fn fix_sign<T: Real>(v: &mut [T]) {
    let mut best = T::zero();
    for &x in v.iter() {
        if x.abs() > best.abs() {
            best = x;
        }
    }
    if best < T::zero() {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Implicit QL with Wilkinson-type shifts; returns ascending eigenvalues and
/// (optionally) the eigenvector matrix.
fn implicit_ql<T: Real>(diag: &[T], off: &[T], want_vectors: bool) -> Result<(Vec<T>, Option<DMatrix<T>>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e: Vec<T> = off.to_vec();
    e.push(T::zero());
    // column-major: column j is z[j*n .. (j+1)*n]
    let mut z: Vec<T> = if want_vectors {
        let mut z = vec![T::zero(); n * n];
        for j in 0..n {
            z[j * n + j] = T::one();
        }
        z
    } else {
        Vec::new()
    };
    let two = T::lit(2.0);
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m + 1 < n {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= T::epsilon() * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 60 {
                return Err(Error::InvalidInput(format!("implicit QL did not converge at row {l}")));
            }
            let mut g = (d[l + 1] - d[l]) / (two * e[l]);
            let mut r = g.hypot(T::one());
            g = d[m] - d[l] + e[l] / (g + r.copysign(g));
            let (mut s, mut c, mut p) = (T::one(), T::one(), T::zero());
            let mut underflow = false;
            let mut i = m;
            while i > l {
                i -= 1;
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == T::zero() {
                    d[i + 1] -= p;
                    e[m] = T::zero();
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + two * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if want_vectors {
                    let (head, tail) = z.split_at_mut((i + 1) * n);
                    let zi = &mut head[i * n..];
                    let zi1 = &mut tail[..n];
                    for (a, bb) in zi.iter_mut().zip(zi1.iter_mut()) {
                        let f = *bb;
                        *bb = s * *a + c * f;
                        *a = c * *a - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = T::zero();
        }
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap_or(std::cmp::Ordering::Equal));
    let values = idx.iter().map(|&i| d[i]).collect();
    let vectors = if want_vectors {
        let mut out = DMatrix::zeros(n, n);
        for (col, &j) in idx.iter().enumerate() {
            let mut v = z[j * n..(j + 1) * n].to_vec();
            fix_sign(&mut v);
            out.column_mut(col).copy_from_slice(&v);
        }
        Some(out)
    } else {
        None
    };
    Ok((values, vectors))
}

/// LU factors of `T - lambda I` with partial pivoting.
struct TridiagLu<T> {
    dl: Vec<T>,
    dd: Vec<T>,
    du: Vec<T>,
    du2: Vec<T>,
    swapped: Vec<bool>,
}

impl<T: Real> TridiagLu<T> {
    fn factor(d: &[T], e: &[T], lambda: T, tiny: T) -> Self {
        let n = d.len();
        let mut dl = e.to_vec();
        let mut du = e.to_vec();
        let mut dd: Vec<T> = d.iter().map(|x| *x - lambda).collect();
        let mut du2 = vec![T::zero(); n.saturating_sub(2)];
        let mut swapped = vec![false; n.saturating_sub(1)];
        for i in 0..n.saturating_sub(1) {
            if dd[i].abs() >= dl[i].abs() {
                if dd[i] != T::zero() {
                    let fact = dl[i] / dd[i];
                    dl[i] = fact;
                    dd[i + 1] -= fact * du[i];
                } else {
                    dl[i] = T::zero();
                }
            } else {
                let fact = dd[i] / dl[i];
                dd[i] = dl[i];
                dl[i] = fact;
                let temp = du[i];
                du[i] = dd[i + 1];
                dd[i + 1] = temp - fact * dd[i + 1];
                if i + 2 < n {
                    du2[i] = du[i + 1];
                    du[i + 1] = -fact * du[i + 1];
                }
                swapped[i] = true;
            }
        }
        for x in dd.iter_mut() {
            if x.abs() < tiny {
                *x = if *x < T::zero() { -tiny } else { tiny };
            }
        }
        Self { dl, dd, du, du2, swapped }
    }

    fn solve(&self, b: &mut [T]) {
        let n = b.len();
        for i in 0..n.saturating_sub(1) {
            if self.swapped[i] {
                let temp = b[i] - self.dl[i] * b[i + 1];
                b[i] = b[i + 1];
                b[i + 1] = temp;
            } else {
                b[i + 1] -= self.dl[i] * b[i];
            }
        }
        b[n - 1] /= self.dd[n - 1];
        if n > 1 {
            b[n - 2] = (b[n - 2] - self.du[n - 2] * b[n - 1]) / self.dd[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            b[i] = (b[i] - self.du[i] * b[i + 1] - self.du2[i] * b[i + 2]) / self.dd[i];
        }
    }
}

fn start_vector<T: Real>(n: usize, seed: u64) -> Vec<T> {
    // xorshift64*, deterministic per eigenvalue index
    let mut state = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..n)
        .map(|_| {
            state ^= state >> 12;
            state ^= state << 25;
            state ^= state >> 27;
            let r = state.wrapping_mul(0x2545_F491_4F6C_DD1D) >> 11;
            T::lit(r as f64 / (1u64 << 53) as f64 * 2.0 - 1.0)
        })
        .collect()
}

/// Eigenvectors for known (ascending) eigenvalues.
fn inverse_iteration<T: Real>(d: &[T], e: &[T], values: &[T]) -> DMatrix<T> {
    let n = d.len();
    let norm = d
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.abs() + if i > 0 { e[i - 1].abs() } else { T::zero() } + if i + 1 < n { e[i].abs() } else { T::zero() }
        })
        .fold(T::min_positive_value(), T::max);
    let tiny = T::epsilon() * norm;
    let cluster_gap = T::lit(1e-5) * norm;
    let mut z = DMatrix::zeros(n, n);
    let mut cluster_start = 0;
    for j in 0..n {
        if j > 0 && values[j] - values[j - 1] > cluster_gap {
            cluster_start = j;
        }
        let lu = TridiagLu::factor(d, e, values[j], tiny);
        let mut x: Vec<T> = start_vector(n, j as u64 + 1);
        for _ in 0..3 {
            lu.solve(&mut x);
            for k in cluster_start..j {
                let col = z.column(k);
                let dot: T = col.iter().zip(&x).map(|(a, b)| *a * *b).sum();
                for (xi, ci) in x.iter_mut().zip(col.iter()) {
                    *xi -= dot * *ci;
                }
            }
            let nrm = x.iter().map(|v| *v * *v).sum::<T>().sqrt();
            for xi in x.iter_mut() {
                *xi /= nrm;
            }
        }
        fix_sign(&mut x);
        z.column_mut(j).copy_from_slice(&x);
    }
    z
}
