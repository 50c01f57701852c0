//! Truncated spin-boson Hilbert spaces.
//!
//! Basis states are `|s, n_1[, n_2]>` with `s` the sigma_z eigenstate and
//! `n_i` Fock occupations, each cutoff inclusive. The flat index is
//!
//! ```text
//! index = 2 * fock_index + s,      s = 0 for up, 1 for down
//! fock_index = n_1 * (N_2 + 1) + n_2      (lexicographic, last mode fastest)
//! ```
//!
//! so the spin label is the fastest-running digit. For a single mode this is
//! `index = 2n + s`, and each parity sector of the Rabi model is an
//! interleaved index selection.

use nalgebra::DMatrix;
use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cr, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Spin {
    Up,
    Down,
}

impl Spin {
    /// Position of the spin label inside a flat index.
    #[inline]
    pub fn offset(self) -> usize {
        match self {
            Spin::Up => 0,
            Spin::Down => 1,
        }
    }

    /// sigma_z eigenvalue.
    #[inline]
    pub fn sz(self) -> i64 {
        match self {
            Spin::Up => 1,
            Spin::Down => -1,
        }
    }

    pub fn flip(self) -> Spin {
        match self {
            Spin::Up => Spin::Down,
            Spin::Down => Spin::Up,
        }
    }
}

/// Spin part of a product initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SpinLabel {
    Up,
    Down,
    /// sigma_x = +1
    Plus,
    /// sigma_x = -1
    Minus,
    /// `(|down> + e^{i phi}|up>)/sqrt 2`
    Phase(f64),
}

/// One basis vector `|s, n_1, ..>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct BasisState {
    pub spin: Spin,
    pub occupations: Vec<usize>,
}

impl BasisState {
    pub fn new(spin: Spin, occupations: &[usize]) -> Self {
        Self { spin, occupations: occupations.to_vec() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BasisLayout {
    cutoffs: Vec<usize>,
}

impl BasisLayout {
    pub fn new(cutoffs: Vec<usize>) -> Result<Self> {
        if cutoffs.is_empty() {
            return Err(Error::InvalidInput("layout needs at least one bosonic mode".into()));
        }
        Ok(Self { cutoffs })
    }

    pub fn single(n_max: usize) -> Self {
        Self { cutoffs: vec![n_max] }
    }

    pub fn two_mode(n_max_r: usize, n_max_l: usize) -> Self {
        Self { cutoffs: vec![n_max_r, n_max_l] }
    }

    pub fn cutoffs(&self) -> &[usize] {
        &self.cutoffs
    }

    pub fn n_modes(&self) -> usize {
        self.cutoffs.len()
    }

    pub fn fock_dim(&self) -> usize {
        self.cutoffs.iter().map(|n| n + 1).product()
    }

    pub fn dim(&self) -> usize {
        2 * self.fock_dim()
    }

    /// Stride of mode `m` inside the Fock index.
    pub fn mode_stride(&self, mode: usize) -> usize {
        self.cutoffs[mode + 1..].iter().map(|n| n + 1).product()
    }

    pub fn fock_index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.cutoffs.len() {
            return Err(Error::DimensionMismatch { expected: self.cutoffs.len(), got: occupations.len() });
        }
        let mut idx = 0;
        for (&n, &cut) in occupations.iter().zip(&self.cutoffs) {
            if n > cut {
                return Err(Error::InvalidInput(format!("occupation {n} exceeds cutoff {cut}")));
            }
            idx = idx * (cut + 1) + n;
        }
        Ok(idx)
    }

    pub fn index(&self, spin: Spin, occupations: &[usize]) -> Result<usize> {
        Ok(2 * self.fock_index(occupations)? + spin.offset())
    }

    pub fn index_of(&self, state: &BasisState) -> Result<usize> {
        self.index(state.spin, &state.occupations)
    }

    pub fn label(&self, index: usize) -> BasisState {
        assert!(index < self.dim(), "index {index} out of range");
        let spin = if index.is_multiple_of(2) { Spin::Up } else { Spin::Down };
        let mut rest = index / 2;
        let mut occupations = vec![0; self.cutoffs.len()];
        for (slot, &cut) in occupations.iter_mut().zip(&self.cutoffs).rev() {
            *slot = rest % (cut + 1);
            rest /= cut + 1;
        }
        BasisState { spin, occupations }
    }

    pub fn states(&self) -> impl Iterator<Item = BasisState> + '_ {
        (0..self.dim()).map(|i| self.label(i))
    }
}

/// Real symmetric band matrix; `bands[d][i] = A[i][i + d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BandedSymmetric<T> {
    dim: usize,
    bands: Vec<Vec<T>>,
}

impl<T: Real> BandedSymmetric<T> {
    pub fn zeros(dim: usize, bandwidth: usize) -> Self {
        let bandwidth = bandwidth.min(dim.saturating_sub(1));
        let bands = (0..=bandwidth).map(|d| vec![T::zero(); dim - d]).collect();
        Self { dim, bands }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> usize {
        self.bands.len() - 1
    }

    /// Adds `v` to `A[i][j]` and `A[j][i]` (once on the diagonal).
    pub fn add(&mut self, i: usize, j: usize, v: T) {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        assert!(d < self.bands.len(), "entry ({i},{j}) outside band");
        self.bands[d][lo] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
        let d = hi - lo;
        if d < self.bands.len() {
            self.bands[d][lo]
        } else {
            T::zero()
        }
    }

    pub fn diagonal(&self) -> &[T] {
        &self.bands[0]
    }

    pub fn band(&self, d: usize) -> &[T] {
        &self.bands[d]
    }

    pub fn apply(&self, x: &[C<T>], y: &mut [C<T>]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (yi, (xi, di)) in y.iter_mut().zip(x.iter().zip(&self.bands[0])) {
            *yi = xi.scale(*di);
        }
        for (d, band) in self.bands.iter().enumerate().skip(1) {
            for (i, &b) in band.iter().enumerate() {
                if b != T::zero() {
                    y[i] += x[i + d].scale(b);
                    y[i + d] += x[i].scale(b);
                }
            }
        }
    }

    pub fn apply_real(&self, x: &[T], y: &mut [T]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for (yi, (xi, di)) in y.iter_mut().zip(x.iter().zip(&self.bands[0])) {
            *yi = *xi * *di;
        }
        for (d, band) in self.bands.iter().enumerate().skip(1) {
            for (i, &b) in band.iter().enumerate() {
                if b != T::zero() {
                    y[i] += x[i + d] * b;
                    y[i + d] += x[i] * b;
                }
            }
        }
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (d, band) in self.bands.iter().enumerate() {
            for (i, &b) in band.iter().enumerate() {
                m[(i, i + d)] = b;
                m[(i + d, i)] = b;
            }
        }
        m
    }
}

/// Hermitian operator on a truncated space: real symmetric banded storage
/// when the operator is real, dense complex otherwise.
#[derive(Debug, Clone, PartialEq)]
pub enum HermitianMatrix<T> {
    Banded(BandedSymmetric<T>),
    Dense(DMatrix<C<T>>),
}

impl<T: Real> HermitianMatrix<T> {
    /// Validates hermiticity entrywise and stores the matrix.
    pub fn from_dense(m: DMatrix<C<T>>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch { expected: m.nrows(), got: m.ncols() });
        }
        let dev = hermitian_deviation(&m);
        let scale = m.iter().fold(T::one(), |acc, z| acc.max(z.norm()));
        if dev > hermitian_tolerance::<T>() * scale {
            return Err(Error::NotHermitian { deviation: dev.as_f64() });
        }
        Ok(HermitianMatrix::Dense(m))
    }

    pub fn from_real_dense(m: &DMatrix<T>) -> Result<Self> {
        Self::from_dense(m.map(cr))
    }

    pub fn dim(&self) -> usize {
        match self {
            HermitianMatrix::Banded(b) => b.dim(),
            HermitianMatrix::Dense(m) => m.nrows(),
        }
    }

    pub fn is_real(&self) -> bool {
        match self {
            HermitianMatrix::Banded(_) => true,
            HermitianMatrix::Dense(m) => m.iter().all(|z| z.im == T::zero()),
        }
    }

    pub fn get(&self, i: usize, j: usize) -> C<T> {
        match self {
            HermitianMatrix::Banded(b) => cr(b.get(i, j)),
            HermitianMatrix::Dense(m) => m[(i, j)],
        }
    }

    pub fn apply_into(&self, x: &[C<T>], y: &mut [C<T>]) {
        match self {
            HermitianMatrix::Banded(b) => b.apply(x, y),
            HermitianMatrix::Dense(m) => {
                let n = m.nrows();
                assert_eq!(x.len(), n);
                for (i, yi) in y.iter_mut().enumerate() {
                    let mut acc = C::new(T::zero(), T::zero());
                    for (j, xj) in x.iter().enumerate() {
                        acc += m[(i, j)] * xj;
                    }
                    *yi = acc;
                }
            }
        }
    }

    pub fn apply(&self, x: &[C<T>]) -> Vec<C<T>> {
        let mut y = vec![C::new(T::zero(), T::zero()); self.dim()];
        self.apply_into(x, &mut y);
        y
    }

    /// `<x|A|x>` (real for Hermitian `A`).
    pub fn expectation(&self, x: &[C<T>]) -> T {
        let y = self.apply(x);
        crate::scalar::inner(x, &y).re
    }

    pub fn to_dense(&self) -> DMatrix<C<T>> {
        match self {
            HermitianMatrix::Banded(b) => b.to_dense().map(cr),
            HermitianMatrix::Dense(m) => m.clone(),
        }
    }

    pub fn trace(&self) -> T {
        match self {
            HermitianMatrix::Banded(b) => b.diagonal().iter().copied().sum(),
            HermitianMatrix::Dense(m) => (0..m.nrows()).map(|i| m[(i, i)].re).sum(),
        }
    }

    /// Max absolute row sum (the induced infinity norm).
    pub fn inf_norm(&self) -> T {
        let n = self.dim();
        let mut rows = vec![T::zero(); n];
        match self {
            HermitianMatrix::Banded(b) => {
                for d in 0..=b.bandwidth() {
                    for (i, &v) in b.band(d).iter().enumerate() {
                        rows[i] += v.abs();
                        if d > 0 {
                            rows[i + d] += v.abs();
                        }
                    }
                }
            }
            HermitianMatrix::Dense(m) => {
                for (i, r) in rows.iter_mut().enumerate() {
                    *r = (0..n).map(|j| m[(i, j)].norm()).sum();
                }
            }
        }
        rows.into_iter().fold(T::zero(), T::max)
    }

    /// Restriction to the listed basis indices.
    pub fn submatrix(&self, indices: &[usize]) -> DMatrix<C<T>> {
        DMatrix::from_fn(indices.len(), indices.len(), |a, b| self.get(indices[a], indices[b]))
    }
}

pub(crate) fn hermitian_tolerance<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(64.0))
}

pub fn hermitian_deviation<T: Real>(m: &DMatrix<C<T>>) -> T {
    let n = m.nrows();
    let mut dev = T::zero();
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState<T> {
    layout: BasisLayout,
    amplitudes: Vec<C<T>>,
}

impl<T: Real> QuantumState<T> {
    /// Wraps and normalizes an amplitude vector.
    pub fn from_amplitudes(layout: BasisLayout, mut amplitudes: Vec<C<T>>) -> Result<Self> {
        if amplitudes.len() != layout.dim() {
            return Err(Error::DimensionMismatch { expected: layout.dim(), got: amplitudes.len() });
        }
        let norm = crate::scalar::norm_sqr(&amplitudes).sqrt();
        if !(norm > T::zero()) || !norm.is_finite() {
            return Err(Error::InvalidInput("state has zero or non-finite norm".into()));
        }
        for a in amplitudes.iter_mut() {
            *a = a.unscale(norm);
        }
        Ok(Self { layout, amplitudes })
    }

    pub(crate) fn from_normalized(layout: BasisLayout, amplitudes: Vec<C<T>>) -> Self {
        debug_assert_eq!(layout.dim(), amplitudes.len());
        Self { layout, amplitudes }
    }

    pub fn layout(&self) -> &BasisLayout {
        &self.layout
    }

    pub fn amplitudes(&self) -> &[C<T>] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<C<T>> {
        self.amplitudes
    }

    pub fn norm_sqr(&self) -> T {
        crate::scalar::norm_sqr(&self.amplitudes)
    }

    /// Highest occupation of any mode carrying nonzero amplitude.
    pub fn max_occupation(&self) -> usize {
        self.amplitudes
            .iter()
            .enumerate()
            .filter(|(_, a)| a.norm_sqr() > T::zero())
            .flat_map(|(i, _)| self.layout.label(i).occupations)
            .max()
            .unwrap_or(0)
    }

    /// Same product state on a different layout (used when the cutoff grows).
    pub fn relayout(&self, layout: &BasisLayout) -> Result<Self> {
        let mut amps = vec![C::new(T::zero(), T::zero()); layout.dim()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.norm_sqr() > T::zero() {
                amps[layout.index_of(&self.layout.label(i))?] = *a;
            }
        }
        Ok(Self { layout: layout.clone(), amplitudes: amps })
    }
}

/// Product state `|s> (x) |n_1, ..>`.
pub fn basis_state<T: Real>(spin: SpinLabel, occupations: &[usize], layout: &BasisLayout) -> Result<QuantumState<T>> {
    let up = layout.index(Spin::Up, occupations)?;
    let down = layout.index(Spin::Down, occupations)?;
    let h = T::FRAC_1_SQRT_2();
    let zero = C::new(T::zero(), T::zero());
    let (a_up, a_down) = match spin {
        SpinLabel::Up => (C::new(T::one(), T::zero()), zero),
        SpinLabel::Down => (zero, C::new(T::one(), T::zero())),
        SpinLabel::Plus => (cr(h), cr(h)),
        SpinLabel::Minus => (cr(h), cr(-h)),
        SpinLabel::Phase(phi) => (crate::scalar::cis(T::lit(phi)).scale(h), cr(h)),
    };
    let mut amps = vec![zero; layout.dim()];
    amps[up] = a_up;
    amps[down] = a_down;
    Ok(QuantumState::from_normalized(layout.clone(), amps))
}

/// `(|down> + e^{i phi}|up>) |n> / sqrt 2`.
pub fn phase_superposition<T: Real>(phi: f64, occupations: &[usize], layout: &BasisLayout) -> Result<QuantumState<T>> {
    basis_state(SpinLabel::Phase(phi), occupations, layout)
}

/// Annihilation and creation matrices on Fock levels `0..=n_max`.
pub fn boson_ladder<T: Real>(n_max: usize) -> (DMatrix<T>, DMatrix<T>) {
    let n = n_max + 1;
    let mut a = DMatrix::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = T::from_usize_exact(k).sqrt();
    }
    let adag = a.transpose();
    (a, adag)
}

/// Quadrature `G = (a^dag + a)/2` on a single mode.
pub fn quadrature_g<T: Real>(n_max: usize) -> HermitianMatrix<T> {
    let mut b = BandedSymmetric::zeros(n_max + 1, 1);
    let half = T::lit(0.5);
    for k in 1..=n_max {
        b.add(k - 1, k, half * T::from_usize_exact(k).sqrt());
    }
    HermitianMatrix::Banded(b)
}

/// `G = (a_m^dag + a_m)/2` for mode `mode`, embedded in the full layout.
pub fn quadrature_g_full<T: Real>(layout: &BasisLayout, mode: usize) -> HermitianMatrix<T> {
    let stride = 2 * layout.mode_stride(mode);
    let mut b = BandedSymmetric::zeros(layout.dim(), stride);
    let half = T::lit(0.5);
    for i in 0..layout.dim() {
        let st = layout.label(i);
        let n = st.occupations[mode];
        if n < layout.cutoffs()[mode] {
            b.add(i, i + stride, half * T::from_usize_exact(n + 1).sqrt());
        }
    }
    HermitianMatrix::Banded(b)
}

/// Real diagonal operator.
pub fn diagonal_operator<T: Real>(values: Vec<T>) -> HermitianMatrix<T> {
    let mut b = BandedSymmetric::zeros(values.len(), 0);
    for (i, v) in values.into_iter().enumerate() {
        b.add(i, i, v);
    }
    HermitianMatrix::Banded(b)
}

/// `sigma_x (x) 1` in banded storage.
pub fn sigma_x_full<T: Real>(layout: &BasisLayout) -> HermitianMatrix<T> {
    let mut b = BandedSymmetric::zeros(layout.dim(), 1);
    for f in 0..layout.fock_dim() {
        b.add(2 * f, 2 * f + 1, T::one());
    }
    HermitianMatrix::Banded(b)
}

/// `sigma_z (x) 1` in banded storage.
pub fn sigma_z_full<T: Real>(layout: &BasisLayout) -> HermitianMatrix<T> {
    diagonal_operator((0..layout.dim()).map(|i| if i % 2 == 0 { T::one() } else { -T::one() }).collect())
}

pub mod pauli {
    //! Pauli matrices in the `(up, down)` ordering.
    use super::*;

    fn m2<T: Real>(e: [[C<T>; 2]; 2]) -> DMatrix<C<T>> {
        DMatrix::from_fn(2, 2, |i, j| e[i][j])
    }

    pub fn sigma_x<T: Real>() -> DMatrix<C<T>> {
        let (o, l) = (cr(T::zero()), cr(T::one()));
        m2([[o, l], [l, o]])
    }

    pub fn sigma_y<T: Real>() -> DMatrix<C<T>> {
        let o = cr(T::zero());
        let i = Complex::new(T::zero(), T::one());
        m2([[o, -i], [i, o]])
    }

    pub fn sigma_z<T: Real>() -> DMatrix<C<T>> {
        let (o, l) = (cr(T::zero()), cr(T::one()));
        m2([[l, o], [o, -l]])
    }

    /// Raising operator `|up><down|`.
    pub fn sigma_plus<T: Real>() -> DMatrix<C<T>> {
        let (o, l) = (cr(T::zero()), cr(T::one()));
        m2([[o, l], [o, o]])
    }

    pub fn sigma_minus<T: Real>() -> DMatrix<C<T>> {
        sigma_plus::<T>().transpose()
    }
}

pub fn to_complex<T: Real>(m: &DMatrix<T>) -> DMatrix<C<T>> {
    m.map(cr)
}

fn kron<T: Real>(a: &DMatrix<C<T>>, b: &DMatrix<C<T>>) -> DMatrix<C<T>> {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Tensor product of per-factor operators in the layout's index ordering;
/// `None` stands for the identity on that factor.
pub fn embed<T: Real>(
    spin_part: Option<&DMatrix<C<T>>>,
    mode_parts: &[Option<&DMatrix<C<T>>>],
    layout: &BasisLayout,
) -> Result<DMatrix<C<T>>> {
    if mode_parts.len() != layout.n_modes() {
        return Err(Error::DimensionMismatch { expected: layout.n_modes(), got: mode_parts.len() });
    }
    let eye = |n: usize| DMatrix::<C<T>>::identity(n, n);
    let check = |m: &DMatrix<C<T>>, n: usize| -> Result<()> {
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.nrows().max(m.ncols()) });
        }
        Ok(())
    };
    let mut acc = DMatrix::<C<T>>::identity(1, 1);
    for (part, &cut) in mode_parts.iter().zip(layout.cutoffs()) {
        let f = match part {
            Some(m) => {
                check(m, cut + 1)?;
                (*m).clone()
            }
            None => eye(cut + 1),
        };
        acc = kron(&acc, &f);
    }
    let s = match spin_part {
        Some(m) => {
            check(m, 2)?;
            m.clone()
        }
        None => eye(2),
    };
    Ok(kron(&acc, &s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ladder_entries() {
        let (a, adag) = boson_ladder::<f64>(1);
        assert_eq!(a, DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_eq!(adag, a.transpose());

        let (a, _) = boson_ladder::<f64>(2);
        assert_eq!(a[(0, 1)], 1.0);
        assert_abs_diff_eq!(a[(1, 2)], 2f64.sqrt());
        assert_eq!(a.iter().filter(|v| **v != 0.0).count(), 2);
    }

    #[test]
    fn number_operator_diagonal() {
        let (a, adag) = boson_ladder::<f64>(6);
        let n = adag * a;
        for k in 0..=6 {
            assert_abs_diff_eq!(n[(k, k)], k as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn quadrature_matrix_and_variances() {
        let g = quadrature_g::<f64>(1).to_dense();
        assert_eq!(g[(0, 1)].re, 0.5);
        assert_eq!(g[(0, 0)].re, 0.0);

        let g = quadrature_g::<f64>(10).to_dense();
        let g2 = &g * &g;
        assert_abs_diff_eq!(g2[(0, 0)].re, 0.25, epsilon = 1e-15);
        for n in 0..10 {
            assert_abs_diff_eq!(g2[(n, n)].re, (2 * n + 1) as f64 / 4.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn layout_bijection() {
        for layout in [BasisLayout::single(7), BasisLayout::two_mode(3, 4)] {
            for i in 0..layout.dim() {
                assert_eq!(layout.index_of(&layout.label(i)).unwrap(), i);
            }
        }
        let l = BasisLayout::single(3);
        assert_eq!(l.index(Spin::Down, &[2]).unwrap(), 5);
        assert!(l.index(Spin::Up, &[4]).is_err());
    }

    #[test]
    fn embed_spin_and_number() {
        let layout = BasisLayout::single(3);
        let sz = embed::<f64>(Some(&pauli::sigma_z()), &[None], &layout).unwrap();
        for i in 0..layout.dim() {
            let expect = layout.label(i).spin.sz() as f64;
            assert_eq!(sz[(i, i)].re, expect);
        }
        let (a, adag) = boson_ladder::<f64>(3);
        let num = to_complex(&(adag * a));
        let n_full = embed(None, &[Some(&num)], &layout).unwrap();
        for i in 0..layout.dim() {
            assert_abs_diff_eq!(n_full[(i, i)].re, layout.label(i).occupations[0] as f64, epsilon = 1e-14);
        }
    }

    #[test]
    fn embed_hermitian_and_mismatch() {
        let layout = BasisLayout::single(4);
        let g = quadrature_g::<f64>(4).to_dense();
        let sxg = embed(Some(&pauli::sigma_x()), &[Some(&g)], &layout).unwrap();
        assert!(HermitianMatrix::from_dense(sxg).is_ok());

        let wrong = quadrature_g::<f64>(3).to_dense();
        assert!(matches!(embed(None, &[Some(&wrong)], &layout), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn full_quadrature_matches_embed() {
        let layout = BasisLayout::two_mode(2, 3);
        for mode in 0..2 {
            let g = quadrature_g::<f64>(layout.cutoffs()[mode]).to_dense();
            let parts: Vec<Option<&DMatrix<C<f64>>>> =
                (0..2).map(|m| if m == mode { Some(&g) } else { None }).collect();
            let dense = embed(None, &parts, &layout).unwrap();
            assert_eq!(quadrature_g_full::<f64>(&layout, mode).to_dense(), dense);
        }
    }

    #[test]
    fn basis_states() {
        let layout = BasisLayout::single(2);
        let s = basis_state::<f64>(SpinLabel::Down, &[0], &layout).unwrap();
        assert_eq!(s.amplitudes().iter().filter(|a| a.norm() > 0.0).count(), 1);
        assert_eq!(s.amplitudes()[1].re, 1.0);

        let p = basis_state::<f64>(SpinLabel::Plus, &[0], &layout).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(p.amplitudes()[0].re, h);
        assert_abs_diff_eq!(p.amplitudes()[1].re, h);
        // sigma_x |+> = |+>
        let sx = HermitianMatrix::from_dense(embed(Some(&pauli::sigma_x()), &[None], &layout).unwrap()).unwrap();
        assert_abs_diff_eq!(sx.expectation(p.amplitudes()), 1.0, epsilon = 1e-15);

        let ph = phase_superposition::<f64>(std::f64::consts::FRAC_PI_2, &[0], &layout).unwrap();
        // (down, up) = (1, i)/sqrt 2
        assert_abs_diff_eq!(ph.amplitudes()[1].re, h, epsilon = 1e-15);
        assert_abs_diff_eq!(ph.amplitudes()[0].im, h, epsilon = 1e-15);
        assert_abs_diff_eq!(ph.amplitudes()[0].re, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(ph.norm_sqr(), 1.0, epsilon = 1e-15);

        assert!(basis_state::<f64>(SpinLabel::Up, &[3], &layout).is_err());
    }

    #[test]
    fn dense_hermitian_rejects_asymmetric() {
        let (a, _) = boson_ladder::<f64>(2);
        assert!(matches!(HermitianMatrix::from_real_dense(&a), Err(Error::NotHermitian { .. })));
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn cmat(n: usize) -> impl Strategy<Value = DMatrix<C<f64>>> {
        proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0), n * n)
            .prop_map(move |v| DMatrix::from_fn(n, n, |i, j| C::new(v[i * n + j].0, v[i * n + j].1)))
    }

    proptest! {
        #[test]
        fn embed_is_multiplicative(
            s1 in cmat(2), s2 in cmat(2), m1 in cmat(3), m2 in cmat(3)
        ) {
            let layout = BasisLayout::single(2);
            let lhs = embed(Some(&s1), &[Some(&m1)], &layout).unwrap()
                * embed(Some(&s2), &[Some(&m2)], &layout).unwrap();
            let rhs = embed(Some(&(&s1 * &s2)), &[Some(&(&m1 * &m2))], &layout).unwrap();
            for (a, b) in lhs.iter().zip(rhs.iter()) {
                prop_assert!((a - b).norm() < 1e-12);
            }
        }

        #[test]
        fn basis_states_are_normalized(n in 0usize..5, phi in 0.0f64..6.3) {
            let layout = BasisLayout::single(5);
            for label in [SpinLabel::Up, SpinLabel::Down, SpinLabel::Plus, SpinLabel::Minus, SpinLabel::Phase(phi)] {
                let s = basis_state::<f64>(label, &[n], &layout).unwrap();
                prop_assert!((s.norm_sqr() - 1.0).abs() < 1e-15);
            }
        }
    }
}
