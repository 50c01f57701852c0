use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::{BasisLayout, HermitianMatrix, QuantumState};
use crate::scalar::{cis, norm_sqr, Real, C};
use crate::spectral::{BlockVectors, Spectrum};

/// Eigencomponents whose summed weight stays below this are dropped from
/// an [`Evolver`].
pub const DEFAULT_TAIL_WEIGHT: f64 = 1e-20;

/// Time points evaluated per batched matrix product.
const TIME_BATCH: usize = 256;

/// Coefficients `<E_k|x>` of a full-space vector, stored per block.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenCoefficients<T> {
    pub per_block: Vec<Vec<C<T>>>,
}

impl<T: Real> EigenCoefficients<T> {
    pub fn project(spectrum: &Spectrum<T>, x: &[C<T>]) -> Result<Self> {
        if x.len() != spectrum.dim() {
            return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: x.len() });
        }
        let mut per_block = Vec::with_capacity(spectrum.blocks().len());
        for blk in spectrum.blocks() {
            let v = blk.vectors.as_ref().ok_or(Error::MissingVectors)?;
            let local: Vec<C<T>> = blk.support.iter().map(|&i| x[i]).collect();
            per_block.push(v.project(&local));
        }
        Ok(Self { per_block })
    }

    /// Multiplies coefficient `k` by `e^{-i E_k t}`.
    pub fn propagate(&mut self, spectrum: &Spectrum<T>, t: T) {
        for (coeffs, blk) in self.per_block.iter_mut().zip(spectrum.blocks()) {
            for (c, e) in coeffs.iter_mut().zip(&blk.values) {
                *c *= cis(-*e * t);
            }
        }
    }

    pub fn synthesize(&self, spectrum: &Spectrum<T>) -> Vec<C<T>> {
        let mut out = vec![C::new(T::zero(), T::zero()); spectrum.dim()];
        for (coeffs, blk) in self.per_block.iter().zip(spectrum.blocks()) {
            let v = blk.vectors.as_ref().expect("projected spectra carry vectors");
            let cols: Vec<usize> = (0..coeffs.len()).collect();
            let mut local = vec![C::new(T::zero(), T::zero()); blk.support.len()];
            v.combine(&cols, coeffs, &mut local);
            for (&i, z) in blk.support.iter().zip(local) {
                out[i] = z;
            }
        }
        out
    }

    pub fn weight(&self) -> T {
        self.per_block.iter().map(|c| norm_sqr(c)).sum()
    }
}

/// `e^{-iHt}|x>` for an arbitrary full-space vector.
pub(crate) fn propagate_vector<T: Real>(spectrum: &Spectrum<T>, x: &[C<T>], t: T) -> Result<Vec<C<T>>> {
    let mut c = EigenCoefficients::project(spectrum, x)?;
    c.propagate(spectrum, t);
    Ok(c.synthesize(spectrum))
}

#[derive(Debug, Clone, Copy)]
struct Term<T> {
    block: usize,
    col: usize,
    energy: T,
    coeff: C<T>,
}

/// `psi(t) = sum_k c_k e^{-i E_k t} |E_k>` restricted to the eigenstates that
/// carry the initial state.
#[derive(Debug, Clone)]
pub struct Evolver<'s, T> {
    spectrum: &'s Spectrum<T>,
    layout: BasisLayout,
    terms: Vec<Term<T>>,
    discarded_weight: T,
}

/// Hermitian matrix `<E_k|O|E_l>` on an evolver's retained eigenstates, split
/// into a symmetric real part and an antisymmetric imaginary part.
#[derive(Debug, Clone, PartialEq)]
pub struct Reduced<T> {
    pub re: DMatrix<T>,
    pub im: Option<DMatrix<T>>,
}

impl<T: Real> Reduced<T> {
    fn from_complex(m: DMatrix<C<T>>) -> Self {
        let re = m.map(|z| z.re);
        let im = m.map(|z| z.im);
        let im = if im.iter().all(|x| *x == T::zero()) { None } else { Some(im) };
        Self { re, im }
    }

    pub fn dim(&self) -> usize {
        self.re.nrows()
    }
}

impl<'s, T: Real> Evolver<'s, T> {
    pub fn new(spectrum: &'s Spectrum<T>, psi0: &QuantumState<T>) -> Result<Self> {
        Self::with_tail(spectrum, psi0, T::lit(DEFAULT_TAIL_WEIGHT))
    }

    /// Drops the smallest eigencomponents as long as their summed weight
    /// stays at or below `tail_weight`.
    pub fn with_tail(spectrum: &'s Spectrum<T>, psi0: &QuantumState<T>, tail_weight: T) -> Result<Self> {
        if psi0.layout().dim() != spectrum.dim() {
            return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: psi0.layout().dim() });
        }
        if !spectrum.has_vectors() {
            return Err(Error::MissingVectors);
        }
        let coeffs = EigenCoefficients::project(spectrum, psi0.amplitudes())?;
        let outside = (psi0.norm_sqr() - coeffs.weight()).as_f64();
        if outside > 1e-10 {
            return Err(Error::UncoveredState { outside });
        }
        let mut terms: Vec<Term<T>> = Vec::new();
        for (b, cs) in coeffs.per_block.iter().enumerate() {
            for (k, c) in cs.iter().enumerate() {
                if c.norm_sqr() > T::zero() {
                    terms.push(Term { block: b, col: k, energy: spectrum.blocks()[b].values[k], coeff: *c });
                }
            }
        }
        terms.sort_by(|a, b| a.coeff.norm_sqr().partial_cmp(&b.coeff.norm_sqr()).unwrap_or(std::cmp::Ordering::Equal));
        let mut dropped = 0;
        let mut discarded = T::zero();
        for t in &terms {
            let w = t.coeff.norm_sqr();
            if discarded + w > tail_weight {
                break;
            }
            discarded += w;
            dropped += 1;
        }
        terms.drain(..dropped);
        terms.sort_by_key(|t| (t.block, t.col));
        Ok(Self { spectrum, layout: psi0.layout().clone(), terms, discarded_weight: discarded })
    }

    pub fn spectrum(&self) -> &'s Spectrum<T> {
        self.spectrum
    }

    pub fn layout(&self) -> &BasisLayout {
        &self.layout
    }

    /// Number of retained eigencomponents.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn discarded_weight(&self) -> T {
        self.discarded_weight
    }

    pub fn energies(&self) -> Vec<T> {
        self.terms.iter().map(|t| t.energy).collect()
    }

    pub fn weights(&self) -> Vec<T> {
        self.terms.iter().map(|t| t.coeff.norm_sqr()).collect()
    }

    /// `<psi0|H|psi0>` from the retained components.
    pub fn mean_energy(&self) -> T {
        self.terms.iter().map(|t| t.coeff.norm_sqr() * t.energy).sum()
    }

    /// Retained eigen-amplitudes `c_k e^{-i E_k t}`.
    pub fn amplitudes_at(&self, t: T) -> Vec<C<T>> {
        self.terms.iter().map(|x| x.coeff * cis(-x.energy * t)).collect()
    }

    pub fn state_at(&self, t: T) -> QuantumState<T> {
        let amps = self.amplitudes_at(t);
        let mut out = vec![C::new(T::zero(), T::zero()); self.layout.dim()];
        let mut start = 0;
        while start < self.terms.len() {
            let b = self.terms[start].block;
            let end = start + self.terms[start..].iter().take_while(|x| x.block == b).count();
            let blk = &self.spectrum.blocks()[b];
            let v = blk.vectors.as_ref().expect("checked in constructor");
            let cols: Vec<usize> = self.terms[start..end].iter().map(|x| x.col).collect();
            let mut local = vec![C::new(T::zero(), T::zero()); blk.support.len()];
            v.combine(&cols, &amps[start..end], &mut local);
            for (&i, z) in blk.support.iter().zip(local) {
                out[i] = z;
            }
            start = end;
        }
        QuantumState::from_normalized(self.layout.clone(), out)
    }

    fn all_real(&self, op: &HermitianMatrix<T>) -> bool {
        matches!(op, HermitianMatrix::Banded(_))
            && self.spectrum.blocks().iter().all(|b| matches!(b.vectors, Some(BlockVectors::Real(_))))
    }

    /// Retained eigenvectors as columns of a real full-space matrix.
    fn real_columns(&self) -> DMatrix<T> {
        let mut v = DMatrix::zeros(self.layout.dim(), self.terms.len());
        for (j, t) in self.terms.iter().enumerate() {
            let blk = &self.spectrum.blocks()[t.block];
            if let Some(BlockVectors::Real(m)) = &blk.vectors {
                for (r, &i) in blk.support.iter().enumerate() {
                    v[(i, j)] = m[(r, t.col)];
                }
            }
        }
        v
    }

    fn complex_columns(&self) -> DMatrix<C<T>> {
        let mut v = DMatrix::from_element(self.layout.dim(), self.terms.len(), C::new(T::zero(), T::zero()));
        for (j, t) in self.terms.iter().enumerate() {
            let blk = &self.spectrum.blocks()[t.block];
            let vecs = blk.vectors.as_ref().expect("checked in constructor");
            for (r, &i) in blk.support.iter().enumerate() {
                v[(i, j)] = vecs.get(r, t.col);
            }
        }
        v
    }

    /// `<E_k|O|E_l>` and, when `with_square`, `<E_k|O^2|E_l>` with the square
    /// taken inside the truncated space.
    pub fn reduce(&self, op: &HermitianMatrix<T>, with_square: bool) -> Result<(Reduced<T>, Option<Reduced<T>>)> {
        if op.dim() != self.layout.dim() {
            return Err(Error::DimensionMismatch { expected: self.layout.dim(), got: op.dim() });
        }
        if self.all_real(op) {
            let HermitianMatrix::Banded(b) = op else { unreachable!() };
            let v = self.real_columns();
            let mut w = DMatrix::zeros(v.nrows(), v.ncols());
            let mut y = vec![T::zero(); v.nrows()];
            for j in 0..v.ncols() {
                let x: Vec<T> = v.column(j).iter().copied().collect();
                b.apply_real(&x, &mut y);
                w.column_mut(j).copy_from_slice(&y);
            }
            let o = v.transpose() * &w;
            let sq = with_square.then(|| Reduced { re: w.transpose() * &w, im: None });
            Ok((Reduced { re: o, im: None }, sq))
        } else {
            let v = self.complex_columns();
            let mut w = v.clone();
            for j in 0..v.ncols() {
                let x: Vec<C<T>> = v.column(j).iter().copied().collect();
                let y = op.apply(&x);
                w.column_mut(j).copy_from_slice(&y);
            }
            let o = v.map(|z| z.conj()).transpose() * &w;
            let sq = with_square.then(|| Reduced::from_complex(w.map(|z| z.conj()).transpose() * &w));
            Ok((Reduced::from_complex(o), sq))
        }
    }

    /// `<psi(t)|O|psi(t)>` for every operator and time, evaluated in batches
    /// of time points as matrix products.
    pub fn expectation_series(&self, ops: &[&Reduced<T>], times: &[T]) -> Vec<Vec<T>> {
        use rayon::prelude::*;
        let k = self.terms.len();
        for op in ops {
            assert_eq!(op.dim(), k, "reduced operator from a different evolver");
        }
        let batches: Vec<Vec<Vec<T>>> = times
            .par_chunks(TIME_BATCH)
            .map(|chunk| {
                let mut x = DMatrix::zeros(k, chunk.len());
                let mut y = DMatrix::zeros(k, chunk.len());
                for (j, t) in chunk.iter().enumerate() {
                    for (i, a) in self.amplitudes_at(*t).into_iter().enumerate() {
                        x[(i, j)] = a.re;
                        y[(i, j)] = a.im;
                    }
                }
                ops.iter()
                    .map(|op| {
                        // a^dag (R + iI) a = x'Rx + y'Ry - 2 x'Iy
                        let rx = &op.re * &x;
                        let ry = &op.re * &y;
                        let iy = op.im.as_ref().map(|im| im * &y);
                        (0..chunk.len())
                            .map(|j| {
                                let mut acc = x.column(j).dot(&rx.column(j)) + y.column(j).dot(&ry.column(j));
                                if let Some(iy) = &iy {
                                    acc -= T::lit(2.0) * x.column(j).dot(&iy.column(j));
                                }
                                acc
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let mut out = vec![Vec::with_capacity(times.len()); ops.len()];
        for batch in batches {
            for (o, vals) in out.iter_mut().zip(batch) {
                o.extend(vals);
            }
        }
        out
    }
}

/// `e^{-iHt}|psi0>` through the spectral decomposition.
pub fn evolve<T: Real>(spectrum: &Spectrum<T>, psi0: &QuantumState<T>, t: T) -> Result<QuantumState<T>> {
    if psi0.layout().dim() != spectrum.dim() {
        return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: psi0.layout().dim() });
    }
    if !spectrum.has_vectors() {
        return Err(Error::MissingVectors);
    }
    let out = propagate_vector(spectrum, psi0.amplitudes(), t)?;
    let lost = (psi0.norm_sqr() - norm_sqr(&out)).as_f64();
    if lost > 1e-10 {
        return Err(Error::UncoveredState { outside: lost });
    }
    Ok(QuantumState::from_normalized(psi0.layout().clone(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::{basis_state, quadrature_g_full, SpinLabel};
    use crate::models::ModelParams;
    use crate::scalar::inner;
    use crate::spectral::solve_model;

    fn qr_setup(g: f64, n: usize) -> (BasisLayout, Spectrum<f64>) {
        let p = ModelParams::qr(1.0, 4.0, g).unwrap();
        solve_model(&p, &[n], true).unwrap()
    }

    #[test]
    fn time_zero_is_identity() {
        let (layout, spec) = qr_setup(0.7, 30);
        let psi = basis_state::<f64>(SpinLabel::Plus, &[2], &layout).unwrap();
        let out = evolve(&spec, &psi, 0.0).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn eigenstate_only_rotates_phase() {
        let (layout, spec) = qr_setup(0.9, 25);
        let v = spec.eigenvector(3).unwrap();
        let psi = QuantumState::from_amplitudes(layout, v).unwrap();
        let out = evolve(&spec, &psi, 7.3).unwrap();
        for (a, b) in out.amplitudes().iter().zip(psi.amplitudes()) {
            assert!((a.norm() - b.norm()).abs() < 1e-12);
        }
        let overlap = inner(psi.amplitudes(), out.amplitudes()).norm();
        assert!((overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn unitarity_over_many_times() {
        let (layout, spec) = qr_setup(1.3, 40);
        let psi = basis_state::<f64>(SpinLabel::Plus, &[0], &layout).unwrap();
        let ev = Evolver::new(&spec, &psi).unwrap();
        let mut t = 0.37;
        for _ in 0..100 {
            t = (t * 7.919 + 0.113) % 50.0;
            assert!((ev.state_at(t).norm_sqr() - 1.0).abs() < 1e-10);
            assert!((evolve(&spec, &psi, t).unwrap().norm_sqr() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn evolver_matches_full_propagation() {
        let (layout, spec) = qr_setup(1.1, 30);
        let psi = basis_state::<f64>(SpinLabel::Down, &[1], &layout).unwrap();
        let ev = Evolver::new(&spec, &psi).unwrap();
        let a = ev.state_at(3.1);
        let b = evolve(&spec, &psi, 3.1).unwrap();
        for (x, y) in a.amplitudes().iter().zip(b.amplitudes()) {
            assert!((x - y).norm() < 1e-9);
        }
    }

    #[test]
    fn reduced_expectations_match_direct() {
        let (layout, spec) = qr_setup(1.2, 40);
        let psi = basis_state::<f64>(SpinLabel::Plus, &[1], &layout).unwrap();
        let ev = Evolver::new(&spec, &psi).unwrap();
        let g = quadrature_g_full::<f64>(&layout, 0);
        let (rg, rg2) = ev.reduce(&g, true).unwrap();
        let rg2 = rg2.unwrap();
        let times = [0.0, 0.5, 2.0, 9.0];
        let series = ev.expectation_series(&[&rg, &rg2], &times);
        for (j, &t) in times.iter().enumerate() {
            let s = ev.state_at(t);
            let gs = g.apply(s.amplitudes());
            let mean = inner(s.amplitudes(), &gs).re;
            let sq = norm_sqr(&gs);
            assert!((series[0][j] - mean).abs() < 1e-10);
            assert!((series[1][j] - sq).abs() < 1e-10);
        }
    }

    #[test]
    fn missing_vectors_rejected() {
        let p = ModelParams::qr(1.0, 4.0, 0.5).unwrap();
        let (layout, spec) = solve_model(&p, &[10], false).unwrap();
        let psi = basis_state::<f64>(SpinLabel::Up, &[0], &layout).unwrap();
        assert_eq!(evolve(&spec, &psi, 1.0).unwrap_err(), Error::MissingVectors);
        assert!(matches!(Evolver::new(&spec, &psi), Err(Error::MissingVectors)));
    }

    #[test]
    fn energy_is_conserved() {
        let p = ModelParams::qr(1.0, 4.0, 1.4).unwrap();
        let (layout, spec) = solve_model(&p, &[50], true).unwrap();
        let h = crate::spectral::model_hamiltonian(&p, &[50]).unwrap();
        let psi = basis_state::<f64>(SpinLabel::Plus, &[0], &layout).unwrap();
        let ev = Evolver::new(&spec, &psi).unwrap();
        let e0 = h.expectation(psi.amplitudes());
        for t in [0.5, 3.0, 20.0] {
            let e = h.expectation(ev.state_at(t).amplitudes());
            assert!((e - e0).abs() <= 1e-8 * e0.abs().max(1.0));
        }
    }
}
