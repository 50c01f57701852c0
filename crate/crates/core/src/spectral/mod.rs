//! Eigensolvers and level statistics.

mod dense;
mod stats;
mod tridiag;

pub use dense::eig_dense;
pub use stats::{
    p_poisson, p_wigner_dyson, small_spacing_fraction, spacing_histogram, unfold, SpacingHistogram, Unfolded,
    UnfoldingOptions,
};
pub use tridiag::{eig_tridiag, eig_tridiag_with, sturm_count, TridiagMethod};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::hilbert::BasisLayout;
use crate::models::{build_perturbed_qr, build_qjt, ModelKind, ModelParams, QjtForm};
use crate::scalar::{cr, Real, C};
use crate::symmetry::{SectorLabel, SymmetricTridiagonal};

/// Eigenvectors of one diagonalized block, one column per eigenvalue.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockVectors<T> {
    Real(DMatrix<T>),
    Complex(DMatrix<C<T>>),
}

impl<T: Real> BlockVectors<T> {
    pub fn nrows(&self) -> usize {
        match self {
            BlockVectors::Real(m) => m.nrows(),
            BlockVectors::Complex(m) => m.nrows(),
        }
    }

    #[inline]
    pub fn get(&self, i: usize, k: usize) -> C<T> {
        match self {
            BlockVectors::Real(m) => cr(m[(i, k)]),
            BlockVectors::Complex(m) => m[(i, k)],
        }
    }

    /// Coefficients `<v_k|x>` for every column `k`.
    pub fn project(&self, x: &[C<T>]) -> Vec<C<T>> {
        match self {
            BlockVectors::Real(m) => (0..m.ncols())
                .map(|k| {
                    let col = m.column(k);
                    let mut acc = C::new(T::zero(), T::zero());
                    for (v, xi) in col.iter().zip(x) {
                        acc += xi.scale(*v);
                    }
                    acc
                })
                .collect(),
            BlockVectors::Complex(m) => (0..m.ncols())
                .map(|k| {
                    let col = m.column(k);
                    let mut acc = C::new(T::zero(), T::zero());
                    for (v, xi) in col.iter().zip(x) {
                        acc += v.conj() * xi;
                    }
                    acc
                })
                .collect(),
        }
    }

    /// `sum_k coeffs[k] v_k` restricted to the listed columns.
    pub fn combine(&self, cols: &[usize], coeffs: &[C<T>], out: &mut [C<T>]) {
        for o in out.iter_mut() {
            *o = C::new(T::zero(), T::zero());
        }
        match self {
            BlockVectors::Real(m) => {
                for (&k, c) in cols.iter().zip(coeffs) {
                    for (o, v) in out.iter_mut().zip(m.column(k).iter()) {
                        o.re += c.re * *v;
                        o.im += c.im * *v;
                    }
                }
            }
            BlockVectors::Complex(m) => {
                for (&k, c) in cols.iter().zip(coeffs) {
                    for (o, v) in out.iter_mut().zip(m.column(k).iter()) {
                        *o += *v * c;
                    }
                }
            }
        }
    }
}

/// A diagonalized invariant block living on `support` (flat indices).
#[derive(Debug, Clone, PartialEq)]
pub struct EigenBlock<T> {
    pub support: Vec<usize>,
    /// Ascending.
    pub values: Vec<T>,
    pub vectors: Option<BlockVectors<T>>,
    pub sector: Option<SectorLabel>,
}

/// Eigenvalues in ascending order plus optional orthonormal eigenvectors,
/// stored per invariant block.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<T> {
    dim: usize,
    eigenvalues: Vec<T>,
    /// Sorted position -> (block, column).
    order: Vec<(usize, usize)>,
    blocks: Vec<EigenBlock<T>>,
    source: String,
}

impl<T: Real> Spectrum<T> {
    /// Merges blocks acting on disjoint supports of a `dim`-dimensional space.
    pub fn from_blocks(dim: usize, blocks: Vec<EigenBlock<T>>, source: impl Into<String>) -> Result<Self> {
        let mut seen = vec![false; dim];
        for b in &blocks {
            if b.values.len() != b.support.len() {
                return Err(Error::DimensionMismatch { expected: b.support.len(), got: b.values.len() });
            }
            for &i in &b.support {
                if i >= dim || seen[i] {
                    return Err(Error::InvalidInput(format!("block supports overlap or exceed dim at {i}")));
                }
                seen[i] = true;
            }
        }
        let mut order: Vec<(usize, usize)> =
            blocks.iter().enumerate().flat_map(|(b, blk)| (0..blk.values.len()).map(move |k| (b, k))).collect();
        order.sort_by(|&(b1, k1), &(b2, k2)| {
            blocks[b1].values[k1]
                .partial_cmp(&blocks[b2].values[k2])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then((b1, k1).cmp(&(b2, k2)))
        });
        let eigenvalues = order.iter().map(|&(b, k)| blocks[b].values[k]).collect();
        Ok(Self { dim, eigenvalues, order, blocks, source: source.into() })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn eigenvalues(&self) -> &[T] {
        &self.eigenvalues
    }

    pub fn blocks(&self) -> &[EigenBlock<T>] {
        &self.blocks
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn has_vectors(&self) -> bool {
        !self.blocks.is_empty() && self.blocks.iter().all(|b| b.vectors.is_some())
    }

    /// Number of basis states covered by the blocks.
    pub fn covered_dim(&self) -> usize {
        self.blocks.iter().map(|b| b.support.len()).sum()
    }

    /// Full-space eigenvector of the `k`-th lowest level.
    pub fn eigenvector(&self, k: usize) -> Option<Vec<C<T>>> {
        let (b, col) = self.order[k];
        let blk = &self.blocks[b];
        let v = blk.vectors.as_ref()?;
        let mut out = vec![C::new(T::zero(), T::zero()); self.dim];
        for (r, &i) in blk.support.iter().enumerate() {
            out[i] = v.get(r, col);
        }
        Some(out)
    }

    /// Column `k` of a single real block (tridiagonal solves).
    pub fn real_block_vector(&self, k: usize) -> Option<Vec<T>> {
        let (b, col) = self.order[k];
        match self.blocks[b].vectors.as_ref()? {
            BlockVectors::Real(m) => Some(m.column(col).iter().copied().collect()),
            BlockVectors::Complex(_) => None,
        }
    }

    /// (block, column) of the `k`-th lowest level.
    pub fn position(&self, k: usize) -> (usize, usize) {
        self.order[k]
    }
}

/// Diagonalizes each symmetry block and assembles a spectrum on `layout`.
pub fn eig_sectors<T: Real>(
    blocks: &[SymmetricTridiagonal<T>],
    layout: &BasisLayout,
    want_vectors: bool,
) -> Result<Spectrum<T>> {
    use rayon::prelude::*;
    let solved: Vec<Result<EigenBlock<T>>> = blocks
        .par_iter()
        .map(|blk| {
            let support = blk.support(layout)?;
            let mut spec = eig_tridiag(blk, want_vectors)?;
            let mut only = std::mem::take(&mut spec.blocks);
            let mut eb = only.pop().expect("tridiagonal spectrum has one block");
            eb.support = support;
            eb.sector = blk.sector();
            Ok(eb)
        })
        .collect();
    let blocks = solved.into_iter().collect::<Result<Vec<_>>>()?;
    let labels: Vec<String> =
        blocks.iter().map(|b| b.sector.map_or_else(|| "unlabelled".to_string(), |s| s.to_string())).collect();
    Spectrum::from_blocks(layout.dim(), blocks, format!("tridiagonal sectors [{}]", labels.join(", ")))
}

/// Diagonalizes a model at the given cutoffs (one per mode) through its
/// cheapest exact route: parity blocks for QR, U(1) blocks for QJT, a dense
/// solve for the parity-broken model.
pub fn solve_model<T: Real + nalgebra::RealField>(
    params: &ModelParams<T>,
    cutoffs: &[usize],
    want_vectors: bool,
) -> Result<(BasisLayout, Spectrum<T>)> {
    let layout = BasisLayout::new(cutoffs.to_vec())?;
    let modes = match params.kind {
        ModelKind::Qjt => 2,
        _ => 1,
    };
    if cutoffs.len() != modes {
        return Err(Error::DimensionMismatch { expected: modes, got: cutoffs.len() });
    }
    let spectrum = match params.kind {
        ModelKind::Qr => eig_sectors(&crate::symmetry::qr_all_blocks(params, cutoffs[0])?, &layout, want_vectors)?,
        ModelKind::Qjt => {
            eig_sectors(&crate::symmetry::qjt_all_blocks(params, cutoffs[0], cutoffs[1])?, &layout, want_vectors)?
        }
        ModelKind::PerturbedQr => eig_dense(&build_perturbed_qr(params, cutoffs[0])?, want_vectors)?,
    };
    Ok((layout, spectrum))
}

/// Full-space Hamiltonian matching [`solve_model`].
pub fn model_hamiltonian<T: Real>(
    params: &ModelParams<T>,
    cutoffs: &[usize],
) -> Result<crate::hilbert::HermitianMatrix<T>> {
    match params.kind {
        ModelKind::Qjt if cutoffs.len() == 2 => build_qjt(params, cutoffs[0], cutoffs[1], QjtForm::Rl),
        ModelKind::Qjt => Err(Error::DimensionMismatch { expected: 2, got: cutoffs.len() }),
        _ if cutoffs.len() == 1 => crate::models::build_rabi_family(params, cutoffs[0]),
        _ => Err(Error::DimensionMismatch { expected: 1, got: cutoffs.len() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_orders_and_embeds() {
        let b1 = EigenBlock {
            support: vec![0, 2],
            values: vec![1.0, 3.0],
            vectors: Some(BlockVectors::Real(DMatrix::identity(2, 2))),
            sector: None,
        };
        let b2 = EigenBlock {
            support: vec![1],
            values: vec![2.0],
            vectors: Some(BlockVectors::Real(DMatrix::identity(1, 1))),
            sector: None,
        };
        let s = Spectrum::from_blocks(3, vec![b1, b2], "test").unwrap();
        assert_eq!(s.eigenvalues(), &[1.0, 2.0, 3.0]);
        let v = s.eigenvector(1).unwrap();
        assert_eq!(v[1].re, 1.0);
        assert_eq!(v[0].re + v[2].re, 0.0);
        assert_eq!(s.eigenvector(2).unwrap()[2].re, 1.0);
    }

    #[test]
    fn overlapping_blocks_rejected() {
        let mk = |support: Vec<usize>| EigenBlock::<f64> {
            values: vec![0.0; support.len()],
            support,
            vectors: None,
            sector: None,
        };
        assert!(Spectrum::from_blocks(3, vec![mk(vec![0, 1]), mk(vec![1])], "x").is_err());
    }
}
