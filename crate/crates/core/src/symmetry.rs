//! Symmetry-sector reduction: Rabi parity blocks and Jahn-Teller U(1) blocks.
//!
//! Both models become symmetric tridiagonal inside a sector once the sector
//! states are ordered by total boson number.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BasisLayout, BasisState, HermitianMatrix, Spin};
use crate::models::{ModelKind, ModelParams};
use crate::scalar::Real;
use crate::spectral::{eig_dense, eig_tridiag, Spectrum};

/// A half-integer stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HalfInt(i64);

impl HalfInt {
    pub fn from_twice(twice: i64) -> Self {
        HalfInt(twice)
    }

    /// Parses `3/2`-style labels from a float; must be an odd multiple of 1/2.
    pub fn from_f64(c: f64) -> Result<Self> {
        let twice = (2.0 * c).round();
        if (2.0 * c - twice).abs() > 1e-9 || (twice as i64).rem_euclid(2) != 1 {
            return Err(Error::InvalidInput(format!("U(1) label {c} is not a half-odd integer")));
        }
        Ok(HalfInt(twice as i64))
    }

    pub fn twice(self) -> i64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

impl fmt::Display for HalfInt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 % 2 == 0 {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}/2", self.0)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectorLabel {
    /// Eigenvalue of `e^{i pi Pi}`.
    Parity(i8),
    /// Eigenvalue of `C = n_l - n_r + sigma_z/2`.
    U1(HalfInt),
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SectorLabel::Parity(p) => write!(f, "parity {p:+}"),
            SectorLabel::U1(c) => write!(f, "c = {c}"),
        }
    }
}

/// `e^{i pi Pi}` on `|s, n>`: -1 exactly for `|up, 2k>` and `|down, 2k+1>`.
pub fn parity_eigenvalue(spin: Spin, n: usize) -> i8 {
    let pi = n + usize::from(spin == Spin::Up);
    if pi.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

pub fn u1_charge(spin: Spin, n_r: usize, n_l: usize) -> HalfInt {
    HalfInt(2 * (n_l as i64 - n_r as i64) + spin.sz())
}

/// Sector eigenvalue of an arbitrary basis state under the given label type.
pub fn sector_of(state: &BasisState, like: SectorLabel) -> SectorLabel {
    match like {
        SectorLabel::Parity(_) => SectorLabel::Parity(parity_eigenvalue(state.spin, state.occupations[0])),
        SectorLabel::U1(_) => SectorLabel::U1(u1_charge(state.spin, state.occupations[0], state.occupations[1])),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTridiagonal<T> {
    diag: Vec<T>,
    offdiag: Vec<T>,
    sector: Option<SectorLabel>,
    states: Vec<BasisState>,
}

impl<T: Real> SymmetricTridiagonal<T> {
    /// Bare matrix without sector metadata.
    pub fn new(diag: Vec<T>, offdiag: Vec<T>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::InvalidInput("tridiagonal matrix must have m >= 1".into()));
        }
        if offdiag.len() + 1 != diag.len() {
            return Err(Error::DimensionMismatch { expected: diag.len() - 1, got: offdiag.len() });
        }
        Ok(Self { diag, offdiag, sector: None, states: Vec::new() })
    }

    pub fn with_sector(diag: Vec<T>, offdiag: Vec<T>, sector: SectorLabel, states: Vec<BasisState>) -> Result<Self> {
        let mut t = Self::new(diag, offdiag)?;
        if states.len() != t.diag.len() {
            return Err(Error::DimensionMismatch { expected: t.diag.len(), got: states.len() });
        }
        t.sector = Some(sector);
        t.states = states;
        Ok(t)
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[T] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[T] {
        &self.offdiag
    }

    pub fn sector(&self) -> Option<SectorLabel> {
        self.sector
    }

    pub fn states(&self) -> &[BasisState] {
        &self.states
    }

    /// The last row touches the truncation edge.
    pub fn edge_row(&self) -> usize {
        self.diag.len() - 1
    }

    /// Flat indices of the sector states in `layout`.
    pub fn support(&self, layout: &BasisLayout) -> Result<Vec<usize>> {
        self.states.iter().map(|s| layout.index_of(s)).collect()
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<T> {
        let m = self.dim();
        let mut d = nalgebra::DMatrix::zeros(m, m);
        for i in 0..m {
            d[(i, i)] = self.diag[i];
            if i + 1 < m {
                d[(i, i + 1)] = self.offdiag[i];
                d[(i + 1, i)] = self.offdiag[i];
            }
        }
        d
    }

    pub fn into_parts(self) -> (Vec<T>, Vec<T>) {
        (self.diag, self.offdiag)
    }
}

/// Parity block ordered `|up,0>, |down,1>, |up,2>, ..` (sector -1) or
/// `|down,0>, |up,1>, ..` (sector +1), read off the full Rabi Hamiltonian.
pub fn qr_parity_block<T: Real>(params: &ModelParams<T>, n_max: usize, sector: i8) -> Result<SymmetricTridiagonal<T>> {
    if params.kind != ModelKind::Qr {
        return Err(Error::InvalidInput(format!("parity blocks need QR parameters, got {:?}", params.kind)));
    }
    if sector != 1 && sector != -1 {
        return Err(Error::InvalidInput(format!("parity sector must be +1 or -1, got {sector}")));
    }
    let states: Vec<BasisState> = (0..=n_max)
        .map(|n| {
            let even_spin = if sector == -1 { Spin::Up } else { Spin::Down };
            let spin = if n % 2 == 0 { even_spin } else { even_spin.flip() };
            BasisState::new(spin, &[n])
        })
        .collect();
    // within a block only nearest neighbours in n couple, so diag and
    // offdiag are direct matrix elements of the Hamiltonian
    let half_delta = params.delta * T::lit(0.5);
    let diag = states
        .iter()
        .map(|s| params.omega * T::from_usize_exact(s.occupations[0]) + half_delta * T::from_i64(s.spin.sz()).unwrap())
        .collect();
    let offdiag = (1..=n_max).map(|n| params.g * T::from_usize_exact(n).sqrt()).collect();
    SymmetricTridiagonal::with_sector(diag, offdiag, SectorLabel::Parity(sector), states)
}

/// `<a|H_JT|b>` in the circular-mode form.
fn qjt_element<T: Real>(p: &ModelParams<T>, a: &BasisState, b: &BasisState) -> T {
    let (ar, al) = (a.occupations[0], a.occupations[1]);
    let (br, bl) = (b.occupations[0], b.occupations[1]);
    if a == b {
        let n = T::from_usize_exact(ar + al);
        return p.omega * n + p.delta * T::lit(0.5) * T::from_i64(a.spin.sz()).unwrap();
    }
    // orient so that `up` is the sigma_+ target
    let (up, down) = match (a.spin, b.spin) {
        (Spin::Up, Spin::Down) => ((ar, al), (br, bl)),
        (Spin::Down, Spin::Up) => ((br, bl), (ar, al)),
        _ => return T::zero(),
    };
    // sigma_+ a_r^dag
    if up.0 == down.0 + 1 && up.1 == down.1 {
        return p.g * T::from_usize_exact(up.0).sqrt();
    }
    // sigma_+ a_l
    if up.0 == down.0 && up.1 + 1 == down.1 {
        return p.g * T::from_usize_exact(down.1).sqrt();
    }
    T::zero()
}

/// All U(1) labels with at least one state at the given cutoffs.
pub fn qjt_sectors(n_max_r: usize, n_max_l: usize) -> Vec<HalfInt> {
    let lo = -2 * n_max_r as i64 - 1;
    let hi = 2 * n_max_l as i64 + 1;
    (lo..=hi).step_by(2).map(HalfInt).collect()
}

/// States of sector `c` ordered by total boson number.
fn qjt_sector_states(n_max_r: usize, n_max_l: usize, c: HalfInt) -> Vec<BasisState> {
    let mut states = Vec::new();
    for spin in [Spin::Up, Spin::Down] {
        // n_l = n_r + (2c - sz)/2
        let shift = (c.twice() - spin.sz()) / 2;
        for n_r in 0..=n_max_r {
            let n_l = n_r as i64 + shift;
            if n_l >= 0 && n_l as usize <= n_max_l {
                states.push(BasisState::new(spin, &[n_r, n_l as usize]));
            }
        }
    }
    states.sort_by_key(|s| s.occupations[0] + s.occupations[1]);
    states
}

/// Tridiagonal U(1) block; couplings are evaluated from the Hamiltonian.
pub fn qjt_u1_block<T: Real>(
    params: &ModelParams<T>,
    n_max_r: usize,
    n_max_l: usize,
    c: HalfInt,
) -> Result<SymmetricTridiagonal<T>> {
    if params.kind != ModelKind::Qjt {
        return Err(Error::InvalidInput(format!("U(1) blocks need QJT parameters, got {:?}", params.kind)));
    }
    if c.twice().rem_euclid(2) != 1 {
        return Err(Error::InvalidInput(format!("U(1) label {c} must be half-odd")));
    }
    let states = qjt_sector_states(n_max_r, n_max_l, c);
    if states.is_empty() {
        return Err(Error::EmptySector(format!("c = {c}")));
    }
    let diag = states.iter().map(|s| qjt_element(params, s, s)).collect();
    let offdiag = states.windows(2).map(|w| qjt_element(params, &w[0], &w[1])).collect();
    SymmetricTridiagonal::with_sector(diag, offdiag, SectorLabel::U1(c), states)
}

/// Both parity blocks, negative first.
pub fn qr_all_blocks<T: Real>(params: &ModelParams<T>, n_max: usize) -> Result<Vec<SymmetricTridiagonal<T>>> {
    Ok(vec![qr_parity_block(params, n_max, -1)?, qr_parity_block(params, n_max, 1)?])
}

pub fn qjt_all_blocks<T: Real>(
    params: &ModelParams<T>,
    n_max_r: usize,
    n_max_l: usize,
) -> Result<Vec<SymmetricTridiagonal<T>>> {
    qjt_sectors(n_max_r, n_max_l).into_iter().map(|c| qjt_u1_block(params, n_max_r, n_max_l, c)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SectorConsistency {
    pub sector: Option<SectorLabel>,
    pub block_dim: usize,
    /// Full-space eigenvectors with most of their weight on this block's states.
    pub matched_full_levels: usize,
    pub max_abs_deviation: f64,
    /// Block states whose symmetry eigenvalue differs from the block label.
    pub label_mismatches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub full_dim: usize,
    pub total_block_dim: usize,
    pub sectors: Vec<SectorConsistency>,
    pub max_abs_deviation: f64,
    pub count_mismatch: bool,
    pub label_mismatches: usize,
}

/// Compares block spectra with the full dense spectrum filtered by sector support.
pub fn block_consistency_report<T: Real + nalgebra::RealField>(
    full: &HermitianMatrix<T>,
    layout: &BasisLayout,
    blocks: &[SymmetricTridiagonal<T>],
) -> Result<ConsistencyReport> {
    let full_spec: Spectrum<T> = eig_dense(full, true)?;
    let n = full.dim();
    if layout.dim() != n {
        return Err(Error::DimensionMismatch { expected: n, got: layout.dim() });
    }
    let mut sectors = Vec::with_capacity(blocks.len());
    let mut total = 0;
    let mut count_mismatch = false;
    let mut label_mismatches = 0;
    let mut max_dev: f64 = 0.0;
    for block in blocks {
        let support = block.support(layout)?;
        total += support.len();
        let mut in_support = vec![false; n];
        for &i in &support {
            in_support[i] = true;
        }
        let mut matched: Vec<f64> = Vec::new();
        for k in 0..n {
            let v = full_spec.eigenvector(k).expect("dense spectrum has vectors");
            let w: f64 = v.iter().enumerate().filter(|(i, _)| in_support[*i]).map(|(_, z)| z.norm_sqr().as_f64()).sum();
            if w > 0.5 {
                matched.push(full_spec.eigenvalues()[k].as_f64());
            }
        }
        let block_vals: Vec<f64> = eig_tridiag(block, false)?.eigenvalues().iter().map(|x| x.as_f64()).collect();
        let dev = if matched.len() == block_vals.len() {
            matched.iter().zip(&block_vals).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        } else {
            count_mismatch = true;
            f64::INFINITY
        };
        let mislabeled = match block.sector() {
            Some(label) => block.states().iter().filter(|s| sector_of(s, label) != label).count(),
            None => 0,
        };
        label_mismatches += mislabeled;
        max_dev = max_dev.max(dev);
        sectors.push(SectorConsistency {
            sector: block.sector(),
            block_dim: block.dim(),
            matched_full_levels: matched.len(),
            max_abs_deviation: dev,
            label_mismatches: mislabeled,
        });
    }
    if total != n {
        count_mismatch = true;
    }
    Ok(ConsistencyReport {
        full_dim: n,
        total_block_dim: total,
        sectors,
        max_abs_deviation: max_dev,
        count_mismatch,
        label_mismatches,
    })
}

/// Lowest level over a scan of U(1) sectors `|c| <= c_max`.
#[derive(Debug, Clone)]
pub struct SectorGroundState<T> {
    pub sector: HalfInt,
    pub energy: T,
    pub block: SymmetricTridiagonal<T>,
    /// Ground-state amplitudes in the block's state ordering.
    pub vector: Vec<T>,
}

pub fn qjt_ground_state<T: Real>(
    params: &ModelParams<T>,
    n_max_r: usize,
    n_max_l: usize,
    c_max: HalfInt,
) -> Result<SectorGroundState<T>> {
    let mut best: Option<SectorGroundState<T>> = None;
    for c in qjt_sectors(n_max_r, n_max_l) {
        if c.twice().abs() > c_max.twice().abs() {
            continue;
        }
        let block = qjt_u1_block(params, n_max_r, n_max_l, c)?;
        let spec = eig_tridiag(&block, true)?;
        let e0 = spec.eigenvalues()[0];
        if best.as_ref().is_none_or(|b| e0 < b.energy) {
            let vector = spec.real_block_vector(0).expect("vectors requested");
            best = Some(SectorGroundState { sector: c, energy: e0, block, vector });
        }
    }
    best.ok_or_else(|| Error::EmptySector(format!("no sector with |c| <= {c_max}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{build_qjt, build_qr, QjtForm};

    #[test]
    fn parity_labels() {
        assert_eq!(parity_eigenvalue(Spin::Up, 0), -1);
        assert_eq!(parity_eigenvalue(Spin::Down, 0), 1);
        assert_eq!(parity_eigenvalue(Spin::Down, 3), -1);
        assert_eq!(parity_eigenvalue(Spin::Up, 4), -1);
        assert_eq!(parity_eigenvalue(Spin::Up, 1), 1);
    }

    #[test]
    fn u1_labels() {
        assert_eq!(u1_charge(Spin::Up, 0, 1), HalfInt::from_twice(3));
        assert_eq!(u1_charge(Spin::Down, 0, 2), HalfInt::from_twice(3));
        assert_eq!(u1_charge(Spin::Down, 0, 0).value(), -0.5);
        assert_eq!(HalfInt::from_f64(1.5).unwrap().twice(), 3);
        assert!(HalfInt::from_f64(1.0).is_err());
        assert_eq!(HalfInt::from_twice(3).to_string(), "3/2");
    }

    #[test]
    fn qr_block_shape() {
        let p = ModelParams::qr(1.0, 10.0, 0.0).unwrap();
        let b = qr_parity_block(&p, 4, -1).unwrap();
        assert!(b.offdiag().iter().all(|x| *x == 0.0));
        let s = eig_tridiag(&b, false).unwrap();
        let mut d = b.diag().to_vec();
        d.sort_by(f64::total_cmp);
        assert_eq!(s.eigenvalues(), &d[..]);
        for st in b.states() {
            assert_eq!(parity_eigenvalue(st.spin, st.occupations[0]), -1);
        }
        assert!(qr_parity_block(&p, 4, 0).is_err());
    }

    #[test]
    fn qjt_block_small() {
        let p = ModelParams::qjt(1.0, 10.0, 2.0).unwrap();
        let b = qjt_u1_block(&p, 3, 4, HalfInt::from_twice(3)).unwrap();
        assert_eq!(b.dim(), 7);
        for st in b.states() {
            assert_eq!(u1_charge(st.spin, st.occupations[0], st.occupations[1]).twice(), 3);
        }
        assert!(matches!(qjt_u1_block(&p, 1, 1, HalfInt::from_twice(9)), Err(Error::EmptySector(_))));
        let decoupled = ModelParams::qjt(1.0, 10.0, 0.0).unwrap();
        let b0 = qjt_u1_block(&decoupled, 3, 4, HalfInt::from_twice(3)).unwrap();
        let mut d = b0.diag().to_vec();
        d.sort_by(f64::total_cmp);
        assert_eq!(eig_tridiag(&b0, false).unwrap().eigenvalues(), &d[..]);
    }

    #[test]
    fn block_dims_partition_space() {
        let p = ModelParams::qjt(1.0, 3.0, 0.7).unwrap();
        let blocks = qjt_all_blocks(&p, 4, 3).unwrap();
        let total: usize = blocks.iter().map(|b| b.dim()).sum();
        assert_eq!(total, BasisLayout::two_mode(4, 3).dim());

        let q = ModelParams::qr(1.0, 3.0, 0.7).unwrap();
        let total: usize = qr_all_blocks(&q, 9).unwrap().iter().map(|b| b.dim()).sum();
        assert_eq!(total, BasisLayout::single(9).dim());
    }

    #[test]
    fn hamiltonian_keeps_sector_support() {
        let p = ModelParams::qjt(1.0, 3.0, 0.7).unwrap();
        let layout = BasisLayout::two_mode(4, 4);
        let h = build_qjt(&p, 4, 4, QjtForm::Rl).unwrap();
        for block in qjt_all_blocks(&p, 4, 4).unwrap() {
            let label = block.sector().unwrap();
            for idx in block.support(&layout).unwrap() {
                for j in 0..layout.dim() {
                    if h.get(j, idx).norm() != 0.0 {
                        assert_eq!(sector_of(&layout.label(j), label), label);
                    }
                }
            }
        }
    }

    #[test]
    fn consistency_report_qr_and_negative_control() {
        let p = ModelParams::qr(1.0, 10.0, 2.0).unwrap();
        let layout = BasisLayout::single(12);
        let h = build_qr(&p, 12).unwrap();
        let blocks = qr_all_blocks(&p, 12).unwrap();
        let r = block_consistency_report(&h, &layout, &blocks).unwrap();
        assert!(!r.count_mismatch);
        assert_eq!(r.label_mismatches, 0);
        assert!(r.max_abs_deviation < 1e-10);

        // negative block's matrix carrying the positive block's states and label
        let (d, e) = blocks[0].clone().into_parts();
        let wrong =
            SymmetricTridiagonal::with_sector(d, e, SectorLabel::Parity(-1), blocks[1].states().to_vec()).unwrap();
        let r = block_consistency_report(&h, &layout, &[wrong]).unwrap();
        assert!(r.count_mismatch);
        assert!(r.label_mismatches > 0);
        assert!(r.max_abs_deviation > 1e-3);
    }

    #[test]
    fn consistency_report_decoupled_is_exact() {
        let p = ModelParams::qjt(1.0, 3.0, 0.0).unwrap();
        let layout = BasisLayout::two_mode(3, 3);
        let h = build_qjt(&p, 3, 3, QjtForm::Rl).unwrap();
        let r = block_consistency_report(&h, &layout, &qjt_all_blocks(&p, 3, 3).unwrap()).unwrap();
        assert!(!r.count_mismatch);
        assert!(r.max_abs_deviation < 1e-13);
    }
}
