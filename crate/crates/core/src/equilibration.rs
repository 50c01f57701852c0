//! Long-time averages: diagonal and microcanonical ensembles, exact windowed
//! time averages and the effective dimension of an initial state.

use nalgebra::RealField;
use rayon::prelude::*;
use serde::Serialize;

use crate::dynamics::{
    cutoffs_for, top_decile_projector, CutoffOptions, CutoffStep, EigenCoefficients, Evolver, InitialState,
};
use crate::error::{Error, Result};
use crate::hilbert::{diagonal_operator, BasisLayout, HermitianMatrix, QuantumState, SpinLabel};
use crate::models::ModelParams;
use crate::scalar::{cis, Real, C};
use crate::spectral::{solve_model, Spectrum};

/// Level pairs closer than this are not dephased by a time average.
pub const DEGENERATE_GAP: f64 = 1e-10;
/// Shell size targeted by the default microcanonical width.
pub const DEFAULT_SHELL_STATES: usize = 20;
/// Relative change tolerated when the shell width is scaled by `1 +- SHELL_SCAN`.
pub const ROBUSTNESS_TOLERANCE: f64 = 0.01;
pub const SHELL_SCAN: f64 = 0.25;
/// Initial states in a universality sweep must agree in energy to this
/// relative accuracy.
pub const ENERGY_MATCH: f64 = 1e-10;

/// Weights `|<E_k|psi0>|^2` over the levels of a spectrum, in ascending
/// energy order.
#[derive(Debug, Clone)]
pub struct DiagonalEnsemble<'s, T> {
    spectrum: &'s Spectrum<T>,
    weights: Vec<T>,
}

impl<'s, T: Real> DiagonalEnsemble<'s, T> {
    pub fn spectrum(&self) -> &'s Spectrum<T> {
        self.spectrum
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    /// Levels with nonzero weight.
    pub fn populated(&self) -> impl Iterator<Item = (usize, T)> + '_ {
        self.weights.iter().copied().enumerate().filter(|(_, w)| *w > T::zero())
    }

    pub fn total_weight(&self) -> T {
        self.weights.iter().copied().sum()
    }

    /// `E0 = sum_k w_k E_k = <psi0|H|psi0>`.
    pub fn energy(&self) -> T {
        self.populated().map(|(k, w)| w * self.spectrum.eigenvalues()[k]).sum()
    }

    /// `(sum_k w_k^2)^{-1}`.
    pub fn effective_dimension(&self) -> T {
        let ipr: T = self.weights.iter().map(|w| *w * *w).sum();
        T::one() / ipr
    }

    /// Smallest gap between populated levels that a time average dephases.
    pub fn min_resolved_gap(&self) -> Option<T> {
        let e: Vec<T> = self.populated().map(|(k, _)| self.spectrum.eigenvalues()[k]).collect();
        let floor = T::lit(DEGENERATE_GAP);
        e.windows(2).map(|w| w[1] - w[0]).filter(|d| *d >= floor).fold(None, |acc, d| match acc {
            Some(m) if m <= d => Some(m),
            _ => Some(d),
        })
    }
}

pub fn de_weights<'s, T: Real>(spectrum: &'s Spectrum<T>, psi0: &QuantumState<T>) -> Result<DiagonalEnsemble<'s, T>> {
    if !spectrum.has_vectors() {
        return Err(Error::MissingVectors);
    }
    let coeffs = EigenCoefficients::project(spectrum, psi0.amplitudes())?;
    let mut weights = vec![T::zero(); spectrum.len()];
    for (k, w) in weights.iter_mut().enumerate() {
        let (b, col) = spectrum.position(k);
        *w = coeffs.per_block[b][col].norm_sqr();
    }
    Ok(DiagonalEnsemble { spectrum, weights })
}

/// `<E_k|O|E_k>` for the listed levels.
pub fn diagonal_elements<T: Real>(spectrum: &Spectrum<T>, op: &HermitianMatrix<T>, levels: &[usize]) -> Result<Vec<T>> {
    if op.dim() != spectrum.dim() {
        return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: op.dim() });
    }
    levels
        .iter()
        .map(|&k| {
            let v = spectrum.eigenvector(k).ok_or(Error::MissingVectors)?;
            Ok(op.expectation(&v))
        })
        .collect()
}

/// `sum_k w_k <E_k|O|E_k>`.
pub fn de_average<T: Real>(ensemble: &DiagonalEnsemble<'_, T>, op: &HermitianMatrix<T>) -> Result<T> {
    let (levels, weights): (Vec<usize>, Vec<T>) = ensemble.populated().unzip();
    let diag = diagonal_elements(ensemble.spectrum, op, &levels)?;
    Ok(diag.iter().zip(&weights).map(|(o, w)| *o * *w).sum())
}

/// Diagonal-ensemble distribution of the occupation of `mode`, indexed by
/// Fock level.
pub fn de_fock_distribution<T: Real>(
    ensemble: &DiagonalEnsemble<'_, T>,
    layout: &BasisLayout,
    mode: usize,
) -> Result<Vec<T>> {
    if mode >= layout.n_modes() {
        return Err(Error::InvalidInput(format!("mode {mode} does not exist")));
    }
    if layout.dim() != ensemble.spectrum.dim() {
        return Err(Error::DimensionMismatch { expected: ensemble.spectrum.dim(), got: layout.dim() });
    }
    let cut = layout.cutoffs()[mode];
    let stride = layout.mode_stride(mode);
    let mut p = vec![T::zero(); cut + 1];
    for (k, w) in ensemble.populated() {
        let (b, col) = ensemble.spectrum.position(k);
        let blk = &ensemble.spectrum.blocks()[b];
        let v = blk.vectors.as_ref().ok_or(Error::MissingVectors)?;
        for (r, &i) in blk.support.iter().enumerate() {
            let n = (i / 2 / stride) % (cut + 1);
            p[n] += w * v.get(r, col).norm_sqr();
        }
    }
    Ok(p)
}

/// `(1/W) int_{t0}^{t0+W} <psi(t)|O|psi(t)> dt`, summed in closed form over
/// eigenstate pairs. Pairs with `|E_k - E_l| < DEGENERATE_GAP` keep their
/// cross term.
pub fn time_average<T: Real>(
    spectrum: &Spectrum<T>,
    psi0: &QuantumState<T>,
    op: &HermitianMatrix<T>,
    t_start: T,
    window: T,
) -> Result<T> {
    if !(window > T::zero()) {
        return Err(Error::InvalidInput(format!("averaging window must be positive, got {window}")));
    }
    let ev = Evolver::with_tail(spectrum, psi0, T::zero())?;
    let (red, _) = ev.reduce(op, false)?;
    let c = ev.amplitudes_at(T::zero());
    let e = ev.energies();
    let t1 = t_start + window;
    let floor = T::lit(DEGENERATE_GAP);
    // f(d) = (e^{i d t1} - e^{i d t0}) / (i d W)
    let factor = |d: T| -> C<T> {
        if num_traits::Float::abs(d) < floor {
            return C::new(T::one(), T::zero());
        }
        let num = cis(d * t1) - cis(d * t_start);
        num / C::new(T::zero(), d * window)
    };
    let mut acc = T::zero();
    for k in 0..c.len() {
        acc += c[k].norm_sqr() * red.re[(k, k)];
        for l in k + 1..c.len() {
            let o = C::new(red.re[(k, l)], red.im.as_ref().map_or(T::zero(), |m| m[(k, l)]));
            let z = c[k].conj() * c[l] * o * factor(e[k] - e[l]);
            acc += T::lit(2.0) * z.re;
        }
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MicrocanonicalAverage<T> {
    pub value: T,
    pub n_states: usize,
    pub e0: T,
    pub delta_e: T,
    /// Averages over the shells of width `(1 - SHELL_SCAN) delta_e` (absent
    /// when that shell is empty) and `(1 + SHELL_SCAN) delta_e`.
    pub value_narrow: Option<T>,
    pub value_wide: T,
    pub robust: bool,
}

fn shell<T: Real>(spectrum: &Spectrum<T>, e0: T, delta_e: T) -> Vec<usize> {
    let e = spectrum.eigenvalues();
    (0..e.len()).filter(|&k| num_traits::Float::abs(e[k] - e0) < delta_e).collect()
}

/// Unweighted mean of `<E_k|O|E_k>` over `|E_k - E0| < delta_e`, with the
/// robustness flag set when rescaling the width by `+-25%` moves the value
/// by less than 1%.
pub fn me_average<T: Real>(
    spectrum: &Spectrum<T>,
    op: &HermitianMatrix<T>,
    e0: T,
    delta_e: T,
) -> Result<MicrocanonicalAverage<T>> {
    if !(delta_e > T::zero()) {
        return Err(Error::InvalidInput(format!("shell width must be positive, got {delta_e}")));
    }
    let wide_width = delta_e * T::lit(1.0 + SHELL_SCAN);
    let wide = shell(spectrum, e0, wide_width);
    let diag = diagonal_elements(spectrum, op, &wide)?;
    let e = spectrum.eigenvalues();
    let mean_within = |width: T| -> Option<(T, usize)> {
        let vals: Vec<T> = wide
            .iter()
            .zip(&diag)
            .filter(|(k, _)| num_traits::Float::abs(e[**k] - e0) < width)
            .map(|(_, o)| *o)
            .collect();
        (!vals.is_empty()).then(|| (vals.iter().copied().sum::<T>() / T::from_usize_exact(vals.len()), vals.len()))
    };
    let Some((value, n_states)) = mean_within(delta_e) else {
        let nearest = e
            .iter()
            .copied()
            .fold(None, |best: Option<T>, x| match best {
                Some(b) if num_traits::Float::abs(b - e0) <= num_traits::Float::abs(x - e0) => Some(b),
                _ => Some(x),
            })
            .map_or(f64::NAN, |x| x.as_f64());
        return Err(Error::EmptyShell { e0: e0.as_f64(), delta_e: delta_e.as_f64(), nearest });
    };
    let (value_wide, _) = mean_within(wide_width).expect("wider shell contains the nominal one");
    let value_narrow = mean_within(delta_e * T::lit(1.0 - SHELL_SCAN)).map(|(v, _)| v);
    let close =
        |x: T| num_traits::Float::abs(x - value) <= T::lit(ROBUSTNESS_TOLERANCE) * num_traits::Float::abs(value);
    let robust = value_narrow.is_some_and(close) && close(value_wide);
    Ok(MicrocanonicalAverage { value, n_states, e0, delta_e, value_narrow, value_wide, robust })
}

/// Smallest width for which the shell `|E_k - E0| < width` holds at least
/// `min_states` levels.
pub fn default_shell_width<T: Real>(spectrum: &Spectrum<T>, e0: T, min_states: usize) -> Result<T> {
    if min_states == 0 || spectrum.len() < min_states {
        return Err(Error::TooFewLevels { need: min_states.max(1), got: spectrum.len() });
    }
    let mut d: Vec<T> = spectrum.eigenvalues().iter().map(|x| num_traits::Float::abs(*x - e0)).collect();
    d.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let r = d[min_states - 1];
    Ok(r + num_traits::Float::max(r * T::epsilon() * T::lit(4.0), T::min_positive_value()))
}

/// [`me_average`] at the [`default_shell_width`] with [`DEFAULT_SHELL_STATES`].
pub fn me_average_default<T: Real>(
    spectrum: &Spectrum<T>,
    op: &HermitianMatrix<T>,
    e0: T,
) -> Result<MicrocanonicalAverage<T>> {
    let width = default_shell_width(spectrum, e0, DEFAULT_SHELL_STATES)?;
    me_average(spectrum, op, e0, width)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniversalityTable<T> {
    pub energies: Vec<T>,
    /// `averages[state][observable]`, diagonal-ensemble values.
    pub averages: Vec<Vec<T>>,
    /// Largest minus smallest average per observable.
    pub spread: Vec<T>,
    /// Spread over the largest absolute average per observable.
    pub relative_spread: Vec<T>,
}

/// Diagonal-ensemble averages of every observable for initial states that
/// share their energy.
pub fn universality_sweep<T: Real>(
    spectrum: &Spectrum<T>,
    states: &[QuantumState<T>],
    observables: &[&HermitianMatrix<T>],
) -> Result<UniversalityTable<T>> {
    if states.is_empty() {
        return Err(Error::InvalidInput("universality sweep needs at least one state".into()));
    }
    let ensembles = states.iter().map(|s| de_weights(spectrum, s)).collect::<Result<Vec<_>>>()?;
    let energies: Vec<T> = ensembles.iter().map(DiagonalEnsemble::energy).collect();
    let e_ref = energies[0];
    let scale = num_traits::Float::max(num_traits::Float::abs(e_ref), T::one());
    for e in &energies[1..] {
        if num_traits::Float::abs(*e - e_ref) > T::lit(ENERGY_MATCH) * scale {
            return Err(Error::EnergyMismatch { e_a: e_ref.as_f64(), e_b: e.as_f64() });
        }
    }
    let averages = ensembles
        .iter()
        .map(|ens| observables.iter().map(|o| de_average(ens, o)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    let mut spread = Vec::with_capacity(observables.len());
    let mut relative_spread = Vec::with_capacity(observables.len());
    for j in 0..observables.len() {
        let col: Vec<T> = averages.iter().map(|row| row[j]).collect();
        let lo = col.iter().copied().fold(T::infinity(), num_traits::Float::min);
        let hi = col.iter().copied().fold(T::neg_infinity(), num_traits::Float::max);
        let mag = col.iter().fold(T::zero(), |m, x| num_traits::Float::max(m, num_traits::Float::abs(*x)));
        spread.push(hi - lo);
        relative_spread.push(if mag > T::zero() { (hi - lo) / mag } else { T::zero() });
    }
    Ok(UniversalityTable { energies, averages, spread, relative_spread })
}

/// `|up><up| (x) 1`.
pub fn spin_up_projector<T: Real>(layout: &BasisLayout) -> HermitianMatrix<T> {
    diagonal_operator((0..layout.dim()).map(|i| if i % 2 == 0 { T::one() } else { T::zero() }).collect())
}

/// Projector onto Fock level `n` of `mode`.
pub fn fock_projector<T: Real>(layout: &BasisLayout, mode: usize, n: usize) -> HermitianMatrix<T> {
    let stride = layout.mode_stride(mode);
    let cut = layout.cutoffs()[mode];
    diagonal_operator(
        (0..layout.dim()).map(|i| if (i / 2 / stride) % (cut + 1) == n { T::one() } else { T::zero() }).collect(),
    )
}

/// `a_m^dag a_m`.
pub fn number_operator<T: Real>(layout: &BasisLayout, mode: usize) -> HermitianMatrix<T> {
    let stride = layout.mode_stride(mode);
    let cut = layout.cutoffs()[mode];
    diagonal_operator((0..layout.dim()).map(|i| T::from_usize_exact((i / 2 / stride) % (cut + 1))).collect())
}

/// Diagonal ensemble at a cutoff where the tracked averages have settled.
#[derive(Debug, Clone)]
pub struct ConvergedEnsemble<T> {
    pub n_max: usize,
    pub layout: BasisLayout,
    pub spectrum: Spectrum<T>,
    pub initial: QuantumState<T>,
    pub history: Vec<CutoffStep>,
}

impl<T: Real> ConvergedEnsemble<T> {
    pub fn ensemble(&self) -> DiagonalEnsemble<'_, T> {
        de_weights(&self.spectrum, &self.initial).expect("built from the same spectrum")
    }
}

struct EnsembleAttempt<T> {
    n_max: usize,
    layout: BasisLayout,
    spectrum: Spectrum<T>,
    initial: QuantumState<T>,
    tracked: [f64; 3],
    top_population: f64,
}

fn ensemble_attempt<T: Real + RealField>(
    params: &ModelParams<T>,
    initial: &InitialState,
    n: usize,
    options: &CutoffOptions,
) -> Result<EnsembleAttempt<T>> {
    let (layout, spectrum) = solve_model(params, &cutoffs_for(params.kind, n), true)?;
    if options.mode >= layout.n_modes() {
        return Err(Error::InvalidInput(format!("mode {} does not exist", options.mode)));
    }
    let psi0 = initial.build::<T>(&layout)?;
    let (tracked, top_population) = {
        let ens = de_weights(&spectrum, &psi0)?;
        let tracked = [
            ens.effective_dimension().as_f64(),
            de_average(&ens, &number_operator(&layout, options.mode))?.as_f64(),
            de_average(&ens, &spin_up_projector(&layout))?.as_f64(),
        ];
        let top = de_average(&ens, &top_decile_projector(&layout, initial.max_occupation()))?.as_f64();
        (tracked, top)
    };
    Ok(EnsembleAttempt { n_max: n, layout, spectrum, initial: psi0, tracked, top_population })
}

/// Denominator floor for relative changes of tracked averages.
const CHANGE_FLOOR: f64 = 1e-12;

/// Grows the cutoff like [`crate::dynamics::adaptive_cutoff`] until `d_eff`,
/// `<n>` and `P(up)` of the diagonal ensemble agree with the next cutoff to
/// the relative tolerance and the top Fock decile carries less than the
/// population threshold.
pub fn converged_ensemble<T: Real + RealField>(
    params: &ModelParams<T>,
    initial: &InitialState,
    options: &CutoffOptions,
) -> Result<ConvergedEnsemble<T>> {
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", options.tolerance)));
    }
    let mut n = initial.max_occupation().max(options.min_cutoff).max(1);
    if n > options.hard_cap {
        return Err(Error::CutoffCap { cap: options.hard_cap });
    }
    let mut history = Vec::new();
    let mut prev: Option<EnsembleAttempt<T>> = None;
    loop {
        let cur = ensemble_attempt(params, initial, n, options)?;
        let change = prev.as_ref().map(|p| {
            cur.tracked
                .iter()
                .zip(&p.tracked)
                .map(|(a, b)| (a - b).abs() / b.abs().max(CHANGE_FLOOR))
                .fold(0.0, f64::max)
        });
        history.push(CutoffStep { n_max: n, top_population: cur.top_population, max_relative_change: change });
        if let (Some(p), Some(c)) = (prev.take(), change) {
            if p.top_population < options.population_threshold && c < options.tolerance {
                return Ok(ConvergedEnsemble {
                    n_max: p.n_max,
                    layout: p.layout,
                    spectrum: p.spectrum,
                    initial: p.initial,
                    history,
                });
            }
        }
        if n >= options.hard_cap {
            return Err(Error::CutoffCap { cap: options.hard_cap });
        }
        n = (2 * n).min(options.hard_cap);
        prev = Some(cur);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeffPoint {
    pub x: f64,
    pub d_eff: f64,
    pub n_max: usize,
}

/// `d_eff` of `|spin, n>` for each occupation `n`, each at its own converged
/// cutoff.
pub fn deff_vs_occupation<T: Real + RealField>(
    params: &ModelParams<T>,
    spin: SpinLabel,
    occupations: &[usize],
    options: &CutoffOptions,
) -> Result<Vec<DeffPoint>> {
    let modes = cutoffs_for(params.kind, 0).len();
    occupations
        .par_iter()
        .map(|&n| {
            let init = InitialState::new(spin, &vec![n; modes]);
            let c = converged_ensemble(params, &init, options)?;
            Ok(DeffPoint { x: n as f64, d_eff: c.ensemble().effective_dimension().as_f64(), n_max: c.n_max })
        })
        .collect()
}

/// `d_eff` of one initial state across couplings.
pub fn deff_vs_coupling<T: Real + RealField>(
    params: &ModelParams<T>,
    initial: &InitialState,
    couplings: &[T],
    options: &CutoffOptions,
) -> Result<Vec<DeffPoint>> {
    couplings
        .par_iter()
        .map(|&g| {
            let c = converged_ensemble(&params.with_g(g), initial, options)?;
            Ok(DeffPoint { x: g.as_f64(), d_eff: c.ensemble().effective_dimension().as_f64(), n_max: c.n_max })
        })
        .collect()
}


#[cfg(test)]
mod props {
    use super::*;
    use crate::hilbert::basis_state;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn deff_bounded_and_phase_invariant(g in 0.1f64..2.5, n in 0usize..6, phase in 0.0f64..6.3) {
            let p = ModelParams::qr(1.0, 3.0, g).unwrap();
            let (layout, spec) = solve_model(&p, &[24], true).unwrap();
            let psi = basis_state::<f64>(SpinLabel::Plus, &[n], &layout).unwrap();
            let d = de_weights(&spec, &psi).unwrap().effective_dimension();
            prop_assert!(d >= 1.0 - 1e-12 && d <= layout.dim() as f64);
            let rot: Vec<C<f64>> = psi.amplitudes().iter().map(|a| a * cis(phase)).collect();
            let psi2 = QuantumState::from_amplitudes(layout.clone(), rot).unwrap();
            let d2 = de_weights(&spec, &psi2).unwrap().effective_dimension();
            prop_assert!((d - d2).abs() < 1e-9 * d);
        }
    }
}
