//! Truncation control and model-level FOTOC pipelines.

use nalgebra::RealField;
use serde::Serialize;

use super::evolve::Evolver;
use super::fit::{fit_lyapunov, LyapunovFit};
use super::{linear_grid, InitialState, TimeSeries};
use crate::error::{Error, Result};
use crate::hilbert::{diagonal_operator, quadrature_g_full, BasisLayout, HermitianMatrix};
use crate::models::{ModelKind, ModelParams};
use crate::scalar::Real;
use crate::spectral::{solve_model, Spectrum};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CutoffOptions {
    /// Largest accepted relative change of `var G` between successive cutoffs.
    pub tolerance: f64,
    pub hard_cap: usize,
    /// Largest accepted population of the top decile of Fock levels.
    pub population_threshold: f64,
    /// First cutoff tried (raised to the initial occupation if lower).
    pub min_cutoff: usize,
    /// Mode whose quadrature defines `G`.
    pub mode: usize,
}

impl Default for CutoffOptions {
    fn default() -> Self {
        Self { tolerance: 1e-4, hard_cap: 8192, population_threshold: 1e-8, min_cutoff: 0, mode: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CutoffStep {
    pub n_max: usize,
    /// Largest population of the top Fock decile over the time grid.
    pub top_population: f64,
    /// Largest relative change of the series against the previous cutoff.
    pub max_relative_change: Option<f64>,
}

/// FOTOC series at the accepted cutoff, with the spectrum it came from.
#[derive(Debug, Clone)]
pub struct ConvergedSeries<T> {
    pub n_max: usize,
    pub layout: BasisLayout,
    pub spectrum: Spectrum<T>,
    pub series: TimeSeries<T>,
    pub history: Vec<CutoffStep>,
}

/// Diagonal projector onto basis states with some occupation in the top
/// decile `n >= n_max - n_max/10` of its mode and above `exclude_upto`.
pub fn top_decile_projector<T: Real>(layout: &BasisLayout, exclude_upto: usize) -> HermitianMatrix<T> {
    let values = layout
        .states()
        .map(|s| {
            let hit =
                s.occupations.iter().zip(layout.cutoffs()).any(|(&n, &cut)| n >= cut - cut / 10 && n > exclude_upto);
            if hit {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    diagonal_operator(values)
}

pub(crate) fn cutoffs_for(params_kind: ModelKind, n: usize) -> Vec<usize> {
    match params_kind {
        ModelKind::Qjt => vec![n, n],
        _ => vec![n],
    }
}

struct Attempt<T> {
    n_max: usize,
    layout: BasisLayout,
    spectrum: Spectrum<T>,
    series: TimeSeries<T>,
    top_population: f64,
}

fn attempt<T: Real + RealField>(
    params: &ModelParams<T>,
    initial: &InitialState,
    times: &[T],
    n: usize,
    options: &CutoffOptions,
) -> Result<Attempt<T>> {
    let (layout, spectrum) = solve_model(params, &cutoffs_for(params.kind, n), true)?;
    if options.mode >= layout.n_modes() {
        return Err(Error::InvalidInput(format!("mode {} does not exist", options.mode)));
    }
    let psi0 = initial.build::<T>(&layout)?;
    let (series, top_population) = {
        let ev = Evolver::new(&spectrum, &psi0)?;
        let g = quadrature_g_full::<T>(&layout, options.mode);
        let (rg, rg2) = ev.reduce(&g, true)?;
        let rg2 = rg2.expect("square requested");
        let (rp, _) = ev.reduce(&top_decile_projector(&layout, initial.max_occupation()), false)?;
        let out = ev.expectation_series(&[&rg, &rg2, &rp], times);
        let var = out[0].iter().zip(&out[1]).map(|(m, s)| num_traits::Float::max(*s - *m * *m, T::zero())).collect();
        let pop = out[2].iter().fold(0.0f64, |acc, p| acc.max(p.as_f64()));
        (TimeSeries::new(times.to_vec(), var)?.with_params(params), pop)
    };
    Ok(Attempt { n_max: n, layout, spectrum, series, top_population })
}

fn max_relative_change<T: Real>(new: &[T], old: &[T]) -> f64 {
    new.iter()
        .zip(old)
        .map(|(a, b)| {
            let (a, b) = (a.as_f64(), b.as_f64());
            (a - b).abs() / b.abs().max(1e-300)
        })
        .fold(0.0, f64::max)
}

/// Grows the cutoff (`n, max(2n, n+1), ..`) until the top Fock decile stays
/// below the population threshold over the grid and the `var G` series agrees
/// with the one at the next cutoff to the relative tolerance. Returns the
/// smaller cutoff of the agreeing pair.
pub fn adaptive_cutoff<T: Real + RealField>(
    params: &ModelParams<T>,
    initial: &InitialState,
    times: &[T],
    options: &CutoffOptions,
) -> Result<ConvergedSeries<T>> {
    if !(options.tolerance > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {}", options.tolerance)));
    }
    let mut n = initial.max_occupation().max(options.min_cutoff);
    if n > options.hard_cap {
        return Err(Error::CutoffCap { cap: options.hard_cap });
    }
    let mut history = Vec::new();
    let mut prev: Option<Attempt<T>> = None;
    loop {
        let cur = attempt(params, initial, times, n, options)?;
        let change = prev.as_ref().map(|p| max_relative_change(&cur.series.values, &p.series.values));
        history.push(CutoffStep { n_max: n, top_population: cur.top_population, max_relative_change: change });
        if let (Some(p), Some(c)) = (prev.take(), change) {
            if p.top_population < options.population_threshold && c < options.tolerance {
                let series = p.series.with_meta("n_max", p.n_max as f64);
                return Ok(ConvergedSeries { n_max: p.n_max, layout: p.layout, spectrum: p.spectrum, series, history });
            }
        }
        if n >= options.hard_cap {
            return Err(Error::CutoffCap { cap: options.hard_cap });
        }
        n = (2 * n).max(n + 1).min(options.hard_cap);
        prev = Some(cur);
    }
}

/// A FOTOC run on a uniform grid with a refined fit.
#[derive(Debug, Clone)]
pub struct LyapunovRun<T> {
    pub converged: ConvergedSeries<T>,
    /// Uniform grid merged with the refinement points.
    pub refined: TimeSeries<T>,
    pub fit: std::result::Result<LyapunovFit, Error>,
}

/// Converges the cutoff on a uniform grid over `[0, horizon]`, fits, then
/// re-evaluates `var G` on `refine_points` extra points spanning the fit
/// window up to `t*` and refits on the merged grid.
pub fn lyapunov_run<T: Real + RealField>(
    params: &ModelParams<T>,
    initial: &InitialState,
    horizon: T,
    grid_points: usize,
    refine_points: usize,
    options: &CutoffOptions,
) -> Result<LyapunovRun<T>> {
    let times = linear_grid(T::zero(), horizon, grid_points)?;
    let converged = adaptive_cutoff(params, initial, &times, options)?;
    let coarse_fit = fit_lyapunov(&converged.series);
    let (refined, fit) = match &coarse_fit {
        Ok(f) if refine_points >= 2 => {
            let dt = horizon.as_f64() / (grid_points - 1) as f64;
            let a = (f.fit_window.0 - dt).max(0.0);
            let b = (f.t_star + dt).min(horizon.as_f64());
            let extra = linear_grid(T::lit(a), T::lit(b), refine_points)?;
            let mut merged: Vec<T> = times.iter().copied().chain(extra).collect();
            merged.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
            merged.dedup_by(|x, y| num_traits::Float::abs(*x - *y) <= T::epsilon() * horizon);
            let psi0 = initial.build::<T>(&converged.layout)?;
            let ev = Evolver::new(&converged.spectrum, &psi0)?;
            let g = quadrature_g_full::<T>(&converged.layout, options.mode);
            let mut s = super::fotoc::variance_from_evolver(&ev, &g, &merged)?;
            s.meta = converged.series.meta.clone();
            let fit = fit_lyapunov(&s);
            (s, fit)
        }
        _ => (converged.series.clone(), coarse_fit),
    };
    Ok(LyapunovRun { converged, refined, fit })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::SpinLabel;

    #[test]
    fn decoupled_model_needs_one_doubling() {
        let p = ModelParams::<f64>::qr(1.0, 3.0, 0.0).unwrap();
        let init = InitialState::new(SpinLabel::Down, &[4]);
        let times = linear_grid(0.0, 10.0, 50).unwrap();
        let c = adaptive_cutoff(&p, &init, &times, &CutoffOptions::default()).unwrap();
        // G couples the occupied level to n = 5, so cutoff 4 is too small
        assert_eq!(c.n_max, 8);
        assert!((c.series.values[10] - 2.25).abs() < 1e-12);
    }

    #[test]
    fn tighter_tolerance_never_lowers_cutoff() {
        let p = ModelParams::qr(1.0, 4.0, 1.5).unwrap();
        let init = InitialState::new(SpinLabel::Plus, &[0]);
        let times = linear_grid(0.0, 8.0, 100).unwrap();
        let loose = CutoffOptions { tolerance: 1e-3, ..Default::default() };
        let tight = CutoffOptions { tolerance: 1e-4, ..Default::default() };
        let a = adaptive_cutoff(&p, &init, &times, &loose).unwrap();
        let b = adaptive_cutoff(&p, &init, &times, &tight).unwrap();
        assert!(b.n_max >= a.n_max);
    }

    #[test]
    fn cap_is_reported() {
        let p = ModelParams::qr(1.0, 4.0, 1.5).unwrap();
        let init = InitialState::new(SpinLabel::Plus, &[0]);
        let times = linear_grid(0.0, 8.0, 50).unwrap();
        let opts = CutoffOptions { hard_cap: 4, ..Default::default() };
        assert_eq!(adaptive_cutoff(&p, &init, &times, &opts).unwrap_err(), Error::CutoffCap { cap: 4 });
    }
}
