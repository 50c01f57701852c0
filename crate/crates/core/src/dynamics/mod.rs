//! Exact eigenbasis time evolution, FOTOC and echo observables, Lyapunov and
//! scrambling-time extraction.

mod cutoff;
mod evolve;
mod fit;
mod fotoc;

pub(crate) use cutoff::cutoffs_for;
pub use cutoff::{
    adaptive_cutoff, lyapunov_run, top_decile_projector, ConvergedSeries, CutoffOptions, CutoffStep, LyapunovRun,
};
pub use evolve::{evolve, EigenCoefficients, Evolver, Reduced, DEFAULT_TAIL_WEIGHT};
pub use fit::{
    find_scrambling_time, fit_lyapunov, fit_lyapunov_with, long_time_profile, scaling_fits, FitRule, LongTimeProfile,
    LyapunovFit, ScalingFits, WindowKind,
};
pub use fotoc::{
    echo_divergence_series, fotoc_echo_series, fotoc_variance_direct, fotoc_variance_series, EchoDivergence,
    EchoObservable, Kick,
};

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::{basis_state, BasisLayout, QuantumState, SpinLabel};
use crate::models::ModelParams;
use crate::scalar::Real;

/// Values on a strictly increasing time grid, with a free-form parameter record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries<T> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub meta: BTreeMap<String, f64>,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(times: Vec<T>, values: Vec<T>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { expected: times.len(), got: values.len() });
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
        }
        Ok(Self { times, values, meta: BTreeMap::new() })
    }

    pub fn with_meta(mut self, key: &str, value: f64) -> Self {
        self.meta.insert(key.to_string(), value);
        self
    }

    pub fn with_params(mut self, p: &ModelParams<T>) -> Self {
        for (k, v) in [("omega", p.omega), ("delta", p.delta), ("g", p.g), ("lambda_perturb", p.lambda_perturb)] {
            self.meta.insert(k.into(), v.as_f64());
        }
        self.meta.insert("eta".into(), p.eta().as_f64());
        self.meta.insert("g_c".into(), p.g_c().as_f64());
        self
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Index and value of the largest entry.
    pub fn argmax(&self) -> Option<(usize, T)> {
        self.values.iter().copied().enumerate().fold(None, |best, (i, v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((i, v)),
        })
    }
}

/// `n` equally spaced points on `[t0, t1]` (both ends included).
pub fn linear_grid<T: Real>(t0: T, t1: T, n: usize) -> Result<Vec<T>> {
    if n < 2 || !(t1 > t0) {
        return Err(Error::InvalidInput(format!("bad time grid: [{t0}, {t1}] with {n} points")));
    }
    let step = (t1 - t0) / T::from_usize_exact(n - 1);
    Ok((0..n).map(|k| t0 + step * T::from_usize_exact(k)).collect())
}

/// Product initial state described independently of the cutoff.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitialState {
    pub spin: SpinLabel,
    pub occupations: Vec<usize>,
}

impl InitialState {
    pub fn new(spin: SpinLabel, occupations: &[usize]) -> Self {
        Self { spin, occupations: occupations.to_vec() }
    }

    pub fn max_occupation(&self) -> usize {
        self.occupations.iter().copied().max().unwrap_or(0)
    }

    pub fn build<T: Real>(&self, layout: &BasisLayout) -> Result<QuantumState<T>> {
        basis_state(self.spin, &self.occupations, layout)
    }
}
