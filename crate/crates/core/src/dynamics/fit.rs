use std::collections::BTreeMap;

use serde::Serialize;

use super::TimeSeries;
use crate::error::{Error, Result};
use crate::regression::{least_squares, line_fit};
use crate::scalar::Real;

/// A local maximum within this fraction of the global maximum is `t*`.
const NEAR_MAX: f64 = 0.9;

/// Which thresholds delimited a fit window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    /// `[growth_factor * v0, peak_fraction * v(t*)]`.
    Threshold,
    /// `[v0 R^{1/4}, v0 R^{3/4}]` with `R = v(t*)/v0`, used when the threshold
    /// window is empty.
    LogMidrange,
}

/// Thresholds delimiting the exponential-growth window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitRule {
    /// Growth over the initial value that opens the window and that a series
    /// must reach at all to count as growing.
    pub growth_factor: f64,
    /// The window closes once the series reaches this fraction of its value
    /// at `t*`.
    pub peak_fraction: f64,
    /// Fall back to [`WindowKind::LogMidrange`] when the thresholds cross.
    pub midrange_fallback: bool,
}

impl Default for FitRule {
    fn default() -> Self {
        Self { growth_factor: 10.0, peak_fraction: 0.1, midrange_fallback: true }
    }
}

impl FitRule {
    /// Threshold window only.
    pub fn strict() -> Self {
        Self { midrange_fallback: false, ..Self::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LyapunovFit {
    pub lambda_q: f64,
    pub t_star: f64,
    pub fit_window: (f64, f64),
    pub r_squared: f64,
    pub points: usize,
    pub peak_value: f64,
    pub window_kind: WindowKind,
    /// Parameters copied from the fitted series.
    pub meta: BTreeMap<String, f64>,
}

impl LyapunovFit {
    pub fn product(&self) -> f64 {
        self.lambda_q * self.t_star
    }
}

/// Index of the first local maximum whose value is within 10% of the global
/// maximum.
pub fn find_scrambling_time<T: Real>(series: &TimeSeries<T>) -> Option<usize> {
    let (_, vmax) = series.argmax()?;
    let v = &series.values;
    let threshold = vmax * T::lit(NEAR_MAX);
    (0..v.len()).find(|&i| {
        let left = i == 0 || v[i] >= v[i - 1];
        let right = i + 1 == v.len() || v[i] >= v[i + 1];
        v[i] >= threshold && left && right
    })
}

/// Exponential-growth fit `value ~ e^{lambda_q t}` before the scrambling time.
///
/// `t*` is the first local maximum within 10% of the global maximum; the fit
/// window runs from the first time the series reaches 10x its initial value
/// to the first time it reaches 10% of its value at `t*`. When the growth is
/// too short for those thresholds to leave a window, the middle half of the
/// logarithmic growth range is fitted instead.
pub fn fit_lyapunov<T: Real>(series: &TimeSeries<T>) -> Result<LyapunovFit> {
    fit_lyapunov_with(series, &FitRule::default())
}

/// [`fit_lyapunov`] with explicit window thresholds.
pub fn fit_lyapunov_with<T: Real>(series: &TimeSeries<T>, rule: &FitRule) -> Result<LyapunovFit> {
    if !(rule.growth_factor > 1.0) || !(rule.peak_fraction > 0.0 && rule.peak_fraction <= 1.0) {
        return Err(Error::InvalidInput(format!("bad fit rule {rule:?}")));
    }
    if series.len() < 3 {
        return Err(Error::TooFewLevels { need: 3, got: series.len() });
    }
    let v: Vec<f64> = series.values.iter().map(|x| x.as_f64()).collect();
    let t: Vec<f64> = series.times.iter().map(|x| x.as_f64()).collect();
    let v0 = v[0];
    if !(v0 > 0.0) {
        return Err(Error::InvalidInput(format!("initial value must be positive, got {v0}")));
    }
    let vmax = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if vmax < rule.growth_factor * v0 {
        return Err(Error::NoGrowthPhase { ratio: vmax / v0 });
    }
    let i_star = find_scrambling_time(series).expect("nonempty series");
    let first_reaching = |level: f64| v.iter().position(|x| *x >= level).expect("level below the peak");
    let lo = first_reaching(rule.growth_factor * v0);
    let hi = first_reaching(rule.peak_fraction * v[i_star]);
    let valid = |lo: usize, hi: usize| hi >= lo + 2 && hi <= i_star;
    let (lo, hi, window_kind) = if valid(lo, hi) {
        (lo, hi, WindowKind::Threshold)
    } else if rule.midrange_fallback {
        let r = v[i_star] / v0;
        let (a, b) = (first_reaching(v0 * r.powf(0.25)), first_reaching(v0 * r.powf(0.75)));
        if !valid(a, b) {
            return Err(Error::DegenerateFitWindow { points: (b + 1).saturating_sub(a), t_lo: t[a], t_hi: t[b] });
        }
        (a, b, WindowKind::LogMidrange)
    } else {
        return Err(Error::DegenerateFitWindow { points: (hi + 1).saturating_sub(lo), t_lo: t[lo], t_hi: t[hi] });
    };
    let xs = &t[lo..=hi];
    let ys: Vec<f64> = v[lo..=hi].iter().map(|x| x.ln()).collect();
    let (slope, _, r2) = line_fit(xs, &ys)?;
    Ok(LyapunovFit {
        lambda_q: slope,
        t_star: t[i_star],
        fit_window: (t[lo], t[hi]),
        r_squared: r2,
        points: hi + 1 - lo,
        peak_value: v[i_star],
        window_kind,
        meta: series.meta.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingFits {
    /// `t* = a log(eta) + b log(eta)^2`.
    pub a: f64,
    pub b: f64,
    pub r2_t_star: f64,
    /// `lambda_q t* = c log(eta) + d`.
    pub c: f64,
    pub d: f64,
    pub r2_product: f64,
}

pub fn scaling_fits(etas: &[f64], fits: &[LyapunovFit]) -> Result<ScalingFits> {
    if etas.len() != fits.len() {
        return Err(Error::DimensionMismatch { expected: etas.len(), got: fits.len() });
    }
    if etas.len() < 4 {
        return Err(Error::TooFewLevels { need: 4, got: etas.len() });
    }
    if etas.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("eta values must be positive".into()));
    }
    let logs: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
    let sq: Vec<f64> = logs.iter().map(|l| l * l).collect();
    let t_star: Vec<f64> = fits.iter().map(|f| f.t_star).collect();
    let quad = least_squares(&[logs.clone(), sq], &t_star)?;
    let product: Vec<f64> = fits.iter().map(LyapunovFit::product).collect();
    let (c, d, r2) = line_fit(&logs, &product)?;
    Ok(ScalingFits {
        a: quad.coefficients[0],
        b: quad.coefficients[1],
        r2_t_star: quad.r_squared,
        c,
        d,
        r2_product: r2,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LongTimeProfile {
    pub t_star: f64,
    pub global_max: f64,
    /// Peak times of later excursions above 90% of the global maximum.
    pub recurrence_times: Vec<f64>,
    pub recurrence_values: Vec<f64>,
    /// Range of the series after the first near-maximal excursion ends.
    pub envelope: Option<(f64, f64)>,
    /// True when the series, once near its maximum, never leaves that band.
    pub plateau: bool,
}

/// Splits the series into excursions above 90% of its global maximum and
/// reports the later ones as recurrences of the scrambling peak.
pub fn long_time_profile<T: Real>(series: &TimeSeries<T>) -> Result<LongTimeProfile> {
    let (_, vmax) = series.argmax().ok_or(Error::InvalidInput("empty series".into()))?;
    let vmax = vmax.as_f64();
    let v: Vec<f64> = series.values.iter().map(|x| x.as_f64()).collect();
    let t: Vec<f64> = series.times.iter().map(|x| x.as_f64()).collect();
    let threshold = NEAR_MAX * vmax;
    let mut excursions: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < v.len() {
        if v[i] >= threshold {
            let start = i;
            while i < v.len() && v[i] >= threshold {
                i += 1;
            }
            excursions.push((start, i));
        } else {
            i += 1;
        }
    }
    let first = excursions[0];
    let t_first = t[first.0] - t[0];
    let horizon = t[t.len() - 1] - t[0];
    if horizon < 5.0 * t_first {
        return Err(Error::InvalidInput(format!(
            "horizon {horizon} is shorter than 5x the first near-maximal time {t_first}"
        )));
    }
    let peak = |(a, b): (usize, usize)| (a..b).fold(a, |best, j| if v[j] > v[best] { j } else { best });
    let i_star = find_scrambling_time(series).unwrap_or_else(|| peak(first));
    let later = &excursions[1..];
    let envelope = (first.1 < v.len())
        .then(|| v[first.1..].iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(*x), hi.max(*x))));
    Ok(LongTimeProfile {
        t_star: t[i_star],
        global_max: vmax,
        recurrence_times: later.iter().map(|&e| t[peak(e)]).collect(),
        recurrence_values: later.iter().map(|&e| v[peak(e)]).collect(),
        envelope,
        plateau: first.1 == v.len(),
    })
}
