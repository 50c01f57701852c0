//! Spectrum unfolding and nearest-neighbour spacing statistics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::regression::least_squares;
use crate::scalar::Real;

pub const MIN_UNFOLD_LEVELS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnfoldingOptions {
    pub poly_degree: usize,
    /// Fraction of levels dropped at each end of the spectrum.
    pub edge_trim_fraction: f64,
}

impl Default for UnfoldingOptions {
    fn default() -> Self {
        Self { poly_degree: 7, edge_trim_fraction: 0.02 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Unfolded<T> {
    /// Normalized to unit mean.
    pub spacings: Vec<T>,
    /// Mean spacing of the fitted staircase before normalization.
    pub mean_spacing: T,
    pub levels_used: usize,
    pub options: UnfoldingOptions,
}

/// Chebyshev polynomials `T_0..=T_deg` at `x`.
fn chebyshev<T: Real>(x: T, deg: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(deg + 1);
    out.push(T::one());
    if deg >= 1 {
        out.push(x);
    }
    for k in 2..=deg {
        let next = T::lit(2.0) * x * out[k - 1] - out[k - 2];
        out.push(next);
    }
    out
}

/// Fits a polynomial to the cumulative level count `N(E)` of the trimmed,
/// sorted spectrum and returns consecutive differences of the mapped levels.
pub fn unfold<T: Real>(eigenvalues: &[T], options: UnfoldingOptions) -> Result<Unfolded<T>> {
    if !(0.0..0.5).contains(&options.edge_trim_fraction) {
        return Err(Error::InvalidInput(format!(
            "edge trim fraction must lie in [0, 0.5), got {}",
            options.edge_trim_fraction
        )));
    }
    let mut levels = eigenvalues.to_vec();
    levels.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let trim = (options.edge_trim_fraction * levels.len() as f64).floor() as usize;
    let kept = &levels[trim..levels.len() - trim];
    if kept.len() < MIN_UNFOLD_LEVELS.max(options.poly_degree + 2) {
        return Err(Error::TooFewLevels { need: MIN_UNFOLD_LEVELS.max(options.poly_degree + 2), got: kept.len() });
    }
    let (lo, hi) = (kept[0], kept[kept.len() - 1]);
    if !(hi > lo) {
        return Err(Error::InvalidInput("spectrum has zero width".into()));
    }
    let center = (lo + hi) * T::lit(0.5);
    let half = (hi - lo) * T::lit(0.5);
    let xs: Vec<T> = kept.iter().map(|e| (*e - center) / half).collect();
    let basis: Vec<Vec<T>> = xs.iter().map(|x| chebyshev(*x, options.poly_degree)).collect();
    let columns: Vec<Vec<T>> = (0..=options.poly_degree).map(|k| basis.iter().map(|row| row[k]).collect()).collect();
    // staircase value at the i-th kept level, counted in the full spectrum
    let staircase: Vec<T> = (0..kept.len()).map(|i| T::from_usize_exact(trim + i + 1)).collect();
    let fit = least_squares(&columns, &staircase)?;
    let mapped: Vec<T> =
        basis.iter().map(|row| row.iter().zip(&fit.coefficients).map(|(b, c)| *b * *c).sum()).collect();
    let raw: Vec<T> = mapped.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_spacing = raw.iter().copied().sum::<T>() / T::from_usize_exact(raw.len());
    if !(mean_spacing > T::zero()) {
        return Err(Error::InvalidInput("unfolded staircase is not increasing".into()));
    }
    // the polynomial fixes the local density; the final rescale pins the global mean
    let spacings = raw.iter().map(|s| *s / mean_spacing).collect();
    Ok(Unfolded { spacings, mean_spacing, levels_used: kept.len(), options })
}

pub fn p_poisson<T: Real>(s: T) -> T {
    (-s).exp()
}

pub fn p_wigner_dyson<T: Real>(s: T) -> T {
    let half_pi = T::FRAC_PI_2();
    half_pi * s * (-half_pi * s * s).exp()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacingHistogram<T> {
    pub bin_edges: Vec<T>,
    /// Normalized over the spacings that fall inside `[0, s_max)`.
    pub densities: Vec<T>,
    pub n_spacings: usize,
    /// Spacings outside `[0, s_max)`, excluded from the normalization.
    pub n_outside: usize,
    pub bin_centers: Vec<T>,
    pub p_poisson: Vec<T>,
    pub p_wigner_dyson: Vec<T>,
}

impl<T: Real> SpacingHistogram<T> {
    pub fn bin_width(&self) -> T {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn integral(&self) -> T {
        let w = self.bin_width();
        self.densities.iter().map(|d| *d * w).sum()
    }
}

pub fn spacing_histogram<T: Real>(spacings: &[T], bin_width: T, s_max: T) -> Result<SpacingHistogram<T>> {
    if spacings.is_empty() {
        return Err(Error::InvalidInput("no spacings to histogram".into()));
    }
    if !(bin_width > T::zero()) || !(s_max >= bin_width) {
        return Err(Error::InvalidInput(format!("bad binning: width {bin_width}, s_max {s_max}")));
    }
    let n_bins = (s_max / bin_width).round().to_usize().unwrap_or(1).max(1);
    let bin_edges: Vec<T> = (0..=n_bins).map(|k| bin_width * T::from_usize_exact(k)).collect();
    let top = bin_edges[n_bins];
    let mut counts = vec![0usize; n_bins];
    let mut outside = 0;
    for &s in spacings {
        if s < T::zero() || s >= top {
            outside += 1;
            continue;
        }
        let k = (s / bin_width).floor().to_usize().unwrap_or(0).min(n_bins - 1);
        counts[k] += 1;
    }
    let inside = spacings.len() - outside;
    let norm = if inside > 0 { T::from_usize_exact(inside) * bin_width } else { T::one() };
    let densities = counts.iter().map(|c| T::from_usize_exact(*c) / norm).collect();
    let bin_centers: Vec<T> = bin_edges.windows(2).map(|w| (w[0] + w[1]) * T::lit(0.5)).collect();
    Ok(SpacingHistogram {
        bin_edges,
        densities,
        n_spacings: spacings.len(),
        n_outside: outside,
        p_poisson: bin_centers.iter().map(|s| p_poisson(*s)).collect(),
        p_wigner_dyson: bin_centers.iter().map(|s| p_wigner_dyson(*s)).collect(),
        bin_centers,
    })
}

/// Fraction of spacings strictly below `s_min`.
pub fn small_spacing_fraction<T: Real>(spacings: &[T], s_min: T) -> Result<f64> {
    if spacings.is_empty() {
        return Err(Error::InvalidInput("no spacings".into()));
    }
    let below = spacings.iter().filter(|s| **s < s_min).count();
    Ok(below as f64 / spacings.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn linear_spectrum_unit_spacings() {
        let e: Vec<f64> = (0..400).map(|n| n as f64).collect();
        let u = unfold(&e, UnfoldingOptions::default()).unwrap();
        for s in &u.spacings {
            assert!((s - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn quadratic_spectrum_mean_one() {
        let e: Vec<f64> = (0..1000).map(|n| (n * n) as f64).collect();
        let u = unfold(&e, UnfoldingOptions::default()).unwrap();
        let mean = u.spacings.iter().sum::<f64>() / u.spacings.len() as f64;
        assert!((mean - 1.0).abs() < 1e-12);
        let n = u.spacings.len();
        for s in &u.spacings[n / 4..3 * n / 4] {
            assert!((s - 1.0).abs() < 0.2, "bulk spacing {s}");
        }
    }

    #[test]
    fn too_few_levels() {
        let e: Vec<f64> = (0..40).map(|n| n as f64).collect();
        assert!(matches!(unfold(&e, UnfoldingOptions::default()), Err(Error::TooFewLevels { .. })));
    }

    #[test]
    fn reference_curves() {
        assert_eq!(p_poisson(0.0f64), 1.0);
        assert_eq!(p_wigner_dyson(0.0f64), 0.0);
        // (pi/2) e^{-pi/2}
        assert_relative_eq!(p_wigner_dyson(1.0f64), 0.3265364749474561, max_relative = 1e-14);
    }

    #[test]
    fn single_bin_histogram() {
        let h = spacing_histogram(&[0.42f64; 17], 0.1, 4.0).unwrap();
        let nonzero: Vec<f64> = h.densities.iter().copied().filter(|d| *d > 0.0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_relative_eq!(nonzero[0], 10.0, max_relative = 1e-12);
        assert_relative_eq!(h.integral(), 1.0, epsilon = 1e-12);
        assert_eq!(h.densities.len(), 40);
    }

    #[test]
    fn small_spacing_fractions() {
        assert_eq!(small_spacing_fraction(&[1.0f64; 8], 0.5).unwrap(), 0.0);
        assert_eq!(small_spacing_fraction(&[0.01f64, 1.0, 1.0, 1.0], 0.05).unwrap(), 0.25);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn unfolding_is_affine_invariant(
            a in 0.01f64..100.0, b in -1e3f64..1e3,
            raw in proptest::collection::vec(0.05f64..2.0, 120..200)
        ) {
            let mut acc = 0.0;
            let levels: Vec<f64> = raw.iter().map(|d| { acc += d; acc }).collect();
            let shifted: Vec<f64> = levels.iter().map(|e| a * e + b).collect();
            let u1 = unfold(&levels, UnfoldingOptions::default()).unwrap();
            let u2 = unfold(&shifted, UnfoldingOptions::default()).unwrap();
            for (x, y) in u1.spacings.iter().zip(&u2.spacings) {
                prop_assert!((x - y).abs() < 1e-6);
            }
        }

        #[test]
        fn histogram_integrates_to_one(s in proptest::collection::vec(0.0f64..6.0, 1..300)) {
            if let Ok(h) = spacing_histogram(&s, 0.1, 4.0) {
                if h.n_outside < s.len() {
                    prop_assert!((h.integral() - 1.0).abs() < 1e-6);
                }
                prop_assert!(h.densities.iter().all(|d| *d >= 0.0));
            }
        }
    }
}
