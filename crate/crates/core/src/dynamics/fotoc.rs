use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::evolve::{EigenCoefficients, Evolver};
use super::TimeSeries;
use crate::error::{Error, Result};
use crate::hilbert::{HermitianMatrix, QuantumState};
use crate::scalar::{cis, inner, Real, C};
use crate::spectral::{eig_tridiag, BlockVectors, Spectrum};
use crate::symmetry::SymmetricTridiagonal;

/// `var G(t) = <G^2> - <G>^2` along `psi(t)`, which equals `(1 - F_G)/dphi^2`
/// to leading order in the kick strength.
pub fn fotoc_variance_series<T: Real>(
    spectrum: &Spectrum<T>,
    psi0: &QuantumState<T>,
    g: &HermitianMatrix<T>,
    times: &[T],
) -> Result<TimeSeries<T>> {
    let ev = Evolver::new(spectrum, psi0)?;
    variance_from_evolver(&ev, g, times)
}

pub(crate) fn variance_from_evolver<T: Real>(
    ev: &Evolver<'_, T>,
    g: &HermitianMatrix<T>,
    times: &[T],
) -> Result<TimeSeries<T>> {
    let (rg, rg2) = ev.reduce(g, true)?;
    let rg2 = rg2.expect("square requested");
    let series = ev.expectation_series(&[&rg, &rg2], times);
    // rounding can push a vanishing variance a hair below zero
    let values = series[0].iter().zip(&series[1]).map(|(m, s)| (*s - *m * *m).max(T::zero())).collect();
    TimeSeries::new(times.to_vec(), values)
}

/// `var G(t)` from the full-space state: `||G psi||^2 - <psi|G|psi>^2`.
pub fn fotoc_variance_direct<T: Real>(ev: &Evolver<'_, T>, g: &HermitianMatrix<T>, t: T) -> T {
    let psi = ev.state_at(t);
    let gpsi = g.apply(psi.amplitudes());
    let mean = inner(psi.amplitudes(), &gpsi).re;
    crate::scalar::norm_sqr(&gpsi) - mean * mean
}

/// Exact unitary `e^{i dphi G}` for a generator that is a direct sum of
/// tridiagonal chains (such as a quadrature of one mode).
#[derive(Debug, Clone)]
pub struct Kick<T> {
    dim: usize,
    chains: Vec<(Vec<usize>, usize)>,
    solutions: Vec<(Vec<T>, DMatrix<T>)>,
}

impl<T: Real> Kick<T> {
    pub fn new(generator: &HermitianMatrix<T>) -> Result<Self> {
        let HermitianMatrix::Banded(b) = generator else {
            return Err(Error::InvalidInput("kick generator must be real banded".into()));
        };
        let n = b.dim();
        let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
        for d in 1..=b.bandwidth() {
            for (i, &v) in b.band(d).iter().enumerate() {
                if v != T::zero() {
                    neighbours[i].push(i + d);
                    neighbours[i + d].push(i);
                }
            }
        }
        let mut seen = vec![false; n];
        let mut chains = Vec::new();
        let mut solutions: Vec<(Vec<T>, DMatrix<T>)> = Vec::new();
        let mut cache: HashMap<Vec<u64>, usize> = HashMap::new();
        for start in 0..n {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut head = 0;
            while head < comp.len() {
                for &j in &neighbours[comp[head]] {
                    if !seen[j] {
                        seen[j] = true;
                        comp.push(j);
                    }
                }
                head += 1;
            }
            comp.sort_unstable();
            let diag: Vec<T> = comp.iter().map(|&i| b.get(i, i)).collect();
            let off: Vec<T> = comp.windows(2).map(|w| b.get(w[0], w[1])).collect();
            for (p, &i) in comp.iter().enumerate() {
                if neighbours[i].iter().any(|j| comp.binary_search(j).map_or(true, |q| q.abs_diff(p) != 1)) {
                    return Err(Error::InvalidInput("kick generator is not a direct sum of chains".into()));
                }
            }
            let key: Vec<u64> = diag.iter().chain(&off).map(|x| x.as_f64().to_bits()).collect();
            let slot = match cache.get(&key) {
                Some(&s) => s,
                None => {
                    let spec = eig_tridiag(&SymmetricTridiagonal::new(diag, off)?, true)?;
                    let blk = &spec.blocks()[0];
                    let Some(BlockVectors::Real(v)) = &blk.vectors else { unreachable!() };
                    solutions.push((blk.values.clone(), v.clone()));
                    cache.insert(key, solutions.len() - 1);
                    solutions.len() - 1
                }
            };
            chains.push((comp, slot));
        }
        Ok(Self { dim: n, chains, solutions })
    }

    pub fn apply(&self, delta_phi: T, x: &[C<T>]) -> Vec<C<T>> {
        assert_eq!(x.len(), self.dim);
        let mut out = vec![C::new(T::zero(), T::zero()); self.dim];
        for (idx, slot) in &self.chains {
            let (vals, u) = &self.solutions[*slot];
            let m = idx.len();
            let mut coef = vec![C::new(T::zero(), T::zero()); m];
            for (k, c) in coef.iter_mut().enumerate() {
                let mut acc = C::new(T::zero(), T::zero());
                for (r, &i) in idx.iter().enumerate() {
                    acc += x[i].scale(u[(r, k)]);
                }
                *c = acc * cis(delta_phi * vals[k]);
            }
            for (r, &i) in idx.iter().enumerate() {
                let mut acc = C::new(T::zero(), T::zero());
                for (k, c) in coef.iter().enumerate() {
                    acc += c.scale(u[(r, k)]);
                }
                out[i] = acc;
            }
        }
        out
    }
}

/// The echo observable `V`.
#[derive(Debug, Clone, Copy)]
pub enum EchoObservable<'a, T> {
    /// `|psi0><psi0|`, for which the echo is the FOTOC itself.
    Projector,
    Operator(&'a HermitianMatrix<T>),
}

struct EchoContext<'a, T> {
    spectrum: &'a Spectrum<T>,
    psi0: &'a [C<T>],
    c0: EigenCoefficients<T>,
    v: EchoObservable<'a, T>,
    v0: T,
}

impl<'a, T: Real> EchoContext<'a, T> {
    fn new(spectrum: &'a Spectrum<T>, psi0: &'a QuantumState<T>, v: EchoObservable<'a, T>) -> Result<Self> {
        if !spectrum.has_vectors() {
            return Err(Error::MissingVectors);
        }
        let c0 = EigenCoefficients::project(spectrum, psi0.amplitudes())?;
        let v0 = match v {
            EchoObservable::Projector => T::one(),
            EchoObservable::Operator(op) => {
                if op.dim() != spectrum.dim() {
                    return Err(Error::DimensionMismatch { expected: spectrum.dim(), got: op.dim() });
                }
                op.expectation(psi0.amplitudes())
            }
        };
        Ok(Self { spectrum, psi0: psi0.amplitudes(), c0, v, v0 })
    }

    fn measure(&self, phi: &[C<T>]) -> T {
        match self.v {
            EchoObservable::Projector => inner(self.psi0, phi).norm_sqr(),
            EchoObservable::Operator(op) => op.expectation(phi),
        }
    }

    fn forward(&self, t: T) -> Vec<C<T>> {
        let mut c = self.c0.clone();
        c.propagate(self.spectrum, t);
        c.synthesize(self.spectrum)
    }

    fn backward(&self, x: &[C<T>], t: T) -> Vec<C<T>> {
        let mut c = EigenCoefficients::project(self.spectrum, x).expect("dimensions checked");
        c.propagate(self.spectrum, -t);
        c.synthesize(self.spectrum)
    }

    /// `<psi0|V|psi0> - <psi0|U^dag V U|psi0>` with `U = e^{iHt} e^{i dphi G} e^{-iHt}`.
    fn divergence(&self, kick: &Kick<T>, psi_t: &[C<T>], delta_phi: T, t: T) -> T {
        let kicked = kick.apply(delta_phi, psi_t);
        let phi = self.backward(&kicked, t);
        self.v0 - self.measure(&phi)
    }
}

/// FOTOC from an explicit finite-kick echo: forward evolution, kick
/// `e^{i dphi G}`, backward evolution, measurement of `V`. Returns
/// `(<V>_0 - <V>_echo)/dphi^2`, i.e. `(1 - F)/dphi^2` for the projector.
pub fn fotoc_echo_series<T: Real>(
    spectrum: &Spectrum<T>,
    psi0: &QuantumState<T>,
    g: &HermitianMatrix<T>,
    v: EchoObservable<'_, T>,
    delta_phi: T,
    times: &[T],
) -> Result<TimeSeries<T>> {
    if !(delta_phi > T::zero()) {
        return Err(Error::InvalidInput(format!("kick strength must be positive, got {delta_phi}")));
    }
    let ctx = EchoContext::new(spectrum, psi0, v)?;
    let kick = Kick::new(g)?;
    let d2 = delta_phi * delta_phi;
    let values = times
        .par_iter()
        .map(|&t| {
            let psi_t = ctx.forward(t);
            ctx.divergence(&kick, &psi_t, delta_phi, t) / d2
        })
        .collect();
    Ok(TimeSeries::new(times.to_vec(), values)?.with_meta("delta_phi", delta_phi.as_f64()))
}

/// Echo divergence `Delta E_V / dphi^2` by two independent routes.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoDivergence<T> {
    /// Explicit echo, averaged over kicks `+dphi` and `-dphi` so the term odd
    /// in `dphi` cancels.
    pub echo: TimeSeries<T>,
    /// `(1/2) <[G(t), [G(t), V]]>` evaluated directly.
    pub commutator: TimeSeries<T>,
    /// Odd part `(Delta E(+dphi) - Delta E(-dphi)) / (2 dphi^2)`; zero for the
    /// projector, generally nonzero otherwise.
    pub odd: TimeSeries<T>,
}

pub fn echo_divergence_series<T: Real>(
    spectrum: &Spectrum<T>,
    psi0: &QuantumState<T>,
    g: &HermitianMatrix<T>,
    v: EchoObservable<'_, T>,
    delta_phi: T,
    times: &[T],
) -> Result<EchoDivergence<T>> {
    if !(delta_phi > T::zero()) {
        return Err(Error::InvalidInput(format!("kick strength must be positive, got {delta_phi}")));
    }
    let ctx = EchoContext::new(spectrum, psi0, v)?;
    let kick = Kick::new(g)?;
    let d2 = delta_phi * delta_phi;
    let half = T::lit(0.5);
    let v_psi0: Vec<C<T>> = match v {
        EchoObservable::Projector => psi0.amplitudes().to_vec(),
        EchoObservable::Operator(op) => op.apply(psi0.amplitudes()),
    };
    let cv = EigenCoefficients::project(spectrum, &v_psi0)?;
    let rows: Vec<(T, T, T)> = times
        .par_iter()
        .map(|&t| {
            let psi_t = ctx.forward(t);
            let plus = ctx.divergence(&kick, &psi_t, delta_phi, t);
            let minus = ctx.divergence(&kick, &psi_t, -delta_phi, t);
            // chi = G(t) psi0, zeta = G(t) V psi0
            let g_psi_t = g.apply(&psi_t);
            let mut c = cv.clone();
            c.propagate(spectrum, t);
            let g_vpsi_t = g.apply(&c.synthesize(spectrum));
            let chi = ctx.backward(&g_psi_t, t);
            let comm = inner(&g_psi_t, &g_vpsi_t).re - ctx.measure(&chi);
            ((plus + minus) * half / d2, comm, (plus - minus) * half / d2)
        })
        .collect();
    let mk = |f: fn(&(T, T, T)) -> T| -> Result<TimeSeries<T>> {
        Ok(TimeSeries::new(times.to_vec(), rows.iter().map(f).collect())?.with_meta("delta_phi", delta_phi.as_f64()))
    };
    Ok(EchoDivergence { echo: mk(|r| r.0)?, commutator: mk(|r| r.1)?, odd: mk(|r| r.2)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::linear_grid;
    use crate::hilbert::{basis_state, quadrature_g_full, sigma_x_full, BasisLayout, SpinLabel};
    use crate::models::ModelParams;
    use crate::spectral::solve_model;

    fn setup(g: f64, n: usize) -> (BasisLayout, Spectrum<f64>) {
        solve_model(&ModelParams::qr(1.0, 4.0, g).unwrap(), &[n], true).unwrap()
    }

    #[test]
    fn initial_variances() {
        let (layout, spec) = setup(1.5, 40);
        let g = quadrature_g_full::<f64>(&layout, 0);
        for (n, expect) in [(0usize, 0.25), (5, 2.75)] {
            let psi = basis_state::<f64>(SpinLabel::Plus, &[n], &layout).unwrap();
            let s = fotoc_variance_series(&spec, &psi, &g, &[0.0]).unwrap();
            assert!((s.values[0] - expect).abs() < 1e-10, "n={n}: {}", s.values[0]);
        }
    }

    #[test]
    fn variance_two_ways() {
        let (layout, spec) = setup(1.5, 40);
        let g = quadrature_g_full::<f64>(&layout, 0);
        let psi = basis_state::<f64>(SpinLabel::Plus, &[0], &layout).unwrap();
        let ev = Evolver::new(&spec, &psi).unwrap();
        let times = linear_grid(0.0, 10.0, 11).unwrap();
        let s = variance_from_evolver(&ev, &g, &times).unwrap();
        for (t, v) in times.iter().zip(&s.values) {
            assert!(*v >= 0.0);
            assert!((fotoc_variance_direct(&ev, &g, *t) - v).abs() < 1e-10);
        }
    }

    #[test]
    fn kick_is_exact_exponential() {
        let layout = BasisLayout::single(12);
        let g = quadrature_g_full::<f64>(&layout, 0);
        let kick = Kick::new(&g).unwrap();
        let x: Vec<C<f64>> =
            (0..layout.dim()).map(|i| C::new((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let y = kick.apply(1e-3, &x);
        // compare with a Taylor series to high order
        let mut term = x.clone();
        let mut sum = x.clone();
        for k in 1..12 {
            term = g.apply(&term).into_iter().map(|z| z * C::new(0.0, 1e-3 / k as f64)).collect();
            for (s, t) in sum.iter_mut().zip(&term) {
                *s += t;
            }
        }
        for (a, b) in y.iter().zip(&sum) {
            assert!((a - b).norm() < 1e-13);
        }
    }

    #[test]
    fn echo_at_time_zero() {
        let (layout, spec) = setup(1.5, 40);
        let g = quadrature_g_full::<f64>(&layout, 0);
        let psi = basis_state::<f64>(SpinLabel::Plus, &[0], &layout).unwrap();
        let dphi = 1e-3;
        let s = fotoc_echo_series(&spec, &psi, &g, EchoObservable::Projector, dphi, &[0.0]).unwrap();
        // <0|e^{i dphi x/2}|0> = e^{-dphi^2/8}
        let exact = (1.0 - (-dphi * dphi / 4.0f64).exp()) / (dphi * dphi);
        assert!((s.values[0] - exact).abs() < 1e-7, "{} vs {exact}", s.values[0]);
    }

    #[test]
    fn echo_remainder_shrinks_with_kick() {
        let (layout, spec) = setup(1.5, 40);
        let g = quadrature_g_full::<f64>(&layout, 0);
        let psi = basis_state::<f64>(SpinLabel::Plus, &[0], &layout).unwrap();
        let times = [0.0, 1.0, 3.0];
        let var = fotoc_variance_series(&spec, &psi, &g, &times).unwrap();
        let r = |dphi: f64| -> f64 {
            let e = fotoc_echo_series(&spec, &psi, &g, EchoObservable::Projector, dphi, &times).unwrap();
            e.values.iter().zip(&var.values).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        };
        let (r1, r2) = (r(4e-2), r(2e-2));
        assert!(r1 >= 2.0 * r2, "{r1} vs {r2}");
    }

    #[test]
    fn divergence_routes_at_time_zero() {
        let (layout, spec) = setup(1.5, 30);
        let g = quadrature_g_full::<f64>(&layout, 0);
        let psi = basis_state::<f64>(SpinLabel::Plus, &[0], &layout).unwrap();
        let sx = sigma_x_full::<f64>(&layout);
        let d = echo_divergence_series(&spec, &psi, &g, EchoObservable::Operator(&sx), 1e-3, &[0.0]).unwrap();
        assert!(d.commutator.values[0].abs() < 1e-12);
        assert!(d.echo.values[0].abs() < 1e-6);
        let p = echo_divergence_series(&spec, &psi, &g, EchoObservable::Projector, 1e-3, &[0.0]).unwrap();
        assert!((p.commutator.values[0] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn divergence_routes_agree_in_time() {
        let (layout, spec) = setup(1.5, 40);
        let g = quadrature_g_full::<f64>(&layout, 0);
        let psi = basis_state::<f64>(SpinLabel::Plus, &[0], &layout).unwrap();
        let sx = sigma_x_full::<f64>(&layout);
        let times = [0.5, 2.0, 4.0];
        let d = echo_divergence_series(&spec, &psi, &g, EchoObservable::Operator(&sx), 1e-3, &times).unwrap();
        for (a, b) in d.echo.values.iter().zip(&d.commutator.values) {
            assert!((a - b).abs() < 1e-4 * b.abs().max(1.0), "{a} vs {b}");
        }
    }
}
