//! Hamiltonians of the quantum Rabi (QR), parity-broken Rabi and quantum
//! Jahn-Teller (QJT) models, with hbar = 1.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{BandedSymmetric, BasisLayout, HermitianMatrix, Spin};
use crate::scalar::{cr, Real, C};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Qr,
    PerturbedQr,
    Qjt,
}

/// Operator basis used to assemble the QJT Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QjtForm {
    /// Circular modes `a_r, a_l` with sigma_+/- couplings.
    Rl,
    /// Cartesian modes `a, b` with `g/sqrt 2` couplings on sigma_x and sigma_y.
    Ab,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<T> {
    pub kind: ModelKind,
    pub omega: T,
    pub delta: T,
    pub g: T,
    /// Strength of the `lambda sigma_x` term; zero unless `kind` is `PerturbedQr`.
    pub lambda_perturb: T,
}

impl<T: Real> ModelParams<T> {
    pub fn new(kind: ModelKind, omega: T, delta: T, g: T, lambda_perturb: T) -> Result<Self> {
        if !(omega > T::zero()) || !(delta > T::zero()) {
            return Err(Error::InvalidInput(format!(
                "omega and delta must be positive (omega={omega}, delta={delta})"
            )));
        }
        if !(g >= T::zero()) {
            return Err(Error::InvalidInput(format!("coupling g must be >= 0, got {g}")));
        }
        if kind != ModelKind::PerturbedQr && lambda_perturb != T::zero() {
            return Err(Error::InvalidInput("lambda_perturb is only meaningful for perturbed_qr".into()));
        }
        Ok(Self { kind, omega, delta, g, lambda_perturb })
    }

    pub fn qr(omega: T, delta: T, g: T) -> Result<Self> {
        Self::new(ModelKind::Qr, omega, delta, g, T::zero())
    }

    pub fn perturbed_qr(omega: T, delta: T, g: T, lambda: T) -> Result<Self> {
        Self::new(ModelKind::PerturbedQr, omega, delta, g, lambda)
    }

    pub fn qjt(omega: T, delta: T, g: T) -> Result<Self> {
        Self::new(ModelKind::Qjt, omega, delta, g, T::zero())
    }

    pub fn with_g(mut self, g: T) -> Self {
        self.g = g;
        self
    }

    pub fn eta(&self) -> T {
        self.delta / self.omega
    }

    /// Critical coupling: `sqrt(delta omega)/2` for Rabi, `sqrt(delta omega / 2)` for QJT.
    pub fn g_c(&self) -> T {
        critical_coupling(self.kind, self.omega, self.delta)
    }

    /// `g / g_c`.
    pub fn coupling_ratio(&self) -> T {
        self.g / self.g_c()
    }
}

pub fn critical_coupling<T: Real>(kind: ModelKind, omega: T, delta: T) -> T {
    match kind {
        ModelKind::Qr | ModelKind::PerturbedQr => (delta * omega).sqrt() * T::lit(0.5),
        ModelKind::Qjt => (delta * omega * T::lit(0.5)).sqrt(),
    }
}

/// Parameters fixed by `(g_c, eta)`; `g` starts at 0.
pub fn params_from_gc_eta<T: Real>(kind: ModelKind, g_c: T, eta: T) -> Result<ModelParams<T>> {
    if !(g_c > T::zero()) || !(eta > T::zero()) {
        return Err(Error::InvalidInput(format!("g_c and eta must be positive (g_c={g_c}, eta={eta})")));
    }
    // delta * omega = (2 g_c)^2 for Rabi, 2 g_c^2 for QJT
    let product_root = match kind {
        ModelKind::Qr | ModelKind::PerturbedQr => T::lit(2.0) * g_c,
        ModelKind::Qjt => T::SQRT_2() * g_c,
    };
    let s = eta.sqrt();
    ModelParams::new(kind, product_root / s, product_root * s, T::zero(), T::zero())
}

fn require(kind: ModelKind, params_kind: ModelKind) -> Result<()> {
    if kind != params_kind {
        return Err(Error::InvalidInput(format!("expected {kind:?} parameters, got {params_kind:?}")));
    }
    Ok(())
}

fn rabi_banded<T: Real>(p: &ModelParams<T>, n_max: usize, lambda: T) -> BandedSymmetric<T> {
    let layout = BasisLayout::single(n_max);
    let mut h = BandedSymmetric::zeros(layout.dim(), 3);
    let half_delta = p.delta * T::lit(0.5);
    for n in 0..=n_max {
        let nf = T::from_usize_exact(n);
        let up = 2 * n;
        let down = 2 * n + 1;
        h.add(up, up, p.omega * nf + half_delta);
        h.add(down, down, p.omega * nf - half_delta);
        if lambda != T::zero() {
            h.add(up, down, lambda);
        }
        if n < n_max {
            let c = p.g * T::from_usize_exact(n + 1).sqrt();
            // sigma_x (a^dag + a) flips the spin and shifts n by one
            h.add(up, 2 * (n + 1) + 1, c);
            h.add(down, 2 * (n + 1), c);
        }
    }
    h
}

/// `omega a^dag a + (delta/2) sigma_z + g sigma_x (a^dag + a)`.
pub fn build_qr<T: Real>(params: &ModelParams<T>, n_max: usize) -> Result<HermitianMatrix<T>> {
    require(ModelKind::Qr, params.kind)?;
    Ok(HermitianMatrix::Banded(rabi_banded(params, n_max, T::zero())))
}

/// Rabi Hamiltonian plus `lambda sigma_x`, which breaks parity.
pub fn build_perturbed_qr<T: Real>(params: &ModelParams<T>, n_max: usize) -> Result<HermitianMatrix<T>> {
    require(ModelKind::PerturbedQr, params.kind)?;
    Ok(HermitianMatrix::Banded(rabi_banded(params, n_max, params.lambda_perturb)))
}

/// Dispatches on `params.kind` for single-mode models.
pub fn build_rabi_family<T: Real>(params: &ModelParams<T>, n_max: usize) -> Result<HermitianMatrix<T>> {
    match params.kind {
        ModelKind::Qr => build_qr(params, n_max),
        ModelKind::PerturbedQr => build_perturbed_qr(params, n_max),
        ModelKind::Qjt => Err(Error::InvalidInput("QJT is a two-mode model; use build_qjt".into())),
    }
}

pub fn build_qjt<T: Real>(
    params: &ModelParams<T>,
    n_max_r: usize,
    n_max_l: usize,
    form: QjtForm,
) -> Result<HermitianMatrix<T>> {
    require(ModelKind::Qjt, params.kind)?;
    let layout = BasisLayout::two_mode(n_max_r, n_max_l);
    match form {
        QjtForm::Rl => Ok(HermitianMatrix::Banded(qjt_rl(params, &layout))),
        QjtForm::Ab => Ok(HermitianMatrix::Dense(qjt_ab(params, &layout))),
    }
}

fn qjt_diag<T: Real>(p: &ModelParams<T>, spin: Spin, occ: &[usize]) -> T {
    let n = T::from_usize_exact(occ[0] + occ[1]);
    p.omega * n + p.delta * T::lit(0.5) * T::from_i64(spin.sz()).unwrap()
}

fn qjt_rl<T: Real>(p: &ModelParams<T>, layout: &BasisLayout) -> BandedSymmetric<T> {
    let (cr_, cl) = (layout.cutoffs()[0], layout.cutoffs()[1]);
    let mut h = BandedSymmetric::zeros(layout.dim(), 2 * (cl + 1) + 1);
    for nr in 0..=cr_ {
        for nl in 0..=cl {
            let occ = [nr, nl];
            let up = layout.index(Spin::Up, &occ).unwrap();
            let down = layout.index(Spin::Down, &occ).unwrap();
            h.add(up, up, qjt_diag(p, Spin::Up, &occ));
            h.add(down, down, qjt_diag(p, Spin::Down, &occ));
            // g sigma_+ a_r^dag : |down, nr, nl> -> |up, nr+1, nl>
            if nr < cr_ {
                let to = layout.index(Spin::Up, &[nr + 1, nl]).unwrap();
                h.add(to, down, p.g * T::from_usize_exact(nr + 1).sqrt());
            }
            // g sigma_+ a_l : |down, nr, nl> -> |up, nr, nl-1>
            if nl > 0 {
                let to = layout.index(Spin::Up, &[nr, nl - 1]).unwrap();
                h.add(to, down, p.g * T::from_usize_exact(nl).sqrt());
            }
        }
    }
    h
}

fn qjt_ab<T: Real>(p: &ModelParams<T>, layout: &BasisLayout) -> nalgebra::DMatrix<C<T>> {
    let dim = layout.dim();
    let (ca, cb) = (layout.cutoffs()[0], layout.cutoffs()[1]);
    let mut h = nalgebra::DMatrix::from_element(dim, dim, cr(T::zero()));
    let k = p.g * T::FRAC_1_SQRT_2();
    let i_unit = Complex::new(T::zero(), T::one());
    for na in 0..=ca {
        for nb in 0..=cb {
            let occ = [na, nb];
            for spin in [Spin::Up, Spin::Down] {
                let i = layout.index(spin, &occ).unwrap();
                h[(i, i)] = cr(qjt_diag(p, spin, &occ));
            }
            let up = layout.index(Spin::Up, &occ).unwrap();
            let down = layout.index(Spin::Down, &occ).unwrap();
            if na < ca {
                // (g/sqrt2) sigma_x (a^dag + a)
                let c = k * T::from_usize_exact(na + 1).sqrt();
                let up_next = layout.index(Spin::Up, &[na + 1, nb]).unwrap();
                let down_next = layout.index(Spin::Down, &[na + 1, nb]).unwrap();
                for (x, y) in [(up, down_next), (down, up_next)] {
                    h[(x, y)] += cr(c);
                    h[(y, x)] += cr(c);
                }
            }
            if nb < cb {
                // (g/sqrt2) sigma_y (b^dag + b); <up|sigma_y|down> = -i
                let c = k * T::from_usize_exact(nb + 1).sqrt();
                let up_next = layout.index(Spin::Up, &[na, nb + 1]).unwrap();
                let down_next = layout.index(Spin::Down, &[na, nb + 1]).unwrap();
                let m_ud = -i_unit.scale(c);
                h[(up, down_next)] += m_ud;
                h[(down_next, up)] += m_ud.conj();
                h[(up_next, down)] += m_ud;
                h[(down, up_next)] += m_ud.conj();
            }
        }
    }
    h
}

/// Diagonal of `e^{i pi Pi}` with `Pi = a^dag a + (sigma_z + 1)/2`.
pub fn parity_diagonal(layout: &BasisLayout) -> Vec<i8> {
    layout.states().map(|s| crate::symmetry::parity_eigenvalue(s.spin, s.occupations[0])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hilbert::hermitian_deviation;
    use approx::assert_relative_eq;

    fn sorted_eigs(h: &HermitianMatrix<f64>) -> Vec<f64> {
        let eig = nalgebra::SymmetricEigen::new(h.to_dense());
        let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Max |[P, H]_{ij}| restricted to rows/cols with all occupations below the cutoff.
    fn commutator_interior(h: &HermitianMatrix<f64>, layout: &BasisLayout, charge: &[f64]) -> f64 {
        let n = layout.dim();
        let interior: Vec<bool> =
            layout.states().map(|s| s.occupations.iter().zip(layout.cutoffs()).all(|(o, c)| o < c)).collect();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                if interior[i] && interior[j] {
                    worst = worst.max((h.get(i, j) * (charge[i] - charge[j])).norm());
                }
            }
        }
        worst
    }

    #[test]
    fn gc_eta_conventions() {
        let p = params_from_gc_eta(ModelKind::Qr, 5.0, 200.0).unwrap();
        assert_relative_eq!(p.omega, std::f64::consts::FRAC_1_SQRT_2, max_relative = 1e-12);
        assert_relative_eq!(p.delta, 100.0 * std::f64::consts::SQRT_2, max_relative = 1e-12);
        assert_relative_eq!(p.omega * p.delta, 100.0, max_relative = 1e-12);

        let p = params_from_gc_eta(ModelKind::Qr, 5.0, 1.0).unwrap();
        assert_relative_eq!(p.omega, 10.0, max_relative = 1e-14);
        assert_relative_eq!(p.delta, 10.0, max_relative = 1e-14);

        for kind in [ModelKind::Qr, ModelKind::PerturbedQr, ModelKind::Qjt] {
            for (gc, eta) in [(5.0, 200.0), (7.0710678, 100.0), (0.3, 3.7)] {
                let p = params_from_gc_eta(kind, gc, eta).unwrap();
                assert_relative_eq!(p.g_c(), gc, max_relative = 1e-12);
                assert_relative_eq!(p.eta(), eta, max_relative = 1e-12);
            }
        }
        let jt = params_from_gc_eta(ModelKind::Qjt, 50f64.sqrt(), 100.0).unwrap();
        assert_relative_eq!(jt.omega * jt.delta, 100.0, max_relative = 1e-12);
        assert!(params_from_gc_eta(ModelKind::Qr, 0.0, 1.0).is_err());
    }

    #[test]
    fn qr_decoupled_limit() {
        let p = ModelParams::qr(1.3, 10.0, 0.0).unwrap();
        let h = build_qr(&p, 6).unwrap();
        let layout = BasisLayout::single(6);
        for (i, s) in layout.states().enumerate() {
            let e = 1.3 * s.occupations[0] as f64 + 5.0 * s.spin.sz() as f64;
            assert_eq!(h.get(i, i).re, e);
            for j in 0..layout.dim() {
                if j != i {
                    assert_eq!(h.get(i, j).re, 0.0);
                }
            }
        }
    }

    #[test]
    fn qr_matrix_elements_and_parity() {
        let p = ModelParams::qr(1.0, 10.0, 2.0).unwrap();
        let layout = BasisLayout::single(8);
        let h = build_qr(&p, 8).unwrap();
        let up0 = layout.index(Spin::Up, &[0]).unwrap();
        let down1 = layout.index(Spin::Down, &[1]).unwrap();
        assert_eq!(h.get(up0, down1).re, 2.0);
        assert_eq!(hermitian_deviation(&h.to_dense()), 0.0);

        let parity: Vec<f64> = parity_diagonal(&layout).iter().map(|&x| x as f64).collect();
        // parity is exact even at the truncation edge for the Rabi model
        let n = layout.dim();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((h.get(i, j).re * (parity[i] - parity[j])).abs());
            }
        }
        assert!(worst < 1e-12);
    }

    #[test]
    fn perturbed_qr() {
        let base = ModelParams::qr(1.0, 10.0, 2.0).unwrap();
        let p0 = ModelParams::perturbed_qr(1.0, 10.0, 2.0, 0.0).unwrap();
        assert_eq!(build_perturbed_qr(&p0, 7).unwrap(), build_qr(&base, 7).unwrap());

        let p = ModelParams::perturbed_qr(1.0, 10.0, 2.0, 0.1).unwrap();
        let h = build_perturbed_qr(&p, 7).unwrap();
        let layout = BasisLayout::single(7);
        for n in 0..=7 {
            let up = layout.index(Spin::Up, &[n]).unwrap();
            let down = layout.index(Spin::Down, &[n]).unwrap();
            assert_eq!(h.get(up, down).re, 0.1);
        }
        let parity: Vec<f64> = parity_diagonal(&layout).iter().map(|&x| x as f64).collect();
        assert!(commutator_interior(&h, &layout, &parity) > 0.0);
        assert!(build_perturbed_qr(&base, 3).is_err());
    }

    #[test]
    fn qjt_rl_elements() {
        let p = ModelParams::qjt(1.0, 10.0, 1.5).unwrap();
        let layout = BasisLayout::two_mode(4, 4);
        let h = build_qjt(&p, 4, 4, QjtForm::Rl).unwrap();
        assert_eq!(hermitian_deviation(&h.to_dense()), 0.0);
        // sigma_- a_r lowers n_r: <down, nr-1, nl| H |up, nr, nl> = g sqrt(nr)
        for nr in 1..=4 {
            for nl in 0..=4 {
                let from = layout.index(Spin::Up, &[nr, nl]).unwrap();
                let to = layout.index(Spin::Down, &[nr - 1, nl]).unwrap();
                assert_relative_eq!(h.get(to, from).re, 1.5 * (nr as f64).sqrt(), max_relative = 1e-15);
            }
        }
        // sigma_+ a_l: <up, nr, nl-1| H |down, nr, nl> = g sqrt(nl)
        let from = layout.index(Spin::Down, &[0, 2]).unwrap();
        let to = layout.index(Spin::Up, &[0, 1]).unwrap();
        assert_relative_eq!(h.get(to, from).re, 1.5 * 2f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn qjt_u1_commutes_in_interior() {
        let p = ModelParams::qjt(1.0, 7.0, 2.1).unwrap();
        let layout = BasisLayout::two_mode(5, 5);
        let h = build_qjt(&p, 5, 5, QjtForm::Rl).unwrap();
        let charge: Vec<f64> = layout
            .states()
            .map(|s| crate::symmetry::u1_charge(s.spin, s.occupations[0], s.occupations[1]).value())
            .collect();
        assert!(commutator_interior(&h, &layout, &charge) < 1e-12);
    }

    #[test]
    fn qjt_forms_decoupled_identical() {
        let p = ModelParams::qjt(1.0, 4.0, 0.0).unwrap();
        let rl = build_qjt(&p, 3, 3, QjtForm::Rl).unwrap().to_dense();
        let ab = build_qjt(&p, 3, 3, QjtForm::Ab).unwrap().to_dense();
        assert_eq!(rl, ab);
    }

    #[test]
    fn qjt_forms_unitarily_equivalent_low_spectrum() {
        // The box truncations of the two forms differ, so only levels far below
        // the cutoff are comparable.
        let p = ModelParams::qjt(1.0, 3.0, 0.1).unwrap();
        let rl = sorted_eigs(&build_qjt(&p, 6, 6, QjtForm::Rl).unwrap());
        let ab = sorted_eigs(&build_qjt(&p, 6, 6, QjtForm::Ab).unwrap());
        for k in 0..10 {
            assert!((rl[k] - ab[k]).abs() < 1e-8, "level {k}: {} vs {}", rl[k], ab[k]);
        }
        assert!(HermitianMatrix::from_dense(build_qjt(&p, 6, 6, QjtForm::Ab).unwrap().to_dense()).is_ok());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(ModelParams::qr(0.0, 1.0, 1.0).is_err());
        assert!(ModelParams::qr(1.0, 1.0, -1.0).is_err());
        assert!(ModelParams::new(ModelKind::Qr, 1.0, 1.0, 1.0, 0.3).is_err());
        let qjt = ModelParams::qjt(1.0, 1.0, 1.0).unwrap();
        assert!(build_qr(&qjt, 3).is_err());
    }
}
