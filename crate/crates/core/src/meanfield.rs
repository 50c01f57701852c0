//! Closed-form mean-field results for the two-mode Jahn-Teller model and
//! their numerical counterparts from the U(1) ground state.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hilbert::BasisState;
use crate::models::{critical_coupling, ModelKind, ModelParams};
use crate::scalar::Real;
use crate::symmetry::{qjt_ground_state, HalfInt};

/// Phase-diagram summary at one coupling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QjtMeanField {
    /// `g / g_c`.
    pub lambda_ratio: f64,
    /// `sqrt(1 - lambda^2)`, normal phase only.
    pub epsilon_normal: Option<f64>,
    /// `(0, sqrt(1 - lambda^-4))`, superradiant phase only; the first entry
    /// is the Goldstone mode.
    pub epsilon_sr_pair: Option<(f64, f64)>,
    /// `<(a_r^dag + a_l)(a_r + a_l^dag)> / eta` in the large-`eta` limit.
    pub excitation_density: f64,
    pub sigma_z: f64,
    /// Spin splitting in the displaced frame.
    pub omega_spin: f64,
    /// Rotation angle of the spin basis, `cos(2 theta) = -Delta/Omega`.
    pub theta: f64,
}

fn ratio(g: f64, omega: f64, delta: f64) -> Result<f64> {
    if !(omega > 0.0 && delta > 0.0 && g >= 0.0) {
        return Err(Error::InvalidInput(format!("need omega, delta > 0 and g >= 0; got ({omega}, {delta}, {g})")));
    }
    Ok(g / critical_coupling(ModelKind::Qjt, omega, delta))
}

/// Doubly degenerate normal-phase excitation energy `omega sqrt(1 - lambda^2)`.
pub fn qjt_normal_excitation(g: f64, omega: f64, delta: f64) -> Result<f64> {
    let l = ratio(g, omega, delta)?;
    if l > 1.0 {
        return Err(Error::WrongBranch(format!("normal phase needs g <= g_c, got g/g_c = {l}")));
    }
    Ok(omega * (1.0 - l * l).sqrt())
}

/// Superradiant normal modes `(eps_1, eps_2)` in units of `omega`:
/// `eps_1 = 0` is the Goldstone mode, `eps_2 = sqrt(1 - lambda^-4)`.
pub fn qjt_superradiant_modes(g: f64, omega: f64, delta: f64) -> Result<(f64, f64)> {
    let l = ratio(g, omega, delta)?;
    if l < 1.0 {
        return Err(Error::WrongBranch(format!("superradiant phase needs g >= g_c, got g/g_c = {l}")));
    }
    Ok((0.0, (1.0 - l.powi(-4)).sqrt()))
}

/// `|alpha_r^* + alpha_l|^2 / eta = (lambda^4 - 1) / (2 lambda^2)`, zero in
/// the normal phase.
fn displacement_density(l: f64) -> f64 {
    if l <= 1.0 {
        0.0
    } else {
        (l.powi(4) - 1.0) / (2.0 * l * l)
    }
}

/// `(<sigma_z>, excitation density)`: `(-1, 0)` in the normal phase,
/// `(cos 2 theta, (lambda^4 - 1)/(2 lambda^2))` beyond it.
pub fn qjt_order_parameters(g: f64, omega: f64, delta: f64) -> Result<(f64, f64)> {
    let m = qjt_mean_field(g, omega, delta)?;
    Ok((m.sigma_z, m.excitation_density))
}

pub fn qjt_mean_field(g: f64, omega: f64, delta: f64) -> Result<QjtMeanField> {
    let l = ratio(g, omega, delta)?;
    let eta = delta / omega;
    let density = displacement_density(l);
    // Omega^2 = Delta^2 + 4 g^2 |alpha_r^* + alpha_l|^2
    let omega_spin = (delta * delta + 4.0 * g * g * eta * density).sqrt();
    let cos2 = -delta / omega_spin;
    Ok(QjtMeanField {
        lambda_ratio: l,
        epsilon_normal: (l <= 1.0).then(|| (1.0 - l * l).sqrt()),
        epsilon_sr_pair: (l >= 1.0).then(|| (0.0, (1.0 - l.powi(-4)).sqrt())),
        excitation_density: density,
        sigma_z: cos2,
        omega_spin,
        theta: 0.5 * cos2.acos(),
    })
}

/// Ground-state observables from exact diagonalization.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QjtNumericOrder {
    pub n_max: usize,
    pub sector: f64,
    pub energy: f64,
    /// `<(a_r^dag + a_l)(a_r + a_l^dag)> / eta`.
    pub excitation_density: f64,
    /// `<n_r + n_l> / eta`.
    pub boson_density: f64,
    pub sigma_z: f64,
}

/// Lowest state over the U(1) sectors `|c| <= c_max` at cutoff `n_max` per
/// mode.
pub fn qjt_numeric_order<T: Real>(params: &ModelParams<T>, n_max: usize, c_max: HalfInt) -> Result<QjtNumericOrder> {
    if params.kind != ModelKind::Qjt {
        return Err(Error::InvalidInput("ground-state order parameters need the QJT model".into()));
    }
    let gs = qjt_ground_state(params, n_max, n_max, c_max)?;
    let states = gs.block.states();
    let psi: Vec<f64> = gs.vector.iter().map(|x| x.as_f64()).collect();
    let index: HashMap<&BasisState, usize> = states.iter().enumerate().map(|(i, s)| (s, i)).collect();
    let (mut n_tot, mut sz, mut pair) = (0.0, 0.0, 0.0);
    for (j, st) in states.iter().enumerate() {
        let w = psi[j] * psi[j];
        let (nr, nl) = (st.occupations[0], st.occupations[1]);
        n_tot += w * (nr + nl) as f64;
        sz += w * st.spin.sz() as f64;
        if nr > 0 && nl > 0 {
            let lowered = BasisState::new(st.spin, &[nr - 1, nl - 1]);
            if let Some(&i) = index.get(&lowered) {
                pair += psi[i] * psi[j] * ((nr * nl) as f64).sqrt();
            }
        }
    }
    // (a_r^dag + a_l)(a_r + a_l^dag) = n_r + n_l + 1 + a_r^dag a_l^dag + a_r a_l
    let eta = params.eta().as_f64();
    Ok(QjtNumericOrder {
        n_max,
        sector: gs.sector.value(),
        energy: gs.energy.as_f64(),
        excitation_density: (n_tot + 1.0 + 2.0 * pair) / eta,
        boson_density: n_tot / eta,
        sigma_z: sz,
    })
}

/// [`qjt_numeric_order`] with the cutoff doubled from `n_start` until the
/// ground energy and both densities change by less than `tolerance`
/// (relative) between successive cutoffs.
pub fn qjt_numeric_order_converged<T: Real>(
    params: &ModelParams<T>,
    c_max: HalfInt,
    n_start: usize,
    tolerance: f64,
    hard_cap: usize,
) -> Result<QjtNumericOrder> {
    let mut n = n_start.max(1);
    let mut prev = qjt_numeric_order(params, n, c_max)?;
    loop {
        if n >= hard_cap {
            return Err(Error::CutoffCap { cap: hard_cap });
        }
        n = (2 * n).min(hard_cap);
        let cur = qjt_numeric_order(params, n, c_max)?;
        let rel = |a: f64, b: f64| (a - b).abs() / b.abs().max(1e-12);
        let change = rel(cur.energy, prev.energy)
            .max(rel(cur.excitation_density, prev.excitation_density))
            .max(rel(cur.boson_density, prev.boson_density));
        if change < tolerance {
            return Ok(prev);
        }
        prev = cur;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const W: f64 = 1.0;
    const D: f64 = 8.0;

    fn gc() -> f64 {
        (D * W / 2.0).sqrt()
    }

    #[test]
    fn normal_branch() {
        assert!((qjt_normal_excitation(0.0, W, D).unwrap() - W).abs() < 1e-15);
        assert!(qjt_normal_excitation(gc(), W, D).unwrap().abs() < 1e-7);
        let half = qjt_normal_excitation(0.5 * gc(), W, D).unwrap();
        assert!((half - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(matches!(qjt_normal_excitation(1.1 * gc(), W, D), Err(Error::WrongBranch(_))));
        assert_eq!(qjt_order_parameters(0.7 * gc(), W, D).unwrap(), (-1.0, 0.0));
    }

    #[test]
    fn superradiant_branch() {
        let (e1, e2) = qjt_superradiant_modes(gc(), W, D).unwrap();
        assert_eq!(e1, 0.0);
        assert!(e2.abs() < 1e-7);
        let (_, e2) = qjt_superradiant_modes(2f64.powf(0.25) * gc(), W, D).unwrap();
        assert!((e2 - 0.5f64.sqrt()).abs() < 1e-12);
        let (_, e2) = qjt_superradiant_modes(1e4 * gc(), W, D).unwrap();
        assert!((e2 - 1.0).abs() < 1e-12);
        assert!(matches!(qjt_superradiant_modes(0.9 * gc(), W, D), Err(Error::WrongBranch(_))));

        let (_, rho) = qjt_order_parameters(2f64.sqrt() * gc(), W, D).unwrap();
        assert!((rho - 0.75).abs() < 1e-12);
    }

    #[test]
    fn self_consistent_spin_splitting() {
        for l in [1.0, 1.3, 2.0, 5.0] {
            let m = qjt_mean_field(l * gc(), W, D).unwrap();
            assert!((m.omega_spin - D * l * l).abs() < 1e-9 * D * l * l);
            assert!((m.sigma_z + 1.0 / (l * l)).abs() < 1e-12);
        }
    }

    #[test]
    fn continuous_at_criticality() {
        let below = qjt_mean_field(gc() * (1.0 - 1e-14), W, D).unwrap();
        let above = qjt_mean_field(gc() * (1.0 + 1e-14), W, D).unwrap();
        assert!((below.sigma_z - above.sigma_z).abs() <= 1e-12);
        assert!((below.excitation_density - above.excitation_density).abs() <= 1e-12);
        let at = qjt_mean_field(gc(), W, D).unwrap();
        assert!(at.epsilon_normal.unwrap().abs() < 1e-7);
        assert!(at.epsilon_sr_pair.unwrap().1.abs() < 1e-7);
    }

    #[test]
    fn numeric_normal_phase_is_empty() {
        let p = ModelParams::qjt(1.0, 50.0, 0.5 * 25f64.sqrt()).unwrap();
        let o = qjt_numeric_order(&p, 20, HalfInt::from_twice(5)).unwrap();
        assert!(o.boson_density < 0.01);
        assert!((o.sigma_z + 1.0).abs() < 0.05);
    }

    #[test]
    fn converged_order_stops_early() {
        let p = ModelParams::qjt(1.0, 20.0, 1.2 * 10f64.sqrt()).unwrap();
        let o = qjt_numeric_order_converged(&p, HalfInt::from_twice(5), 8, 1e-9, 1024).unwrap();
        assert!(o.n_max < 1024);
        assert!(o.excitation_density > 0.0);
        assert!(matches!(
            qjt_numeric_order_converged(&p, HalfInt::from_twice(5), 8, 1e-9, 16),
            Err(Error::CutoffCap { cap: 16 })
        ));
    }
}
