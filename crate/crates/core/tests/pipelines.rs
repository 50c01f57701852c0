//! End-to-end runs through the public API.

use proptest::prelude::*;
use rabi_chaos::dynamics::{
    adaptive_cutoff, fit_lyapunov, fotoc_variance_series, linear_grid, long_time_profile, CutoffOptions, InitialState,
};
use rabi_chaos::equilibration::{converged_ensemble, de_average, spin_up_projector};
use rabi_chaos::hilbert::{basis_state, quadrature_g_full, SpinLabel};
use rabi_chaos::models::{params_from_gc_eta, ModelKind, ModelParams};
use rabi_chaos::spectral::{eig_dense, model_hamiltonian, solve_model};

#[test]
fn superradiant_fotoc_recurs_after_scrambling() {
    let p = params_from_gc_eta::<f64>(ModelKind::Qr, 5.0, 50.0).unwrap().with_g(7.0);
    let init = InitialState::new(SpinLabel::Plus, &[0]);
    let first = linear_grid(0.0, 20.0 / p.omega, 1000).unwrap();
    let conv = adaptive_cutoff(&p, &init, &first, &CutoffOptions::default()).unwrap();
    let t_star = fit_lyapunov(&conv.series).unwrap().t_star;

    // by 10 t* the later peaks come back to ~85% of the first maximum
    let short = linear_grid(0.0, 10.0 * t_star, 4000).unwrap();
    let conv = adaptive_cutoff(&p, &init, &short, &CutoffOptions::default()).unwrap();
    let profile = long_time_profile(&conv.series).unwrap();
    let (_, hi) = profile.envelope.unwrap();
    assert!(hi > 0.8 * profile.global_max && !profile.plateau, "{profile:?}");

    // the first revisit above 90% takes roughly 30 t*
    let long = linear_grid(0.0, 40.0 * t_star, 16000).unwrap();
    let conv = adaptive_cutoff(&p, &init, &long, &CutoffOptions::default()).unwrap();
    let profile = long_time_profile(&conv.series).unwrap();
    assert!(!profile.recurrence_times.is_empty(), "{profile:?}");
    assert!(profile.recurrence_times.iter().all(|t| *t > 10.0 * profile.t_star));
    assert!(!profile.plateau);
}

#[test]
fn single_precision_tracks_double() {
    let p64 = ModelParams::<f64>::qr(1.0, 4.0, 1.2).unwrap();
    let p32 = ModelParams::<f32>::qr(1.0, 4.0, 1.2).unwrap();
    let (l64, s64) = solve_model(&p64, &[40], true).unwrap();
    let (l32, s32) = solve_model(&p32, &[40], true).unwrap();
    for (a, b) in s64.eigenvalues().iter().zip(s32.eigenvalues()).take(20) {
        assert!((a - *b as f64).abs() < 1e-3 * a.abs().max(1.0));
    }
    let times64 = linear_grid(0.0, 5.0, 40).unwrap();
    let times32 = linear_grid(0.0f32, 5.0, 40).unwrap();
    let v64 = fotoc_variance_series(
        &s64,
        &basis_state(SpinLabel::Down, &[0], &l64).unwrap(),
        &quadrature_g_full(&l64, 0),
        &times64,
    )
    .unwrap();
    let v32 = fotoc_variance_series(
        &s32,
        &basis_state(SpinLabel::Down, &[0], &l32).unwrap(),
        &quadrature_g_full(&l32, 0),
        &times32,
    )
    .unwrap();
    for (a, b) in v64.values.iter().zip(&v32.values) {
        assert!((a - *b as f64).abs() < 1e-3 * a.max(1.0), "{a} vs {b}");
    }
}

#[test]
fn normal_phase_ensemble_converges_quickly() {
    let p = params_from_gc_eta::<f64>(ModelKind::Qr, 5.0, 50.0).unwrap().with_g(2.0);
    let c = converged_ensemble(&p, &InitialState::new(SpinLabel::Down, &[0]), &CutoffOptions::default()).unwrap();
    assert!(c.n_max <= 64, "{}", c.n_max);
    let ens = c.ensemble();
    let up = de_average(&ens, &spin_up_projector(&c.layout)).unwrap();
    // far below g_c the spin stays close to the ground state
    assert!(up < 0.05, "{up}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn sector_solve_matches_dense(g in 0.0f64..4.0, delta in 0.5f64..6.0, n in 3usize..25) {
        let p = ModelParams::qr(1.0, delta, g).unwrap();
        let (_, blocks) = solve_model(&p, &[n], false).unwrap();
        let dense = eig_dense(&model_hamiltonian(&p, &[n]).unwrap(), false).unwrap();
        for (a, b) in blocks.eigenvalues().iter().zip(dense.eigenvalues()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }

    #[test]
    fn qjt_sector_solve_matches_dense(g in 0.0f64..3.0, n in 2usize..7) {
        let p = ModelParams::qjt(1.0, 3.0, g).unwrap();
        let (_, blocks) = solve_model(&p, &[n, n], false).unwrap();
        let dense = eig_dense(&model_hamiltonian(&p, &[n, n]).unwrap(), false).unwrap();
        for (a, b) in blocks.eigenvalues().iter().zip(dense.eigenvalues()) {
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }
}
