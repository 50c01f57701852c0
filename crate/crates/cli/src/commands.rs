//! One function per subcommand: each runs a library pipeline, writes its
//! tables and returns the results recorded in `meta.json`.

use std::path::PathBuf;

use rabi_chaos::dynamics::{
    adaptive_cutoff, echo_divergence_series, fit_lyapunov_with, fotoc_echo_series, linear_grid, long_time_profile,
    lyapunov_run, scaling_fits, EchoObservable, Evolver, LyapunovFit,
};
use rabi_chaos::equilibration::{
    converged_ensemble, de_average, de_fock_distribution, default_shell_width, deff_vs_coupling, deff_vs_occupation,
    me_average, number_operator, spin_up_projector, time_average, universality_sweep,
};
use rabi_chaos::hilbert::{basis_state, quadrature_g_full, sigma_x_full, BasisLayout, SpinLabel};
use rabi_chaos::meanfield::{qjt_mean_field, qjt_numeric_order};
use rabi_chaos::models::{ModelKind, ModelParams};
use rabi_chaos::spectral::{
    eig_sectors, model_hamiltonian, small_spacing_fraction, solve_model, spacing_histogram, unfold, Spectrum,
};
use rabi_chaos::symmetry::{
    block_consistency_report, qjt_all_blocks, qjt_u1_block, qr_all_blocks, qr_parity_block, HalfInt, SectorLabel,
    SymmetricTridiagonal,
};
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::cache::{cache_key, SpectrumCache};
use crate::config::{EchoObservableSpec, ExperimentConfig};
use crate::error::CliError;
use crate::output::{int, num, Table};

pub struct Context {
    pub output_dir: PathBuf,
    pub cache: Option<SpectrumCache>,
}

/// What a subcommand produced.
pub struct Report {
    pub tables: Vec<Table>,
    pub results: Value,
    pub cache: Option<String>,
    /// Set when the outputs are written but the run must still fail.
    pub failure: Option<CliError>,
}

impl Report {
    fn new(tables: Vec<Table>, results: Value) -> Self {
        Self { tables, results, cache: None, failure: None }
    }
}

fn config_err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config { key: key.into(), message: message.into() }
}

fn sector_block(
    params: &ModelParams<f64>,
    cutoffs: &[usize],
    sector: f64,
) -> Result<SymmetricTridiagonal<f64>, CliError> {
    match params.kind {
        ModelKind::Qr => {
            if sector != 1.0 && sector != -1.0 {
                return Err(config_err("run.sector", format!("parity sector must be +1 or -1, got {sector}")));
            }
            Ok(qr_parity_block(params, cutoffs[0], sector as i8)?)
        }
        ModelKind::Qjt => {
            let c = HalfInt::from_f64(sector).map_err(|e| config_err("run.sector", e.to_string()))?;
            Ok(qjt_u1_block(params, cutoffs[0], cutoffs[1], c)?)
        }
        ModelKind::PerturbedQr => Err(config_err("run.sector", "the parity-broken model has no symmetry sectors")),
    }
}

/// Spectrum at fixed cutoffs, optionally restricted to one sector, through
/// the cache when one is configured.
fn fixed_spectrum(cfg: &ExperimentConfig, ctx: &Context) -> Result<(BasisLayout, Spectrum<f64>, String), CliError> {
    let params = cfg.params()?;
    let cutoffs = cfg.cutoffs()?;
    let want = cfg.run.with_vectors;
    let layout = BasisLayout::new(cutoffs.clone())?;
    let key = cache_key(&params, &cutoffs, cfg.run.sector, want);
    if let Some(cache) = &ctx.cache {
        if let Some(s) = cache.load(&key) {
            if s.dim() == layout.dim() {
                return Ok((layout, s, format!("hit {key}")));
            }
        }
    }
    let spectrum = match cfg.run.sector {
        Some(sector) => eig_sectors(&[sector_block(&params, &cutoffs, sector)?], &layout, want)?,
        None => solve_model(&params, &cutoffs, want)?.1,
    };
    let status = match &ctx.cache {
        Some(cache) => {
            cache.store(&key, &spectrum)?;
            format!("miss {key}")
        }
        None => "disabled".to_string(),
    };
    Ok((layout, spectrum, status))
}

fn sector_value(label: Option<SectorLabel>) -> String {
    match label {
        Some(SectorLabel::Parity(p)) => p.to_string(),
        Some(SectorLabel::U1(c)) => c.value().to_string(),
        None => "NaN".into(),
    }
}

pub fn spectrum(cfg: &ExperimentConfig, ctx: &Context) -> Result<Report, CliError> {
    let (_, spec, cache) = fixed_spectrum(cfg, ctx)?;
    let mut t = Table::new("spectrum.csv", &["index", "energy", "sector"]);
    for (k, e) in spec.eigenvalues().iter().enumerate() {
        let (b, _) = spec.position(k);
        t.push(vec![int(k), num(*e), sector_value(spec.blocks()[b].sector)]);
    }
    let results = json!({ "levels": spec.len(), "dim": spec.dim(), "source": spec.source() });
    Ok(Report { cache: Some(cache), ..Report::new(vec![t], results) })
}

pub fn spacing(cfg: &ExperimentConfig, ctx: &Context) -> Result<Report, CliError> {
    let (_, spec, cache) = fixed_spectrum(cfg, ctx)?;
    let r = &cfg.run;
    let u = unfold(spec.eigenvalues(), cfg.unfolding())?;
    let h = spacing_histogram(&u.spacings, r.bin_width, r.s_max)?;
    let mut s = Table::new("spacings.csv", &["s"]);
    for x in &u.spacings {
        s.push(vec![num(*x)]);
    }
    let mut hist = Table::new("histogram.csv", &["bin_center", "density", "p_P", "p_WD"]);
    for k in 0..h.densities.len() {
        hist.push(vec![num(h.bin_centers[k]), num(h.densities[k]), num(h.p_poisson[k]), num(h.p_wigner_dyson[k])]);
    }
    let results = json!({
        "levels": spec.len(),
        "levels_used": u.levels_used,
        "mean_spacing_before_rescale": u.mean_spacing,
        "small_spacing_fraction": small_spacing_fraction(&u.spacings, r.s_min)?,
        "s_min": r.s_min,
        "spacings_outside_histogram": h.n_outside,
        "histogram_integral": h.integral(),
    });
    Ok(Report { cache: Some(cache), ..Report::new(vec![s, hist], results) })
}

fn fit_value(fit: &Result<LyapunovFit, rabi_chaos::Error>) -> Value {
    match fit {
        Ok(f) => serde_json::to_value(f).expect("fit serializes"),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

pub fn fotoc(cfg: &ExperimentConfig, _ctx: &Context) -> Result<Report, CliError> {
    let p = cfg.params()?;
    let r = &cfg.run;
    let run = lyapunov_run(
        &p,
        &cfg.initial_state(),
        r.horizon / p.omega,
        r.grid_points,
        r.refine_points,
        &cfg.cutoff_options(),
    )?;
    let series = &run.converged.series;
    let mut t = Table::new("fotoc.csv", &["t", "var_G"]);
    for (x, v) in series.times.iter().zip(&series.values) {
        t.push(vec![num(*x), num(*v)]);
    }
    let fit = fit_lyapunov_with(&run.refined, &cfg.fit_rule());
    let profile = long_time_profile(series).map_or_else(|e| json!({ "error": e.to_string() }), |l| json!(l));
    let results = json!({
        "n_max": run.converged.n_max,
        "cutoff_history": run.converged.history,
        "fit": fit_value(&fit),
        "long_time_profile": profile,
    });
    Ok(Report::new(vec![t], results))
}

pub fn echo(cfg: &ExperimentConfig, _ctx: &Context) -> Result<Report, CliError> {
    let p = cfg.params()?;
    let r = &cfg.run;
    let init = cfg.initial_state();
    let times = linear_grid(0.0, r.horizon / p.omega, r.grid_points)?;
    let conv = adaptive_cutoff(&p, &init, &times, &cfg.cutoff_options())?;
    let psi0 = init.build::<f64>(&conv.layout)?;
    let g = quadrature_g_full::<f64>(&conv.layout, 0);
    let var = &conv.series.values;
    match r.echo_observable {
        EchoObservableSpec::Projector => {
            let e = fotoc_echo_series(&conv.spectrum, &psi0, &g, EchoObservable::Projector, r.delta_phi, &times)?;
            let mut t = Table::new("echo.csv", &["t", "var_G", "echo"]);
            let mut worst: f64 = 0.0;
            for k in 0..times.len() {
                t.push(vec![num(times[k]), num(var[k]), num(e.values[k])]);
                if var[k] >= 1e-3 {
                    worst = worst.max((e.values[k] - var[k]).abs() / var[k]);
                }
            }
            let results = json!({ "n_max": conv.n_max, "observable": "projector", "max_relative_difference": worst });
            Ok(Report::new(vec![t], results))
        }
        EchoObservableSpec::SigmaX => {
            let sx = sigma_x_full::<f64>(&conv.layout);
            let d =
                echo_divergence_series(&conv.spectrum, &psi0, &g, EchoObservable::Operator(&sx), r.delta_phi, &times)?;
            let mut t = Table::new("echo.csv", &["t", "var_G", "echo", "commutator", "odd"]);
            let mut above = 0;
            for k in 0..times.len() {
                t.push(vec![
                    num(times[k]),
                    num(var[k]),
                    num(d.echo.values[k]),
                    num(d.commutator.values[k]),
                    num(d.odd.values[k]),
                ]);
                if d.echo.values[k] > var[k] {
                    above += 1;
                }
            }
            let results = json!({
                "n_max": conv.n_max,
                "observable": "sigma_x",
                "points_above_var_g": above,
                "fraction_bounded": 1.0 - above as f64 / times.len() as f64,
            });
            Ok(Report::new(vec![t], results))
        }
    }
}

fn scan_row(x: f64, fit: &Result<LyapunovFit, rabi_chaos::Error>) -> Vec<String> {
    match fit {
        Ok(f) => vec![num(x), num(f.lambda_q), num(f.t_star), num(f.product()), num(f.r_squared)],
        Err(_) => vec![num(x), num(f64::NAN), num(f64::NAN), num(f64::NAN), num(f64::NAN)],
    }
}

pub fn lyapunov_scan(cfg: &ExperimentConfig, _ctx: &Context) -> Result<Report, CliError> {
    let r = &cfg.run;
    if r.etas.is_empty() && r.couplings.is_empty() {
        return Err(config_err("run.etas", "lyapunov-scan needs `etas` or `couplings`"));
    }
    let rule = cfg.fit_rule();
    let opts = cfg.cutoff_options();
    let init = cfg.initial_state();
    let fit_at = |p: ModelParams<f64>| -> Result<(usize, Result<LyapunovFit, rabi_chaos::Error>), CliError> {
        let run = lyapunov_run(&p, &init, r.horizon / p.omega, r.grid_points, r.refine_points, &opts)?;
        Ok((run.converged.n_max, fit_lyapunov_with(&run.refined, &rule)))
    };
    let mut tables = Vec::new();
    let mut results = serde_json::Map::new();
    if !r.etas.is_empty() {
        let params = r.etas.iter().map(|&eta| cfg.params_at_eta(eta)).collect::<Result<Vec<_>, _>>()?;
        let fits = params.into_par_iter().map(fit_at).collect::<Result<Vec<_>, _>>()?;
        let mut t = Table::new("scan.csv", &["eta", "lambda_q", "t_star", "product", "r2"]);
        for (eta, (_, f)) in r.etas.iter().zip(&fits) {
            t.push(scan_row(*eta, f));
        }
        let ok: Vec<(f64, LyapunovFit)> =
            r.etas.iter().zip(&fits).filter_map(|(e, (_, f))| f.as_ref().ok().map(|f| (*e, f.clone()))).collect();
        let (etas, good): (Vec<f64>, Vec<LyapunovFit>) = ok.into_iter().unzip();
        let scaling = scaling_fits(&etas, &good).map_or_else(|e| json!({ "error": e.to_string() }), |s| json!(s));
        results.insert(
            "eta_fits".into(),
            json!(fits.iter().map(|(n, f)| json!({ "n_max": n, "fit": fit_value(f) })).collect::<Vec<_>>()),
        );
        results.insert("scaling".into(), scaling);
        tables.push(t);
    }
    if !r.couplings.is_empty() {
        let base = cfg.params()?;
        let fits = r.couplings.par_iter().map(|&g| fit_at(base.with_g(g))).collect::<Result<Vec<_>, _>>()?;
        let mut t = Table::new("coupling_scan.csv", &["g", "lambda_q", "t_star", "product", "r2"]);
        for (g, (_, f)) in r.couplings.iter().zip(&fits) {
            t.push(scan_row(*g, f));
        }
        results.insert(
            "coupling_fits".into(),
            json!(fits.iter().map(|(n, f)| json!({ "n_max": n, "fit": fit_value(f) })).collect::<Vec<_>>()),
        );
        tables.push(t);
    }
    Ok(Report::new(tables, Value::Object(results)))
}

pub fn equilibrate(cfg: &ExperimentConfig, _ctx: &Context) -> Result<Report, CliError> {
    let p = cfg.params()?;
    let r = &cfg.run;
    let init = cfg.initial_state();
    let c = converged_ensemble(&p, &init, &cfg.cutoff_options())?;
    let ens = c.ensemble();
    let up = spin_up_projector::<f64>(&c.layout);
    let n_op = number_operator::<f64>(&c.layout, 0);

    let mut fock = Table::new("fock_distribution.csv", &["n", "p_n"]);
    for (n, w) in de_fock_distribution(&ens, &c.layout, 0)?.iter().enumerate() {
        fock.push(vec![int(n), num(*w)]);
    }

    let times = linear_grid(0.0, r.horizon / p.omega, r.grid_points)?;
    let ev = Evolver::new(&c.spectrum, &c.initial)?;
    let (ru, _) = ev.reduce(&up, false)?;
    let (rn, _) = ev.reduce(&n_op, false)?;
    let series = ev.expectation_series(&[&ru, &rn], &times);
    let mut dynamics = Table::new("dynamics.csv", &["t", "p_up", "n_mean"]);
    for k in 0..times.len() {
        dynamics.push(vec![num(times[k]), num(series[0][k]), num(series[1][k])]);
    }

    let mut averages = Table::new("time_averages.csv", &["t_start", "window", "p_up", "n_mean"]);
    for &w in &r.windows {
        let a = time_average(&c.spectrum, &c.initial, &up, r.t_start, w)?;
        let b = time_average(&c.spectrum, &c.initial, &n_op, r.t_start, w)?;
        averages.push(vec![num(r.t_start), num(w), num(a), num(b)]);
    }

    let e0 = ens.energy();
    let me = default_shell_width(&c.spectrum, e0, r.shell_states)
        .and_then(|w| Ok((me_average(&c.spectrum, &up, e0, w)?, me_average(&c.spectrum, &n_op, e0, w)?)));
    let me = me.map_or_else(|e| json!({ "error": e.to_string() }), |(a, b)| json!({ "p_up": a, "n_mean": b }));

    let mut tables = vec![fock, dynamics, averages];
    let mut results = json!({
        "n_max": c.n_max,
        "cutoff_history": c.history,
        "energy": e0,
        "d_eff": ens.effective_dimension(),
        "de_p_up": de_average(&ens, &up)?,
        "de_n_mean": de_average(&ens, &n_op)?,
        "min_resolved_gap": ens.min_resolved_gap(),
        "microcanonical": me,
    });
    if !r.phases.is_empty() {
        let states = r
            .phases
            .iter()
            .map(|&phi| basis_state::<f64>(SpinLabel::Phase(phi), &init.occupations, &c.layout))
            .collect::<Result<Vec<_>, _>>()?;
        let u = universality_sweep(&c.spectrum, &states, &[&up, &n_op])?;
        let mut t = Table::new("universality.csv", &["phi", "energy", "p_up", "n_mean"]);
        for (k, phi) in r.phases.iter().enumerate() {
            t.push(vec![num(*phi), num(u.energies[k]), num(u.averages[k][0]), num(u.averages[k][1])]);
        }
        results["universality_relative_spread"] =
            json!({ "p_up": u.relative_spread[0], "n_mean": u.relative_spread[1] });
        tables.push(t);
    }
    Ok(Report::new(tables, results))
}

pub fn deff_scan(cfg: &ExperimentConfig, _ctx: &Context) -> Result<Report, CliError> {
    let p = cfg.params()?;
    let r = &cfg.run;
    let opts = cfg.cutoff_options();
    let (points, x_name) = if !r.occupations.is_empty() {
        (deff_vs_occupation(&p, cfg.initial_state().spin, &r.occupations, &opts)?, "occupation")
    } else if !r.couplings.is_empty() {
        (deff_vs_coupling(&p, &cfg.initial_state(), &r.couplings, &opts)?, "coupling")
    } else {
        return Err(config_err("run.occupations", "deff-scan needs `occupations` or `couplings`"));
    };
    let mut t = Table::new("deff.csv", &["x", "d_eff", "n_max"]);
    for pt in &points {
        t.push(vec![num(pt.x), num(pt.d_eff), int(pt.n_max)]);
    }
    Ok(Report::new(vec![t], json!({ "x": x_name })))
}

/// Block spectra against the dense full-space solve and, for QJT, the
/// numerical ground state against the mean-field formulas.
pub fn oracle_check(cfg: &ExperimentConfig, _ctx: &Context) -> Result<Report, CliError> {
    let p = cfg.params()?;
    let cutoffs = cfg.cutoffs()?;
    let layout = BasisLayout::new(cutoffs.clone())?;
    let blocks = match p.kind {
        ModelKind::Qr => qr_all_blocks(&p, cutoffs[0])?,
        ModelKind::Qjt => qjt_all_blocks(&p, cutoffs[0], cutoffs[1])?,
        ModelKind::PerturbedQr => {
            return Err(config_err("model.kind", "oracle-check needs a model with symmetry sectors"));
        }
    };
    let report = block_consistency_report(&model_hamiltonian(&p, &cutoffs)?, &layout, &blocks)?;
    let mut t = Table::new(
        "oracle.csv",
        &["sector", "block_dim", "matched_full_levels", "max_abs_deviation", "label_mismatches"],
    );
    for s in &report.sectors {
        t.push(vec![
            sector_value(s.sector),
            int(s.block_dim),
            int(s.matched_full_levels),
            num(s.max_abs_deviation),
            int(s.label_mismatches),
        ]);
    }
    let scale = p.omega * cutoffs.iter().sum::<usize>() as f64 + p.delta + p.g * (cutoffs[0] as f64).sqrt();
    let tolerance = 1e-10 * scale;
    let mut results = json!({ "consistency": report, "tolerance": tolerance });
    let mut tables = vec![t];
    if p.kind == ModelKind::Qjt {
        let n = cutoffs[0].min(cutoffs[1]);
        let numeric = qjt_numeric_order(&p, n, HalfInt::from_twice(2 * n as i64 + 1))?;
        let mf = qjt_mean_field(p.g, p.omega, p.delta)?;
        let mut m = Table::new(
            "meanfield.csv",
            &["lambda", "excitation_density", "mean_field_excitation_density", "sigma_z", "mean_field_sigma_z"],
        );
        m.push(vec![
            num(mf.lambda_ratio),
            num(numeric.excitation_density),
            num(mf.excitation_density),
            num(numeric.sigma_z),
            num(mf.sigma_z),
        ]);
        results["ground_state"] = json!(numeric);
        results["mean_field"] = json!(mf);
        tables.push(m);
    }
    let failure = if report.count_mismatch {
        Some("block and full dimensions differ".to_string())
    } else if report.label_mismatches > 0 {
        Some(format!("{} block states carry the wrong symmetry label", report.label_mismatches))
    } else if !(report.max_abs_deviation <= tolerance) {
        Some(format!("eigenvalue deviation {:e} exceeds {tolerance:e}", report.max_abs_deviation))
    } else {
        None
    };
    results["passed"] = json!(failure.is_none());
    // tables are written either way so a mismatch can be inspected
    Ok(Report { failure: failure.map(CliError::Oracle), ..Report::new(tables, results) })
}
