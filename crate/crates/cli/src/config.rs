//! JSON experiment configuration.

use std::path::{Path, PathBuf};

use rabi_chaos::dynamics::{CutoffOptions, FitRule, InitialState};
use rabi_chaos::hilbert::SpinLabel;
use rabi_chaos::models::{params_from_gc_eta, ModelKind, ModelParams};
use rabi_chaos::spectral::UnfoldingOptions;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Either `(g_c, eta)` or `(omega, delta)` fixes the bare energies.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    pub g_c: Option<f64>,
    pub eta: Option<f64>,
    pub omega: Option<f64>,
    pub delta: Option<f64>,
    #[serde(default)]
    pub g: f64,
    #[serde(default)]
    pub lambda_perturb: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinSpec {
    Up,
    Down,
    Plus,
    Minus,
    Phase,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub spin: SpinSpec,
    /// Relative phase for `spin = "phase"`.
    pub phi: Option<f64>,
    #[serde(default)]
    pub occupations: Vec<usize>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        Self { spin: SpinSpec::Plus, phi: None, occupations: Vec::new() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EchoObservableSpec {
    Projector,
    SigmaX,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitRuleSpec {
    /// Threshold window with the log-midrange fallback.
    Default,
    /// Threshold window only.
    Strict,
}

/// Subcommand parameters; every field has a default so that one file can
/// drive several subcommands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Fock cutoff per mode for fixed-cutoff runs.
    pub cutoffs: Vec<usize>,
    /// Parity (+1/-1) or U(1) label; `None` means every sector.
    pub sector: Option<f64>,
    pub with_vectors: bool,
    /// Time horizon in units of `1/omega`.
    pub horizon: f64,
    pub grid_points: usize,
    pub refine_points: usize,
    pub delta_phi: f64,
    pub echo_observable: EchoObservableSpec,
    pub fit_rule: FitRuleSpec,
    pub etas: Vec<f64>,
    pub couplings: Vec<f64>,
    pub occupations: Vec<usize>,
    pub initial: InitialConfig,
    pub tolerance: f64,
    pub hard_cap: usize,
    pub population_threshold: f64,
    pub min_cutoff: usize,
    pub poly_degree: usize,
    pub edge_trim_fraction: f64,
    pub bin_width: f64,
    pub s_max: f64,
    pub s_min: f64,
    /// Averaging windows for time averages, in inverse energy units.
    pub windows: Vec<f64>,
    pub t_start: f64,
    /// Relative phases of `(|down> + e^{i phi}|up>)|n>` states compared by `equilibrate`.
    pub phases: Vec<f64>,
    /// Levels in the microcanonical shell around the initial energy.
    pub shell_states: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let cut = CutoffOptions::default();
        let unf = UnfoldingOptions::default();
        Self {
            cutoffs: Vec::new(),
            sector: None,
            with_vectors: false,
            horizon: 20.0,
            grid_points: 2000,
            refine_points: 200,
            delta_phi: 1e-3,
            echo_observable: EchoObservableSpec::Projector,
            fit_rule: FitRuleSpec::Default,
            etas: Vec::new(),
            couplings: Vec::new(),
            occupations: Vec::new(),
            initial: InitialConfig::default(),
            tolerance: cut.tolerance,
            hard_cap: cut.hard_cap,
            population_threshold: cut.population_threshold,
            min_cutoff: cut.min_cutoff,
            poly_degree: unf.poly_degree,
            edge_trim_fraction: unf.edge_trim_fraction,
            bin_width: 0.1,
            s_max: 4.0,
            s_min: 0.05,
            windows: vec![1e3],
            t_start: 0.0,
            phases: Vec::new(),
            shell_states: rabi_chaos::equilibration::DEFAULT_SHELL_STATES,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config { key: "--config".into(), message: format!("{}: {e}", path.display()) })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = deserialize_tracked(de)?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        self.params()?;
        let r = &self.run;
        let bad = |key: &str, message: String| Err(CliError::Config { key: format!("run.{key}"), message });
        if !(r.horizon > 0.0) {
            return bad("horizon", format!("must be positive, got {}", r.horizon));
        }
        if r.grid_points < 2 {
            return bad("grid_points", format!("need at least 2, got {}", r.grid_points));
        }
        if !(r.delta_phi > 0.0) {
            return bad("delta_phi", format!("must be positive, got {}", r.delta_phi));
        }
        if !(r.tolerance > 0.0) {
            return bad("tolerance", format!("must be positive, got {}", r.tolerance));
        }
        if !(r.bin_width > 0.0 && r.s_max >= r.bin_width) {
            return bad("bin_width", format!("need 0 < bin_width <= s_max, got {} and {}", r.bin_width, r.s_max));
        }
        if r.etas.iter().any(|e| !(*e > 0.0)) {
            return bad("etas", "every eta must be positive".into());
        }
        if r.couplings.iter().any(|g| !(*g >= 0.0)) {
            return bad("couplings", "every coupling must be non-negative".into());
        }
        if r.windows.iter().any(|w| !(*w > 0.0)) {
            return bad("windows", "every window must be positive".into());
        }
        if r.initial.spin == SpinSpec::Phase && r.initial.phi.is_none() {
            return bad("initial.phi", "required when spin is \"phase\"".into());
        }
        if !r.cutoffs.is_empty() && r.cutoffs.len() != self.n_modes() {
            return bad("cutoffs", format!("expected {} entries for {:?}", self.n_modes(), self.model.kind));
        }
        if !r.initial.occupations.is_empty() && r.initial.occupations.len() != self.n_modes() {
            return bad("initial.occupations", format!("expected {} entries", self.n_modes()));
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        match self.model.kind {
            ModelKind::Qjt => 2,
            _ => 1,
        }
    }

    /// Parameters at the configured `eta` (or `omega`, `delta`).
    pub fn params(&self) -> Result<ModelParams<f64>, CliError> {
        let m = &self.model;
        let model_err = |message: String| CliError::Config { key: "model".into(), message };
        let p = match (m.g_c, m.eta, m.omega, m.delta) {
            (Some(gc), Some(eta), None, None) => {
                params_from_gc_eta(m.kind, gc, eta).map_err(|e| model_err(e.to_string()))?
            }
            (None, None, Some(w), Some(d)) => {
                ModelParams::new(m.kind, w, d, 0.0, 0.0).map_err(|e| model_err(e.to_string()))?
            }
            _ => return Err(model_err("give exactly one of (g_c, eta) or (omega, delta)".into())),
        };
        ModelParams::new(m.kind, p.omega, p.delta, m.g, m.lambda_perturb).map_err(|e| model_err(e.to_string()))
    }

    /// Parameters with `eta` replaced, keeping `g_c` (or `omega`) fixed.
    pub fn params_at_eta(&self, eta: f64) -> Result<ModelParams<f64>, CliError> {
        let m = &self.model;
        let base = self.params()?;
        let p = match m.g_c {
            Some(gc) => params_from_gc_eta(m.kind, gc, eta),
            None => ModelParams::new(m.kind, base.omega, base.omega * eta, 0.0, 0.0),
        }
        .map_err(|e| CliError::Config { key: "run.etas".into(), message: e.to_string() })?;
        ModelParams::new(m.kind, p.omega, p.delta, m.g, m.lambda_perturb)
            .map_err(|e| CliError::Config { key: "run.etas".into(), message: e.to_string() })
    }

    pub fn cutoffs(&self) -> Result<Vec<usize>, CliError> {
        if self.run.cutoffs.is_empty() {
            return Err(CliError::Config { key: "run.cutoffs".into(), message: "required by this subcommand".into() });
        }
        Ok(self.run.cutoffs.clone())
    }

    pub fn initial_state(&self) -> InitialState {
        let i = &self.run.initial;
        let spin = match i.spin {
            SpinSpec::Up => SpinLabel::Up,
            SpinSpec::Down => SpinLabel::Down,
            SpinSpec::Plus => SpinLabel::Plus,
            SpinSpec::Minus => SpinLabel::Minus,
            SpinSpec::Phase => SpinLabel::Phase(i.phi.unwrap_or(0.0)),
        };
        let occ = if i.occupations.is_empty() { vec![0; self.n_modes()] } else { i.occupations.clone() };
        InitialState::new(spin, &occ)
    }

    pub fn cutoff_options(&self) -> CutoffOptions {
        CutoffOptions {
            tolerance: self.run.tolerance,
            hard_cap: self.run.hard_cap,
            population_threshold: self.run.population_threshold,
            min_cutoff: self.run.min_cutoff,
            mode: 0,
        }
    }

    pub fn unfolding(&self) -> UnfoldingOptions {
        UnfoldingOptions { poly_degree: self.run.poly_degree, edge_trim_fraction: self.run.edge_trim_fraction }
    }

    pub fn fit_rule(&self) -> FitRule {
        match self.run.fit_rule {
            FitRuleSpec::Default => FitRule::default(),
            FitRuleSpec::Strict => FitRule::strict(),
        }
    }
}

/// Deserializes while tracking the JSON path so errors name the offending key.
fn deserialize_tracked(
    de: &mut serde_json::Deserializer<serde_json::de::StrRead<'_>>,
) -> Result<ExperimentConfig, CliError> {
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CliError::Config { key: if path == "." { "<root>".into() } else { path }, message: e.inner().to_string() }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG2: &str = r#"{"model": {"kind": "qr", "g_c": 5, "eta": 50, "g": 7}}"#;

    #[test]
    fn defaults_fill_the_run_block() {
        let c = ExperimentConfig::parse(FIG2).unwrap();
        assert_eq!(c.run.grid_points, 2000);
        let p = c.params().unwrap();
        assert!((p.g_c() - 5.0).abs() < 1e-12);
        assert!((p.eta() - 50.0).abs() < 1e-9);
        assert_eq!(c.initial_state(), InitialState::new(SpinLabel::Plus, &[0]));
    }

    #[test]
    fn errors_name_the_key() {
        let e = ExperimentConfig::parse(r#"{"model": {"kind": "qr", "g_c": 5, "eta": 50}, "run": {"grid_pointz": 3}}"#)
            .unwrap_err();
        assert!(e.to_string().contains("run"), "{e}");
        let e = ExperimentConfig::parse(r#"{"model": {"kind": "qr", "g_c": 5, "eta": 50, "omega": 1}}"#).unwrap_err();
        assert!(matches!(&e, CliError::Config { key, .. } if key == "model"));
        let e = ExperimentConfig::parse(r#"{"model": {"kind": "qr", "g_c": 5, "eta": 50}, "run": {"horizon": -1}}"#)
            .unwrap_err();
        assert!(matches!(&e, CliError::Config { key, .. } if key == "run.horizon"));
        let e = ExperimentConfig::parse(r#"{"model": {"kind": "qr", "g_c": 5, "eta": "x"}}"#).unwrap_err();
        assert!(matches!(&e, CliError::Config { key, .. } if key == "model.eta"), "{e}");
    }

    #[test]
    fn eta_override_keeps_gc() {
        let c = ExperimentConfig::parse(FIG2).unwrap();
        let p = c.params_at_eta(200.0).unwrap();
        assert!((p.g_c() - 5.0).abs() < 1e-12);
        assert_eq!(p.g, 7.0);
    }
}
