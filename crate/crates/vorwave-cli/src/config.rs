//! Experiment configuration: one JSON document, every block optional.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use vorwave_core::dispersion::{Depth, WavePhysics};
use vorwave_core::dynamics::Scheme;
use vorwave_core::nonres::{NonresConfig, SiteSelection};
use vorwave_core::normalform::NormalFormConfig;
use vorwave_core::solver::SolverConfig;

/// Invalid input: exit code 1.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub physics: WavePhysics,
    pub sites: SiteSelection,
    pub nonres: NonresConfig,
    pub dispersion: DispersionBlock,
    pub torus: TorusBlock,
    pub solver: SolverConfig,
    pub measure: MeasureBlock,
    pub normalform: NormalFormBlock,
    pub validate: ValidateBlock,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            physics: WavePhysics {
                g: 1.0,
                kappa: 1.0,
                gamma: 0.5,
                depth: Depth::Finite(2.0),
            },
            sites: SiteSelection {
                splus: vec![1, 2],
                sigma: vec![1, 1],
            },
            nonres: NonresConfig::default(),
            dispersion: DispersionBlock::default(),
            torus: TorusBlock::default(),
            solver: SolverConfig::default(),
            measure: MeasureBlock::default(),
            normalform: NormalFormBlock::default(),
            validate: ValidateBlock::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DispersionBlock {
    pub jmax: u64,
}

impl Default for DispersionBlock {
    fn default() -> Self {
        DispersionBlock { jmax: 16 }
    }
}

/// Amplitudes of the torus; cutoffs live in the solver block.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TorusBlock {
    pub xi: Vec<f64>,
    pub epsilon: f64,
    /// Optional continuation ladder; the last rung is the reported torus.
    pub ladder: Vec<f64>,
}

impl Default for TorusBlock {
    fn default() -> Self {
        TorusBlock {
            xi: vec![1.0, 0.5],
            epsilon: 1e-2,
            ladder: Vec::new(),
        }
    }
}

/// Reduction constants of a frequency model `μ_j = m32·Ω_j + m1·j + m12·|j|^{1/2}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConstants {
    pub m32: f64,
    pub m1: f64,
    pub m12: f64,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeasureBlock {
    /// Amplitude label carried into the report.
    pub epsilon: f64,
    /// Constants of the normal frequencies; unperturbed when absent.
    pub frequency_model: Option<ModelConstants>,
    /// `normalform.json` of a previous run; overrides `frequency_model`.
    pub normal_form: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NormalFormBlock {
    pub snapshot: Option<PathBuf>,
    /// Rows `1 ≤ |j| ≤ mu_jmax` of the frequency table.
    pub mu_jmax: u64,
    pub settings: NormalFormConfig,
}

impl Default for NormalFormBlock {
    fn default() -> Self {
        NormalFormBlock {
            snapshot: None,
            mu_jmax: 16,
            settings: NormalFormConfig::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateBlock {
    /// Torus snapshot to validate; without it the linear seed is evolved.
    pub snapshot: Option<PathBuf>,
    /// `ε` of the linear seed when no snapshot is given.
    pub amplitude: f64,
    /// End time; defaults to `periods` periods of the first site.
    pub tend: Option<f64>,
    pub periods: f64,
    pub dt: Option<f64>,
    pub steps_per_period: usize,
    pub samples_per_period: usize,
    /// Spatial cutoff of the seed run.
    pub modes: usize,
    pub scheme: Scheme,
    pub check_reversibility: bool,
    /// Largest accepted torus deviation; above it the run fails with exit code 2.
    pub tolerance: f64,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        ValidateBlock {
            snapshot: None,
            amplitude: 1e-3,
            tend: None,
            periods: 5.0,
            dt: None,
            steps_per_period: 400,
            samples_per_period: 4,
            modes: 64,
            scheme: Scheme::Auto,
            check_reversibility: true,
            tolerance: 1e-5,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config file; relative paths inside it are resolved against its directory.
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: ExperimentConfig = serde_json::from_str(&text)
            .map_err(|e| ConfigError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.measure.normal_form,
            &mut cfg.normalform.snapshot,
            &mut cfg.validate.snapshot,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn check(&self) -> Result<()> {
        let fail = |m: String| -> Result<()> { Err(ConfigError(m).into()) };
        if let Err(e) = self.physics.validate() {
            return fail(e.to_string());
        }
        if let Err(e) = self.sites.validate() {
            return fail(e.to_string());
        }
        if let Err(e) = self.nonres.validate(self.sites.nu()) {
            return fail(e.to_string());
        }
        if self.torus.xi.len() != self.sites.nu() {
            return fail(format!(
                "torus.xi has {} entries for {} sites",
                self.torus.xi.len(),
                self.sites.nu()
            ));
        }
        let v = &self.validate;
        if v.steps_per_period == 0 || v.samples_per_period == 0 || !(v.periods > 0.0) || v.modes == 0 {
            return fail("validate: periods, steps, samples and modes must be positive".into());
        }
        if v.dt.is_some_and(|d| !(d > 0.0)) || v.tend.is_some_and(|t| !(t > 0.0)) {
            return fail("validate: dt and tend must be positive".into());
        }
        Ok(())
    }

    /// Canonical JSON of the effective configuration.
    pub fn canonical_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self).context("serializing config")?;
        s.push('\n');
        Ok(s)
    }
}
