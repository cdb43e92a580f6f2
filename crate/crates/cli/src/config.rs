//! JSON run configurations, one schema per command. Missing optional fields
//! take the documented defaults and the resolved form is echoed back into
//! every sidecar.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use kite_core::dynamics::GridSpec;
use kite_core::fitting::Method;
use kite_core::spectra::{FluxPoint, IterativeOptions, ModelSpec, PlaquetteEdge};
use kite_core::{EffectiveParams, PhysicalParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

fn finite(name: &str, values: &[f64]) -> CliResult<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(v) => Err(CliError::Config(format!("{name} must be finite, got {v}"))),
        None => Ok(()),
    }
}

/// Where to evaluate spectra: a plaquette edge, a straight path, or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum FluxSpec {
    Edge { edge: PlaquetteEdge, points: usize },
    Line { from: [f64; 2], to: [f64; 2], points: usize },
    List { list: Vec<[f64; 2]> },
}

impl FluxSpec {
    pub fn points(&self) -> CliResult<Vec<FluxPoint>> {
        let pts = match self {
            Self::Edge { edge, points } => edge.path(*points),
            Self::Line { from, to, points } => {
                finite("flux path", &[from[0], from[1], to[0], to[1]])?;
                (0..*points)
                    .map(|i| {
                        let s = if *points > 1 { i as f64 / (*points - 1) as f64 } else { 0.0 };
                        FluxPoint::new(from[0] + s * (to[0] - from[0]), from[1] + s * (to[1] - from[1]))
                    })
                    .collect()
            }
            Self::List { list } => list.iter().map(|p| FluxPoint::new(p[0], p[1])).collect(),
        };
        if pts.is_empty() {
            return Err(CliError::Config("flux specification selects no points".into()));
        }
        for p in &pts {
            finite("flux", &[p.theta_ext, p.phi_ext])?;
        }
        Ok(pts)
    }
}

fn default_transitions() -> usize {
    4
}

fn default_tol() -> f64 {
    1e-5
}

/// Truncation search run before the main computation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeSettings {
    #[serde(default = "default_tol")]
    pub tol: f64,
    /// Flux at which to converge; defaults to the first sweep point.
    #[serde(default)]
    pub at: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub model: ModelSpec,
    pub flux: FluxSpec,
    /// Number of adjacent transitions ω_0..ω_{k−1} per flux point.
    #[serde(default = "default_transitions")]
    pub transitions: usize,
    #[serde(default)]
    pub converge: Option<ConvergeSettings>,
    #[serde(default)]
    pub eigen: IterativeOptions,
}

fn default_n_max() -> usize {
    6
}

/// Either J_n from the closed form or J_n recovered from measured shifts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum LadderConfig {
    Analytic {
        /// Bare frequency Ω/2π; only ω₀ depends on it.
        #[serde(default)]
        omega: Option<f64>,
        cal_e_j: f64,
        eta: f64,
        #[serde(default = "default_n_max")]
        n_max: usize,
    },
    Inversion {
        /// δ_1..δ_m, GHz.
        delta: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReduceConfig {
    pub params: PhysicalParams,
}

/// A complex amplitude given either as a real number or as [re, im].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

impl Amplitude {
    pub fn parts(self) -> [f64; 2] {
        match self {
            Self::Real(r) => [r, 0.0],
            Self::Complex(c) => c,
        }
    }
}

fn default_snapshots() -> usize {
    9
}

fn default_grid_points() -> usize {
    81
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    /// A one-mode model (`ideal` or `circuit-one-mode`).
    pub model: ModelSpec,
    #[serde(default)]
    pub phi_ext: f64,
    /// Initial coherent amplitude; defaults to η/2.
    #[serde(default)]
    pub alpha: Option<Amplitude>,
    /// Amplitude of the target state of the overlap trace; defaults to −α.
    #[serde(default)]
    pub target: Option<Amplitude>,
    /// Snapshot times in ns; defaults to `snapshots` times spanning one period 1/Ω.
    #[serde(default)]
    pub times: Option<Vec<f64>>,
    #[serde(default = "default_snapshots")]
    pub snapshots: usize,
    /// Frame frequency in GHz; defaults to the dressed 0→1 transition.
    #[serde(default)]
    pub frame_ghz: Option<f64>,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
}

impl EvolveConfig {
    pub fn eta_and_omega(&self) -> CliResult<(f64, f64)> {
        match &self.model {
            ModelSpec::Ideal { omega, eta, .. } => Ok((*eta, *omega)),
            ModelSpec::CircuitOneMode { params, .. } => Ok((params.eta, params.omega)),
            ModelSpec::ThreeMode { .. } => Err(CliError::Config("evolve needs a one-mode model".into())),
        }
    }
}

fn default_one_mode_dim() -> usize {
    200
}

fn default_three_mode_dims() -> [usize; 3] {
    [60, 8, 8]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FitModel {
    CircuitOneMode {
        init: EffectiveParams,
        #[serde(default = "default_one_mode_dim")]
        dim: usize,
    },
    ThreeMode {
        init: PhysicalParams,
        #[serde(default = "default_three_mode_dims")]
        dims: [usize; 3],
    },
}

impl FitModel {
    pub fn names(&self) -> &'static [&'static str] {
        match self {
            Self::CircuitOneMode { .. } => &["omega", "cal_e_j", "d_e_j", "eta"],
            Self::ThreeMode { .. } => &["e_j", "e_c", "e_l", "eps_l", "eps_c", "eps"],
        }
    }
}

fn default_method() -> Method {
    Method::LevenbergMarquardt
}

fn default_max_iter() -> usize {
    200
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    pub model: FitModel,
    /// Dataset CSV, relative to the config file.
    pub data: PathBuf,
    /// Names of parameters held at their initial values.
    #[serde(default)]
    pub freeze: Vec<String>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
}

impl FitConfig {
    /// Free-parameter mask, true = fitted.
    pub fn mask(&self) -> CliResult<Vec<bool>> {
        let names = self.model.names();
        for f in &self.freeze {
            if !names.contains(&f.as_str()) {
                return Err(CliError::Config(format!(
                    "unknown parameter '{f}' in freeze list; expected one of {names:?}"
                )));
            }
        }
        Ok(names.iter().map(|n| !self.freeze.iter().any(|f| f == n)).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergeConfig {
    pub model: ModelSpec,
    #[serde(default = "default_flux")]
    pub flux: [f64; 2],
    #[serde(default = "default_converge_transitions")]
    pub transitions: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
}

fn default_flux() -> [f64; 2] {
    [PI, 0.0]
}

fn default_converge_transitions() -> usize {
    5
}
