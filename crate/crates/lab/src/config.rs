//! Experiment configuration files.
//!
//! A config carries a mandatory seed, an optional default model, parameters for a single
//! subcommand, and per-experiment sections used by `all` (or to override the defaults):
//!
//! ```json
//! {
//!   "seed": 7,
//!   "model": {"type": "taub_nut"},
//!   "params": {"radii": [10, 20, 40]},
//!   "experiments": {"inj-profile": {"model": {"type": "flat_screw", "theta_rational": [1, 3]}}}
//! }
//! ```
//!
//! Every parameter struct is echoed back in full in the report, so defaults never stay
//! hidden.

use crate::error::LabError;
use collapse_core::asymptotics::VolumeMethod;
use collapse_core::models::{
    Euclidean, FlatScrew, MultiTaubNut, PerturbedTaubNut, Schwarzschild, TaubNut,
};
use collapse_core::zoo::Angle;
use collapse_core::Model;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;

/// The subcommands, in the order `all` runs them.
pub const EXPERIMENTS: [&str; 8] = [
    "inj-profile",
    "volume-growth",
    "curvature-decay",
    "pseudo-group",
    "holonomy-decay",
    "gh-chart",
    "fibration",
    "diophantine",
];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub model: Option<ModelSpec>,
    #[serde(default, skip_serializing_if = "serde_json::Value::is_null")]
    pub params: serde_json::Value,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub experiments: BTreeMap<String, Section>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    pub model: Option<ModelSpec>,
    #[serde(default)]
    pub params: serde_json::Value,
}

/// Model descriptor. Which fields apply depends on `type`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(rename = "type")]
    pub kind: ModelKind,
    /// Screw angle in radians.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    /// Screw angle `2π p/q`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_rational: Option<[i64; 2]>,
    /// Screw angle `2π Σ_{n ≤ terms} 10^{-n!}`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub liouville_terms: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nuts: Option<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mass: Option<f64>,
    /// Euclidean dimension (3 or 4).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    /// Euclidean period of the last coordinate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<f64>,
    /// Radial extent of the tabulated Taub-NUT profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    /// Amplitude of the non-invariant Taub-NUT perturbation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Euclidean,
    FlatScrew,
    TaubNut,
    PerturbedTaubNut,
    MultiTaubNut,
    Schwarzschild,
}

pub type DynModel = Box<dyn Model + Send + Sync>;

pub const DEFAULT_T_MAX: f64 = 500.0;

impl ModelSpec {
    pub fn of(kind: ModelKind) -> Self {
        Self {
            kind,
            theta: None,
            theta_rational: None,
            liouville_terms: None,
            nuts: None,
            mass: None,
            dim: None,
            period: None,
            t_max: None,
            delta: None,
        }
    }

    pub fn taub_nut() -> Self {
        Self::of(ModelKind::TaubNut)
    }

    pub fn flat_rational(p: i64, q: i64) -> Self {
        Self {
            theta_rational: Some([p, q]),
            ..Self::of(ModelKind::FlatScrew)
        }
    }

    /// The screw angle; exactly one of the three angle fields must be set.
    pub fn angle(&self, path: &str) -> Result<Angle, LabError> {
        let set = [
            self.theta.is_some(),
            self.theta_rational.is_some(),
            self.liouville_terms.is_some(),
        ];
        if set.iter().filter(|s| **s).count() != 1 {
            return Err(LabError::config(
                path,
                "flat_screw needs exactly one of theta, theta_rational, liouville_terms",
            ));
        }
        let a = if let Some(t) = self.theta {
            Angle::from_radians(t)
        } else if let Some([p, q]) = self.theta_rational {
            Angle::rational(p, q)
        } else {
            Angle::liouville(self.liouville_terms.unwrap_or(0))
        };
        a.map_err(|e| LabError::config(path, e.to_string()))
    }

    pub fn build(&self, path: &str) -> Result<DynModel, LabError> {
        let unused = |name: &str, present: bool| -> Result<(), LabError> {
            if present {
                Err(LabError::config(
                    format!("{path}.{name}"),
                    format!("not a parameter of {:?}", self.kind),
                ))
            } else {
                Ok(())
            }
        };
        let angle_given =
            self.theta.is_some() || self.theta_rational.is_some() || self.liouville_terms.is_some();
        let geo = |e: collapse_core::GeomError| LabError::config(path, e.to_string());
        let tn_max = self.t_max.unwrap_or(DEFAULT_T_MAX);
        let m: DynModel = match self.kind {
            ModelKind::Euclidean => {
                unused("theta", angle_given)?;
                unused("nuts", self.nuts.is_some())?;
                unused("mass", self.mass.is_some())?;
                Box::new(Euclidean::new(self.dim.unwrap_or(3), self.period).map_err(geo)?)
            }
            ModelKind::FlatScrew => {
                unused("nuts", self.nuts.is_some())?;
                unused("mass", self.mass.is_some())?;
                Box::new(FlatScrew::new(self.angle(path)?))
            }
            ModelKind::TaubNut => {
                unused("theta", angle_given)?;
                unused("nuts", self.nuts.is_some())?;
                Box::new(TaubNut::new(tn_max).map_err(geo)?)
            }
            ModelKind::PerturbedTaubNut => {
                unused("theta", angle_given)?;
                let delta = self
                    .delta
                    .ok_or_else(|| LabError::config(format!("{path}.delta"), "missing"))?;
                Box::new(PerturbedTaubNut::new(tn_max, delta).map_err(geo)?)
            }
            ModelKind::MultiTaubNut => {
                unused("theta", angle_given)?;
                let nuts = self
                    .nuts
                    .clone()
                    .ok_or_else(|| LabError::config(format!("{path}.nuts"), "missing"))?;
                Box::new(MultiTaubNut::new(nuts).map_err(geo)?)
            }
            ModelKind::Schwarzschild => {
                unused("theta", angle_given)?;
                let mass = self
                    .mass
                    .ok_or_else(|| LabError::config(format!("{path}.mass"), "missing"))?;
                Box::new(Schwarzschild::new(mass).map_err(geo)?)
            }
        };
        Ok(m)
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, LabError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::config("<file>", format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, LabError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| LabError::config(e.path().to_string(), e.inner().to_string()))
    }

    /// Model and raw parameters for one experiment, with the path used in error messages.
    pub fn section(&self, name: &str) -> (Option<ModelSpec>, serde_json::Value, String) {
        match self.experiments.get(name) {
            Some(s) => (
                s.model.clone().or_else(|| self.model.clone()),
                s.params.clone(),
                format!("experiments.{name}"),
            ),
            None => (self.model.clone(), self.params.clone(), String::new()),
        }
    }
}

/// Deserialize a parameter block, reporting failures with their full field path.
pub fn parse_params<T: DeserializeOwned + Default>(
    value: &serde_json::Value,
    prefix: &str,
) -> Result<T, LabError> {
    if value.is_null() {
        return Ok(T::default());
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let inner = e.path().to_string();
        let base = if prefix.is_empty() {
            "params".to_string()
        } else {
            format!("{prefix}.params")
        };
        let path = if inner == "." {
            base
        } else {
            format!("{base}.{inner}")
        };
        LabError::config(path, e.inner().to_string())
    })
}

/// `n` points spaced geometrically from `a` to `b`.
pub fn geomspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![a],
        _ => (0..n)
            .map(|i| a * (b / a).powf(i as f64 / (n - 1) as f64))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Per-experiment parameters. Bounds sit next to the quantity they judge.

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InjProfileParams {
    pub radii: Vec<f64>,
    /// Longest loop searched on curved models.
    pub l_max: f64,
    /// Bound on `max inj / min inj` for curved models.
    pub pinch_max: f64,
}

impl Default for InjProfileParams {
    fn default() -> Self {
        Self {
            radii: geomspace(10.0, 100.0, 7),
            l_max: 20.0,
            pinch_max: 1.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeGrowthParams {
    pub radii: Vec<f64>,
    pub samples: u64,
    pub method: VolumeMethod,
    /// Growth exponent `ν` of the band check `vol / t^ν`; defaults to the model's
    /// collapsed dimension.
    pub exponent: Option<f64>,
    /// Bound on `max(vol/t^ν) / min(vol/t^ν)`.
    pub band_max: f64,
    /// Bound on the relative standard error of every row.
    pub max_rel_std_error: f64,
    /// Multiple of the standard error allowed against a closed-form volume.
    pub exact_sigmas: f64,
}

impl Default for VolumeGrowthParams {
    fn default() -> Self {
        Self {
            radii: geomspace(10.0, 100.0, 5),
            samples: 20_000,
            method: VolumeMethod::MonteCarlo,
            exponent: None,
            band_max: 3.0,
            max_rel_std_error: 0.02,
            exact_sigmas: 4.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightedIntegralParams {
    pub r_min: f64,
    pub doublings: usize,
    pub samples: u64,
    /// Bound on the ratio of successive annulus integrals.
    pub max_ratio: f64,
}

impl Default for WeightedIntegralParams {
    fn default() -> Self {
        Self {
            r_min: 10.0,
            doublings: 4,
            samples: 4000,
            max_ratio: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvatureDecayParams {
    pub radii: Vec<f64>,
    pub expected_exponent: f64,
    pub exponent_tol: f64,
    pub max_residual: f64,
    pub weighted_integral: Option<WeightedIntegralParams>,
}

impl Default for CurvatureDecayParams {
    fn default() -> Self {
        Self {
            radii: geomspace(10.0, 100.0, 10),
            expected_exponent: -3.0,
            exponent_tol: 0.2,
            max_residual: 0.1,
            weighted_integral: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallSpec {
    pub r: f64,
    pub rho: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FdVolumeParams {
    pub r: f64,
    pub rho: f64,
    pub samples: u64,
    /// Bound on `|vol F − vol B| / vol B`.
    pub rel_tol: f64,
}

impl Default for FdVolumeParams {
    fn default() -> Self {
        Self {
            r: 5.0,
            rho: 4.0,
            samples: 200_000,
            rel_tol: 0.02,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TranslationDefectParams {
    pub r: f64,
    pub rho: f64,
    pub samples: usize,
}

impl Default for TranslationDefectParams {
    fn default() -> Self {
        Self {
            r: 50.0,
            rho: 10.0,
            samples: 200,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PseudoGroupParams {
    pub balls: Vec<BallSpec>,
    /// Relative tolerance of element lengths against the closed form (flat models).
    pub length_rel_tol: f64,
    pub fd_volume: Option<FdVolumeParams>,
    pub translation_defect: Option<TranslationDefectParams>,
}

impl Default for PseudoGroupParams {
    fn default() -> Self {
        Self {
            balls: vec![
                BallSpec { r: 3.0, rho: 12.0 },
                BallSpec { r: 10.0, rho: 10.0 },
            ],
            length_rel_tol: 1e-9,
            fd_volume: None,
            translation_defect: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolonomyDecayParams {
    pub radii: Vec<f64>,
    /// Loop search bound as a multiple of the model's generator-length hint.
    pub l_max_factor: f64,
    pub max_slope: f64,
}

impl Default for HolonomyDecayParams {
    fn default() -> Self {
        Self {
            radii: geomspace(20.0, 200.0, 6),
            l_max_factor: 1.5,
            max_slope: -1.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GhChartParams {
    pub radii: Vec<f64>,
    pub kappa: f64,
    pub pairs: usize,
    /// Allowed range of the fitted slope of the maximal defect.
    pub slope_range: [f64; 2],
}

impl Default for GhChartParams {
    fn default() -> Self {
        Self {
            radii: geomspace(25.0, 100.0, 5),
            kappa: 0.3,
            pairs: 400,
            slope_range: [-0.2, 0.2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FibrationParams {
    pub radii: Vec<f64>,
    pub kappa: f64,
    /// `ε = eps_factor · κ r`.
    pub eps_factor: f64,
    /// Sample points per radius, spread along the fiber through `x`.
    pub fiber_samples: usize,
    /// Level values `b` whose fibers are traced (at every radius).
    pub levels: Vec<[f64; 3]>,
    /// Bound on the fitted slope of `max |ln σ|` against `r`.
    pub max_distortion_slope: f64,
    /// Bound on the fitted slope of the Hessian norm against `r`.
    pub max_hessian_slope: f64,
    /// Relative bound on fiber length against the model's generator length.
    pub length_rel_tol: f64,
    /// Below this, distortion and Hessian are judged as exact zeros instead of fitted.
    pub noise_floor: f64,
    /// Circle-averaging checks; skipped for models without a circle action.
    pub averaging: Option<AveragingParams>,
}

impl Default for FibrationParams {
    fn default() -> Self {
        Self {
            radii: geomspace(25.0, 100.0, 5),
            kappa: 0.3,
            eps_factor: 0.1,
            fiber_samples: 8,
            levels: vec![[0.0, 0.0, 0.0]],
            max_distortion_slope: -0.8,
            max_hessian_slope: -1.5,
            length_rel_tol: 0.02,
            noise_floor: 1e-8,
            averaging: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AveragingParams {
    pub radii: Vec<f64>,
    /// Trapezoid nodes along the circle.
    pub nodes: usize,
    /// Bound on `‖h − g‖` for invariant models.
    pub invariant_tol: f64,
    /// Bound on the fitted slope of `‖h − g‖` for non-invariant models.
    pub max_slope: f64,
}

impl Default for AveragingParams {
    fn default() -> Self {
        Self {
            radii: geomspace(10.0, 100.0, 6),
            nodes: 16,
            invariant_tol: 1e-6,
            max_slope: -1.8,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiophantineParams {
    pub depth: usize,
    /// Radii for the pigeonhole and `√t` checks.
    pub t_values: Vec<f64>,
    /// Exponent `a` of `inj(t) / t^a` along the Liouville plateau sequence.
    pub liouville_power: f64,
    /// Number of Liouville terms used to build the plateau sequence.
    pub liouville_terms: u32,
    pub liouville_len: usize,
}

impl Default for DiophantineParams {
    fn default() -> Self {
        Self {
            depth: 12,
            t_values: geomspace(10.0, 1e4, 7),
            liouville_power: 0.05,
            liouville_terms: 3,
            liouville_len: 5,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_field_reports_its_path() {
        let err =
            ExperimentConfig::parse(r#"{"seed": 1, "model": {"type": "taub_nut", "thetta": 1}}"#)
                .unwrap_err();
        match err {
            LabError::Config { path, .. } => assert_eq!(path, "model.thetta"),
            e => panic!("{e}"),
        }
        let cfg = ExperimentConfig::parse(r#"{"seed": 1, "params": {"radii": [1, "x"]}}"#).unwrap();
        let err = parse_params::<InjProfileParams>(&cfg.params, "").unwrap_err();
        match err {
            LabError::Config { path, .. } => assert_eq!(path, "params.radii[1]"),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn model_schema() {
        let cfg = ExperimentConfig::parse(
            r#"{"seed": 3, "model": {"type": "flat_screw", "theta_rational": [1, 3]}}"#,
        )
        .unwrap();
        let m = cfg.model.unwrap().build("model").unwrap();
        assert_eq!(m.name(), "flat_screw");
        let bad = ModelSpec {
            theta: Some(1.0),
            ..ModelSpec::flat_rational(1, 3)
        };
        assert!(bad.build("model").is_err());
        let s = ModelSpec {
            mass: Some(1.0),
            ..ModelSpec::of(ModelKind::Schwarzschild)
        };
        assert_eq!(s.build("model").unwrap().dim(), 4);
        assert!(ModelSpec::of(ModelKind::MultiTaubNut)
            .build("model")
            .is_err());
    }

    #[test]
    fn geomspace_hits_ends() {
        let g = geomspace(25.0, 100.0, 5);
        assert_eq!(g.len(), 5);
        assert!((g[2] - 50.0).abs() < 1e-12 && (g[4] - 100.0).abs() < 1e-12);
    }
}
