//! JSON run configuration.

use std::path::Path;
use std::sync::Arc;

use dampde::fem::FeContext;
use dampde::forward::{
    ModelParams, Sampling, SolverSettings, SpaceTimeData, SpaceTimeSolver, StepMode,
};
use dampde::harness::ManufacturedCase;
use dampde::linalg::{PreconditionerKind, SolverConfig};
use dampde::optimizer::{ControlData, OptimizerConfig};
use dampde::quadrature::GaussRule;
use dampde::time::{TimeFunction, TimeGrid};
use serde::Deserialize;

use crate::expr::compile;

/// A configuration problem, reported with the offending key.
#[derive(Debug)]
pub struct ConfigError {
    pub key: String,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.key.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.key, self.message)
        }
    }
}

fn bad(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Params {
    pub alpha: f64,
    pub beta: f64,
    pub delta: f64,
    #[serde(rename = "T")]
    pub final_time: f64,
}

impl Default for Params {
    fn default() -> Self {
        Params {
            alpha: 1.0,
            beta: 1.0,
            delta: 0.1,
            final_time: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Discretization {
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
}

impl Default for Discretization {
    fn default() -> Self {
        Discretization { n: 16, m: 16 }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum CaseKind {
    #[default]
    ManufacturedLinear,
    Custom,
}

/// Expression strings in t, x, y.
#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct CustomCase {
    pub l: Option<String>,
    pub d0: Option<String>,
    pub exact_phi: Option<String>,
    pub exact_d: Option<String>,
    pub phi_d: Option<String>,
    pub d_d: Option<String>,
    pub l_d: Option<String>,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Ocp {
    pub alpha_l: f64,
    pub use_ld: bool,
}

impl Default for Ocp {
    fn default() -> Self {
        Ocp {
            alpha_l: 1.0,
            use_ld: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    #[default]
    FixedPoint,
    Monolithic,
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum PreconditionerName {
    None,
    Jacobi,
    #[default]
    Multigrid,
}

#[derive(Debug, Clone, Deserialize, PartialEq)]
#[serde(deny_unknown_fields, default)]
pub struct Solver {
    pub pcg_rel_tol: f64,
    pub fp_tol: f64,
    pub cg_rel_tol: f64,
    pub max_cg_iter: usize,
    pub mode: ModeName,
    pub preconditioner: PreconditionerName,
}

impl Default for Solver {
    fn default() -> Self {
        Solver {
            pcg_rel_tol: 1e-12,
            fp_tol: 1e-13,
            cg_rel_tol: 1e-10,
            max_cg_iter: 500,
            mode: ModeName::FixedPoint,
            preconditioner: PreconditionerName::Multigrid,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, PartialEq, Eq, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SamplingName {
    #[default]
    EndpointNodal,
    IntervalAverage,
}

#[derive(Debug, Clone, Deserialize, PartialEq, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: Params,
    pub discretization: Discretization,
    pub case: CaseKind,
    pub custom: Option<CustomCase>,
    pub ocp: Ocp,
    pub solver: Solver,
    pub sampling: SamplingName,
}

/// Data of the selected case, compiled.
pub struct CaseData {
    pub l: TimeFunction,
    pub d0: TimeFunction,
    pub exact_phi: Option<TimeFunction>,
    pub exact_d: Option<TimeFunction>,
    pub control: ControlData,
    /// Exact optimal control, when known.
    pub exact_control: Option<TimeFunction>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let key = e.path().to_string();
            let key = if key == "." { String::new() } else { key };
            bad(&key, e.inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| bad("", format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = |key: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(bad(key, format!("must be positive and finite, got {v}")))
            }
        };
        positive("params.alpha", self.params.alpha)?;
        positive("params.beta", self.params.beta)?;
        positive("params.delta", self.params.delta)?;
        positive("params.T", self.params.final_time)?;
        if self.discretization.n == 0 {
            return Err(bad("discretization.n", "must be at least 1"));
        }
        if self.discretization.m == 0 {
            return Err(bad("discretization.M", "must be at least 1"));
        }
        positive("ocp.alpha_l", self.ocp.alpha_l)?;
        positive("solver.pcg_rel_tol", self.solver.pcg_rel_tol)?;
        positive("solver.fp_tol", self.solver.fp_tol)?;
        positive("solver.cg_rel_tol", self.solver.cg_rel_tol)?;
        if self.solver.max_cg_iter == 0 {
            return Err(bad("solver.max_cg_iter", "must be at least 1"));
        }
        match (self.case, &self.custom) {
            (CaseKind::Custom, None) => {
                return Err(bad("custom", "required when case is \"custom\""))
            }
            (CaseKind::ManufacturedLinear, Some(_)) => {
                return Err(bad("custom", "only allowed when case is \"custom\""))
            }
            (CaseKind::Custom, Some(c)) => {
                for (key, src) in [
                    ("custom.l", &c.l),
                    ("custom.d0", &c.d0),
                    ("custom.exact_phi", &c.exact_phi),
                    ("custom.exact_d", &c.exact_d),
                    ("custom.phi_d", &c.phi_d),
                    ("custom.d_d", &c.d_d),
                    ("custom.l_d", &c.l_d),
                ] {
                    if let Some(s) = src {
                        compile(s).map_err(|e| bad(key, e))?;
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            alpha: self.params.alpha,
            beta: self.params.beta,
            delta: self.params.delta,
            final_time: self.params.final_time,
        }
    }

    pub fn settings(&self) -> SolverSettings {
        SolverSettings {
            mode: match self.solver.mode {
                ModeName::FixedPoint => StepMode::FixedPoint {
                    tol: self.solver.fp_tol,
                },
                ModeName::Monolithic => StepMode::Monolithic,
            },
            pcg: SolverConfig {
                rel_tol: self.solver.pcg_rel_tol,
                preconditioner: match self.solver.preconditioner {
                    PreconditionerName::None => PreconditionerKind::None,
                    PreconditionerName::Jacobi => PreconditionerKind::Jacobi,
                    PreconditionerName::Multigrid => PreconditionerKind::Multigrid,
                },
                ..SolverConfig::default()
            },
            sampling: match self.sampling {
                SamplingName::EndpointNodal => Sampling::EndpointNodal,
                SamplingName::IntervalAverage => Sampling::IntervalAverage,
            },
            time_rule: GaussRule::new(3),
        }
    }

    pub fn optimizer(&self) -> OptimizerConfig {
        OptimizerConfig {
            cg_rel_tol: self.solver.cg_rel_tol,
            max_cg_iter: self.solver.max_cg_iter,
        }
    }

    pub fn manufactured(&self) -> Option<ManufacturedCase> {
        match self.case {
            CaseKind::ManufacturedLinear => Some(ManufacturedCase {
                params: self.model_params(),
            }),
            CaseKind::Custom => None,
        }
    }

    pub fn case_data(&self) -> Result<CaseData, ConfigError> {
        if let Some(case) = self.manufactured() {
            let mut control = case.control_data();
            control.alpha_l = self.ocp.alpha_l;
            if !self.ocp.use_ld {
                control.control_shift = None;
            }
            // with the shift l_d = l the optimum is l itself, for any alpha_l
            let exact_control = self.ocp.use_ld.then(|| case.source_l());
            return Ok(CaseData {
                l: case.source_l(),
                d0: TimeFunction::zero(),
                exact_phi: Some(case.exact_phi()),
                exact_d: Some(case.exact_d()),
                control,
                exact_control,
            });
        }
        let c = self.custom.clone().unwrap_or_default();
        let get = |key: &str, src: &Option<String>| -> Result<Option<TimeFunction>, ConfigError> {
            src.as_deref()
                .map(|s| compile(s).map_err(|e| bad(key, e)))
                .transpose()
        };
        let as_data =
            |f: Option<TimeFunction>| f.map_or(SpaceTimeData::Zero, SpaceTimeData::Function);
        let l = get("custom.l", &c.l)?.unwrap_or_else(TimeFunction::zero);
        let d0 = get("custom.d0", &c.d0)?.unwrap_or_else(TimeFunction::zero);
        let l_d = get("custom.l_d", &c.l_d)?;
        Ok(CaseData {
            exact_phi: get("custom.exact_phi", &c.exact_phi)?,
            exact_d: get("custom.exact_d", &c.exact_d)?,
            control: ControlData {
                alpha_l: self.ocp.alpha_l,
                desired_phi: as_data(get("custom.phi_d", &c.phi_d)?),
                desired_d: as_data(get("custom.d_d", &c.d_d)?),
                control_shift: if self.ocp.use_ld {
                    l_d.map(SpaceTimeData::Function)
                } else {
                    None
                },
                d0: d0.clone(),
            },
            l,
            d0,
            exact_control: None,
        })
    }

    pub fn build_solver(&self, n: usize, m: usize) -> dampde::Result<Arc<SpaceTimeSolver>> {
        let ctx = Arc::new(FeContext::new(n)?);
        let grid = TimeGrid::uniform(self.params.final_time, m)?;
        Ok(Arc::new(SpaceTimeSolver::new(
            ctx,
            self.model_params(),
            grid,
            self.settings(),
        )?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.model_params(), ModelParams::default());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_json(r#"{"params": {"alpha": 1, "gamma": 2}}"#).unwrap_err();
        assert!(err.to_string().contains("gamma"), "{err}");
        let err = RunConfig::from_json(r#"{"solver": {"mode": "implicit"}}"#).unwrap_err();
        assert!(err.to_string().contains("solver.mode"), "{err}");
    }

    #[test]
    fn invalid_values_are_named() {
        let err = RunConfig::from_json(r#"{"params": {"delta": -1}}"#).unwrap_err();
        assert_eq!(err.key, "params.delta");
        let err = RunConfig::from_json(r#"{"case": "custom"}"#).unwrap_err();
        assert_eq!(err.key, "custom");
        let err =
            RunConfig::from_json(r#"{"case": "custom", "custom": {"l": "sin(x"}}"#).unwrap_err();
        assert_eq!(err.key, "custom.l");
        let err = RunConfig::from_json(r#"{"discretization": {"n": "eight"}}"#).unwrap_err();
        assert_eq!(err.key, "discretization.n");
    }

    #[test]
    fn custom_case_compiles() {
        let cfg = RunConfig::from_json(
            r#"{"case": "custom", "custom": {"l": "t*x", "exact_phi": "0"}, "discretization": {"n": 4, "M": 2}}"#,
        )
        .unwrap();
        let data = cfg.case_data().unwrap();
        assert_eq!(data.l.eval(2.0, 3.0, 0.0), 6.0);
        assert!(data.d0.is_zero());
        assert!(data.exact_phi.is_some() && data.exact_d.is_none());
    }
}
