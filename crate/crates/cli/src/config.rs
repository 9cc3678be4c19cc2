//! Experiment configuration files.
//!
//! A config is a TOML document with four tables:
//!
//! ```toml
//! [experiment]
//! horizon = 100
//! info_pattern = "perfect"        # or "imperfect"
//! n_runs = 2000
//! base_seed = 1
//!
//! [trigger]
//! policy = "voi"                  # voi | periodic | always | never | exact_scalar_dp
//!
//! [system]
//! A = { rows = 1, cols = 1, data = [1.1] }
//! ...
//!
//! [cost]
//! Q = { rows = 1, cols = 1, data = [1.0] }
//! ...
//! ```
//!
//! Matrices are row-major. A matrix given as an array of tables is
//! time-varying and must have one entry per step. Unknown keys are rejected.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use etlqg::model::{
    validate_system, zoh_discretize, ContinuousLinearSystem, CostSpec, Diagnostic, Sensor, Sequence, TimeVaryingLinearSystem,
};
use etlqg::policies::{GridSpec, PeriodicSpec};
use etlqg::{Matrix, Vector};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub trigger: TriggerSection,
    pub system: SystemSection,
    pub cost: CostSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoPatternName {
    Perfect,
    Imperfect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub horizon: usize,
    pub info_pattern: InfoPatternName,
    #[serde(default = "default_runs")]
    pub n_runs: usize,
    #[serde(default)]
    pub base_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

fn default_runs() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyName {
    Voi,
    Periodic,
    Always,
    Never,
    ExactScalarDp,
}

impl PolicyName {
    pub fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "voi" => Self::Voi,
            "periodic" => Self::Periodic,
            "always" => Self::Always,
            "never" => Self::Never,
            "exact_scalar_dp" => Self::ExactScalarDp,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggerSection {
    pub policy: PolicyName,
    /// Period `k_p` for `periodic`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub period: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub offset: Option<usize>,
    /// Grid size for `exact_scalar_dp`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quadrature_order: Option<usize>,
}

impl Default for TriggerSection {
    fn default() -> Self {
        Self {
            policy: PolicyName::Voi,
            period: None,
            offset: None,
            grid_points: None,
            grid_half_width: None,
            quadrature_order: None,
        }
    }
}

/// Row-major matrix with explicit dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixSpec {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl MatrixSpec {
    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    fn to_matrix(&self, field: &str) -> Result<Matrix, CliError> {
        if self.data.len() != self.rows * self.cols {
            return Err(CliError::Config(format!(
                "{field}: {}x{} matrix needs {} entries, got {}",
                self.rows,
                self.cols,
                self.rows * self.cols,
                self.data.len()
            )));
        }
        Ok(Matrix::from_row_slice(self.rows, self.cols, &self.data))
    }
}

/// A constant value or one entry per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl OneOrMany<MatrixSpec> {
    fn to_sequence(&self, field: &str) -> Result<Sequence<Matrix>, CliError> {
        match self {
            OneOrMany::One(m) => Ok(Sequence::constant(m.to_matrix(field)?)),
            OneOrMany::Many(ms) if ms.is_empty() => Err(CliError::Config(format!("{field}: empty matrix list"))),
            OneOrMany::Many(ms) => Ok(Sequence::from_vec(
                ms.iter()
                    .enumerate()
                    .map(|(k, m)| m.to_matrix(&format!("{field}[{k}]")))
                    .collect::<Result<_, _>>()?,
            )),
        }
    }
}

/// Continuous-time model discretized by zero-order hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousSpec {
    #[serde(rename = "Ac")]
    pub ac: MatrixSpec,
    #[serde(rename = "Bc")]
    pub bc: MatrixSpec,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    #[serde(rename = "A", default, skip_serializing_if = "Option::is_none")]
    pub a: Option<OneOrMany<MatrixSpec>>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<OneOrMany<MatrixSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuous: Option<ContinuousSpec>,
    #[serde(rename = "W")]
    pub w: OneOrMany<MatrixSpec>,
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c: Option<OneOrMany<MatrixSpec>>,
    #[serde(rename = "V", default, skip_serializing_if = "Option::is_none")]
    pub v: Option<OneOrMany<MatrixSpec>>,
    pub m0: Vec<f64>,
    #[serde(rename = "M0")]
    pub m0_cov: MatrixSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    #[serde(rename = "Q")]
    pub q: OneOrMany<MatrixSpec>,
    #[serde(rename = "Q_terminal")]
    pub q_terminal: MatrixSpec,
    #[serde(rename = "R")]
    pub r: OneOrMany<MatrixSpec>,
    #[serde(default = "default_ell")]
    pub ell: OneOrMany<f64>,
    pub lambda: f64,
}

fn default_ell() -> OneOrMany<f64> {
    OneOrMany::One(1.0)
}

/// Triggering rule as configured, before any tables are built.
#[derive(Debug, Clone, PartialEq)]
pub enum TriggerChoice {
    Voi,
    Periodic(PeriodicSpec),
    Always,
    Never,
    ExactScalarDp { grid: GridSpec, quadrature_order: usize },
}

/// A parsed config turned into model objects.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub sys: TimeVaryingLinearSystem,
    pub cost: CostSpec,
    pub trigger: TriggerChoice,
    pub n_runs: usize,
    pub base_seed: u64,
}

impl Experiment {
    pub fn diagnostics(&self) -> Vec<Diagnostic> {
        validate_system(&self.sys, &self.cost)
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    /// SHA-256 of the canonical serialization, in hex.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build(&self) -> Result<Experiment, CliError> {
        let cfg = CliError::Config;
        let s = &self.system;
        let horizon = self.experiment.horizon;
        let (a, b) = match (&s.a, &s.b, &s.continuous) {
            (Some(a), Some(b), None) => (a.to_sequence("system.A")?, b.to_sequence("system.B")?),
            (None, None, Some(c)) => {
                let model = ContinuousLinearSystem {
                    ac: c.ac.to_matrix("system.continuous.Ac")?,
                    bc: c.bc.to_matrix("system.continuous.Bc")?,
                    dt: c.dt,
                };
                let (a, b) = zoh_discretize(&model).map_err(|e| cfg(format!("system.continuous: {e}")))?;
                (Sequence::constant(a), Sequence::constant(b))
            }
            _ => {
                return Err(cfg(
                    "system: give either both A and B, or a continuous block, but not both".into(),
                ))
            }
        };
        let sensor = match (self.experiment.info_pattern, &s.c, &s.v) {
            (InfoPatternName::Perfect, None, None) => None,
            (InfoPatternName::Imperfect, Some(c), Some(v)) => Some(Sensor {
                c: c.to_sequence("system.C")?,
                v: v.to_sequence("system.V")?,
            }),
            (InfoPatternName::Perfect, ..) => {
                return Err(cfg("system: C and V are only allowed with info_pattern = \"imperfect\"".into()))
            }
            (InfoPatternName::Imperfect, ..) => {
                return Err(cfg("system: info_pattern = \"imperfect\" needs both C and V".into()))
            }
        };
        let sys = TimeVaryingLinearSystem {
            horizon,
            a,
            b,
            w: s.w.to_sequence("system.W")?,
            sensor,
            m0: Vector::from_vec(s.m0.clone()),
            m0_cov: s.m0_cov.to_matrix("system.M0")?,
        };
        let c = &self.cost;
        let ell = match &c.ell {
            OneOrMany::One(v) => Sequence::constant(*v),
            OneOrMany::Many(vs) if vs.is_empty() => return Err(cfg("cost.ell: empty list".into())),
            OneOrMany::Many(vs) => Sequence::from_vec(vs.clone()),
        };
        let cost = CostSpec {
            horizon,
            q: c.q.to_sequence("cost.Q")?,
            q_terminal: c.q_terminal.to_matrix("cost.Q_terminal")?,
            r: c.r.to_sequence("cost.R")?,
            ell,
            lambda: c.lambda,
        };
        Ok(Experiment {
            sys,
            cost,
            trigger: self.trigger_choice()?,
            n_runs: self.experiment.n_runs,
            base_seed: self.experiment.base_seed,
        })
    }

    fn trigger_choice(&self) -> Result<TriggerChoice, CliError> {
        let t = &self.trigger;
        let unused = |name: &str, present: bool| {
            if present {
                Err(CliError::Config(format!("trigger.{name} does not apply to policy {:?}", t.policy)))
            } else {
                Ok(())
            }
        };
        let dp_fields = t.grid_points.is_some() || t.grid_half_width.is_some() || t.quadrature_order.is_some();
        let periodic_fields = t.period.is_some() || t.offset.is_some();
        Ok(match t.policy {
            PolicyName::Periodic => {
                unused("grid_*/quadrature_order", dp_fields)?;
                let period = t.period.ok_or_else(|| CliError::Config("trigger.period is required for periodic".into()))?;
                let spec = PeriodicSpec::new(period, t.offset.unwrap_or(0)).map_err(|e| CliError::Config(format!("trigger: {e}")))?;
                TriggerChoice::Periodic(spec)
            }
            PolicyName::ExactScalarDp => {
                unused("period/offset", periodic_fields)?;
                let default = GridSpec::default();
                TriggerChoice::ExactScalarDp {
                    grid: GridSpec {
                        points: t.grid_points.unwrap_or(default.points),
                        half_width: t.grid_half_width,
                    },
                    quadrature_order: t.quadrature_order.unwrap_or(32),
                }
            }
            other => {
                unused("period/offset", periodic_fields)?;
                unused("grid_*/quadrature_order", dp_fields)?;
                match other {
                    PolicyName::Voi => TriggerChoice::Voi,
                    PolicyName::Always => TriggerChoice::Always,
                    _ => TriggerChoice::Never,
                }
            }
        })
    }

    /// Switch the trigger policy. Parameters are kept when the policy is
    /// unchanged and no new schedule is given; otherwise they are reset.
    pub fn set_policy(&mut self, policy: PolicyName, schedule: Option<(usize, usize)>) {
        if policy == self.trigger.policy && schedule.is_none() {
            return;
        }
        let (period, offset) = match (policy, schedule) {
            (PolicyName::Periodic, Some((p, o))) => (Some(p), Some(o)),
            (PolicyName::Periodic, None) => (Some(1), None),
            _ => (None, None),
        };
        self.trigger = TriggerSection {
            policy,
            period,
            offset,
            ..TriggerSection::default()
        };
    }
}
