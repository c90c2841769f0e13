//! JSON experiment description with per-field validation and a stable hash.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::econ::{IdsInstance, ProtectionCurve, Utility};
use crate::learning::LearnerConfig;
use crate::model::{EnvConfig, PevState};
use crate::voi::{VehicleParams, DEFAULT_TOPOLOGY_SEED};

fn config_err(field: impl Into<String>, reason: impl Into<String>) -> HarnessError {
    HarnessError::Config {
        field: field.into(),
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearnerSettings {
    #[serde(flatten)]
    pub config: LearnerConfig<f64>,
    pub iterations: u64,
}

impl Default for LearnerSettings {
    fn default() -> Self {
        Self {
            config: LearnerConfig::default(),
            iterations: 100_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Periods per replication.
    pub horizon: u64,
    pub replications: u64,
}

impl Default for EvalSettings {
    fn default() -> Self {
        Self {
            horizon: 100_000,
            replications: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    ConsumptionRate,
    UnavailProb,
    Premium,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::ConsumptionRate => "consumption_rate",
            SweepAxis::UnavailProb => "unavail_prob",
            SweepAxis::Premium => "premium",
        }
    }

    /// The environment with this axis set to `value` (every period for `unavail_prob`).
    pub fn apply(self, env: &EnvConfig<f64>, value: f64) -> EnvConfig<f64> {
        let mut env = env.clone();
        match self {
            SweepAxis::ConsumptionRate => env.cost.consumption_rate = value,
            SweepAxis::UnavailProb => env.risk.unavail_prob.iter_mut().for_each(|p| *p = value),
            SweepAxis::Premium => env.cost.premium = value,
        }
        env
    }

    /// The sweep grid used when none is given.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepAxis::ConsumptionRate | SweepAxis::UnavailProb => {
                (1..=9).map(|k| k as f64 / 10.0).collect()
            }
            SweepAxis::Premium => (1..=9).map(|k| k as f64).collect(),
        }
    }
}

impl std::str::FromStr for SweepAxis {
    type Err = HarnessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "consumption_rate" => Ok(SweepAxis::ConsumptionRate),
            "unavail_prob" => Ok(SweepAxis::UnavailProb),
            "premium" => Ok(SweepAxis::Premium),
            other => Err(config_err(
                "sweep.axis",
                format!("unknown axis {other:?}; expected consumption_rate, unavail_prob or premium"),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSettings {
    pub axis: SweepAxis,
    /// Empty means the axis default grid.
    #[serde(default)]
    pub values: Vec<f64>,
    /// Independent training runs per value; their evaluations are pooled.
    pub training_runs: u64,
}

impl Default for SweepSettings {
    fn default() -> Self {
        Self {
            axis: SweepAxis::ConsumptionRate,
            values: Vec::new(),
            training_runs: 3,
        }
    }
}

impl SweepSettings {
    pub fn resolved_values(&self) -> Vec<f64> {
        if self.values.is_empty() {
            self.axis.default_values()
        } else {
            self.values.clone()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VoiSettings {
    pub trials: u64,
    pub station_counts: Vec<usize>,
    /// Side of the square area, km.
    pub area: f64,
    /// CSV of `x_km,y_km,price_mu_per_kwh`; absent means a seeded random layout.
    #[serde(default)]
    pub topology: Option<PathBuf>,
    pub topology_seed: u64,
    pub vehicle: VehicleParams,
}

impl Default for VoiSettings {
    fn default() -> Self {
        Self {
            trials: 50_000,
            station_counts: vec![5, 10, 15, 20],
            area: 10.0,
            topology: None,
            topology_seed: DEFAULT_TOPOLOGY_SEED,
            vehicle: VehicleParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PremiumQuery {
    pub utility: Utility,
    pub w0: f64,
    pub l: f64,
    pub p: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtectionQuery {
    pub utility: Utility,
    pub w0: f64,
    pub l: f64,
    pub curve: ProtectionCurve,
    #[serde(default)]
    pub insurance_price: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EconSettings {
    pub premiums: Vec<PremiumQuery>,
    pub protection: Vec<ProtectionQuery>,
    pub ids: Vec<IdsInstance>,
}

impl Default for EconSettings {
    fn default() -> Self {
        let ids = |c: f64| IdsInstance {
            p: 0.2,
            q: 0.5,
            l: 10.0,
            c,
            w0: 20.0,
            utility: Utility::Exponential { a: 0.1 },
        };
        Self {
            premiums: vec![
                PremiumQuery {
                    utility: Utility::Linear,
                    w0: 20.0,
                    l: 10.0,
                    p: 0.1,
                },
                PremiumQuery {
                    utility: Utility::Log,
                    w0: 10.0,
                    l: 5.0,
                    p: 0.5,
                },
                PremiumQuery {
                    utility: Utility::Exponential { a: 0.2 },
                    w0: 10.0,
                    l: 5.0,
                    p: 0.5,
                },
            ],
            protection: vec![ProtectionQuery {
                utility: Utility::Linear,
                w0: 10.0,
                l: 8.0,
                curve: ProtectionCurve {
                    breakpoints: vec![(0.0, 0.5), (2.0, 0.05)],
                },
                insurance_price: Some(2.5),
            }],
            ids: vec![ids(0.5), ids(2.0), ids(4.0)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifySettings {
    /// Random parameter tables to check.
    pub draws: u64,
    /// Central-difference half step.
    pub step: f64,
    /// Largest accepted `‖exact − fd‖∞ / ‖fd‖∞`.
    pub tolerance: f64,
    /// Half-width of the uniform draw for each θ entry.
    pub theta_scale: f64,
}

impl Default for VerifySettings {
    fn default() -> Self {
        Self {
            draws: 20,
            step: 1e-6,
            tolerance: 1e-4,
            theta_scale: 2.0,
        }
    }
}

/// Everything one run of the tool needs. Missing sections take their defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub env: EnvConfig<f64>,
    pub learner: LearnerSettings,
    pub eval: EvalSettings,
    pub sweep: SweepSettings,
    pub voi: VoiSettings,
    pub econ: EconSettings,
    pub verify: VerifySettings,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            env: EnvConfig::default_instance(),
            learner: LearnerSettings::default(),
            eval: EvalSettings::default(),
            sweep: SweepSettings::default(),
            voi: VoiSettings::default(),
            econ: EconSettings::default(),
            verify: VerifySettings::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| config_err("<document>", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// First 16 hex digits of SHA-256 over the compact JSON form.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&bytes)[..8])
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env.validate().map_err(|e| match e {
            crate::model::ModelError::Config { field, reason } => config_err(format!("env.{field}"), reason),
            other => config_err("env", other.to_string()),
        })?;
        let positive = |field: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(field, format!("must be positive, got {v}")))
            }
        };
        let l = &self.learner.config;
        positive("learner.kappa", l.kappa)?;
        positive("learner.schedule.scale", l.schedule.scale)?;
        positive("learner.schedule.offset", l.schedule.offset)?;
        if let Some(s) = l.recurrent_state {
            if !self.env.contains(&s) {
                return Err(config_err(
                    "learner.recurrent_state",
                    format!("{s} is not a state of this environment"),
                ));
            }
        }
        if self.eval.horizon < crate::baselines::MIN_HORIZON {
            return Err(config_err(
                "eval.horizon",
                format!("must be at least {}", crate::baselines::MIN_HORIZON),
            ));
        }
        if self.eval.replications == 0 {
            return Err(config_err("eval.replications", "must be at least 1"));
        }
        if self.sweep.training_runs == 0 {
            return Err(config_err("sweep.training_runs", "must be at least 1"));
        }
        for (i, &v) in self.sweep.values.iter().enumerate() {
            let field = format!("sweep.values[{i}]");
            let ok = match self.sweep.axis {
                SweepAxis::ConsumptionRate | SweepAxis::UnavailProb => (0.0..=1.0).contains(&v),
                SweepAxis::Premium => v >= 0.0 && v.is_finite(),
            };
            if !ok {
                return Err(config_err(field, format!("{v} is out of range for {}", self.sweep.axis.as_str())));
            }
        }
        if self.voi.trials == 0 {
            return Err(config_err("voi.trials", "must be at least 1"));
        }
        if self.voi.station_counts.is_empty() || self.voi.station_counts.contains(&0) {
            return Err(config_err("voi.station_counts", "must be a non-empty list of positive counts"));
        }
        positive("voi.area", self.voi.area)?;
        self.voi
            .vehicle
            .validate()
            .map_err(|e| config_err("voi.vehicle", e.to_string()))?;
        if self.verify.draws == 0 {
            return Err(config_err("verify.draws", "must be at least 1"));
        }
        positive("verify.step", self.verify.step)?;
        positive("verify.tolerance", self.verify.tolerance)?;
        positive("verify.theta_scale", self.verify.theta_scale)?;
        Ok(())
    }

    /// The regeneration state the learner will actually use.
    pub fn learner_anchor(&self) -> PevState {
        self.learner
            .config
            .recurrent_state
            .unwrap_or_else(|| self.env.recurrent_state())
    }
}
