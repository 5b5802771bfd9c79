//! Experiment configuration: a single TOML file holding every tunable with
//! the experimental defaults, the model paths, and the scenario list.
//!
//! Missing fields fall back to the documented defaults; the effective config
//! is echoed into the output directory by the simulate command.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dmp::{DmpModel, TrainedModels};
use crate::observer::{ObserverConfig, ObserverError};
use crate::reference::InertiaParams;
use crate::sim::{AdmittanceParams, EpisodeSetup, HumanParams, Scenario};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error("config invalid: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelPaths {
    pub position: String,
    pub orientation: String,
}

impl Default for ModelPaths {
    fn default() -> Self {
        ModelPaths { position: "position.json".into(), orientation: "orientation.json".into() }
    }
}

/// Observer parameters as flat diagonals (the experimental matrices are all
/// diagonal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverToml {
    pub r_diag: [f64; 3],
    pub qn_diag: [f64; 4],
    pub p0_diag: [f64; 4],
    pub a_p: f64,
    pub rho2: f64,
    pub theta_lower: [f64; 4],
    pub theta_upper: [f64; 4],
}

impl ObserverToml {
    fn from_observer(cfg: &ObserverConfig) -> Self {
        ObserverToml {
            r_diag: [cfg.r[(0, 0)], cfg.r[(1, 1)], cfg.r[(2, 2)]],
            qn_diag: [cfg.qn[(0, 0)], cfg.qn[(1, 1)], cfg.qn[(2, 2)], cfg.qn[(3, 3)]],
            p0_diag: [cfg.p0[(0, 0)], cfg.p0[(1, 1)], cfg.p0[(2, 2)], cfg.p0[(3, 3)]],
            a_p: cfg.a_p,
            rho2: cfg.rho2,
            theta_lower: cfg.theta_lower.into(),
            theta_upper: cfg.theta_upper.into(),
        }
    }

    pub fn to_observer(&self) -> Result<ObserverConfig, ObserverError> {
        let cfg = ObserverConfig {
            r: Matrix3::from_diagonal(&Vector3::from(self.r_diag)),
            qn: Matrix4::from_diagonal(&Vector4::from(self.qn_diag)),
            p0: Matrix4::from_diagonal(&Vector4::from(self.p0_diag)),
            a_p: self.a_p,
            rho2: self.rho2,
            theta_lower: Vector4::from(self.theta_lower),
            theta_upper: Vector4::from(self.theta_upper),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

impl Default for ObserverToml {
    fn default() -> Self {
        Self::from_observer(&ObserverConfig::default_position())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InertiaToml {
    pub m_p: [f64; 3],
    pub m_o: [f64; 3],
}

impl Default for InertiaToml {
    fn default() -> Self {
        InertiaToml { m_p: [2.0; 3], m_o: [0.1; 3] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub models: ModelPaths,
    pub dt: f64,
    pub seed: u64,
    pub t_max: f64,
    pub wrench_threshold: f64,
    /// Initial time-scaling estimate.
    pub tau0: f64,
    pub inertia: InertiaToml,
    pub human: HumanParams,
    pub admittance: AdmittanceParams,
    pub observer_position: ObserverToml,
    pub observer_orientation: ObserverToml,
    pub scenarios: Vec<Scenario>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            models: ModelPaths::default(),
            dt: 0.002,
            seed: 0,
            t_max: 30.0,
            wrench_threshold: 1.0,
            tau0: 6.0,
            inertia: InertiaToml::default(),
            human: HumanParams::default(),
            admittance: AdmittanceParams::default(),
            observer_position: ObserverToml::from_observer(&ObserverConfig::default_position()),
            observer_orientation: ObserverToml::from_observer(
                &ObserverConfig::default_orientation(),
            ),
            scenarios: Vec::new(),
        }
    }
}

impl ExperimentConfig {
    /// Config with deterministic randomized scenarios and the time-scaling
    /// box tightened to the suite's physically meaningful range (transfers
    /// last at most 10 s).
    pub fn with_random_scenarios(seed: u64, count: usize) -> Self {
        let mut cfg = ExperimentConfig { seed, ..Default::default() };
        cfg.observer_position.theta_upper[3] = 12.0;
        cfg.observer_orientation.theta_upper[3] = 12.0;
        cfg.scenarios = crate::sim::random_scenarios(seed, count);
        cfg
    }

    pub fn from_toml(s: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialization")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.dt <= 0.0 || self.t_max <= 0.0 || self.tau0 <= 0.0 {
            return Err(ConfigError::Invalid("dt, t_max and tau0 must be positive".into()));
        }
        if self.inertia.m_p.iter().chain(&self.inertia.m_o).any(|&m| m <= 0.0) {
            return Err(ConfigError::Invalid("inertia diagonals must be positive".into()));
        }
        let obs_p = self.observer_position.to_observer()?;
        self.observer_orientation.to_observer()?;
        for sc in &self.scenarios {
            if sc.duration <= 0.0 {
                return Err(ConfigError::Invalid(format!(
                    "scenario {} has non-positive duration",
                    sc.id
                )));
            }
            for j in 0..3 {
                if sc.target_p[j] < obs_p.theta_lower[j] || sc.target_p[j] > obs_p.theta_upper[j] {
                    return Err(ConfigError::Invalid(format!(
                        "scenario {} target outside the observer workspace box",
                        sc.id
                    )));
                }
            }
        }
        Ok(())
    }

    /// Assemble the episode setup from this config and loaded models.
    pub fn episode_setup(&self, models: TrainedModels) -> Result<EpisodeSetup, ConfigError> {
        Ok(EpisodeSetup {
            models,
            inertia: InertiaParams::new(
                Vector3::from(self.inertia.m_p),
                Vector3::from(self.inertia.m_o),
            ),
            human: self.human,
            admittance: self.admittance,
            obs_position: self.observer_position.to_observer()?,
            obs_orientation: self.observer_orientation.to_observer()?,
            tau0: self.tau0,
            theta_p0: None,
            theta_o0: None,
            dt: self.dt,
            t_max: self.t_max,
            wrench_threshold: self.wrench_threshold,
        })
    }

    pub fn load_models(&self, base_dir: &std::path::Path) -> Result<TrainedModels, ConfigError> {
        let read = |rel: &str| -> Result<DmpModel, ConfigError> {
            let path = base_dir.join(rel);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
            DmpModel::from_json(&text).map_err(|e| ConfigError::Invalid(e.to_string()))
        };
        Ok(TrainedModels {
            position: read(&self.models.position)?,
            orientation: read(&self.models.orientation)?,
        })
    }
}
