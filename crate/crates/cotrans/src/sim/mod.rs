//! Closed-loop episode simulation: a spring-damper human tracking a hidden
//! minimum-jerk intent, the DMP+EKF scheme or an admittance baseline on the
//! robot side, effort metrics, and the wrench-profile boundedness suite.

pub mod admittance;
pub mod boundedness;
pub mod episode;
pub mod human;

pub use admittance::{admittance_step, AdmittanceParams, AdmittanceState};
pub use boundedness::{boundedness_suite, default_profiles, BoundednessReport, WrenchProfile};
pub use episode::{
    power_metric, random_scenarios, run_episode, write_log_csv, EpisodeError, EpisodeResult,
    EpisodeSetup, EpisodeSummary, LogRow, Mode, Scenario,
};
pub use human::{HumanModel, HumanParams};
