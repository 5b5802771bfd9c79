//! Collaborative object-transfer simulation library.
//!
//! Encodes a demonstrated end-effector pose trajectory with dynamic movement
//! primitives, replays it through a force-shaped reference model, and runs a
//! constrained fading-memory extended Kalman filter that estimates the
//! (unknown) target pose and motion time scalings online from the interaction
//! wrench. A closed-loop simulator with a spring-damper human model and an
//! admittance baseline measures the human effort each scheme requires.

pub mod config;
pub mod dmp;
pub mod minjerk;
pub mod observer;
pub mod quat;
pub mod reference;
pub mod sim;
pub mod trajio;
pub mod verify;

pub use dmp::{Demonstration, DmpKind, DmpModel, TrainedModels};
pub use observer::{ObserverConfig, OrientationObserver, PositionObserver};
pub use quat::{RotVec, UnitQuaternion};
pub use reference::{InertiaParams, ReferenceModel, ReferenceState};
