//! Simulated human: a hand-impedance spring-damper pulling the object along a
//! hidden minimum-jerk reference toward the intended target pose.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::minjerk;
use crate::quat::{self, RotVec, UnitQuaternion};

/// Hand impedance gains and wrench saturation.
///
/// Defaults produce interaction forces in the few-newton band under the
/// admittance baseline, matching the scale observed with real users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanParams {
    /// Translational stiffness diagonal (N/m).
    pub k_pos: f64,
    /// Rotational stiffness diagonal (N·m/rad).
    pub k_rot: f64,
    /// Translational damping diagonal (N·s/m).
    pub d_pos: f64,
    /// Rotational damping diagonal (N·m·s/rad).
    pub d_rot: f64,
    /// Force saturation (N).
    pub force_cap: f64,
    /// Torque saturation (N·m).
    pub torque_cap: f64,
}

impl Default for HumanParams {
    fn default() -> Self {
        HumanParams {
            k_pos: 500.0,
            k_rot: 20.0,
            d_pos: 40.0,
            d_rot: 2.0,
            force_cap: 30.0,
            torque_cap: 3.0,
        }
    }
}

/// A human bound to one episode: start pose, intended target, and duration.
#[derive(Debug, Clone)]
pub struct HumanModel {
    pub params: HumanParams,
    pub start_p: Vector3<f64>,
    pub start_q: UnitQuaternion,
    pub target_p: Vector3<f64>,
    pub target_q: UnitQuaternion,
    pub duration: f64,
    /// Rotation vector of the fixed geodesic from start to target.
    rot_axis: Vector3<f64>,
}


impl HumanModel {
    pub fn new(
        params: HumanParams,
        start_p: Vector3<f64>,
        start_q: UnitQuaternion,
        target_p: Vector3<f64>,
        target_q: UnitQuaternion,
        duration: f64,
    ) -> Self {
        assert!(duration > 0.0, "intended duration must be positive");
        let rot_axis = quat::log(&target_q.relative(&start_q))
            .expect("canonical relative rotation is in the log domain")
            .0;
        HumanModel { params, start_p, start_q, target_p, target_q, duration, rot_axis }
    }

    /// Intended pose and twist at time `t`: minimum-jerk translation plus a
    /// minimum-jerk angle along the fixed geodesic; holds at the target once
    /// the intended duration has passed.
    pub fn reference(&self, t: f64) -> (Vector3<f64>, Vector3<f64>, UnitQuaternion, Vector3<f64>) {
        let (s, sdot, _) = minjerk::profile(t, self.duration);
        let p_ref = self.start_p + s * (self.target_p - self.start_p);
        let v_ref = sdot * (self.target_p - self.start_p);
        let q_ref = quat::exp(RotVec(s * self.rot_axis)).expect("geodesic inside exp domain")
            * self.start_q;
        let w_ref = sdot * self.rot_axis;
        (p_ref, v_ref, q_ref, w_ref)
    }

    /// Lead-in push before the cooperative motion starts: force and torque
    /// ramp along the intent direction until the interaction threshold is
    /// crossed and the minimum-jerk clocks begin.
    pub fn lead_in_wrench(&self, t: f64) -> (Vector3<f64>, Vector3<f64>) {
        let dir_f = {
            let d = self.target_p - self.start_p;
            if d.norm() > 1e-9 { d.normalize() } else { Vector3::zeros() }
        };
        let dir_t = if self.rot_axis.norm() > 1e-9 {
            self.rot_axis.normalize()
        } else {
            Vector3::zeros()
        };
        // 6 N/s and 0.3 N·m/s: a 1 N threshold crosses in ~0.17 s
        let f = (6.0 * t).min(self.params.force_cap) * dir_f;
        let tq = (0.3 * t).min(self.params.torque_cap) * dir_t;
        (f, tq)
    }

    /// Spring-damper wrench on the object, saturated by norm:
    /// `F = K (x_ref ⊖ x) + D (ẋ_ref − ẋ)` with the quaternion-log rotation
    /// error. `t` counts from the start of the cooperative motion.
    pub fn wrench(
        &self,
        t: f64,
        p: Vector3<f64>,
        pdot: Vector3<f64>,
        q: &UnitQuaternion,
        omega: Vector3<f64>,
    ) -> (Vector3<f64>, Vector3<f64>) {
        let (p_ref, v_ref, q_ref, w_ref) = self.reference(t);
        let mut f = self.params.k_pos * (p_ref - p) + self.params.d_pos * (v_ref - pdot);
        let e_rot = quat::log(&q_ref.relative(q))
            .expect("canonical relative rotation is in the log domain")
            .0;
        let mut tq = self.params.k_rot * e_rot + self.params.d_rot * (w_ref - omega);
        let fn_ = f.norm();
        if fn_ > self.params.force_cap {
            f *= self.params.force_cap / fn_;
        }
        let tn = tq.norm();
        if tn > self.params.torque_cap {
            tq *= self.params.torque_cap / tn;
        }
        (f, tq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn model() -> HumanModel {
        HumanModel::new(
            HumanParams::default(),
            Vector3::zeros(),
            UnitQuaternion::identity(),
            Vector3::new(0.4, 0.2, 0.3),
            UnitQuaternion::from_axis_angle(Vector3::z(), PI / 3.0),
            5.0,
        )
    }

    #[test]
    fn tracking_robot_sees_zero_wrench() {
        let m = model();
        for k in 0..=50 {
            let t = 0.1 * k as f64;
            let (p, v, q, w) = m.reference(t);
            let (f, tq) = m.wrench(t, p, v, &q, w);
            assert!(f.norm() < 1e-9 && tq.norm() < 1e-9, "t = {t}");
        }
    }

    #[test]
    fn frozen_robot_saturates_the_wrench() {
        let m = model();
        let mut grew = false;
        let mut prev = 0.0;
        for k in 0..=100 {
            let t = 0.05 * k as f64;
            let (f, tq) = m.wrench(
                t,
                Vector3::zeros(),
                Vector3::zeros(),
                &UnitQuaternion::identity(),
                Vector3::zeros(),
            );
            assert!(f.norm() <= m.params.force_cap + 1e-12);
            assert!(tq.norm() <= m.params.torque_cap + 1e-12);
            if f.norm() > prev {
                grew = true;
            }
            prev = f.norm();
        }
        assert!(grew);
        // deep into the hold phase the error is the full displacement: capped
        let (f, _) = m.wrench(
            20.0,
            Vector3::zeros(),
            Vector3::zeros(),
            &UnitQuaternion::identity(),
            Vector3::zeros(),
        );
        assert!((f.norm() - m.params.force_cap).abs() < 1e-9);
    }

    #[test]
    fn reference_holds_after_duration() {
        let m = model();
        let (p, v, q, w) = m.reference(7.0);
        assert_eq!(p, m.target_p);
        assert_eq!(v, Vector3::zeros());
        assert!(q.angle_to(&m.target_q) < 1e-12);
        assert_eq!(w, Vector3::zeros());
    }
}
