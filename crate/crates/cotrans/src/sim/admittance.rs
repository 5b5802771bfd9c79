//! Admittance baseline: `M V̇ + D V = F_ext` mapping the human wrench to a
//! twist through virtual inertia and damping.

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::quat::{self, QuatError, RotVec, UnitQuaternion};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdmittanceParams {
    /// Virtual inertia diagonal `[m I₃, I I₃]`.
    pub m: Vector6<f64>,
    /// Virtual damping diagonal.
    pub d: Vector6<f64>,
}

impl Default for AdmittanceParams {
    /// Hand-tuned experimental values: `M = diag(1.3 I₃, 0.08 I₃)`,
    /// `D = diag(25 I₃, 0.6 I₃)`.
    fn default() -> Self {
        AdmittanceParams {
            m: Vector6::new(1.3, 1.3, 1.3, 0.08, 0.08, 0.08),
            d: Vector6::new(25.0, 25.0, 25.0, 0.6, 0.6, 0.6),
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct AdmittanceState {
    pub p: Vector3<f64>,
    pub q: UnitQuaternion,
    pub pdot: Vector3<f64>,
    pub omega: Vector3<f64>,
}

impl AdmittanceState {
    pub fn at_rest(p0: Vector3<f64>, q0: UnitQuaternion) -> Self {
        AdmittanceState { p: p0, q: q0, pdot: Vector3::zeros(), omega: Vector3::zeros() }
    }
}

/// Semi-implicit step: `V̇ = M⁻¹(F_ext − D V)`, twist first, then pose with a
/// quaternion exponential for the rotation.
pub fn admittance_step(
    params: &AdmittanceParams,
    st: &mut AdmittanceState,
    f_ext: Vector3<f64>,
    tau_ext: Vector3<f64>,
    dt: f64,
) -> Result<(), QuatError> {
    assert!(dt > 0.0);
    for i in 0..3 {
        let acc = (f_ext[i] - params.d[i] * st.pdot[i]) / params.m[i];
        st.pdot[i] += acc * dt;
        let wacc = (tau_ext[i] - params.d[i + 3] * st.omega[i]) / params.m[i + 3];
        st.omega[i] += wacc * dt;
    }
    st.p += st.pdot * dt;
    st.q = quat::exp(RotVec(st.omega * dt))? * st.q;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rest_stays_at_rest() {
        let params = AdmittanceParams::default();
        let mut st = AdmittanceState::at_rest(Vector3::new(0.1, 0.2, 0.3), UnitQuaternion::identity());
        for _ in 0..100 {
            admittance_step(&params, &mut st, Vector3::zeros(), Vector3::zeros(), 0.002).unwrap();
        }
        assert_eq!(st.p, Vector3::new(0.1, 0.2, 0.3));
        assert_eq!(st.pdot, Vector3::zeros());
    }

    #[test]
    fn constant_force_reaches_terminal_velocity() {
        // D_x = 25 N·s/m → 0.04 m/s per newton
        let params = AdmittanceParams::default();
        let mut st = AdmittanceState::at_rest(Vector3::zeros(), UnitQuaternion::identity());
        let f = Vector3::new(1.0, 0.0, 0.0);
        for _ in 0..3000 {
            admittance_step(&params, &mut st, f, Vector3::zeros(), 0.002).unwrap();
        }
        assert!((st.pdot.x - 0.04).abs() < 1e-4, "terminal velocity {}", st.pdot.x);
    }
}
