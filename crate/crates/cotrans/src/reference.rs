//! Force-shaped DMP reference model.
//!
//! The reference the robot tracks is the DMP prediction evaluated at the
//! current target/time-scaling estimates, shaped by the human wrench through
//! a virtual inertia:
//!
//! `M_p p̈ = M_p p̈̂ + f_ext`,  `M_o ω̇ = M_o ω̇̂ + τ_ext`,
//!
//! where `p̈̂` is the position DMP acceleration and `ω̇̂` the rotational
//! acceleration corresponding to the orientation DMP acceleration `q̈̂′` in
//! the anchored log coordinate. Estimates are sampled once per step
//! (zero-order hold); the DMP clock is started externally by the wrench
//! threshold and never reset.

use nalgebra::{Vector3, Vector4};
use thiserror::Error;

use crate::dmp::{DmpKind, DmpModel};
use crate::quat::{self, QuatError, RotVec, UnitQuaternion};

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("cached q' drifted {drift:e} from log(Q * conj(Q0)), beyond 1e-6")]
    Consistency { drift: f64 },
    #[error(transparent)]
    Quat(#[from] QuatError),
    #[error("model kinds mismatched: expected position + orientation")]
    ModelKinds,
}

/// Diagonal virtual inertias weighting the wrench's effect.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InertiaParams {
    /// Translational inertia diagonal (kg).
    pub m_p: Vector3<f64>,
    /// Rotational inertia diagonal (kg·m²).
    pub m_o: Vector3<f64>,
}

impl InertiaParams {
    pub fn new(m_p: Vector3<f64>, m_o: Vector3<f64>) -> Self {
        assert!(
            m_p.iter().all(|&m| m > 0.0) && m_o.iter().all(|&m| m > 0.0),
            "inertia diagonals must be positive"
        );
        InertiaParams { m_p, m_o }
    }

    /// Experimental defaults: `M_p = 2 I₃`, `M_o = 0.1 I₃`.
    pub fn standard() -> Self {
        Self::new(Vector3::repeat(2.0), Vector3::repeat(0.1))
    }

    pub fn m_p_inv(&self) -> Vector3<f64> {
        self.m_p.map(|m| 1.0 / m)
    }

    pub fn m_o_inv(&self) -> Vector3<f64> {
        self.m_o.map(|m| 1.0 / m)
    }
}

/// Pose/twist state of the reference model plus the anchored-log caches.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceState {
    pub p: Vector3<f64>,
    pub pdot: Vector3<f64>,
    pub q: UnitQuaternion,
    pub omega: Vector3<f64>,
    /// Cache of `log(Q * conj(Q₀))`, refreshed every step.
    pub q_prime: Vector3<f64>,
    /// Cache of `q̇′`, consistent with `omega` through `J_Q`.
    pub q_prime_dot: Vector3<f64>,
    /// DMP clock; frozen at 0 until the wrench threshold crossing.
    pub t_clock: f64,
}

impl ReferenceState {
    /// At rest at the episode's initial pose (the anchor `Q₀`).
    pub fn at_rest(p0: Vector3<f64>, q0: UnitQuaternion) -> Self {
        ReferenceState {
            p: p0,
            pdot: Vector3::zeros(),
            q: q0,
            omega: Vector3::zeros(),
            q_prime: Vector3::zeros(),
            q_prime_dot: Vector3::zeros(),
            t_clock: 0.0,
        }
    }
}

/// Accelerations realized by one reference step, exposed for the observer's
/// measurement identity.
#[derive(Debug, Clone, Copy)]
pub struct RefStepInfo {
    /// DMP prediction `p̈̂` (the position measurement estimate `ẑ_p`).
    pub pddot_dmp: Vector3<f64>,
    /// Realized `p̈ = p̈̂ + M_p⁻¹ f_ext` (the measurement `z_p`).
    pub pddot: Vector3<f64>,
    /// DMP prediction `q̈̂′` in the log coordinate.
    pub qddot_dmp: Vector3<f64>,
    /// `ω̇̂` corresponding to `q̈̂′` (the orientation estimate `ẑ_o`).
    pub omegadot_dmp: Vector3<f64>,
    /// Realized `ω̇ = ω̇̂ + M_o⁻¹ τ_ext` (the measurement `z_o`).
    pub omegadot: Vector3<f64>,
}

/// The reference model bound to a trained DMP pair and an episode anchor.
#[derive(Debug, Clone)]
pub struct ReferenceModel {
    pub position: DmpModel,
    pub orientation: DmpModel,
    pub inertia: InertiaParams,
    /// Episode initial orientation; defines the `q′` coordinate.
    pub q0: UnitQuaternion,
}

impl ReferenceModel {
    /// Bind models to an episode start `(p0, q0)`; the position model is
    /// re-anchored so its spatial scaling uses the episode displacement.
    pub fn new(
        position: &DmpModel,
        orientation: &DmpModel,
        inertia: InertiaParams,
        p0: Vector3<f64>,
        q0: UnitQuaternion,
    ) -> Result<Self, ReferenceError> {
        if position.kind != DmpKind::Position || orientation.kind != DmpKind::Orientation {
            return Err(ReferenceError::ModelKinds);
        }
        Ok(ReferenceModel {
            position: position.with_anchor(p0),
            orientation: orientation.clone(),
            inertia,
            q0,
        })
    }

    /// `p̈̂` at the current state and estimates (`ẑ_p` of the observer).
    pub fn pddot_dmp(&self, st: &ReferenceState, theta_p: &Vector4<f64>) -> Vector3<f64> {
        self.position.accel(
            st.p,
            st.pdot,
            st.t_clock,
            theta_p.fixed_rows::<3>(0).into_owned(),
            theta_p[3],
        )
    }

    /// `q̈̂′` at the current state and estimates.
    pub fn qddot_dmp(&self, st: &ReferenceState, theta_o: &Vector4<f64>) -> Vector3<f64> {
        self.orientation.accel(
            st.q_prime,
            st.q_prime_dot,
            st.t_clock,
            theta_o.fixed_rows::<3>(0).into_owned(),
            theta_o[3],
        )
    }

    /// `ω̇̂ = vec{2 (J̇_q' q̇' + J_q' q̈̂') * Q̄'}` (`ẑ_o` of the observer).
    pub fn omegadot_dmp(&self, st: &ReferenceState, theta_o: &Vector4<f64>) -> Vector3<f64> {
        let qp = RotVec(st.q_prime);
        quat::omega_map(qp) * self.qddot_dmp(st, theta_o)
            + quat::omega_map_bias(qp, st.q_prime_dot)
    }

    /// Advance one control step with a zero-order hold on the estimates.
    ///
    /// Integrates semi-implicitly (twist first), steps the quaternion by the
    /// exponential of `ω dt`, then refreshes the `q′` caches from the new
    /// `(Q, ω)`.
    pub fn step(
        &self,
        st: &mut ReferenceState,
        theta_p: &Vector4<f64>,
        theta_o: &Vector4<f64>,
        f_ext: Vector3<f64>,
        tau_ext: Vector3<f64>,
        dt: f64,
    ) -> Result<RefStepInfo, ReferenceError> {
        assert!(dt > 0.0, "time step must be positive");
        debug_assert!(theta_p[3] > 0.0 && theta_o[3] > 0.0, "time scalings must be positive");

        // entry guard: caches must agree with (Q, Q0)
        let fresh = quat::log(&(st.q * self.q0.conjugate()))?;
        let drift = (st.q_prime - fresh.0).norm();
        if drift > 1e-6 {
            return Err(ReferenceError::Consistency { drift });
        }

        let pddot_dmp = self.pddot_dmp(st, theta_p);
        let pddot = pddot_dmp + self.inertia.m_p_inv().component_mul(&f_ext);

        let qddot_dmp = self.qddot_dmp(st, theta_o);
        let omegadot_dmp = quat::omega_map(RotVec(st.q_prime)) * qddot_dmp
            + quat::omega_map_bias(RotVec(st.q_prime), st.q_prime_dot);
        let omegadot = omegadot_dmp + self.inertia.m_o_inv().component_mul(&tau_ext);

        st.pdot += pddot * dt;
        st.p += st.pdot * dt;
        st.omega += omegadot * dt;
        st.q = quat::exp(RotVec(st.omega * dt))? * st.q;

        let rel = st.q * self.q0.conjugate();
        st.q_prime = quat::log(&rel)?.0;
        st.q_prime_dot = quat::qdot_from_omega(&rel, st.omega)?;
        st.t_clock += dt;

        Ok(RefStepInfo { pddot_dmp, pddot, qddot_dmp, omegadot_dmp, omegadot })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dmp::{self, Demonstration, TrainedModels};
    use crate::minjerk;
    use std::f64::consts::PI;

    fn minjerk_demo(duration: f64, dt: f64) -> Demonstration {
        let p0 = Vector3::new(0.1, -0.2, 0.3);
        let pg = Vector3::new(0.5, 0.3, 0.55);
        let angle = PI / 2.0;
        let n = (duration / dt).round() as usize + 1;
        let mut t = Vec::with_capacity(n);
        let mut ps = Vec::with_capacity(n);
        let mut qs = Vec::with_capacity(n);
        for k in 0..n {
            let tk = k as f64 * dt;
            let (s, _, _) = minjerk::profile(tk, duration);
            t.push(tk);
            ps.push(p0 + s * (pg - p0));
            qs.push(
                quat::exp(RotVec(Vector3::new(0.0, 0.0, s * angle))).unwrap()
                    * UnitQuaternion::identity(),
            );
        }
        Demonstration { t, positions: ps, orientations: qs, velocities: None, accelerations: None }
    }

    fn setup() -> (TrainedModels, Vector3<f64>, UnitQuaternion) {
        let demo = minjerk_demo(4.7, 0.002);
        let models = dmp::train_lwr(&demo, 30, 40.0, 10.0).unwrap();
        (models, Vector3::new(0.1, -0.2, 0.3), UnitQuaternion::identity())
    }

    fn theta(goal: Vector3<f64>, tau: f64) -> Vector4<f64> {
        Vector4::new(goal.x, goal.y, goal.z, tau)
    }

    #[test]
    fn zero_wrench_reduces_to_pure_rollout() {
        let (models, p0, q0) = setup();
        let pg = Vector3::new(0.5, 0.3, 0.55);
        let qg = quat::exp(RotVec(Vector3::new(0.0, 0.0, PI / 2.0))).unwrap();
        let tau = 4.7;
        let dt = 0.002;
        let qp_goal = quat::log(&qg.relative(&q0)).unwrap().0;

        let rm =
            ReferenceModel::new(&models.position, &models.orientation, InertiaParams::standard(),
                p0, q0).unwrap();
        let mut st = ReferenceState::at_rest(p0, q0);
        let th_p = theta(pg, tau);
        let th_o = theta(qp_goal, tau);

        let traj = dmp::rollout(
            &models.position, &models.orientation, p0, q0, pg, qg, tau, tau, dt, tau,
        )
        .unwrap();
        let steps = traj.len() - 1;
        for k in 0..steps {
            rm.step(&mut st, &th_p, &th_o, Vector3::zeros(), Vector3::zeros(), dt).unwrap();
            // position integration path is identical
            assert!((st.p - traj[k + 1].p).norm() < 1e-12, "step {k}");
        }
        // the orientation integrators differ at O(dt); the demo rotation is
        // single-axis, where both reduce to the same scalar recursion
        let last = traj.last().unwrap();
        assert!((st.q_prime - last.q_prime).norm() < 1e-6);
        assert!(st.q.angle_to(&last.q) < 1e-6);
    }

    #[test]
    fn constant_force_steady_state_offset() {
        let (models, p0, q0) = setup();
        let rm = ReferenceModel::new(
            &models.position, &models.orientation, InertiaParams::standard(), p0, q0,
        )
        .unwrap();
        let pg = Vector3::new(0.5, 0.3, 0.55);
        let tau = 3.0;
        let th_p = theta(pg, tau);
        let th_o = theta(Vector3::new(0.0, 0.0, 0.4), tau);
        let f = Vector3::new(1.5, -0.8, 0.5);
        let mut st = ReferenceState::at_rest(p0, q0);
        let dt = 0.002;
        for _ in 0..((12.0 * tau / dt) as usize) {
            rm.step(&mut st, &th_p, &th_o, f, Vector3::zeros(), dt).unwrap();
        }
        // static equilibrium of the spring term: p − p̂_g = f τ̂²/(M α_z β_z)
        let expect = pg
            + f.component_mul(&rm.inertia.m_p_inv()) * tau * tau
                / (models.position.alpha_z * models.position.beta_z);
        assert!((st.p - expect).norm() < 1e-5, "offset error {}", (st.p - expect).norm());
        assert!(st.pdot.norm() < 1e-6);
    }

    #[test]
    fn force_pulse_impulse_response() {
        let (models, p0, q0) = setup();
        let rm = ReferenceModel::new(
            &models.position, &models.orientation, InertiaParams::standard(), p0, q0,
        )
        .unwrap();
        // at rest at the goal with converged gate: pure double integrator plus
        // a slow spring-damper (damping rate α_z/τ̂, negligible over the pulse)
        let tau = 30.0;
        let th_p = theta(p0, tau);
        let th_o = theta(Vector3::zeros(), tau);
        let mut st = ReferenceState::at_rest(p0, q0);
        st.t_clock = 10.0 * tau; // g_f ≈ 0
        let dt = 0.002;
        let mut peak_v: f64 = 0.0;
        for k in 0..500 {
            let f = if k < 50 { Vector3::new(1.0, 0.0, 0.0) } else { Vector3::zeros() };
            rm.step(&mut st, &th_p, &th_o, f, Vector3::zeros(), dt).unwrap();
            peak_v = peak_v.max(st.pdot.x);
        }
        // 1 N for 0.1 s on 2 kg: Δv ≈ 0.05 m/s (slightly eroded by the damper)
        assert!((peak_v - 0.05).abs() < 0.005, "peak velocity {peak_v}");
        // then decays back toward the goal
        for _ in 0..((0.8 * tau / dt) as usize) {
            rm.step(&mut st, &th_p, &th_o, Vector3::zeros(), Vector3::zeros(), dt).unwrap();
        }
        assert!(st.pdot.norm() < 1e-4);
        assert!((st.p - p0).norm() < 1e-4);
    }

    #[test]
    fn constant_torque_steady_state_offset() {
        let (models, p0, q0) = setup();
        let rm = ReferenceModel::new(
            &models.position, &models.orientation, InertiaParams::standard(), p0, q0,
        )
        .unwrap();
        let tau = 3.0;
        let th_p = theta(p0, tau);
        let qp_goal = Vector3::new(0.0, 0.0, 0.6);
        let th_o = theta(qp_goal, tau);
        let tau_ext = Vector3::new(0.02, -0.01, 0.03);
        let mut st = ReferenceState::at_rest(p0, q0);
        let dt = 0.002;
        for _ in 0..((15.0 * tau / dt) as usize) {
            rm.step(&mut st, &th_p, &th_o, Vector3::zeros(), tau_ext, dt).unwrap();
        }
        assert!(st.omega.norm() < 1e-6);
        // equilibrium: L(q′)·(α_z β_z (q̂′_g − q′)/τ̂²) = −M_o⁻¹ τ_ext
        let l = quat::omega_map(RotVec(st.q_prime));
        let residual = l
            * ((models.orientation.alpha_z * models.orientation.beta_z / (tau * tau))
                * (qp_goal - st.q_prime))
            + rm.inertia.m_o_inv().component_mul(&tau_ext);
        assert!(residual.norm() < 1e-4, "equilibrium residual {}", residual.norm());
    }

    #[test]
    fn stability_identity_each_step() {
        // q̈′ − q̈̂′ = ½ J_Q′ (T_ext * Q′) with T_ext = [0, (M_o⁻¹ τ_ext)ᵀ]ᵀ
        let (models, p0, q0) = setup();
        let rm = ReferenceModel::new(
            &models.position, &models.orientation, InertiaParams::standard(), p0, q0,
        )
        .unwrap();
        let th_p = theta(Vector3::new(0.5, 0.3, 0.55), 4.7);
        let th_o = theta(Vector3::new(0.2, -0.3, 0.8), 4.7);
        let mut st = ReferenceState::at_rest(p0, q0);
        let dt = 0.002;
        for k in 0..2000 {
            let tk = k as f64 * dt;
            let tau_ext = Vector3::new(
                0.05 * (3.0 * tk).sin(),
                0.04 * (2.0 * tk).cos(),
                0.03 * (5.0 * tk).sin(),
            );
            let f_ext = Vector3::new(0.5 * tk.sin(), 0.3, -0.2 * (2.0 * tk).cos());

            // snapshot before stepping
            let before = st;
            let rel = before.q * q0.conjugate();
            let info = rm.step(&mut st, &th_p, &th_o, f_ext, tau_ext, dt).unwrap();

            // reconstruct q̈′ from the realized ω̇ at the pre-step state
            let qddot_total = quat::qddot_from_omegadot(
                &rel,
                before.q_prime_dot,
                before.omega,
                info.omegadot,
            )
            .unwrap();
            let t_ext = rm.inertia.m_o_inv().component_mul(&tau_ext);
            let (pw, pv) = raw_mul((0.0, t_ext), (rel.w, rel.v));
            let jl = quat::j_log(RotVec(before.q_prime));
            let mut expect = Vector3::zeros();
            for i in 0..3 {
                expect[i] = 0.5
                    * (jl[(i, 0)] * pw + jl[(i, 1)] * pv.x + jl[(i, 2)] * pv.y + jl[(i, 3)] * pv.z);
            }
            let diff = (qddot_total - info.qddot_dmp - expect).norm();
            assert!(diff < 1e-8, "step {k}: identity residual {diff:e}");
        }
    }

    fn raw_mul(a: (f64, Vector3<f64>), b: (f64, Vector3<f64>)) -> (f64, Vector3<f64>) {
        (a.0 * b.0 - a.1.dot(&b.1), a.0 * b.1 + b.0 * a.1 + a.1.cross(&b.1))
    }

    #[test]
    fn converges_to_estimates_without_wrench() {
        let (models, p0, q0) = setup();
        let rm = ReferenceModel::new(
            &models.position, &models.orientation, InertiaParams::standard(), p0, q0,
        )
        .unwrap();
        let pg = Vector3::new(0.45, 0.25, 0.5);
        let qp_goal = Vector3::new(0.3, 0.1, 0.7);
        let tau = 2.5;
        let th_p = theta(pg, tau);
        let th_o = theta(qp_goal, tau);
        let mut st = ReferenceState::at_rest(p0, q0);
        let dt = 0.002;
        for _ in 0..((3.0 * tau / dt) as usize) {
            rm.step(&mut st, &th_p, &th_o, Vector3::zeros(), Vector3::zeros(), dt).unwrap();
        }
        assert!((st.p - pg).norm() < 1e-4);
        let qg_hat = quat::exp(RotVec(qp_goal)).unwrap() * q0;
        assert!(st.q.angle_to(&qg_hat) < 1e-3);
        assert!(st.pdot.norm() < 1e-4 && st.omega.norm() < 1e-3);
    }

    #[test]
    fn halving_dt_halves_discretization_error() {
        let (models, p0, q0) = setup();
        let rm = ReferenceModel::new(
            &models.position, &models.orientation, InertiaParams::standard(), p0, q0,
        )
        .unwrap();
        let th_p = theta(Vector3::new(0.5, 0.3, 0.55), 4.7);
        let th_o = theta(Vector3::new(0.1, 0.2, 0.6), 4.7);
        let run = |dt: f64| {
            let mut st = ReferenceState::at_rest(p0, q0);
            let steps = (2.0 / dt).round() as usize;
            for k in 0..steps {
                let tk = k as f64 * dt;
                let f = Vector3::new((2.0 * tk).sin(), 0.4, -0.3 * tk.cos());
                let tq = Vector3::new(0.03 * tk.sin(), -0.02, 0.04 * (3.0 * tk).cos());
                rm.step(&mut st, &th_p, &th_o, f, tq, dt).unwrap();
            }
            st
        };
        let coarse = run(0.004);
        let mid = run(0.002);
        let fine = run(0.0005);
        let e_coarse = (coarse.p - fine.p).norm() + coarse.q.angle_to(&fine.q);
        let e_mid = (mid.p - fine.p).norm() + mid.q.angle_to(&fine.q);
        let ratio = e_coarse / e_mid.max(1e-15);
        assert!(
            (1.4..4.0).contains(&ratio),
            "order-1 convergence expected, got ratio {ratio} ({e_coarse:e} vs {e_mid:e})"
        );
    }

    #[test]
    fn corrupted_cache_is_rejected() {
        let (models, p0, q0) = setup();
        let rm = ReferenceModel::new(
            &models.position, &models.orientation, InertiaParams::standard(), p0, q0,
        )
        .unwrap();
        let mut st = ReferenceState::at_rest(p0, q0);
        st.q_prime = Vector3::new(0.1, 0.0, 0.0);
        let th = theta(p0, 3.0);
        match rm.step(&mut st, &th, &th, Vector3::zeros(), Vector3::zeros(), 0.002) {
            Err(ReferenceError::Consistency { .. }) => {}
            other => panic!("expected consistency error, got {other:?}"),
        }
    }
}
