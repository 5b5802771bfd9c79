//! Self-check suites behind the `verify` CLI verb: quaternion algebra
//! round trips, analytic-vs-numeric observer Jacobians, and the empirical
//! boundedness sweep.

use nalgebra::{Matrix3, Matrix3x4, Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dmp::{self, TrainedModels};
use crate::observer::{ObserverConfig, OrientationObserver, PositionObserver};
use crate::quat::{self, RotVec, UnitQuaternion};
use crate::sim::{boundedness_suite, default_profiles};
use crate::trajio;

#[derive(Debug, Clone)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, pass: bool, detail: String) -> Self {
        Check { name: name.into(), pass, detail }
    }
}

pub fn print_checks(checks: &[Check]) -> bool {
    let mut all = true;
    for c in checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
        all &= c.pass;
    }
    all
}

/// Models trained on the standard synthetic demonstration.
pub fn standard_models() -> TrainedModels {
    let demo = trajio::standard_demo().to_demonstration();
    dmp::train_lwr(&demo, 30, 40.0, 10.0).expect("standard demo trains")
}

/// exp/log round trips and the `J_Q J_q = I` identity.
pub fn quat_suite(seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut worst_exp_log: f64 = 0.0;
    let mut worst_log_exp: f64 = 0.0;
    for _ in 0..1000 {
        let q = UnitQuaternion::sample_uniform(&mut rng);
        if let Ok(rv) = quat::log(&q) {
            let back = quat::exp(rv).unwrap();
            let err = ((back.w - q.w).powi(2) + (back.v - q.v).norm_squared()).sqrt();
            worst_exp_log = worst_exp_log.max(err);
        }
        let dir = {
            let v = UnitQuaternion::sample_uniform(&mut rng).v;
            if v.norm() < 1e-9 { Vector3::x() } else { v.normalize() }
        };
        let rv = RotVec(dir * rng.random_range(0.0..std::f64::consts::PI));
        let back = quat::log(&quat::exp(rv).unwrap()).unwrap();
        worst_log_exp = worst_log_exp.max((back.0 - rv.0).norm());
    }
    checks.push(Check::new(
        "quat exp(log(Q)) round trip",
        worst_exp_log < 1e-12,
        format!("worst {worst_exp_log:.2e} over 1000 samples (tolerance 1e-12)"),
    ));
    checks.push(Check::new(
        "quat log(exp(q)) round trip",
        worst_log_exp < 1e-12,
        format!("worst {worst_log_exp:.2e} over 1000 samples (tolerance 1e-12)"),
    ));

    let mut worst_jj: f64 = 0.0;
    for _ in 0..1000 {
        let dir = {
            let v = UnitQuaternion::sample_uniform(&mut rng).v;
            if v.norm() < 1e-9 { Vector3::x() } else { v.normalize() }
        };
        let rv = RotVec(dir * rng.random_range(1e-3..std::f64::consts::PI));
        let err = (quat::j_log(rv) * quat::j_exp(rv) - Matrix3::identity()).norm();
        worst_jj = worst_jj.max(err);
    }
    checks.push(Check::new(
        "J_Q · J_q = I on ‖q‖ ∈ (1e-3, π)",
        worst_jj < 1e-9,
        format!("worst Frobenius error {worst_jj:.2e} (tolerance 1e-9)"),
    ));

    // ω/q̇/ω̇ conversions against central finite differences on an analytic
    // rotation trajectory
    let traj = |t: f64| {
        (
            Vector3::new(0.8 * t.sin(), 0.5 * (2.0 * t).sin() + 0.3, 0.4 * t.cos()),
            Vector3::new(0.8 * t.cos(), (2.0 * t).cos(), -0.4 * t.sin()),
            Vector3::new(-0.8 * t.sin(), -2.0 * (2.0 * t).sin(), -0.4 * t.cos()),
        )
    };
    let h = 1e-5;
    let mut worst_wd: f64 = 0.0;
    let mut worst_rt: f64 = 0.0;
    for k in 0..40 {
        let t = 0.1 + 0.1 * k as f64;
        let (qv, qd, qdd) = traj(t);
        let qq = quat::exp(RotVec(qv)).unwrap();
        let w = quat::omega_from_qdot(&qq, qd).unwrap();
        let wd = quat::omegadot_from_qddot(&qq, qd, qdd, w).unwrap();
        let omega_at = |tt: f64| {
            let (qv, qd, _) = traj(tt);
            quat::omega_from_qdot(&quat::exp(RotVec(qv)).unwrap(), qd).unwrap()
        };
        let fd = (omega_at(t + h) - omega_at(t - h)) / (2.0 * h);
        worst_wd = worst_wd.max((wd - fd).norm() / fd.norm().max(1.0));
        let qd_back = quat::qdot_from_omega(&qq, w).unwrap();
        worst_rt = worst_rt.max((qd_back - qd).norm());
    }
    checks.push(Check::new(
        "ω̇ matches finite differences of ω(t)",
        worst_wd < 1e-4,
        format!("worst relative error {worst_wd:.2e} (tolerance 1e-4)"),
    ));
    checks.push(Check::new(
        "ω ↔ q̇ conversions are inverse",
        worst_rt < 1e-10,
        format!("worst round-trip error {worst_rt:.2e} (tolerance 1e-10)"),
    ));
    checks
}

/// Analytic observer Jacobians against central finite differences over the
/// reachable state distribution.
pub fn jacobian_suite(models: &TrainedModels, seed: u64) -> Vec<Check> {
    let p0 = Vector3::new(0.0, -0.3, 0.15);
    let pos = PositionObserver::new(
        &models.position.with_anchor(p0),
        ObserverConfig::default_position(),
        Vector4::new(p0.x, p0.y, p0.z, 6.0),
    )
    .expect("observer config");
    let orient = OrientationObserver::new(
        &models.orientation,
        ObserverConfig::default_orientation(),
        Vector4::new(0.0, 0.0, 0.0, 6.0),
    )
    .expect("observer config");

    let fd = |f: &dyn Fn(&Vector4<f64>) -> Vector3<f64>, theta: &Vector4<f64>| {
        let mut m = Matrix3x4::zeros();
        for j in 0..4 {
            let h = 1e-6 * theta[j].abs().max(1.0);
            let (mut tp, mut tm) = (*theta, *theta);
            tp[j] += h;
            tm[j] -= h;
            let d = (f(&tp) - f(&tm)) / (2.0 * h);
            for i in 0..3 {
                m[(i, j)] = d[i];
            }
        }
        m
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst_p: f64 = 0.0;
    for _ in 0..100 {
        let theta = Vector4::new(
            rng.random_range(-0.7..0.7),
            rng.random_range(-0.6..0.6),
            rng.random_range(-0.1..0.9),
            rng.random_range(1.5..30.0),
        );
        let p = Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(0.0..0.8),
        );
        let pd = Vector3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        let t = rng.random_range(0.0..10.0);
        let a = pos.jacobian(&theta, p, pd, t);
        let n = fd(&|th| pos.measurement(th, p, pd, t), &theta);
        worst_p = worst_p.max((a - n).norm() / n.norm().max(1.0));
    }

    let mut worst_o: f64 = 0.0;
    for _ in 0..100 {
        let theta = Vector4::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(1.5..30.0),
        );
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let q_rel = UnitQuaternion::from_axis_angle(axis, rng.random_range(0.0..2.0));
        let w = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let t = rng.random_range(0.0..10.0);
        let a = orient.jacobian(&theta, &q_rel, w, t).unwrap();
        let n = fd(&|th| orient.measurement(th, &q_rel, w, t).unwrap(), &theta);
        worst_o = worst_o.max((a - n).norm() / n.norm().max(1.0));
    }

    vec![
        Check::new(
            "position observer Jacobian vs finite differences",
            worst_p < 1e-4,
            format!("worst relative error {worst_p:.2e} over 100 states (tolerance 1e-4)"),
        ),
        Check::new(
            "orientation observer Jacobian vs finite differences",
            worst_o < 1e-4,
            format!("worst relative error {worst_o:.2e} over 100 states (tolerance 1e-4)"),
        ),
    ]
}

/// Wraps the wrench-profile boundedness sweep as pass/fail checks.
pub fn boundedness_checks(models: &TrainedModels, seed: u64) -> Vec<Check> {
    let report = boundedness_suite(models, &default_profiles(seed));
    report
        .cases
        .iter()
        .map(|c| {
            Check::new(
                &format!("boundedness: {}", c.name),
                c.pass(),
                format!(
                    "sup (‖p‖,‖ṗ‖,‖ω‖) = ({:.3}, {:.3}, {:.3}) vs driven peaks ({:.3}, {:.3}, {:.3}); \
                     final errors {:.2e} m / {:.2e} rad; τ̂ rate {:.1e}; wrench L2 {:.1}, Linf {:.1}",
                    c.sup_total[0], c.sup_total[1], c.sup_total[2],
                    c.peak_driven[0], c.peak_driven[1], c.peak_driven[2],
                    c.final_pos_err, c.final_ori_err, c.tau_rate_final,
                    c.wrench_l2, c.wrench_linf,
                ),
            )
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quat_suite_passes() {
        assert!(quat_suite(7).iter().all(|c| c.pass));
    }

    #[test]
    fn jacobian_suite_passes() {
        let models = standard_models();
        assert!(jacobian_suite(&models, 7).iter().all(|c| c.pass));
    }
}
