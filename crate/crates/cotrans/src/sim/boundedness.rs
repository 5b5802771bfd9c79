//! Empirical boundedness suite: drives the reference model plus both filters
//! with bounded, square-integrable wrench profiles (no human in the loop) and
//! checks that the state stays bounded and converges to the estimated target
//! once the wrench vanishes.

use nalgebra::{Vector3, Vector4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dmp::TrainedModels;
use crate::observer::{ObserverConfig, OrientationObserver, PositionObserver};
use crate::quat::{self, RotVec, UnitQuaternion};
use crate::reference::{InertiaParams, ReferenceModel, ReferenceState};

/// Bounded, square-integrable wrench profiles (zero after their duration).
#[derive(Debug, Clone)]
pub enum WrenchProfile {
    /// Rectangular pulse on fixed force/torque directions.
    Pulse { force: Vector3<f64>, torque: Vector3<f64>, start: f64, width: f64, duration: f64 },
    /// Exponentially decaying sinusoid, truncated at `duration`.
    DecayingSine {
        force_amp: Vector3<f64>,
        torque_amp: Vector3<f64>,
        freq_hz: f64,
        decay: f64,
        duration: f64,
    },
    /// Piecewise-constant bounded noise (50 ms segments), truncated.
    TruncatedNoise { seed: u64, force_scale: f64, torque_scale: f64, duration: f64 },
}

impl WrenchProfile {
    pub fn duration(&self) -> f64 {
        match self {
            WrenchProfile::Pulse { duration, .. }
            | WrenchProfile::DecayingSine { duration, .. }
            | WrenchProfile::TruncatedNoise { duration, .. } => *duration,
        }
    }

    pub fn name(&self) -> String {
        match self {
            WrenchProfile::Pulse { force, torque, .. } => {
                format!(
                    "pulse f=({:.1},{:.1},{:.1}) tau=({:.2},{:.2},{:.2})",
                    force.x, force.y, force.z, torque.x, torque.y, torque.z
                )
            }
            WrenchProfile::DecayingSine { freq_hz, decay, .. } => {
                format!("decaying sine {freq_hz:.1} Hz, decay {decay:.1}")
            }
            WrenchProfile::TruncatedNoise { seed, .. } => format!("truncated noise (seed {seed})"),
        }
    }

    /// Sampled wrench; needs the pre-generated noise table for noise profiles.
    fn sample(&self, t: f64, noise: &[(Vector3<f64>, Vector3<f64>)]) -> (Vector3<f64>, Vector3<f64>) {
        if t >= self.duration() {
            return (Vector3::zeros(), Vector3::zeros());
        }
        match self {
            WrenchProfile::Pulse { force, torque, start, width, .. } => {
                if t >= *start && t < start + width {
                    (*force, *torque)
                } else {
                    (Vector3::zeros(), Vector3::zeros())
                }
            }
            WrenchProfile::DecayingSine { force_amp, torque_amp, freq_hz, decay, .. } => {
                let s = (std::f64::consts::TAU * freq_hz * t).sin() * (-decay * t).exp();
                (force_amp * s, torque_amp * s)
            }
            WrenchProfile::TruncatedNoise { .. } => {
                let idx = ((t / 0.05) as usize).min(noise.len().saturating_sub(1));
                noise[idx]
            }
        }
    }

    fn noise_table(&self) -> Vec<(Vector3<f64>, Vector3<f64>)> {
        match self {
            WrenchProfile::TruncatedNoise { seed, force_scale, torque_scale, duration } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let n = (duration / 0.05).ceil() as usize + 1;
                (0..n)
                    .map(|_| {
                        let f = Vector3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        ) * *force_scale;
                        let tq = Vector3::new(
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                            rng.random_range(-1.0..1.0),
                        ) * *torque_scale;
                        (f, tq)
                    })
                    .collect()
            }
            _ => Vec::new(),
        }
    }
}

/// The ten stock profiles used by the acceptance suite.
pub fn default_profiles(seed: u64) -> Vec<WrenchProfile> {
    let mut out = Vec::new();
    // 5 N, 0.5 s pulses per force axis with a small torque component
    for axis in 0..3 {
        let mut f = Vector3::zeros();
        f[axis] = 5.0;
        let mut tq = Vector3::zeros();
        tq[(axis + 1) % 3] = 0.2;
        out.push(WrenchProfile::Pulse { force: f, torque: tq, start: 0.5, width: 0.5, duration: 4.0 });
    }
    // torque-dominant pulses
    for axis in 0..3 {
        let mut tq = Vector3::zeros();
        tq[axis] = 0.5;
        out.push(WrenchProfile::Pulse {
            force: Vector3::repeat(0.5),
            torque: tq,
            start: 0.3,
            width: 0.6,
            duration: 4.0,
        });
    }
    // decaying sinusoids
    out.push(WrenchProfile::DecayingSine {
        force_amp: Vector3::new(4.0, -2.0, 1.0),
        torque_amp: Vector3::new(0.3, 0.2, -0.2),
        freq_hz: 0.8,
        decay: 1.0,
        duration: 5.0,
    });
    out.push(WrenchProfile::DecayingSine {
        force_amp: Vector3::new(-1.5, 3.0, 2.0),
        torque_amp: Vector3::new(-0.2, 0.3, 0.25),
        freq_hz: 2.0,
        decay: 1.5,
        duration: 4.0,
    });
    // truncated noise
    out.push(WrenchProfile::TruncatedNoise {
        seed,
        force_scale: 3.0,
        torque_scale: 0.3,
        duration: 4.0,
    });
    out.push(WrenchProfile::TruncatedNoise {
        seed: seed.wrapping_add(1),
        force_scale: 1.5,
        torque_scale: 0.5,
        duration: 4.0,
    });
    out
}

/// Outcome of one profile run.
#[derive(Debug, Clone)]
pub struct ProfileCase {
    pub name: String,
    /// sup over the driven window of (‖p‖, ‖ṗ‖, ‖ω‖).
    pub peak_driven: [f64; 3],
    /// sup over the whole 10×duration horizon.
    pub sup_total: [f64; 3],
    /// `sup_total ≤ 10 × peak_driven` componentwise (with a tiny floor).
    pub bounded: bool,
    /// ∫‖w‖² dt and sup‖w‖ of the drive (finite by construction).
    pub wrench_l2: f64,
    pub wrench_linf: f64,
    /// Final distance to the estimated target pose.
    pub final_pos_err: f64,
    pub final_ori_err: f64,
    pub converged: bool,
    /// max |dτ̂/dt| over the final second, both filters.
    pub tau_rate_final: f64,
    pub tau_settled: bool,
}

impl ProfileCase {
    pub fn pass(&self) -> bool {
        self.bounded && self.converged && self.tau_settled
    }
}

#[derive(Debug, Clone)]
pub struct BoundednessReport {
    pub cases: Vec<ProfileCase>,
}

impl BoundednessReport {
    pub fn all_pass(&self) -> bool {
        self.cases.iter().all(|c| c.pass())
    }
}

/// Drive the reference model + both filters with each profile from rest at
/// the origin; never panics, reports violations per case.
pub fn boundedness_suite(models: &TrainedModels, profiles: &[WrenchProfile]) -> BoundednessReport {
    let dt = 0.002;
    let p0 = Vector3::zeros();
    let q0 = UnitQuaternion::identity();
    let inertia = InertiaParams::standard();
    let mut cases = Vec::with_capacity(profiles.len());

    for profile in profiles {
        let noise = profile.noise_table();
        let t_wrench = profile.duration();
        let t_total = 10.0 * t_wrench;

        let ref_model =
            ReferenceModel::new(&models.position, &models.orientation, inertia, p0, q0)
                .expect("model kinds");
        let mut st = ReferenceState::at_rest(p0, q0);
        let mut obs_p = PositionObserver::new(
            &ref_model.position,
            ObserverConfig::default_position(),
            Vector4::new(p0.x, p0.y, p0.z, 6.0),
        )
        .expect("config");
        let mut obs_o = OrientationObserver::new(
            &ref_model.orientation,
            ObserverConfig::default_orientation(),
            Vector4::new(0.0, 0.0, 0.0, 6.0),
        )
        .expect("config");

        let mut peak_driven = [0.0_f64; 3];
        let mut sup_total = [0.0_f64; 3];
        let mut wrench_l2 = 0.0;
        let mut wrench_linf = 0.0_f64;
        let mut tau_rate_final = 0.0_f64;
        let steps = (t_total / dt).round() as usize;
        let mut failed = false;

        let mut t = 0.0;
        for _ in 0..steps {
            let (f, tq) = profile.sample(t, &noise);
            let wn2 = f.norm_squared() + tq.norm_squared();
            wrench_l2 += wn2 * dt;
            wrench_linf = wrench_linf.max(wn2.sqrt());

            let th_p = obs_p.core.theta();
            let th_o = obs_o.core.theta();
            let q_rel = st.q * ref_model.q0.conjugate();
            let tau_before = (th_p[3], th_o[3]);
            let step_ok = obs_p
                .step(st.p, st.pdot, st.t_clock, f, inertia.m_p_inv(), dt)
                .is_ok()
                && obs_o
                    .step(&q_rel, st.omega, st.t_clock, tq, inertia.m_o_inv(), dt)
                    .is_ok()
                && ref_model.step(&mut st, &th_p, &th_o, f, tq, dt).is_ok();
            if !step_ok {
                failed = true;
                break;
            }

            let norms = [st.p.norm(), st.pdot.norm(), st.omega.norm()];
            for i in 0..3 {
                sup_total[i] = sup_total[i].max(norms[i]);
                if t < t_wrench {
                    peak_driven[i] = peak_driven[i].max(norms[i]);
                }
            }
            if t >= t_total - 1.0 {
                let rate_p = (obs_p.core.theta()[3] - tau_before.0).abs() / dt;
                let rate_o = (obs_o.core.theta()[3] - tau_before.1).abs() / dt;
                tau_rate_final = tau_rate_final.max(rate_p.max(rate_o));
            }
            t += dt;
        }

        let th_p = obs_p.core.theta();
        let th_o = obs_o.core.theta();
        let p_hat = th_p.fixed_rows::<3>(0).into_owned();
        let final_pos_err = (st.p - p_hat).norm();
        let q_hat = quat::exp(RotVec(th_o.fixed_rows::<3>(0).into_owned()))
            .map(|rel| rel * q0)
            .unwrap_or(q0);
        let final_ori_err = st.q.angle_to(&q_hat);

        let bounded = !failed
            && (0..3).all(|i| sup_total[i] <= (10.0 * peak_driven[i]).max(1e-9));
        let converged = !failed && final_pos_err < 1e-4 && final_ori_err < 1e-3;
        cases.push(ProfileCase {
            name: profile.name(),
            peak_driven,
            sup_total,
            bounded,
            wrench_l2,
            wrench_linf,
            final_pos_err,
            final_ori_err,
            converged,
            tau_rate_final,
            tau_settled: !failed && tau_rate_final < 1e-3,
        });
    }
    BoundednessReport { cases }
}
