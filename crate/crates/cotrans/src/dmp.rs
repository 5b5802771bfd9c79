//! Dynamic movement primitives for Cartesian position and orientation.
//!
//! A DMP is the second-order attractor
//!
//! `ÿ = (α_z β_z (y_g − y) − α_z τ ẏ + g_f(x) K f(x)) / τ²`,  `x = t/τ`,
//!
//! where `f` is a normalized weighted sum of Gaussian kernels encoding the
//! demonstrated shape, `g_f` a sigmoid that extinguishes the forcing near the
//! end of the motion, and `K = diag(y_g − y₀)` the per-axis spatial scaling.
//! Position runs in Cartesian coordinates; orientation runs in the
//! quaternion-log coordinate `q′ = log(Q * Q̄₀)` anchored at the *initial*
//! orientation, which keeps the DMP state independent of the (possibly
//! time-varying) goal estimate.

use nalgebra::{Matrix3x4, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::quat::{self, RotVec, UnitQuaternion};

/// Default sigmoid gating steepness.
pub const DEFAULT_A_G: f64 = 30.0;
/// Default sigmoid gating center; forcing is effectively extinct just past 1.
pub const DEFAULT_C_G: f64 = 0.99;
/// Kernel-sum floor preventing 0/0 far outside the phase support.
const DENOM_FLOOR: f64 = 1e-300;
/// Displacement below which an axis carries no trainable shape.
pub const DEGENERATE_DISP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DmpError {
    #[error("invalid demonstration: {0}")]
    InvalidDemo(String),
    #[error("degenerate demonstration: every {signal} displacement component is below {DEGENERATE_DISP}")]
    DegenerateDemo { signal: &'static str },
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error(transparent)]
    Quat(#[from] quat::QuatError),
}

/// Linear canonical system: `x = t/τ` (integral of `τ ẋ = 1`, `x(0) = 0`).
pub fn phase(t: f64, tau: f64) -> f64 {
    assert!(tau > 0.0, "time scaling must be positive");
    t / tau
}

/// Gaussian kernel basis with per-axis weights.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSet {
    pub centers: Vec<f64>,
    pub widths: Vec<f64>,
    /// One weight row per axis: `weights[axis][kernel]`.
    pub weights: [Vec<f64>; 3],
}

impl KernelSet {
    /// Equally spaced centers on [0, 1] with widths `h_i = 1/(2 Δc²)` and the
    /// last width repeated.
    pub fn equispaced(n: usize) -> Self {
        assert!(n >= 1, "kernel count must be at least 1");
        let centers: Vec<f64> = if n == 1 {
            vec![0.5]
        } else {
            (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
        };
        let widths: Vec<f64> = if n == 1 {
            vec![1.0]
        } else {
            let dc = centers[1] - centers[0];
            let h = 1.0 / (2.0 * dc * dc);
            vec![h; n]
        };
        KernelSet { centers, widths, weights: [vec![0.0; n], vec![0.0; n], vec![0.0; n]] }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    fn basis(&self, x: f64) -> (Vec<f64>, f64) {
        let psi: Vec<f64> = self
            .centers
            .iter()
            .zip(&self.widths)
            .map(|(&c, &h)| (-h * (x - c) * (x - c)).exp())
            .collect();
        let den: f64 = psi.iter().sum();
        (psi, den)
    }

    /// Normalized weighted kernel sum `f(x) = Σ Wᵢ ψᵢ(x) / Σ ψᵢ(x)`.
    pub fn eval(&self, x: f64) -> Vector3<f64> {
        let (psi, den) = self.basis(x);
        let den = den.max(DENOM_FLOOR);
        let mut out = Vector3::zeros();
        for axis in 0..3 {
            out[axis] = self.weights[axis]
                .iter()
                .zip(&psi)
                .map(|(&w, &p)| w * p)
                .sum::<f64>()
                / den;
        }
        out
    }

    /// `(f(x), df/dx)` in one pass.
    pub fn eval_with_derivative(&self, x: f64) -> (Vector3<f64>, Vector3<f64>) {
        let (psi, den) = self.basis(x);
        let den = den.max(DENOM_FLOOR);
        let dpsi: Vec<f64> = psi
            .iter()
            .zip(self.centers.iter().zip(&self.widths))
            .map(|(&p, (&c, &h))| -2.0 * h * (x - c) * p)
            .collect();
        let dden: f64 = dpsi.iter().sum();
        let mut f = Vector3::zeros();
        let mut df = Vector3::zeros();
        for axis in 0..3 {
            let num: f64 = self.weights[axis].iter().zip(&psi).map(|(&w, &p)| w * p).sum();
            let dnum: f64 = self.weights[axis].iter().zip(&dpsi).map(|(&w, &p)| w * p).sum();
            f[axis] = num / den;
            df[axis] = dnum / den - f[axis] * (dden / den);
        }
        (f, df)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DmpKind {
    Position,
    Orientation,
}

impl std::fmt::Display for DmpKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DmpKind::Position => write!(f, "position"),
            DmpKind::Orientation => write!(f, "orientation"),
        }
    }
}

/// A trained DMP for one signal (position or orientation).
///
/// Orientation models operate entirely in the anchored log coordinate `q′`
/// (anchor 0); the demonstration's endpoint quaternions are retained for
/// serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct DmpModel {
    pub kernels: KernelSet,
    pub alpha_z: f64,
    pub beta_z: f64,
    pub a_g: f64,
    pub c_g: f64,
    pub demo_duration: f64,
    pub kind: DmpKind,
    /// Spatial-scaling anchor in working coordinates (`p₀`, or 0 for orientation).
    anchor: Vector3<f64>,
    /// Demonstrated goal in working coordinates (`p_g`, or `q′_g` for orientation).
    demo_goal: Vector3<f64>,
    demo_anchor_quat: Option<UnitQuaternion>,
    demo_goal_quat: Option<UnitQuaternion>,
}

impl DmpModel {
    /// Sigmoid gating `g_f(x) = 1/(1 + e^{a_g (x − c_g)})`.
    pub fn gating(&self, x: f64) -> f64 {
        1.0 / (1.0 + (self.a_g * (x - self.c_g)).exp())
    }

    /// `dg_f/dx = −a_g g_f (1 − g_f)`.
    pub fn gating_derivative(&self, x: f64) -> f64 {
        let g = self.gating(x);
        -self.a_g * g * (1.0 - g)
    }

    /// Forcing term `f(x)`.
    pub fn forcing(&self, x: f64) -> Vector3<f64> {
        self.kernels.eval(x)
    }

    pub fn anchor(&self) -> Vector3<f64> {
        self.anchor
    }

    pub fn demo_goal(&self) -> Vector3<f64> {
        self.demo_goal
    }

    pub fn demo_anchor_quat(&self) -> Option<UnitQuaternion> {
        self.demo_anchor_quat
    }

    pub fn demo_goal_quat(&self) -> Option<UnitQuaternion> {
        self.demo_goal_quat
    }

    /// Copy re-anchored at a new start value (per-episode `p₀` for position
    /// models; orientation models are always anchored at 0).
    pub fn with_anchor(&self, anchor: Vector3<f64>) -> Self {
        let mut m = self.clone();
        m.anchor = match self.kind {
            DmpKind::Position => anchor,
            DmpKind::Orientation => Vector3::zeros(),
        };
        m
    }

    /// DMP acceleration
    /// `ÿ = (α_z β_z (y_g − y) − α_z τ ẏ + g_f(x) K f(x)) / τ²` with
    /// `K = diag(y_g − y₀)` and `x = t/τ`.
    pub fn accel(
        &self,
        y: Vector3<f64>,
        ydot: Vector3<f64>,
        t: f64,
        y_goal: Vector3<f64>,
        tau: f64,
    ) -> Vector3<f64> {
        let x = phase(t, tau);
        let scale = y_goal - self.anchor;
        let forced = self.gating(x) * scale.component_mul(&self.forcing(x));
        (self.alpha_z * self.beta_z * (y_goal - y) - self.alpha_z * tau * ydot + forced)
            / (tau * tau)
    }

    /// Analytic `∂ÿ/∂θ` with `θ = [y_gᵀ, τ]ᵀ`, evaluated at `θ`.
    ///
    /// Goal columns differentiate both the attractor and the scaling diagonal;
    /// the τ column chains through `1/τ²`, `1/τ` and the phase `x = t/τ`
    /// inside the gating and the kernels.
    pub fn accel_jacobian_theta(
        &self,
        y: Vector3<f64>,
        ydot: Vector3<f64>,
        t: f64,
        y_goal: Vector3<f64>,
        tau: f64,
    ) -> Matrix3x4<f64> {
        let x = phase(t, tau);
        let tau2 = tau * tau;
        let scale = y_goal - self.anchor;
        let (f, fp) = self.kernels.eval_with_derivative(x);
        let g = self.gating(x);
        let gp = self.gating_derivative(x);

        let mut m = Matrix3x4::zeros();
        for j in 0..3 {
            m[(j, j)] = (self.alpha_z * self.beta_z + g * f[j]) / tau2;
        }

        let accel = (self.alpha_z * self.beta_z * (y_goal - y) - self.alpha_z * tau * ydot
            + g * scale.component_mul(&f))
            / tau2;
        let dphase = gp * scale.component_mul(&f) + g * scale.component_mul(&fp);
        let col3 = -2.0 / tau * accel + (-self.alpha_z * ydot - (t / tau2) * dphase) / tau2;
        for j in 0..3 {
            m[(j, 3)] = col3[j];
        }
        m
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ModelJson::from(self)).expect("model serialization")
    }

    pub fn from_json(s: &str) -> Result<Self, DmpError> {
        let raw: ModelJson =
            serde_json::from_str(s).map_err(|e| DmpError::InvalidModel(e.to_string()))?;
        raw.try_into()
    }
}

/// On-disk model layout: flat row-major 3×N weights, endpoints sized by kind
/// (3 scalars for position, wxyz quaternions for orientation).
#[derive(Debug, Serialize, Deserialize)]
struct ModelJson {
    #[serde(rename = "N")]
    n: usize,
    centers: Vec<f64>,
    widths: Vec<f64>,
    weights: Vec<f64>,
    alpha_z: f64,
    beta_z: f64,
    a_g: f64,
    c_g: f64,
    anchor: Vec<f64>,
    demo_goal: Vec<f64>,
    demo_duration: f64,
    kind: DmpKind,
}

impl From<&DmpModel> for ModelJson {
    fn from(m: &DmpModel) -> Self {
        let n = m.kernels.len();
        let mut weights = Vec::with_capacity(3 * n);
        for axis in 0..3 {
            weights.extend_from_slice(&m.kernels.weights[axis]);
        }
        let (anchor, demo_goal) = match m.kind {
            DmpKind::Position => (m.anchor.as_slice().to_vec(), m.demo_goal.as_slice().to_vec()),
            DmpKind::Orientation => (
                m.demo_anchor_quat.unwrap_or(UnitQuaternion::identity()).wxyz().to_vec(),
                m.demo_goal_quat.unwrap_or(UnitQuaternion::identity()).wxyz().to_vec(),
            ),
        };
        ModelJson {
            n,
            centers: m.kernels.centers.clone(),
            widths: m.kernels.widths.clone(),
            weights,
            alpha_z: m.alpha_z,
            beta_z: m.beta_z,
            a_g: m.a_g,
            c_g: m.c_g,
            anchor,
            demo_goal,
            demo_duration: m.demo_duration,
            kind: m.kind,
        }
    }
}

impl TryFrom<ModelJson> for DmpModel {
    type Error = DmpError;

    fn try_from(raw: ModelJson) -> Result<Self, DmpError> {
        let n = raw.n;
        if raw.centers.len() != n || raw.widths.len() != n || raw.weights.len() != 3 * n {
            return Err(DmpError::InvalidModel(format!(
                "kernel arrays inconsistent with N = {n}"
            )));
        }
        if n < 1 || raw.alpha_z <= 0.0 || raw.beta_z <= 0.0 || raw.demo_duration <= 0.0 {
            return Err(DmpError::InvalidModel("non-positive model parameter".into()));
        }
        if !raw.centers.windows(2).all(|w| w[1] > w[0]) && n > 1 {
            return Err(DmpError::InvalidModel("kernel centers must be strictly increasing".into()));
        }
        if raw.widths.iter().any(|&h| h <= 0.0) {
            return Err(DmpError::InvalidModel("kernel widths must be positive".into()));
        }
        let weights = [
            raw.weights[0..n].to_vec(),
            raw.weights[n..2 * n].to_vec(),
            raw.weights[2 * n..3 * n].to_vec(),
        ];
        let kernels = KernelSet { centers: raw.centers, widths: raw.widths, weights };

        let vec3 = |v: &[f64], what: &str| -> Result<Vector3<f64>, DmpError> {
            if v.len() != 3 {
                return Err(DmpError::InvalidModel(format!("{what} must have 3 components")));
            }
            Ok(Vector3::new(v[0], v[1], v[2]))
        };
        let quat = |v: &[f64], what: &str| -> Result<UnitQuaternion, DmpError> {
            if v.len() != 4 {
                return Err(DmpError::InvalidModel(format!("{what} must have 4 components")));
            }
            Ok(UnitQuaternion::from_wxyz([v[0], v[1], v[2], v[3]]))
        };

        let (anchor, demo_goal, demo_anchor_quat, demo_goal_quat) = match raw.kind {
            DmpKind::Position => (
                vec3(&raw.anchor, "anchor")?,
                vec3(&raw.demo_goal, "demo_goal")?,
                None,
                None,
            ),
            DmpKind::Orientation => {
                let q0 = quat(&raw.anchor, "anchor")?;
                let qg = quat(&raw.demo_goal, "demo_goal")?;
                let qg_log = quat::log(&qg.relative(&q0))?;
                (Vector3::zeros(), qg_log.0, Some(q0), Some(qg))
            }
        };

        Ok(DmpModel {
            kernels,
            alpha_z: raw.alpha_z,
            beta_z: raw.beta_z,
            a_g: raw.a_g,
            c_g: raw.c_g,
            demo_duration: raw.demo_duration,
            kind: raw.kind,
            anchor,
            demo_goal,
            demo_anchor_quat,
            demo_goal_quat,
        })
    }
}

/// A recorded point-to-point demonstration on a uniform time grid.
#[derive(Debug, Clone)]
pub struct Demonstration {
    pub t: Vec<f64>,
    pub positions: Vec<Vector3<f64>>,
    pub orientations: Vec<UnitQuaternion>,
    /// Optional supplied translational velocities (else central differences).
    pub velocities: Option<Vec<Vector3<f64>>>,
    /// Optional supplied translational accelerations.
    pub accelerations: Option<Vec<Vector3<f64>>>,
}

impl Demonstration {
    pub fn validate(&self) -> Result<(), DmpError> {
        let n = self.t.len();
        if n < 10 {
            return Err(DmpError::InvalidDemo(format!("{n} samples, need at least 10")));
        }
        if self.positions.len() != n || self.orientations.len() != n {
            return Err(DmpError::InvalidDemo("channel lengths differ".into()));
        }
        if let Some(v) = &self.velocities {
            if v.len() != n {
                return Err(DmpError::InvalidDemo("velocity length differs".into()));
            }
        }
        if let Some(a) = &self.accelerations {
            if a.len() != n {
                return Err(DmpError::InvalidDemo("acceleration length differs".into()));
            }
        }
        let dt0 = self.t[1] - self.t[0];
        for w in self.t.windows(2) {
            let dt = w[1] - w[0];
            if dt <= 0.0 {
                return Err(DmpError::InvalidDemo("timestamps not strictly increasing".into()));
            }
            if (dt - dt0).abs() > 1e-6 * dt0.max(1e-9) {
                return Err(DmpError::InvalidDemo("timestamps not on a uniform grid".into()));
            }
        }
        for q in &self.orientations {
            if (q.norm() - 1.0).abs() > 1e-6 {
                return Err(DmpError::InvalidDemo("orientation sample not unit norm".into()));
            }
        }
        Ok(())
    }

    pub fn duration(&self) -> f64 {
        self.t[self.t.len() - 1] - self.t[0]
    }
}

/// 5-point moving average (window shrinks at the boundaries).
fn smooth5(xs: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
    let n = xs.len();
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(2);
            let hi = (i + 2).min(n - 1);
            let mut acc = Vector3::zeros();
            for x in &xs[lo..=hi] {
                acc += *x;
            }
            acc / (hi - lo + 1) as f64
        })
        .collect()
}

/// Central differences on a uniform grid; second-order one-sided at the ends.
fn central_diff(xs: &[Vector3<f64>], dt: f64) -> Vec<Vector3<f64>> {
    let n = xs.len();
    let mut out = Vec::with_capacity(n);
    out.push((-3.0 * xs[0] + 4.0 * xs[1] - xs[2]) / (2.0 * dt));
    for i in 1..n - 1 {
        out.push((xs[i + 1] - xs[i - 1]) / (2.0 * dt));
    }
    out.push((3.0 * xs[n - 1] - 4.0 * xs[n - 2] + xs[n - 3]) / (2.0 * dt));
    out
}

/// Models trained from one demonstration.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub position: DmpModel,
    pub orientation: DmpModel,
}

/// Train position and orientation DMPs with locally weighted regression.
///
/// Inverts the DMP equation along the demonstration (τ = demo duration,
/// goal = demo end), normalizes the forcing target by the per-axis demo
/// displacement so the spatial scaling reproduces the demo exactly when the
/// targets coincide, and fits each kernel weight by its locally weighted
/// average. Axes with displacement below [`DEGENERATE_DISP`] carry zero
/// forcing; a signal whose axes are all degenerate is rejected.
pub fn train_lwr(
    demo: &Demonstration,
    n_kernels: usize,
    alpha_z: f64,
    beta_z: f64,
) -> Result<TrainedModels, DmpError> {
    demo.validate()?;
    if n_kernels < 2 {
        return Err(DmpError::InvalidModel("need at least 2 kernels".into()));
    }
    if alpha_z <= 0.0 || beta_z <= 0.0 {
        return Err(DmpError::InvalidModel("alpha_z and beta_z must be positive".into()));
    }
    let tau = demo.duration();
    let t0 = demo.t[0];
    let xs: Vec<f64> = demo.t.iter().map(|&t| (t - t0) / tau).collect();
    let dt = demo.t[1] - demo.t[0];

    // position signal
    let p = &demo.positions;
    let pdot = match &demo.velocities {
        Some(v) => v.clone(),
        None => central_diff(&smooth5(p), dt),
    };
    let pddot = match &demo.accelerations {
        Some(a) => a.clone(),
        None => central_diff(&pdot, dt),
    };
    let p0 = p[0];
    let pg = p[p.len() - 1];
    let pos_kernels = fit_signal(
        &xs, p, &pdot, &pddot, p0, pg, tau, alpha_z, beta_z, n_kernels, "position",
    )?;

    // orientation signal in the anchored log coordinate
    let q0 = demo.orientations[0];
    let qprime: Vec<Vector3<f64>> = demo
        .orientations
        .iter()
        .map(|q| quat::log(&(*q * q0.conjugate())).map(|rv| rv.0))
        .collect::<Result<_, _>>()?;
    let qp_dot = central_diff(&smooth5(&qprime), dt);
    let qp_ddot = central_diff(&qp_dot, dt);
    let qp_goal = qprime[qprime.len() - 1];
    let orient_kernels = fit_signal(
        &xs,
        &qprime,
        &qp_dot,
        &qp_ddot,
        Vector3::zeros(),
        qp_goal,
        tau,
        alpha_z,
        beta_z,
        n_kernels,
        "orientation",
    )?;

    let base = |kernels: KernelSet, kind: DmpKind, anchor, goal| DmpModel {
        kernels,
        alpha_z,
        beta_z,
        a_g: DEFAULT_A_G,
        c_g: DEFAULT_C_G,
        demo_duration: tau,
        kind,
        anchor,
        demo_goal: goal,
        demo_anchor_quat: None,
        demo_goal_quat: None,
    };
    let position = base(pos_kernels, DmpKind::Position, p0, pg);
    let mut orientation = base(orient_kernels, DmpKind::Orientation, Vector3::zeros(), qp_goal);
    orientation.demo_anchor_quat = Some(q0);
    orientation.demo_goal_quat = Some(demo.orientations[demo.orientations.len() - 1]);
    Ok(TrainedModels { position, orientation })
}

#[allow(clippy::too_many_arguments)]
fn fit_signal(
    xs: &[f64],
    y: &[Vector3<f64>],
    ydot: &[Vector3<f64>],
    yddot: &[Vector3<f64>],
    y0: Vector3<f64>,
    y_goal: Vector3<f64>,
    tau: f64,
    alpha_z: f64,
    beta_z: f64,
    n_kernels: usize,
    signal: &'static str,
) -> Result<KernelSet, DmpError> {
    let disp = y_goal - y0;
    if (0..3).all(|i| disp[i].abs() < DEGENERATE_DISP) {
        return Err(DmpError::DegenerateDemo { signal });
    }
    let mut kernels = KernelSet::equispaced(n_kernels);
    let probe = DmpModel {
        kernels: KernelSet::equispaced(1),
        alpha_z,
        beta_z,
        a_g: DEFAULT_A_G,
        c_g: DEFAULT_C_G,
        demo_duration: tau,
        kind: DmpKind::Position,
        anchor: Vector3::zeros(),
        demo_goal: Vector3::zeros(),
        demo_anchor_quat: None,
        demo_goal_quat: None,
    };

    // forcing target implied by inverting the transformation system
    let targets: Vec<Vector3<f64>> = xs
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let forced = tau * tau * yddot[k] - alpha_z * beta_z * (y_goal - y[k])
                + alpha_z * tau * ydot[k];
            let g = probe.gating(x);
            let mut target = Vector3::zeros();
            for axis in 0..3 {
                if disp[axis].abs() >= DEGENERATE_DISP {
                    target[axis] = forced[axis] / (g * disp[axis]);
                }
            }
            target
        })
        .collect();

    for i in 0..n_kernels {
        let c = kernels.centers[i];
        let h = kernels.widths[i];
        let mut wsum = 0.0;
        let mut tsum = Vector3::zeros();
        for (k, &x) in xs.iter().enumerate() {
            let psi = (-h * (x - c) * (x - c)).exp();
            wsum += psi;
            tsum += psi * targets[k];
        }
        if wsum > 1e-12 {
            for axis in 0..3 {
                if disp[axis].abs() >= DEGENERATE_DISP {
                    kernels.weights[axis][i] = tsum[axis] / wsum;
                }
            }
        }
    }
    Ok(kernels)
}

/// One integration sample of a pure DMP rollout.
#[derive(Debug, Clone, Copy)]
pub struct RolloutPoint {
    pub t: f64,
    pub p: Vector3<f64>,
    pub pdot: Vector3<f64>,
    pub q: UnitQuaternion,
    pub omega: Vector3<f64>,
    pub q_prime: Vector3<f64>,
    pub q_prime_dot: Vector3<f64>,
}

/// Integrate both DMPs with semi-implicit Euler from `(p0, q0)` at rest to
/// the given targets; orientation is reconstructed as `Q = exp(q′) * Q₀`.
#[allow(clippy::too_many_arguments)]
pub fn rollout(
    position: &DmpModel,
    orientation: &DmpModel,
    p0: Vector3<f64>,
    q0: UnitQuaternion,
    p_goal: Vector3<f64>,
    q_goal: UnitQuaternion,
    tau_p: f64,
    tau_o: f64,
    dt: f64,
    t_end: f64,
) -> Result<Vec<RolloutPoint>, DmpError> {
    assert!(dt > 0.0, "time step must be positive");
    let pos = position.with_anchor(p0);
    let qp_goal = quat::log(&q_goal.relative(&q0))?.0;

    let mut p = p0;
    let mut pdot = Vector3::zeros();
    let mut qp = Vector3::zeros();
    let mut qp_dot = Vector3::zeros();
    let mut t = 0.0;
    let steps = (t_end / dt).ceil() as usize;
    let mut out = Vec::with_capacity(steps + 1);

    let record = |t: f64,
                  p: Vector3<f64>,
                  pdot: Vector3<f64>,
                  qp: Vector3<f64>,
                  qp_dot: Vector3<f64>|
     -> Result<RolloutPoint, DmpError> {
        let rel = quat::exp(RotVec(qp))?;
        let q = rel * q0;
        let omega = quat::omega_map(RotVec(qp)) * qp_dot;
        Ok(RolloutPoint { t, p, pdot, q, omega, q_prime: qp, q_prime_dot: qp_dot })
    };

    out.push(record(t, p, pdot, qp, qp_dot)?);
    for _ in 0..steps {
        let pacc = pos.accel(p, pdot, t, p_goal, tau_p);
        let qacc = orientation.accel(qp, qp_dot, t, qp_goal, tau_o);
        pdot += pacc * dt;
        p += pdot * dt;
        qp_dot += qacc * dt;
        qp += qp_dot * dt;
        t += dt;
        out.push(record(t, p, pdot, qp, qp_dot)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minjerk;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    pub fn minjerk_demo(duration: f64, dt: f64) -> Demonstration {
        // 3D translation plus a 90° z-rotation, both minimum-jerk
        let p0 = Vector3::new(0.1, -0.2, 0.3);
        let pg = Vector3::new(0.5, 0.3, 0.55);
        let q0 = UnitQuaternion::identity();
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
            qs.push(quat::exp(RotVec(Vector3::new(0.0, 0.0, s * angle))).unwrap() * q0);
        }
        Demonstration { t, positions: ps, orientations: qs, velocities: None, accelerations: None }
    }

    fn trained() -> TrainedModels {
        train_lwr(&minjerk_demo(4.7, 0.002), 30, 40.0, 10.0).unwrap()
    }

    #[test]
    fn phase_is_linear() {
        assert_eq!(phase(0.0, 3.0), 0.0);
        assert_eq!(phase(3.0, 3.0), 1.0);
        assert_relative_eq!(phase(2.35, 4.7), 0.5);
    }

    #[test]
    fn forcing_zero_weights_and_single_kernel() {
        let ks = KernelSet::equispaced(5);
        assert_eq!(ks.eval(0.3), Vector3::zeros());
        let mut one = KernelSet::equispaced(1);
        one.weights = [vec![1.5], vec![-0.5], vec![2.0]];
        for &x in &[0.0, 0.4, 1.0] {
            assert_relative_eq!(one.eval(x), Vector3::new(1.5, -0.5, 2.0), epsilon = 1e-12);
        }
    }

    #[test]
    fn gating_shape() {
        let m = trained().position;
        assert_relative_eq!(m.gating(m.c_g), 0.5, epsilon = 1e-12);
        assert_relative_eq!(m.gating(-100.0), 1.0, epsilon = 1e-12);
        assert!(m.gating(1.2) < 1e-2);
        // monotone decreasing
        let mut prev = m.gating(0.0);
        for k in 1..=40 {
            let g = m.gating(k as f64 * 0.05);
            assert!(g < prev);
            prev = g;
        }
    }

    #[test]
    fn forcing_matches_lwr_targets_at_centers() {
        // the fitted forcing reproduces the regression targets at the kernel
        // centers within the residual envelope of the fit itself
        let demo = minjerk_demo(4.7, 0.002);
        let models = train_lwr(&demo, 30, 40.0, 10.0).unwrap();
        let m = &models.position;
        let tau = demo.duration();
        let disp = m.demo_goal() - m.anchor();

        let pdot = central_diff(&smooth5(&demo.positions), 0.002);
        let pddot = central_diff(&pdot, 0.002);
        let mut worst_fit: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for (k, &tk) in demo.t.iter().enumerate() {
            let x = tk / tau;
            let forced = tau * tau * pddot[k]
                - m.alpha_z * m.beta_z * (m.demo_goal() - demo.positions[k])
                + m.alpha_z * tau * pdot[k];
            let target = forced.component_div(&(m.gating(x) * disp));
            let err = (m.forcing(x) - target).norm();
            worst_fit = worst_fit.max(err);
            scale = scale.max(target.norm());
        }
        // kernel-center evaluations stay inside the overall residual envelope
        for &c in &m.kernels.centers {
            let f = m.forcing(c);
            assert!(f.norm() <= scale * 1.1, "forcing blowup at center {c}");
        }
        assert!(worst_fit < 0.05 * scale, "LWR residual {worst_fit} vs scale {scale}");
    }

    #[test]
    fn constant_demo_is_degenerate() {
        let mut demo = minjerk_demo(4.7, 0.01);
        for p in demo.positions.iter_mut() {
            *p = Vector3::new(0.1, -0.2, 0.3);
        }
        match train_lwr(&demo, 30, 40.0, 10.0) {
            Err(DmpError::DegenerateDemo { signal: "position" }) => {}
            other => panic!("expected degenerate position demo, got {other:?}"),
        }
    }

    #[test]
    fn rollout_reproduces_demo_within_one_percent() {
        let demo = minjerk_demo(4.7, 0.002);
        let models = trained();
        let q0 = demo.orientations[0];
        let qg = demo.orientations[demo.orientations.len() - 1];
        let traj = rollout(
            &models.position,
            &models.orientation,
            demo.positions[0],
            q0,
            demo.positions[demo.positions.len() - 1],
            qg,
            4.7,
            4.7,
            0.002,
            4.7,
        )
        .unwrap();

        let mut range = Vector3::zeros();
        let mut lo = demo.positions[0];
        let mut hi = demo.positions[0];
        for p in &demo.positions {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        for i in 0..3 {
            range[i] = hi[i] - lo[i];
        }
        let mut sq = Vector3::zeros();
        for (k, pt) in traj.iter().enumerate().take(demo.t.len()) {
            let d = pt.p - demo.positions[k];
            sq += d.component_mul(&d);
        }
        for i in 0..3 {
            let rmse = (sq[i] / demo.t.len() as f64).sqrt();
            assert!(
                rmse < 0.01 * range[i],
                "axis {i}: rmse {rmse} vs 1% of range {}",
                range[i]
            );
        }

        // orientation stays on the z axis and tracks the demo log profile
        for (k, pt) in traj.iter().enumerate().take(demo.t.len()) {
            let q_demo = quat::log(&(demo.orientations[k] * q0.conjugate())).unwrap().0;
            assert!(pt.q_prime.x.abs() < 1e-3);
            assert!(pt.q_prime.y.abs() < 1e-3);
            let err = (pt.q_prime - q_demo).norm();
            assert!(err < 0.01 * (PI / 2.0), "step {k}: orientation error {err}");
        }
    }

    #[test]
    fn pure_spring_damper_without_overshoot() {
        // zero forcing weights → closed-form critically damped step response
        let mut m = trained().position;
        for axis in 0..3 {
            for w in m.kernels.weights[axis].iter_mut() {
                *w = 0.0;
            }
        }
        let m = m.with_anchor(Vector3::zeros());
        let goal = Vector3::new(1.0, 0.0, 0.0);
        let tau = 2.0;
        let (mut y, mut yd) = (Vector3::zeros(), Vector3::zeros());
        let dt = 0.001;
        let mut t = 0.0;
        let mut max_x: f64 = 0.0;
        while t < 3.0 * tau {
            let a = m.accel(y, yd, t, goal, tau);
            yd += a * dt;
            y += yd * dt;
            t += dt;
            max_x = max_x.max(y.x);
            // β_z = α_z/4 → critically damped: y matches
            // 1 − e^{−α t/(2τ)} (1 + α t/(2τ)) on the step axis
            let r = m.alpha_z / (2.0 * tau);
            let closed = 1.0 - (-r * t).exp() * (1.0 + r * t);
            assert!((y.x - closed).abs() < 5e-3, "t={t}: {} vs {closed}", y.x);
        }
        assert!(max_x <= 1.0 + 1e-6, "overshoot to {max_x}");
        assert!((y.x - 1.0).abs() < 1e-4);
    }

    #[test]
    fn equilibrium_acceleration_is_zero() {
        let models = trained();
        let goal = Vector3::new(0.4, 0.1, -0.2);
        // far past the motion end the gate is numerically zero
        let a = models.position.with_anchor(Vector3::zeros()).accel(
            goal,
            Vector3::zeros(),
            1000.0,
            goal,
            4.7,
        );
        assert!(a.norm() < 1e-12);
        let a = models.orientation.accel(goal, Vector3::zeros(), 1000.0, goal, 4.7);
        assert!(a.norm() < 1e-12);
    }

    #[test]
    fn retargeted_rollout_converges() {
        let demo = minjerk_demo(4.7, 0.002);
        let models = trained();
        let q0 = demo.orientations[0];
        let new_p_goal =
            demo.positions[demo.positions.len() - 1] + Vector3::new(0.2, -0.1, 0.1);
        // retarget rotation from 90° to 60° about z
        let new_q_goal = quat::exp(RotVec(Vector3::new(0.0, 0.0, PI / 3.0))).unwrap() * q0;
        let tau = 4.7;
        let traj = rollout(
            &models.position,
            &models.orientation,
            demo.positions[0],
            q0,
            new_p_goal,
            new_q_goal,
            tau,
            tau,
            0.002,
            1.5 * tau,
        )
        .unwrap();
        let last = traj.last().unwrap();
        assert!(
            (last.p - new_p_goal).norm() < 1e-3,
            "position error {}",
            (last.p - new_p_goal).norm()
        );
        let angle = last.q.angle_to(&new_q_goal);
        assert!(angle < 0.5_f64.to_radians(), "orientation error {angle} rad");
    }

    #[test]
    fn temporal_scaling_preserves_path_and_halves_speed() {
        let demo = minjerk_demo(4.7, 0.002);
        let models = trained();
        let q0 = demo.orientations[0];
        let qg = demo.orientations[demo.orientations.len() - 1];
        let pg = demo.positions[demo.positions.len() - 1];
        let p0 = demo.positions[0];
        let run = |tau: f64| {
            rollout(&models.position, &models.orientation, p0, q0, pg, qg, tau, tau, 0.002, tau)
                .unwrap()
        };
        let base = run(4.7);
        let slow = run(9.4);

        let peak = |traj: &[RolloutPoint]| {
            traj.iter().map(|p| p.pdot.norm()).fold(0.0_f64, f64::max)
        };
        let ratio = peak(&slow) / peak(&base);
        assert!((ratio - 0.5).abs() < 0.02, "peak speed ratio {ratio}");

        // geometric path deviation after arc-length resampling < 1% of path length
        let resample = |traj: &[RolloutPoint], m: usize| -> Vec<Vector3<f64>> {
            let mut arcs = vec![0.0];
            for w in traj.windows(2) {
                arcs.push(arcs.last().unwrap() + (w[1].p - w[0].p).norm());
            }
            let total = *arcs.last().unwrap();
            (0..m)
                .map(|i| {
                    let s = total * i as f64 / (m - 1) as f64;
                    let j = arcs.partition_point(|&a| a < s).min(traj.len() - 1).max(1);
                    let (a0, a1) = (arcs[j - 1], arcs[j]);
                    let w = if a1 > a0 { (s - a0) / (a1 - a0) } else { 0.0 };
                    traj[j - 1].p + w * (traj[j].p - traj[j - 1].p)
                })
                .collect()
        };
        let pa = resample(&base, 200);
        let pb = resample(&slow, 200);
        let len: f64 = (pg - p0).norm();
        let dev = pa
            .iter()
            .zip(&pb)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        assert!(dev < 0.01 * len, "path deviation {dev} vs length {len}");
    }

    #[test]
    fn separate_time_scalings_finish_independently() {
        let demo = minjerk_demo(4.7, 0.002);
        let models = trained();
        let q0 = demo.orientations[0];
        let qg = demo.orientations[demo.orientations.len() - 1];
        let pg = demo.positions[demo.positions.len() - 1];
        let traj = rollout(
            &models.position,
            &models.orientation,
            demo.positions[0],
            q0,
            pg,
            qg,
            4.7,
            9.4,
            0.002,
            12.0,
        )
        .unwrap();
        let at = |t: f64| &traj[(t / 0.002).round() as usize];
        // translation essentially done at ~4.7 s
        assert!((at(4.7).p - pg).norm() < 5e-3);
        // rotation still under way at 4.7 s, done by ~9.4 s
        let qg_log = quat::log(&qg.relative(&q0)).unwrap().0;
        assert!((at(4.7).q_prime - qg_log).norm() > 0.1);
        assert!((at(9.4).q_prime - qg_log).norm() < 0.02);
    }

    #[test]
    fn forcing_vanishes_past_motion_end() {
        let models = trained();
        for m in [&models.position, &models.orientation] {
            let max_f = (0..=100)
                .map(|k| m.forcing(k as f64 * 0.01).abs().max())
                .fold(0.0_f64, f64::max);
            for k in 0..=20 {
                let x = 1.05 + 0.05 * k as f64;
                let gated = m.gating(x) * m.forcing(x).abs().max();
                assert!(gated < 1e-2 * max_f, "x = {x}: gated forcing {gated} vs {max_f}");
            }
        }
    }

    #[test]
    fn spatial_scaling_is_componentwise_exact() {
        let models = trained();
        let m = models.position.with_anchor(Vector3::new(0.0, 0.0, 0.0));
        let y = Vector3::new(0.05, 0.05, 0.05);
        let yd = Vector3::new(0.1, -0.1, 0.0);
        let (t, tau) = (1.0, 4.7);
        let g1 = Vector3::new(0.4, 0.2, 0.6);
        let g2 = Vector3::new(0.1, 0.5, -0.3);
        // accel difference between two targets is exactly the attractor part
        // plus the componentwise rescaled forcing
        let x = phase(t, tau);
        let expect = (m.alpha_z * m.beta_z * (g1 - g2)
            + m.gating(x) * (g1 - g2).component_mul(&m.forcing(x)))
            / (tau * tau);
        let got = m.accel(y, yd, t, g1, tau) - m.accel(y, yd, t, g2, tau);
        assert_relative_eq!(got, expect, epsilon = 1e-12);
    }

    #[test]
    fn goal_change_leaves_state_terms_untouched() {
        // the orientation DMP's dependence on the goal estimate is confined to
        // the attractor and scaling terms: perturbing q′_g changes the accel
        // by exactly (α_z β_z Δ + g_f Δ∘f)/τ², independent of (q′, q̇′)
        let models = trained();
        let m = &models.orientation;
        let tau = 4.7;
        let goal = m.demo_goal();
        let delta = Vector3::new(0.05, -0.03, 0.08);
        for k in 0..10 {
            let t = 0.5 * k as f64;
            let x = phase(t, tau);
            let qp = Vector3::new(0.1, 0.2, -0.1) * (k as f64 / 10.0);
            let qpd = Vector3::new(-0.2, 0.1, 0.3) * ((10 - k) as f64 / 10.0);
            let base = m.accel(qp, qpd, t, goal, tau);
            let pert = m.accel(qp, qpd, t, goal + delta, tau);
            let expect =
                (m.alpha_z * m.beta_z * delta + m.gating(x) * delta.component_mul(&m.forcing(x)))
                    / (tau * tau);
            assert_relative_eq!(pert - base, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn model_json_round_trip() {
        let models = trained();
        for m in [&models.position, &models.orientation] {
            let s = m.to_json();
            let back = DmpModel::from_json(&s).unwrap();
            assert_eq!(m.kind, back.kind);
            assert_eq!(m.kernels.centers, back.kernels.centers);
            assert_eq!(m.kernels.weights, back.kernels.weights);
            assert_relative_eq!(m.demo_goal(), back.demo_goal(), epsilon = 1e-12);
        }
    }

    #[test]
    fn goal_convergence_across_targets_and_scalings() {
        let models = trained();
        let p0 = Vector3::new(0.1, -0.2, 0.3);
        let q0 = UnitQuaternion::identity();
        for (dx, tau) in [(0.3, 1.0), (-0.4, 4.7), (0.25, 20.0)] {
            let pg = p0 + Vector3::new(dx, 0.2, -0.15);
            let qg = UnitQuaternion::from_axis_angle(Vector3::new(1.0, 1.0, 0.0), 0.8);
            let traj = rollout(
                &models.position, &models.orientation, p0, q0, pg, qg, tau, tau, 0.002, 3.0 * tau,
            )
            .unwrap();
            let last = traj.last().unwrap();
            assert!((last.p - pg).norm() < 1e-4, "tau {tau}: {}", (last.p - pg).norm());
            assert!(last.q.angle_to(&qg) < 1e-3, "tau {tau}: {}", last.q.angle_to(&qg));
            assert!(last.pdot.norm() < 1e-4);
        }
    }
}
