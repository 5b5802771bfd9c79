//! Constrained fading-memory EKF estimating the motion target and time
//! scaling from interaction wrenches.
//!
//! Two independent four-state filters run side by side: `θ_p = [p_gᵀ, τ_p]ᵀ`
//! driven by the external force and `θ_o = [q′_gᵀ, τ_o]ᵀ` driven by the
//! external torque. The measurement function is the DMP acceleration itself;
//! in closed loop with the reference model the innovation equals
//! `M⁻¹ν` (ν the wrench), so the filter never differentiates the state.
//!
//! The discrete realization used here is the standard discrete fading-memory
//! EKF: covariance predict `P⁻ ← e^{2 a_p dt} P + Q_n dt` (the exact
//! discretization of the continuous fading term `2 a_p P`, i.e. a per-step
//! factor `α² = e^{2 a_p dt}`), per-sample projected gain
//! `K = N P⁻ C̄ᵀ (C̄ P⁻ C̄ᵀ + R)⁻¹` (equal to the continuous-form
//! `N P C̄ᵀ R⁻¹` in the `‖C̄ P C̄ᵀ‖ ≪ ‖R‖` regime the filter operates in),
//! estimate update `θ̂ ← θ̂ + K M⁻¹ ν / c_n` applied once per control sample,
//! Joseph-form covariance update, spectral norm cap `‖P‖ ≤ ρ₂` (P frozen for
//! the step once the cap would be crossed), and a least-squares projection
//! matrix `N` built from the active box constraints. The measurement matrix
//! is normalized by `c_n = √(1 + λ_max(C Cᵀ))`, which bounds the update law
//! regardless of the state magnitude.

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Matrix4x3, SymmetricEigen, Vector3, Vector4};
use thiserror::Error;

use crate::dmp::{DmpKind, DmpModel};
use crate::quat::{self, QuatError, UnitQuaternion};

#[derive(Debug, Error)]
pub enum ObserverError {
    #[error("invalid observer configuration: {0}")]
    Config(String),
    #[error("covariance lost positive semidefiniteness (min eigenvalue {min_eig:e})")]
    Numerical { min_eig: f64 },
    #[error(transparent)]
    Quat(#[from] QuatError),
}

/// Noise covariances, fading factor, covariance cap and estimate box.
#[derive(Debug, Clone, PartialEq)]
pub struct ObserverConfig {
    pub r: Matrix3<f64>,
    pub qn: Matrix4<f64>,
    pub p0: Matrix4<f64>,
    pub a_p: f64,
    pub rho2: f64,
    pub theta_lower: Vector4<f64>,
    pub theta_upper: Vector4<f64>,
}

impl ObserverConfig {
    /// Position-filter defaults: `R = 2000 I₃`, `Q_n = 0.001 I₄`,
    /// `P₀ = diag(1,1,1,10)`, `a_p = 1.001`, `ρ₂ = 10⁴`, workspace box
    /// `[-0.75, 0.75]×[-0.7, 0.7]×[-0.2, 0.95]`, `τ ∈ [1, 60]`.
    pub fn default_position() -> Self {
        ObserverConfig {
            r: Matrix3::identity() * 2000.0,
            qn: Matrix4::identity() * 0.001,
            p0: Matrix4::from_diagonal(&Vector4::new(1.0, 1.0, 1.0, 10.0)),
            a_p: 1.001,
            rho2: 10_000.0,
            theta_lower: Vector4::new(-0.75, -0.7, -0.2, 1.0),
            theta_upper: Vector4::new(0.75, 0.7, 0.95, 60.0),
        }
    }

    /// Orientation-filter defaults: same noise terms, `q′_g ∈ [-2π, 2π]³`.
    pub fn default_orientation() -> Self {
        let b = std::f64::consts::TAU;
        ObserverConfig {
            theta_lower: Vector4::new(-b, -b, -b, 1.0),
            theta_upper: Vector4::new(b, b, b, 60.0),
            ..Self::default_position()
        }
    }

    pub fn validate(&self) -> Result<(), ObserverError> {
        let sym = |m: &Matrix4<f64>| (m - m.transpose()).norm() < 1e-12;
        if (self.r - self.r.transpose()).norm() > 1e-12 {
            return Err(ObserverError::Config("R must be symmetric".into()));
        }
        if !sym(&self.qn) || !sym(&self.p0) {
            return Err(ObserverError::Config("Qn and P0 must be symmetric".into()));
        }
        if self.r.symmetric_eigenvalues().min() <= 0.0 {
            return Err(ObserverError::Config("R must be positive definite".into()));
        }
        if self.qn.symmetric_eigenvalues().min() <= 0.0
            || self.p0.symmetric_eigenvalues().min() <= 0.0
        {
            return Err(ObserverError::Config("Qn and P0 must be positive definite".into()));
        }
        if self.a_p <= 0.0 || self.rho2 <= 0.0 {
            return Err(ObserverError::Config("a_p and rho2 must be positive".into()));
        }
        for i in 0..4 {
            if self.theta_lower[i] >= self.theta_upper[i] {
                return Err(ObserverError::Config("bounds must satisfy lower < upper".into()));
            }
        }
        if self.theta_lower[3] <= 0.0 {
            return Err(ObserverError::Config("time-scaling lower bound must be positive".into()));
        }
        if self.p0.symmetric_eigenvalues().max() > self.rho2 {
            return Err(ObserverError::Config("initial covariance exceeds the cap rho2".into()));
        }
        Ok(())
    }
}

/// Filter state: estimate, covariance, and the last normalized Jacobian.
#[derive(Debug, Clone)]
pub struct ObserverState {
    pub theta_hat: Vector4<f64>,
    pub p: Matrix4<f64>,
    pub last_c_bar: Matrix3x4<f64>,
    pub last_c_n: f64,
}

/// Per-step diagnostics (logged to the estimate trace).
#[derive(Debug, Clone, Copy)]
pub struct StepDiag {
    pub c_n: f64,
    /// Spectral norm of P after the step.
    pub p_norm: f64,
    /// Active constraints: bits 0–3 upper bounds, bits 4–7 lower bounds.
    pub active_mask: u8,
    /// Applied per-sample estimate increment `K M⁻¹ ν / c_n` (post-projection).
    pub theta_dot: Vector4<f64>,
    pub gain_norm: f64,
    /// Whether the covariance was frozen by the `ρ₂` cap this step.
    pub frozen: bool,
}

/// `C̄ = C/c_n` with `c_n = √(1 + λ_max(C Cᵀ))`, guaranteeing
/// `λ_max(C̄ C̄ᵀ) < 1`.
pub fn normalization(c: &Matrix3x4<f64>) -> (Matrix3x4<f64>, f64) {
    let ct: Matrix4x3<f64> = c.transpose();
    let cct: Matrix3<f64> = c * ct;
    let lmax = cct.symmetric_eigenvalues().max().max(0.0);
    let c_n = (1.0 + lmax).sqrt();
    (c / c_n, c_n)
}

/// Least-squares projection matrix `N = I₄ − D̄ᵀ(D̄ D̄ᵀ)⁻¹ D̄` over the active
/// rows of the box constraints `D θ ≤ d`, `D = [I₄; −I₄]`.
///
/// A row is active when its bound holds with equality (1e-9) and the update
/// direction `θ̇` points outward. Returns the matrix and the active bitmask
/// (bits 0–3 upper, 4–7 lower).
pub fn projection_matrix(
    theta: &Vector4<f64>,
    theta_dot: &Vector4<f64>,
    lower: &Vector4<f64>,
    upper: &Vector4<f64>,
) -> (Matrix4<f64>, u8) {
    let mut active: Vec<Vector4<f64>> = Vec::new();
    let mut mask = 0u8;
    for j in 0..4 {
        if theta[j] >= upper[j] - 1e-9 && theta_dot[j] > 0.0 {
            let mut row = Vector4::zeros();
            row[j] = 1.0;
            active.push(row);
            mask |= 1 << j;
        } else if theta[j] <= lower[j] + 1e-9 && theta_dot[j] < 0.0 {
            let mut row = Vector4::zeros();
            row[j] = -1.0;
            active.push(row);
            mask |= 1 << (4 + j);
        }
    }
    if active.is_empty() {
        return (Matrix4::identity(), 0);
    }
    let k = active.len();
    let mut dbar = nalgebra::DMatrix::<f64>::zeros(k, 4);
    for (i, row) in active.iter().enumerate() {
        for j in 0..4 {
            dbar[(i, j)] = row[j];
        }
    }
    let gram = &dbar * dbar.transpose();
    let gram_inv = gram.try_inverse().expect("active constraint rows are independent");
    let proj = dbar.transpose() * gram_inv * dbar;
    let mut n = Matrix4::identity();
    for i in 0..4 {
        for j in 0..4 {
            n[(i, j)] -= proj[(i, j)];
        }
    }
    (n, mask)
}

/// The filter recursion, independent of the measurement model.
///
/// Callers supply the (unnormalized) Jacobian `C` and the innovation `M⁻¹ν`
/// each step.
#[derive(Debug, Clone)]
pub struct EkfCore {
    pub config: ObserverConfig,
    pub state: ObserverState,
}

struct Attempt {
    p: Matrix4<f64>,
    p_max: f64,
    min_eig: f64,
    theta_dot: Vector4<f64>,
    gain_norm: f64,
    mask: u8,
}

impl EkfCore {
    pub fn new(config: ObserverConfig, theta0: Vector4<f64>) -> Result<Self, ObserverError> {
        config.validate()?;
        for j in 0..4 {
            if theta0[j] < config.theta_lower[j] || theta0[j] > config.theta_upper[j] {
                return Err(ObserverError::Config(format!(
                    "initial estimate component {j} outside the box"
                )));
            }
        }
        let state = ObserverState {
            theta_hat: theta0,
            p: config.p0,
            last_c_bar: Matrix3x4::zeros(),
            last_c_n: 1.0,
        };
        Ok(EkfCore { config, state })
    }

    pub fn theta(&self) -> Vector4<f64> {
        self.state.theta_hat
    }

    /// One discrete filter step with measurement matrix `c` and innovation
    /// `M⁻¹ν`.
    pub fn step_with(
        &mut self,
        c: Matrix3x4<f64>,
        innovation: Vector3<f64>,
        dt: f64,
    ) -> Result<StepDiag, ObserverError> {
        assert!(dt > 0.0, "time step must be positive");
        let cfg = &self.config;
        let (c_bar, c_n) = normalization(&c);
        let innov_n = innovation / c_n;
        let theta0 = self.state.theta_hat;

        // one filter attempt from a given predicted covariance: projected
        // per-sample gain, Joseph covariance update, eigenvalue repair
        let attempt = |p_pred: Matrix4<f64>| -> Result<Attempt, ObserverError> {
            let s_mat: Matrix3<f64> = c_bar * p_pred * c_bar.transpose() + cfg.r;
            let s_inv = s_mat
                .try_inverse()
                .ok_or(ObserverError::Numerical { min_eig: f64::NAN })?;
            // pre-projection update direction decides the active set
            let theta_dot_raw: Vector4<f64> = p_pred * c_bar.transpose() * s_inv * innov_n;
            let (n_mat, mask) =
                projection_matrix(&theta0, &theta_dot_raw, &cfg.theta_lower, &cfg.theta_upper);
            let k_gain: Matrix4x3<f64> = n_mat * p_pred * c_bar.transpose() * s_inv;
            let ikc = Matrix4::identity() - k_gain * c_bar;
            let mut p_cand =
                ikc * p_pred * ikc.transpose() + k_gain * cfg.r * k_gain.transpose();
            p_cand = (p_cand + p_cand.transpose()) * 0.5;
            let mut eig = SymmetricEigen::new(p_cand);
            let min_eig = eig.eigenvalues.min();
            for ev in eig.eigenvalues.iter_mut() {
                if *ev < 0.0 {
                    *ev = 0.0;
                }
            }
            let repaired = eig.recompose();
            Ok(Attempt {
                p: (repaired + repaired.transpose()) * 0.5,
                p_max: eig.eigenvalues.max(),
                min_eig,
                theta_dot: n_mat * theta_dot_raw,
                gain_norm: k_gain.norm(),
                mask,
            })
        };

        // fading-memory predict (exact discretization of the 2 a_p P term)
        let p_faded = self.state.p * (2.0 * cfg.a_p * dt).exp() + cfg.qn * dt;
        let mut res = attempt(p_faded)?;
        let mut frozen = false;
        if res.p_max > cfg.rho2 {
            // spectral cap: P is frozen for the step once it would be crossed
            res.p = self.state.p;
            res.p_max = self.state.p.symmetric_eigenvalues().max();
            frozen = true;
        }

        self.state.p = res.p;

        // per-sample estimate update and residual clamp
        let mut theta = theta0 + res.theta_dot;
        for j in 0..4 {
            theta[j] = theta[j].clamp(cfg.theta_lower[j], cfg.theta_upper[j]);
        }
        self.state.theta_hat = theta;
        self.state.last_c_bar = c_bar;
        self.state.last_c_n = c_n;

        let diag = StepDiag {
            c_n,
            p_norm: res.p_max,
            active_mask: res.mask,
            theta_dot: res.theta_dot,
            gain_norm: res.gain_norm,
            frozen,
        };
        if res.min_eig < -1e-10 {
            return Err(ObserverError::Numerical { min_eig: res.min_eig });
        }
        Ok(diag)
    }
}

/// Target/time-scaling filter for translation, measurement `z_p = p̈`.
#[derive(Debug, Clone)]
pub struct PositionObserver {
    pub core: EkfCore,
    model: DmpModel,
}

impl PositionObserver {
    /// `model` must be the position DMP re-anchored at the episode start.
    pub fn new(
        model: &DmpModel,
        config: ObserverConfig,
        theta0: Vector4<f64>,
    ) -> Result<Self, ObserverError> {
        if model.kind != DmpKind::Position {
            return Err(ObserverError::Config("position observer needs a position model".into()));
        }
        Ok(PositionObserver { core: EkfCore::new(config, theta0)?, model: model.clone() })
    }

    /// `h_p`: the DMP acceleration at `(θ, s_p, t)`.
    pub fn measurement(
        &self,
        theta: &Vector4<f64>,
        p: Vector3<f64>,
        pdot: Vector3<f64>,
        t: f64,
    ) -> Vector3<f64> {
        self.model.accel(p, pdot, t, theta.fixed_rows::<3>(0).into_owned(), theta[3])
    }

    /// Analytic `C(t) = ∂h_p/∂θ` at `θ`.
    pub fn jacobian(
        &self,
        theta: &Vector4<f64>,
        p: Vector3<f64>,
        pdot: Vector3<f64>,
        t: f64,
    ) -> Matrix3x4<f64> {
        self.model
            .accel_jacobian_theta(p, pdot, t, theta.fixed_rows::<3>(0).into_owned(), theta[3])
    }

    /// Filter step driven by the external force.
    pub fn step(
        &mut self,
        p: Vector3<f64>,
        pdot: Vector3<f64>,
        t: f64,
        f_ext: Vector3<f64>,
        m_p_inv: Vector3<f64>,
        dt: f64,
    ) -> Result<StepDiag, ObserverError> {
        let c = self.jacobian(&self.core.state.theta_hat, p, pdot, t);
        self.core.step_with(c, m_p_inv.component_mul(&f_ext), dt)
    }
}

/// Target/time-scaling filter for orientation, measurement `z_o = ω̇`.
#[derive(Debug, Clone)]
pub struct OrientationObserver {
    pub core: EkfCore,
    model: DmpModel,
}

impl OrientationObserver {
    pub fn new(
        model: &DmpModel,
        config: ObserverConfig,
        theta0: Vector4<f64>,
    ) -> Result<Self, ObserverError> {
        if model.kind != DmpKind::Orientation {
            return Err(ObserverError::Config(
                "orientation observer needs an orientation model".into(),
            ));
        }
        Ok(OrientationObserver { core: EkfCore::new(config, theta0)?, model: model.clone() })
    }

    /// `h_o = vec{2 (J̇_q' q̇' + J_q' q̈') * Q̄'}` with `q̈'` from the DMP at `θ`.
    ///
    /// `q_rel` is the anchored orientation `Q' = Q * conj(Q₀)`.
    pub fn measurement(
        &self,
        theta: &Vector4<f64>,
        q_rel: &UnitQuaternion,
        omega: Vector3<f64>,
        t: f64,
    ) -> Result<Vector3<f64>, ObserverError> {
        let qp = quat::log(q_rel)?;
        let qpd = quat::qdot_from_omega(q_rel, omega)?;
        let qddot =
            self.model.accel(qp.0, qpd, t, theta.fixed_rows::<3>(0).into_owned(), theta[3]);
        Ok(quat::omega_map(qp) * qddot + quat::omega_map_bias(qp, qpd))
    }

    /// Analytic `C(t) = ∂h_o/∂θ`: the state-only terms drop out and the
    /// quaternion products are a fixed linear map applied to `∂q̈'/∂θ`.
    pub fn jacobian(
        &self,
        theta: &Vector4<f64>,
        q_rel: &UnitQuaternion,
        omega: Vector3<f64>,
        t: f64,
    ) -> Result<Matrix3x4<f64>, ObserverError> {
        let qp = quat::log(q_rel)?;
        let qpd = quat::qdot_from_omega(q_rel, omega)?;
        let inner = self.model.accel_jacobian_theta(
            qp.0,
            qpd,
            t,
            theta.fixed_rows::<3>(0).into_owned(),
            theta[3],
        );
        Ok(quat::omega_map(qp) * inner)
    }

    /// Filter step driven by the external torque.
    pub fn step(
        &mut self,
        q_rel: &UnitQuaternion,
        omega: Vector3<f64>,
        t: f64,
        tau_ext: Vector3<f64>,
        m_o_inv: Vector3<f64>,
        dt: f64,
    ) -> Result<StepDiag, ObserverError> {
        let c = self.jacobian(&self.core.state.theta_hat, q_rel, omega, t)?;
        self.core.step_with(c, m_o_inv.component_mul(&tau_ext), dt)
    }
}
