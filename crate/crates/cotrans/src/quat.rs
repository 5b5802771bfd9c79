//! Unit-quaternion algebra and the kinematic maps between quaternion-log
//! coordinates and angular velocity / acceleration.
//!
//! Quaternions are Hamilton convention, scalar-first `[w, vᵀ]`. The rotation
//! vector `q = log(Q)` carries the full rotation angle (`‖q‖ = 2θ` for a
//! half-angle `θ`), restricted to `‖q‖ < 2π` so that `exp` and `log` are
//! inverse bijections on `S³ ∖ {(-1,0,0,0)}`.

use nalgebra::{Matrix3, Matrix3x4, Matrix4x3, Vector3};
use rand::Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Unit-norm tolerance maintained by every operation that returns a quaternion.
pub const UNIT_NORM_TOL: f64 = 1e-9;

/// Radius of the neighborhood of `(-1, 0, 0, 0)` excluded from `log`'s domain.
pub const LOG_EXCLUSION: f64 = 1e-8;

/// Half-angle below which the trig ratios in the Jacobians switch to series.
///
/// The closed forms are 0/0 at zero and the `θcosθ - sinθ` numerators cancel
/// catastrophically well before that; at 0.02 rad both branches agree to
/// ~1e-12 relative.
const SERIES_HALF_ANGLE: f64 = 0.02;

#[derive(Debug, Error, PartialEq)]
pub enum QuatError {
    #[error("quaternion logarithm undefined within {LOG_EXCLUSION:e} of (-1,0,0,0) (distance {dist:e})")]
    LogDomain { dist: f64 },
    #[error("rotation vector norm {norm} outside the exponential's domain [0, 2*pi)")]
    ExpDomain { norm: f64 },
    #[error("reconstructed quaternion rate has scalar part {scalar:e}, expected < 1e-6")]
    Consistency { scalar: f64 },
}

/// Rotation vector: the quaternion logarithm, axis scaled by rotation angle.
///
/// Invariant: `‖q‖ < 2π`. Producers (`log`) satisfy it by construction;
/// `exp` rejects violations with [`QuatError::ExpDomain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotVec(pub Vector3<f64>);

impl RotVec {
    pub fn zero() -> Self {
        RotVec(Vector3::zeros())
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }
}

impl From<Vector3<f64>> for RotVec {
    fn from(v: Vector3<f64>) -> Self {
        RotVec(v)
    }
}

/// Orientation as a unit quaternion `[w, vᵀ]`, Hamilton convention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnitQuaternion {
    pub w: f64,
    pub v: Vector3<f64>,
}

impl UnitQuaternion {
    /// Normalizing constructor. Panics if the input norm is below 1e-12.
    pub fn new(w: f64, v: Vector3<f64>) -> Self {
        let n = (w * w + v.norm_squared()).sqrt();
        assert!(n > 1e-12, "cannot normalize a near-zero quaternion");
        UnitQuaternion { w: w / n, v: v / n }
    }

    pub fn identity() -> Self {
        UnitQuaternion { w: 1.0, v: Vector3::zeros() }
    }

    pub fn from_wxyz(c: [f64; 4]) -> Self {
        Self::new(c[0], Vector3::new(c[1], c[2], c[3]))
    }

    pub fn wxyz(&self) -> [f64; 4] {
        [self.w, self.v.x, self.v.y, self.v.z]
    }

    /// Rotation of `angle` radians about `axis` (need not be unit length).
    pub fn from_axis_angle(axis: Vector3<f64>, angle: f64) -> Self {
        let n = axis.norm();
        if n < 1e-12 {
            return Self::identity();
        }
        let half = 0.5 * angle;
        UnitQuaternion { w: half.cos(), v: axis * (half.sin() / n) }
    }

    pub fn norm(&self) -> f64 {
        (self.w * self.w + self.v.norm_squared()).sqrt()
    }

    /// Conjugate `(w, -v)`; equal to the inverse for unit quaternions.
    pub fn conjugate(&self) -> Self {
        UnitQuaternion { w: self.w, v: -self.v }
    }

    /// Sign-flipped onto the `w >= 0` hemisphere (same rotation).
    pub fn canonicalized(&self) -> Self {
        if self.w < 0.0 {
            UnitQuaternion { w: -self.w, v: -self.v }
        } else {
            *self
        }
    }

    /// Relative rotation `self * conj(base)`, canonicalized to `w >= 0` so the
    /// logarithm picks the short geodesic. Use the raw product instead when
    /// tracking a continuous trajectory.
    pub fn relative(&self, base: &UnitQuaternion) -> Self {
        (*self * base.conjugate()).canonicalized()
    }

    /// Geodesic angle to `other`, in radians.
    pub fn angle_to(&self, other: &UnitQuaternion) -> f64 {
        // |w| of the relative quaternion is cos(angle/2)
        let rel = *self * other.conjugate();
        2.0 * rel.w.abs().min(1.0).acos()
    }

    /// Rotate a vector by this quaternion (`Q * [0,x] * Q̄`).
    pub fn rotate(&self, x: Vector3<f64>) -> Vector3<f64> {
        let t = 2.0 * self.v.cross(&x);
        x + self.w * t + self.v.cross(&t)
    }

    /// Quaternion uniformly distributed on S³ (Gaussian 4-vector, normalized).
    pub fn sample_uniform<R: Rng>(rng: &mut R) -> Self {
        let mut normal = || {
            // Box-Muller; u1 bounded away from 0
            let u1: f64 = rng.random_range(1e-12..1.0);
            let u2: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            (-2.0 * u1.ln()).sqrt() * u2.cos()
        };
        let c = [normal(), normal(), normal(), normal()];
        let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3]).sqrt();
        if n < 1e-9 {
            return Self::identity();
        }
        UnitQuaternion { w: c[0] / n, v: Vector3::new(c[1], c[2], c[3]) / n }
    }
}

impl std::ops::Mul for UnitQuaternion {
    type Output = UnitQuaternion;

    /// Hamilton product, renormalized.
    fn mul(self, rhs: UnitQuaternion) -> UnitQuaternion {
        let (w, v) = mul_raw((self.w, self.v), (rhs.w, rhs.v));
        UnitQuaternion::new(w, v)
    }
}

impl Serialize for UnitQuaternion {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.wxyz().serialize(s)
    }
}

impl<'de> Deserialize<'de> for UnitQuaternion {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let c = <[f64; 4]>::deserialize(d)?;
        let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2] + c[3] * c[3]).sqrt();
        if (n - 1.0).abs() > 1e-6 {
            return Err(serde::de::Error::custom(format!(
                "quaternion norm {n} deviates from 1 by more than 1e-6"
            )));
        }
        Ok(Self::from_wxyz(c))
    }
}

/// Hamilton product of general (not necessarily unit) quaternions.
fn mul_raw(a: (f64, Vector3<f64>), b: (f64, Vector3<f64>)) -> (f64, Vector3<f64>) {
    (a.0 * b.0 - a.1.dot(&b.1), a.0 * b.1 + b.0 * a.1 + a.1.cross(&b.1))
}

/// Quaternion logarithm: `2 cos⁻¹(w) v/‖v‖`, zero when `v = 0`.
///
/// Computed via `atan2(‖v‖, w)`, which is stable over the whole domain; the
/// `‖v‖ < 1e-8` branch switches to the series of `2 atan2(‖v‖, w)/‖v‖`.
pub fn log(q: &UnitQuaternion) -> Result<RotVec, QuatError> {
    let vn = q.v.norm();
    let dist = ((q.w + 1.0) * (q.w + 1.0) + vn * vn).sqrt();
    if dist < LOG_EXCLUSION {
        return Err(QuatError::LogDomain { dist });
    }
    if vn < 1e-8 {
        // here w ≈ +1 (w ≈ -1 falls inside the exclusion ball)
        let x2 = (vn / q.w) * (vn / q.w);
        return Ok(RotVec(q.v * ((2.0 / q.w) * (1.0 - x2 / 3.0))));
    }
    let half_angle = vn.atan2(q.w);
    Ok(RotVec(q.v * (2.0 * half_angle / vn)))
}

/// Quaternion exponential: `(cos(‖q‖/2), sin(‖q‖/2) q/‖q‖)`.
pub fn exp(q: RotVec) -> Result<UnitQuaternion, QuatError> {
    let n = q.norm();
    if n >= std::f64::consts::TAU {
        return Err(QuatError::ExpDomain { norm: n });
    }
    let theta = 0.5 * n;
    let s = if n < 1e-8 {
        0.5 * (1.0 - theta * theta / 6.0)
    } else {
        theta.sin() / n
    };
    Ok(UnitQuaternion::new(theta.cos(), q.0 * s))
}

// Scalar coefficient functions of the half-angle θ = ‖q‖/2. Each has a series
// branch below SERIES_HALF_ANGLE covering the 0/0 and cancellation region.

/// sin θ / θ
fn coeff_a(theta: f64) -> f64 {
    let t2 = theta * theta;
    if theta < SERIES_HALF_ANGLE {
        1.0 - t2 / 6.0 + t2 * t2 / 120.0
    } else {
        theta.sin() / theta
    }
}

/// θ / sin θ
fn coeff_f(theta: f64) -> f64 {
    let t2 = theta * theta;
    if theta < SERIES_HALF_ANGLE {
        1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0
    } else {
        theta / theta.sin()
    }
}

/// (θ cos θ - sin θ) / (2 θ sin²θ): scaled first column of J_Q
fn coeff_g(theta: f64) -> f64 {
    let t2 = theta * theta;
    if theta < SERIES_HALF_ANGLE {
        -1.0 / 6.0 - 7.0 * t2 / 180.0 - 31.0 * t2 * t2 / 5040.0
    } else {
        let s = theta.sin();
        (theta * theta.cos() - s) / (2.0 * theta * s * s)
    }
}

/// (cos θ - sin θ/θ) / ‖q‖²: the q qᵀ coefficient inside J_q
fn coeff_c(theta: f64) -> f64 {
    let t2 = theta * theta;
    if theta < SERIES_HALF_ANGLE {
        -1.0 / 12.0 + t2 / 120.0 - t2 * t2 / 3360.0
    } else {
        (theta.cos() - theta.sin() / theta) / (4.0 * t2)
    }
}

/// d(sin θ/θ)/du with u = ‖q‖² (chain rule through θ = √u / 2)
fn coeff_a_prime(theta: f64) -> f64 {
    let t2 = theta * theta;
    if theta < SERIES_HALF_ANGLE {
        (-1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0) / 8.0
    } else {
        (theta * theta.cos() - theta.sin()) / (8.0 * t2 * theta)
    }
}

/// d(coeff_c)/du with u = ‖q‖²
fn coeff_c_prime(theta: f64) -> f64 {
    let t2 = theta * theta;
    if theta < SERIES_HALF_ANGLE {
        1.0 / 480.0 - t2 / 6720.0 + t2 * t2 / 241920.0
    } else {
        let (s, c) = (theta.sin(), theta.cos());
        let n = c - s / theta;
        let np = -s - c / theta + s / (t2);
        np / (32.0 * t2 * theta) - n / (16.0 * t2 * t2)
    }
}

/// The 3×4 matrix `J_Q` of `q̇ = J_Q (Ω * Q)`, with `Ω = [0, ωᵀ]ᵀ`.
///
/// `J_Q(q) = 2 [g(θ)·q | (θ/sinθ)·I₃]`; the θ→0 limit is `2 [0 | I₃]`.
pub fn j_log(q: RotVec) -> Matrix3x4<f64> {
    let theta = 0.5 * q.norm();
    let g = coeff_g(theta);
    let f = coeff_f(theta);
    let mut m = Matrix3x4::zeros();
    for i in 0..3 {
        m[(i, 0)] = 2.0 * g * q.0[i];
        m[(i, i + 1)] = 2.0 * f;
    }
    m
}

/// The 4×3 matrix `J_q` of `Ω = 2 (J_q q̇) * Q̄`.
///
/// `J_q(q) = ½ [-(A/2)·qᵀ ; A·I₃ + C·q qᵀ]` with `A = sinθ/θ`;
/// the θ→0 limit is `½ [0ᵀ; I₃]`.
pub fn j_exp(q: RotVec) -> Matrix4x3<f64> {
    let theta = 0.5 * q.norm();
    let a = coeff_a(theta);
    let c = coeff_c(theta);
    let mut m = Matrix4x3::zeros();
    for j in 0..3 {
        m[(0, j)] = -0.25 * a * q.0[j];
        for i in 0..3 {
            m[(i + 1, j)] = 0.5 * c * q.0[i] * q.0[j];
        }
        m[(j + 1, j)] += 0.5 * a;
    }
    m
}

/// Time derivative `J̇_q` along `(q, q̇)`, differentiated analytically through
/// the coefficient functions of `u = ‖q‖²`.
pub fn j_exp_dot(q: RotVec, qdot: Vector3<f64>) -> Matrix4x3<f64> {
    let theta = 0.5 * q.norm();
    let a = coeff_a(theta);
    let c = coeff_c(theta);
    let udot = 2.0 * q.0.dot(&qdot);
    let a_dot = coeff_a_prime(theta) * udot;
    let c_dot = coeff_c_prime(theta) * udot;
    let mut m = Matrix4x3::zeros();
    for j in 0..3 {
        m[(0, j)] = -0.25 * (a_dot * q.0[j] + a * qdot[j]);
        for i in 0..3 {
            m[(i + 1, j)] = 0.5
                * (c_dot * q.0[i] * q.0[j] + c * (qdot[i] * q.0[j] + q.0[i] * qdot[j]));
        }
        m[(j + 1, j)] += 0.5 * a_dot;
    }
    m
}

/// The 3×3 linear map `L(q)` with `ω = L(q) q̇`, i.e. `δ ↦ vec{2 (J_q δ) * Q̄}`
/// for `Q = exp(q)`.
///
/// Closed form: `L = wA·I + (A²/4 + wC)·q qᵀ + (A²/2)·[q]ₓ`.
pub fn omega_map(q: RotVec) -> Matrix3<f64> {
    let theta = 0.5 * q.norm();
    let a = coeff_a(theta);
    let c = coeff_c(theta);
    let w = theta.cos();
    let qq = q.0 * q.0.transpose();
    let mut skew = Matrix3::zeros();
    skew[(0, 1)] = -q.0.z;
    skew[(0, 2)] = q.0.y;
    skew[(1, 0)] = q.0.z;
    skew[(1, 2)] = -q.0.x;
    skew[(2, 0)] = -q.0.y;
    skew[(2, 1)] = q.0.x;
    Matrix3::identity() * (w * a) + qq * (a * a / 4.0 + w * c) + skew * (a * a / 2.0)
}

/// `vec{2 (J̇_q q̇) * Q̄}`: the rate-dependent part of `ω̇ = L q̈ + bias(q, q̇)`.
pub fn omega_map_bias(q: RotVec, qdot: Vector3<f64>) -> Vector3<f64> {
    let jd = j_exp_dot(q, qdot) * qdot;
    let qq = exp(q).expect("rotation vector within domain");
    let (_, v) = mul_raw((2.0 * jd[0], 2.0 * jd.fixed_rows::<3>(1).into_owned()),
                         (qq.w, -qq.v));
    v
}

/// `q̇ = J_Q Q̇ = J_Q (½ Ω * Q)` with `Ω = [0, ωᵀ]ᵀ` and `q = log(Q)`.
///
/// The ½ comes from `Q̇ = ½ Ω * Q`; with it, this map and
/// [`omega_from_qdot`] are exact inverses.
pub fn qdot_from_omega(q: &UnitQuaternion, omega: Vector3<f64>) -> Result<Vector3<f64>, QuatError> {
    let rv = log(q)?;
    let (pw, pv) = mul_raw((0.0, 0.5 * omega), (q.w, q.v));
    let jl = j_log(rv);
    let mut out = Vector3::zeros();
    for i in 0..3 {
        out[i] = jl[(i, 0)] * pw + jl[(i, 1)] * pv.x + jl[(i, 2)] * pv.y + jl[(i, 3)] * pv.z;
    }
    Ok(out)
}

/// `Ω = 2 (J_q q̇) * Q̄`; returns the vector part.
///
/// The scalar part of the reconstruction vanishes identically for consistent
/// inputs; it is checked and [`QuatError::Consistency`] raised past 1e-6.
pub fn omega_from_qdot(q: &UnitQuaternion, qdot: Vector3<f64>) -> Result<Vector3<f64>, QuatError> {
    let rv = log(q)?;
    let r = j_exp(rv) * qdot;
    let (sw, sv) = mul_raw((2.0 * r[0], 2.0 * r.fixed_rows::<3>(1).into_owned()),
                           (q.w, -q.v));
    if sw.abs() > 1e-6 {
        return Err(QuatError::Consistency { scalar: sw });
    }
    Ok(sv)
}

/// `ω̇ = vec{2 (J̇_q q̇ + J_q q̈) * Q̄}`.
///
/// Differentiating `Ω = 2 (J_q q̇) * Q̄` gives
/// `Ω̇ = 2 (J̇_q q̇ + J_q q̈) * Q̄ + ½ [‖ω‖², 0ᵀ]ᵀ`; the `‖ω‖²` term is pure
/// scalar, so it never reaches `ω̇`. `omega` enters only the scalar-part
/// consistency check (debug builds).
pub fn omegadot_from_qddot(
    q: &UnitQuaternion,
    qdot: Vector3<f64>,
    qddot: Vector3<f64>,
    omega: Vector3<f64>,
) -> Result<Vector3<f64>, QuatError> {
    let rv = log(q)?;
    let r = j_exp_dot(rv, qdot) * qdot + j_exp(rv) * qddot;
    let (sw, sv) = mul_raw((2.0 * r[0], 2.0 * r.fixed_rows::<3>(1).into_owned()),
                           (q.w, -q.v));
    debug_assert!(
        (sw + 0.5 * omega.norm_squared()).abs() < 1e-6 * (1.0 + omega.norm_squared()),
        "scalar part {sw} inconsistent with -‖ω‖²/2"
    );
    Ok(sv)
}

/// Inverse of [`omegadot_from_qddot`]:
/// `q̈ = J_Q (½ ([-½‖ω‖², ω̇ᵀ]ᵀ) * Q - J̇_q q̇)`.
pub fn qddot_from_omegadot(
    q: &UnitQuaternion,
    qdot: Vector3<f64>,
    omega: Vector3<f64>,
    omegadot: Vector3<f64>,
) -> Result<Vector3<f64>, QuatError> {
    let rv = log(q)?;
    let (pw, pv) = mul_raw((-0.5 * omega.norm_squared(), omegadot), (q.w, q.v));
    let jd = j_exp_dot(rv, qdot) * qdot;
    let x = nalgebra::Vector4::new(0.5 * pw - jd[0],
                                   0.5 * pv.x - jd[1],
                                   0.5 * pv.y - jd[2],
                                   0.5 * pv.z - jd[3]);
    Ok(j_log(rv) * x)
}
