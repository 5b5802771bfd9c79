//! Minimum-jerk scalar profile, used for synthetic demonstrations and as the
//! simulated human's intended motion.

/// Normalized minimum-jerk profile `s(t) = 10σ³ − 15σ⁴ + 6σ⁵`, `σ = t/T`.
///
/// Returns `(s, ṡ, s̈)`. Clamped to the boundary values outside `[0, T]`.
pub fn profile(t: f64, duration: f64) -> (f64, f64, f64) {
    assert!(duration > 0.0, "minimum-jerk duration must be positive");
    if t <= 0.0 {
        return (0.0, 0.0, 0.0);
    }
    if t >= duration {
        return (1.0, 0.0, 0.0);
    }
    let s = t / duration;
    let s2 = s * s;
    let s3 = s2 * s;
    let pos = 10.0 * s3 - 15.0 * s2 * s2 + 6.0 * s2 * s3;
    let vel = (30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2) / duration;
    let acc = (60.0 * s - 180.0 * s2 + 120.0 * s3) / (duration * duration);
    (pos, vel, acc)
}

#[cfg(test)]
mod tests {
    use super::profile;
    use approx::assert_relative_eq;

    #[test]
    fn endpoints_and_symmetry() {
        let (s0, v0, a0) = profile(0.0, 2.0);
        assert_eq!((s0, v0, a0), (0.0, 0.0, 0.0));
        let (s1, v1, a1) = profile(2.0, 2.0);
        assert_eq!((s1, v1, a1), (1.0, 0.0, 0.0));
        let (sm, vm, _) = profile(1.0, 2.0);
        assert_relative_eq!(sm, 0.5, epsilon = 1e-12);
        // peak velocity 15/(8T)
        assert_relative_eq!(vm, 15.0 / 16.0, epsilon = 1e-12);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-6;
        for k in 1..20 {
            let t = 0.1 * k as f64;
            let (_, v, a) = profile(t, 2.0);
            let fd_v = (profile(t + h, 2.0).0 - profile(t - h, 2.0).0) / (2.0 * h);
            let fd_a = (profile(t + h, 2.0).1 - profile(t - h, 2.0).1) / (2.0 * h);
            assert_relative_eq!(v, fd_v, epsilon = 1e-6);
            assert_relative_eq!(a, fd_a, epsilon = 1e-5);
        }
    }
}
