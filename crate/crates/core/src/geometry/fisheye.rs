//! Kannala-Brandt fisheye intrinsics: `r(theta) = k0 theta + k1 theta^3 + ... + k4 theta^9`.

use super::GeometryError;
use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Samples used to verify monotonicity of `r(theta)` at construction.
const MONOTONE_SAMPLES: usize = 10_000;
const NEWTON_MAX_ITERS: usize = 50;
const NEWTON_STEP_TOL: f64 = 1e-12;
const BISECTION_MAX_ITERS: usize = 200;

/// Fisheye intrinsics. `k[0]` carries the pixels-per-radian scale, the
/// principal point is in continuous pixel coordinates and `fov` is the full
/// field of view in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawFisheye", deny_unknown_fields)]
pub struct FisheyeIntrinsics {
    k: [f64; 5],
    cx: f64,
    cy: f64,
    fov: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFisheye {
    k: [f64; 5],
    cx: f64,
    cy: f64,
    fov: f64,
}

impl TryFrom<RawFisheye> for FisheyeIntrinsics {
    type Error = GeometryError;

    fn try_from(raw: RawFisheye) -> Result<Self, Self::Error> {
        FisheyeIntrinsics::new(raw.k, raw.cx, raw.cy, raw.fov)
    }
}

impl FisheyeIntrinsics {
    /// Validates `k0 > 0`, `fov in (0, 2 pi)` and that `r(theta)` is strictly
    /// increasing on `[0, fov / 2]`.
    pub fn new(k: [f64; 5], cx: f64, cy: f64, fov: f64) -> Result<Self, GeometryError> {
        if k.iter().chain([cx, cy, fov].iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidIntrinsics("non-finite parameter".into()));
        }
        if k[0] <= 0.0 {
            return Err(GeometryError::InvalidIntrinsics(format!("k0 = {} must be positive", k[0])));
        }
        if !(fov > 0.0 && fov < 2.0 * PI) {
            return Err(GeometryError::InvalidIntrinsics(format!("fov = {fov} outside (0, 2pi)")));
        }
        let intrinsics = Self { k, cx, cy, fov };
        let half = 0.5 * fov;
        for i in 0..=MONOTONE_SAMPLES {
            let theta = half * i as f64 / MONOTONE_SAMPLES as f64;
            let d = intrinsics.radius_derivative(theta);
            if !(d > 0.0) {
                return Err(GeometryError::InvalidIntrinsics(format!(
                    "r(theta) not strictly increasing: dr/dtheta = {d} at theta = {theta}"
                )));
            }
        }
        Ok(intrinsics)
    }

    /// Near-equidistant lens whose image circle has radius `circle_radius`
    /// pixels at `theta = fov / 2`. `k[1..]` are given; `k0` is solved for.
    pub fn with_image_circle(
        higher_order: [f64; 4],
        circle_radius: f64,
        cx: f64,
        cy: f64,
        fov: f64,
    ) -> Result<Self, GeometryError> {
        let half = 0.5 * fov;
        let tail = odd_poly(&[0.0, higher_order[0], higher_order[1], higher_order[2], higher_order[3]], half);
        let k0 = (circle_radius - tail) / half;
        let [k1, k2, k3, k4] = higher_order;
        Self::new([k0, k1, k2, k3, k4], cx, cy, fov)
    }

    pub fn coefficients(&self) -> [f64; 5] {
        self.k
    }

    pub fn principal_point(&self) -> (f64, f64) {
        (self.cx, self.cy)
    }

    pub fn fov(&self) -> f64 {
        self.fov
    }

    pub fn half_fov(&self) -> f64 {
        0.5 * self.fov
    }

    /// Image-circle radius, `r(fov / 2)`.
    pub fn max_radius(&self) -> f64 {
        self.radius_unchecked(self.half_fov())
    }

    /// Polynomial evaluation without the field-of-view check.
    #[inline]
    pub fn radius_unchecked(&self, theta: f64) -> f64 {
        odd_poly(&self.k, theta)
    }

    #[inline]
    pub fn radius_derivative(&self, theta: f64) -> f64 {
        let t2 = theta * theta;
        let k = &self.k;
        k[0] + t2 * (3.0 * k[1] + t2 * (5.0 * k[2] + t2 * (7.0 * k[3] + t2 * 9.0 * k[4])))
    }

    /// `r(theta)` in pixels, for `0 <= theta <= fov / 2`.
    pub fn radius(&self, theta: f64) -> Result<f64, GeometryError> {
        let limit = self.half_fov();
        if !(0.0..=limit).contains(&theta) {
            return Err(GeometryError::OutOfFieldOfView { value: theta, limit });
        }
        Ok(self.radius_unchecked(theta))
    }

    /// Inverse of [`radius`](Self::radius): damped Newton from `r / k0`, with
    /// bisection on `[0, fov / 2]` as the fallback.
    pub fn theta(&self, radius: f64) -> Result<f64, GeometryError> {
        let limit = self.max_radius();
        if !(radius >= 0.0) || radius > limit * (1.0 + 1e-12) {
            return Err(GeometryError::OutOfFieldOfView { value: radius, limit });
        }
        let radius = radius.min(limit);
        if radius == 0.0 {
            return Ok(0.0);
        }
        let half = self.half_fov();
        let tol = 1e-9 * radius.max(1.0);
        let accept = |theta: f64| (self.radius_unchecked(theta) - radius).abs() < tol;

        if let Some(theta) = self.newton(radius, half) {
            if accept(theta) {
                return Ok(theta);
            }
        }
        let theta = self.bisect(radius, half);
        if accept(theta) {
            Ok(theta)
        } else {
            Err(GeometryError::NumericalFailure(format!(
                "no root of r(theta) = {radius} on [0, {half}]"
            )))
        }
    }

    fn newton(&self, radius: f64, half: f64) -> Option<f64> {
        let mut theta = (radius / self.k[0]).clamp(0.0, half);
        let mut residual = self.radius_unchecked(theta) - radius;
        for _ in 0..NEWTON_MAX_ITERS {
            let slope = self.radius_derivative(theta);
            if !(slope > 0.0) {
                return None;
            }
            let mut step = residual / slope;
            // Halve the step until the residual stops growing.
            let mut accepted = false;
            for _ in 0..30 {
                let candidate = (theta - step).clamp(0.0, half);
                let r = self.radius_unchecked(candidate) - radius;
                if r.abs() <= residual.abs() {
                    step = theta - candidate;
                    theta = candidate;
                    residual = r;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                return None;
            }
            if step.abs() <= NEWTON_STEP_TOL * theta.max(1.0) {
                return Some(theta);
            }
        }
        None
    }

    fn bisect(&self, radius: f64, half: f64) -> f64 {
        let (mut lo, mut hi) = (0.0, half);
        for _ in 0..BISECTION_MAX_ITERS {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.radius_unchecked(mid) < radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// Projects a camera-frame point (x forward, y up, z right) to pixels.
    pub fn project(&self, p: &Vector3<f64>) -> Result<[f64; 2], GeometryError> {
        if p.x == 0.0 && p.y == 0.0 && p.z == 0.0 {
            return Err(GeometryError::DegeneratePoint);
        }
        let rho = p.y.hypot(p.z);
        let theta = rho.atan2(p.x);
        let r = self.radius(theta)?;
        if rho == 0.0 {
            return Ok([self.cx, self.cy]);
        }
        Ok([self.cx + r * p.z / rho, self.cy - r * p.y / rho])
    }

    /// Unit camera-frame ray through pixel `(u, v)`.
    pub fn unproject(&self, u: f64, v: f64) -> Result<Vector3<f64>, GeometryError> {
        let du = u - self.cx;
        let dv = v - self.cy;
        let r = du.hypot(dv);
        let theta = self.theta(r)?;
        if r == 0.0 {
            return Ok(Vector3::x());
        }
        let (st, ct) = theta.sin_cos();
        Ok(Vector3::new(ct, -st * dv / r, st * du / r))
    }
}

/// `c0 t + c1 t^3 + c2 t^5 + c3 t^7 + c4 t^9` in Horner form over `t^2`.
#[inline]
fn odd_poly(c: &[f64; 5], t: f64) -> f64 {
    let t2 = t * t;
    t * (c[0] + t2 * (c[1] + t2 * (c[2] + t2 * (c[3] + t2 * c[4]))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn lens() -> FisheyeIntrinsics {
        FisheyeIntrinsics::new([300.0, -0.02, 0.001, 0.0, 0.0], 400.0, 400.0, 200f64.to_radians()).unwrap()
    }

    #[test]
    fn radius_examples() {
        let k = lens();
        assert_eq!(k.radius(0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(k.radius(1.0).unwrap(), 299.981, epsilon = 1e-12);
        // 150 - 0.02 / 8 + 0.001 / 32, exact in decimal.
        assert_abs_diff_eq!(k.radius(0.5).unwrap(), 149.997_531_25, epsilon = 1e-12);
    }

    #[test]
    fn radius_outside_fov_is_rejected() {
        let k = lens();
        assert!(matches!(k.radius(2.0), Err(GeometryError::OutOfFieldOfView { .. })));
        assert!(k.radius(-0.1).is_err());
    }

    #[test]
    fn theta_examples() {
        let k = lens();
        assert_eq!(k.theta(0.0).unwrap(), 0.0);

        let eq = FisheyeIntrinsics::new([250.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.0, 3.0).unwrap();
        assert_abs_diff_eq!(eq.theta(250.0 * 0.7).unwrap(), 0.7, epsilon = 1e-12);

        // Bisection oracle to ~1e-15 on [0, fov/2].
        let (mut lo, mut hi) = (0.0f64, k.half_fov());
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let r = 300.0 * mid - 0.02 * mid.powi(3) + 0.001 * mid.powi(5);
            if r < 150.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert_abs_diff_eq!(k.theta(150.0).unwrap(), 0.5 * (lo + hi), epsilon = 1e-12);
        assert!(matches!(k.theta(1e6), Err(GeometryError::OutOfFieldOfView { .. })));
    }

    #[test]
    fn rejects_non_monotone_polynomial() {
        // dr/dtheta = 100 - 300 theta^2 turns negative at ~0.577 rad.
        let err = FisheyeIntrinsics::new([100.0, -100.0, 0.0, 0.0, 0.0], 0.0, 0.0, 3.0).unwrap_err();
        assert!(matches!(err, GeometryError::InvalidIntrinsics(_)));
        assert!(FisheyeIntrinsics::new([0.0, 1.0, 0.0, 0.0, 0.0], 0.0, 0.0, 3.0).is_err());
        assert!(FisheyeIntrinsics::new([1.0, 0.0, 0.0, 0.0, 0.0], 0.0, 0.0, 7.0).is_err());
    }

    #[test]
    fn image_circle_constructor_hits_radius() {
        let k = FisheyeIntrinsics::with_image_circle([-2.0, 0.3, 0.0, 0.0], 400.0, 400.0, 400.0, 220f64.to_radians())
            .unwrap();
        assert_abs_diff_eq!(k.max_radius(), 400.0, epsilon = 1e-9);
    }

    #[test]
    fn project_axis_and_scaling() {
        let k = lens();
        assert_eq!(k.project(&Vector3::new(2.0, 0.0, 0.0)).unwrap(), [400.0, 400.0]);
        let p = Vector3::new(0.3, -0.8, 1.1);
        let a = k.project(&p).unwrap();
        let b = k.project(&(2.0 * p)).unwrap();
        assert_abs_diff_eq!(a[0], b[0], epsilon = 1e-9);
        assert_abs_diff_eq!(a[1], b[1], epsilon = 1e-9);
        assert!(matches!(k.project(&Vector3::zeros()), Err(GeometryError::DegeneratePoint)));
        assert!(k.project(&Vector3::new(-1.0, 0.0, 0.01)).is_err());
    }

    #[test]
    fn project_matches_two_step_oracle() {
        let k = lens();
        for p in [Vector3::<f64>::new(1.0, 0.2, 0.3), Vector3::new(0.1, -0.5, -2.0), Vector3::new(-0.1, 0.9, 0.2)] {
            // Oracle: incident angle and image-plane azimuth by trigonometry, then the polynomial.
            let theta = (p.x / p.norm()).acos();
            let psi = (-p.y).atan2(p.z);
            let r = 300.0 * theta - 0.02 * theta.powi(3) + 0.001 * theta.powi(5);
            let got = k.project(&p).unwrap();
            assert_abs_diff_eq!(got[0], 400.0 + r * psi.cos(), epsilon = 1e-9);
            assert_abs_diff_eq!(got[1], 400.0 + r * psi.sin(), epsilon = 1e-9);
        }
    }

    #[test]
    fn corner_of_circle_unprojects_to_half_fov() {
        let k = lens();
        let r = k.max_radius();
        let ray = k.unproject(400.0 + r / 2f64.sqrt(), 400.0 - r / 2f64.sqrt()).unwrap();
        let theta = ray.x.clamp(-1.0, 1.0).acos();
        assert_abs_diff_eq!(theta, k.half_fov(), epsilon = 1e-8);
        assert_eq!(k.unproject(400.0, 400.0).unwrap(), Vector3::x());
    }

    proptest! {
        #[test]
        fn theta_inverts_radius(t in 0.0f64..1.0) {
            let k = lens();
            let theta = t * k.half_fov();
            let back = k.theta(k.radius(theta).unwrap()).unwrap();
            prop_assert!((back - theta).abs() < 1e-9);
        }

        #[test]
        fn unproject_inverts_project(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            let p = Vector3::new(x, y, z);
            prop_assume!(p.norm() > 1e-3);
            let k = lens();
            if let Ok(px) = k.project(&p) {
                let ray = k.unproject(px[0], px[1]).unwrap();
                let angle = ray.cross(&p.normalize()).norm().atan2(ray.dot(&p.normalize()));
                prop_assert!(angle < 1e-9);
            }
        }
    }
}
