//! Calibrated pinhole model: pixels to unit bearing vectors.

use nalgebra::Vector3;

use crate::error::{Error, Result};

/// Pinhole intrinsics in pixels. No distortion model; inputs are assumed
/// rectified upstream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Intrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("intrinsics must be finite"));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::invalid("focal lengths must be positive"));
        }
        Ok(Intrinsics { fx, fy, cx, cy })
    }

    /// Parses the single-line file format `fx fy cx cy`.
    pub fn parse_line(s: &str) -> Result<Self> {
        let vals: Vec<f64> = s
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|e| Error::invalid(format!("bad intrinsics value: {e}")))
            })
            .collect::<Result<_>>()?;
        if vals.len() != 4 {
            return Err(Error::invalid(format!(
                "intrinsics line needs 4 values, got {}",
                vals.len()
            )));
        }
        Self::new(vals[0], vals[1], vals[2], vals[3])
    }

    pub fn format_line(&self) -> String {
        format!(
            "{:.16e} {:.16e} {:.16e} {:.16e}",
            self.fx, self.fy, self.cx, self.cy
        )
    }

    /// Projects a bearing back to pixel coordinates. Caller guarantees z > 0,
    /// which the `BearingVec` invariant already enforces.
    pub fn project(&self, f: &BearingVec) -> (f64, f64) {
        let v = f.as_vec();
        (self.fx * v.x / v.z + self.cx, self.fy * v.y / v.z + self.cy)
    }
}

/// Unit-norm viewing ray with positive z (in front of the camera).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BearingVec(Vector3<f64>);

impl BearingVec {
    /// Normalizes the input; rejects non-finite, zero-length, and rear-facing
    /// (z ≤ 0) directions.
    pub fn new(v: Vector3<f64>) -> Result<Self> {
        if !(v.x.is_finite() && v.y.is_finite() && v.z.is_finite()) {
            return Err(Error::invalid("bearing must be finite"));
        }
        let n = v.norm();
        if n < 1e-300 {
            return Err(Error::invalid("bearing has zero length"));
        }
        let u = v / n;
        if u.z <= 0.0 {
            return Err(Error::invalid("bearing must point in front of the camera (z > 0)"));
        }
        Ok(BearingVec(u))
    }

    pub fn as_vec(&self) -> &Vector3<f64> {
        &self.0
    }
}

/// Back-projects pixel (u, v) through the pinhole model:
/// normalize(((u−cx)/fx, (v−cy)/fy, 1)).
pub fn pixel_to_bearing(u: f64, v: f64, k: &Intrinsics) -> Result<BearingVec> {
    if !(u.is_finite() && v.is_finite()) {
        return Err(Error::invalid("pixel coordinates must be finite"));
    }
    BearingVec::new(Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn k() -> Intrinsics {
        Intrinsics::new(500.0, 480.0, 320.0, 240.0).unwrap()
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let f = pixel_to_bearing(320.0, 240.0, &k()).unwrap();
        assert_eq!(*f.as_vec(), Vector3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn one_focal_length_off_axis_is_45_degrees() {
        let cam = Intrinsics::new(500.0, 500.0, 320.0, 240.0).unwrap();
        let f = pixel_to_bearing(320.0 + 500.0, 240.0, &cam).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(*f.as_vec(), Vector3::new(s, 0.0, s), epsilon = 1e-15);
    }

    #[test]
    fn matches_homogeneous_normalize_oracle() {
        let cam = k();
        for (u, v) in [(12.5, 700.0), (601.0, 3.25), (333.3, 444.4)] {
            let oracle = Vector3::new((u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0).normalize();
            let f = pixel_to_bearing(u, v, &cam).unwrap();
            assert_abs_diff_eq!(*f.as_vec(), oracle, epsilon = 1e-15);
        }
    }

    #[test]
    fn project_round_trip() {
        let cam = k();
        let f = pixel_to_bearing(100.25, 410.0, &cam).unwrap();
        let (u, v) = cam.project(&f);
        assert_abs_diff_eq!(u, 100.25, epsilon = 1e-10);
        assert_abs_diff_eq!(v, 410.0, epsilon = 1e-10);
    }

    #[test]
    fn invalid_inputs_rejected() {
        assert!(Intrinsics::new(0.0, 1.0, 0.0, 0.0).is_err());
        assert!(Intrinsics::new(1.0, -2.0, 0.0, 0.0).is_err());
        assert!(BearingVec::new(Vector3::new(0.0, 0.0, -1.0)).is_err());
        assert!(BearingVec::new(Vector3::zeros()).is_err());
        assert!(pixel_to_bearing(f64::NAN, 0.0, &k()).is_err());
    }

    #[test]
    fn intrinsics_line_round_trip() {
        let cam = k();
        assert_eq!(Intrinsics::parse_line(&cam.format_line()).unwrap(), cam);
        assert!(Intrinsics::parse_line("1 2 3").is_err());
    }

    proptest! {
        #[test]
        fn prop_unit_norm_and_forward(u in -2000.0f64..2000.0, v in -2000.0f64..2000.0) {
            let f = pixel_to_bearing(u, v, &k()).unwrap();
            prop_assert!((f.as_vec().norm() - 1.0).abs() < 1e-12);
            prop_assert!(f.as_vec().z > 0.0);
        }
    }
}
