//! Rotations on SO(3): storage, Lie algebra maps, distances, composition.
//!
//! Everything downstream (relative orientation, averaging, metrics) is built
//! on this module. Rotations are stored as unit quaternions with a canonical
//! sign so that equality and serialization are well defined; matrix form is
//! derived on demand.

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Axis-angle tangent vector; the rotation angle is the Euclidean norm.
pub type TangentVec = Vector3<f64>;

/// Quaternion norm tolerance maintained after every constructor/composition.
pub const UNIT_NORM_TOL: f64 = 1e-12;
/// Orthonormality tolerance of the derived matrix form (RᵀR = I, det = +1).
pub const MATRIX_ORTHO_TOL: f64 = 1e-9;
/// Looser orthonormality tolerance accepted when ingesting external matrices
/// (pose files are typically printed with fewer digits than f64 carries).
pub const MATRIX_INPUT_TOL: f64 = 1e-6;
/// Below this angle `exp` switches to its series expansion.
pub const SMALL_ANGLE: f64 = 1e-8;
/// Guaranteed round-trip accuracy of `exp`/`log` away from angle π.
pub const LOG_EXP_TOL: f64 = 1e-9;

/// A rotation in SO(3).
///
/// Invariants: the stored quaternion has unit norm within [`UNIT_NORM_TOL`]
/// and canonical sign (w ≥ 0; if w = 0, the first nonzero component of
/// (x, y, z) is positive), so two `Rot3` representing the same rotation
/// compare equal componentwise and serialize to identical bytes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rot3 {
    q: UnitQuaternion<f64>,
}

impl Rot3 {
    pub fn identity() -> Self {
        Rot3 {
            q: UnitQuaternion::identity(),
        }
    }

    /// Builds from quaternion components in (w, x, y, z) order; the input is
    /// normalized and sign-canonicalized.
    pub fn from_quat_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<Self> {
        let q = Quaternion::new(w, x, y, z);
        if !q.coords.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("quaternion components must be finite"));
        }
        let n = q.norm();
        if n < 1e-300 {
            return Err(Error::invalid("quaternion norm is zero"));
        }
        // Skip renormalization of an already-unit input so that parsing
        // serialized components reproduces them bit for bit.
        let u = if (n - 1.0).abs() <= 0.5 * UNIT_NORM_TOL {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Self::canonical(u))
    }

    /// Builds from a rotation matrix, accepting orthonormality drift up to
    /// [`MATRIX_INPUT_TOL`] and re-projecting onto SO(3).
    pub fn from_matrix(m: &Matrix3<f64>) -> Result<Self> {
        if !m.iter().all(|c| c.is_finite()) {
            return Err(Error::invalid("rotation matrix entries must be finite"));
        }
        let defect = (m.transpose() * m - Matrix3::identity()).abs().max();
        if defect > MATRIX_INPUT_TOL {
            return Err(Error::invalid(format!(
                "matrix is not orthonormal (max |R^T R - I| = {defect:.3e})"
            )));
        }
        if m.determinant() < 0.0 {
            return Err(Error::invalid("matrix has negative determinant"));
        }
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*m));
        Ok(Self::canonical(q))
    }

    /// Exponential map: the rotation of angle ‖ω‖ about ω/‖ω‖.
    ///
    /// Uses the series expansion of sin(θ/2)/θ below [`SMALL_ANGLE`] so the
    /// map is smooth through ω = 0.
    pub fn exp(w: &TangentVec) -> Result<Self> {
        if !(w.x.is_finite() && w.y.is_finite() && w.z.is_finite()) {
            return Err(Error::invalid("tangent vector must be finite"));
        }
        let theta = w.norm();
        let (qw, factor) = if theta < SMALL_ANGLE {
            // sin(θ/2)/θ = 1/2 − θ²/48 + O(θ⁴); the quadratic term is below
            // f64 resolution here but keeps the branch exact at the seam.
            (1.0, 0.5 - theta * theta / 48.0)
        } else {
            let half = 0.5 * theta;
            (half.cos(), half.sin() / theta)
        };
        let q = Quaternion::new(qw, factor * w.x, factor * w.y, factor * w.z);
        Ok(Self::canonical(UnitQuaternion::from_quaternion(q)))
    }

    /// Principal logarithm with ‖ω‖ ∈ [0, π].
    ///
    /// At angle exactly π the axis sign is fixed by the canonical quaternion
    /// sign, so the result is deterministic.
    pub fn log(&self) -> TangentVec {
        let q = self.q.quaternion();
        let v = Vector3::new(q.i, q.j, q.k);
        let vn = v.norm();
        // Canonical sign guarantees w ≥ 0, hence an angle in [0, π].
        let w = q.w.abs();
        if vn < 1e-9 {
            // θ/vn → 2/w as vn → 0; relative error below 1e-18 here.
            v * (2.0 / w)
        } else {
            let theta = 2.0 * vn.atan2(w);
            v * (theta / vn)
        }
    }

    /// Matrix-convention product a·b.
    pub fn compose(&self, other: &Rot3) -> Rot3 {
        Self::canonical(self.q * other.q)
    }

    pub fn inverse(&self) -> Rot3 {
        Self::canonical(self.q.inverse())
    }

    /// relative(a, b) = a⁻¹·b, so compose(a, relative(a, b)) = b.
    pub fn relative(&self, other: &Rot3) -> Rot3 {
        Self::canonical(self.q.inverse() * other.q)
    }

    /// Applies the rotation to a vector.
    pub fn rotate(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.q * v
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        self.q.to_rotation_matrix().into_inner()
    }

    /// Components in (w, x, y, z) order, canonical sign.
    pub fn quat_wxyz(&self) -> [f64; 4] {
        let q = self.q.quaternion();
        [q.w, q.i, q.j, q.k]
    }

    /// Rotation angle relative to the identity, in [0, π].
    pub fn angle(&self) -> f64 {
        let q = self.q.quaternion();
        let vn = Vector3::new(q.i, q.j, q.k).norm();
        2.0 * vn.atan2(q.w.abs())
    }

    /// Serializes as `qw qx qy qz`, 17 significant digits each. Canonical
    /// sign makes the format/parse round trip byte-stable.
    pub fn format_quat(&self) -> String {
        let [w, x, y, z] = self.quat_wxyz();
        format!("{w:.16e} {x:.16e} {y:.16e} {z:.16e}")
    }

    /// Parses four whitespace-separated floats in `qw qx qy qz` order.
    pub fn parse_quat(s: &str) -> Result<Self> {
        let mut it = s.split_whitespace();
        let mut next = || -> Result<f64> {
            it.next()
                .ok_or_else(|| Error::invalid("expected four quaternion components"))?
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("bad quaternion component: {e}")))
        };
        let (w, x, y, z) = (next()?, next()?, next()?, next()?);
        Self::from_quat_wxyz(w, x, y, z)
    }

    /// Normalizes and applies the canonical sign rule. Adding +0.0 clears
    /// negative zeros so equal rotations print identically.
    fn canonical(q: UnitQuaternion<f64>) -> Self {
        let mut raw = q.into_inner();
        let n = raw.norm();
        if (n - 1.0).abs() > 0.5 * UNIT_NORM_TOL {
            raw /= n;
        }
        let flip = if raw.w != 0.0 {
            raw.w < 0.0
        } else {
            let first = [raw.i, raw.j, raw.k].into_iter().find(|c| *c != 0.0);
            matches!(first, Some(c) if c < 0.0)
        };
        if flip {
            raw = -raw;
        }
        raw.w += 0.0;
        raw.i += 0.0;
        raw.j += 0.0;
        raw.k += 0.0;
        Rot3 {
            q: UnitQuaternion::new_unchecked(raw),
        }
    }
}

/// Geodesic distance ‖log(a⁻¹b)‖ ∈ [0, π]; symmetric and bi-invariant.
pub fn geodesic_angle(a: &Rot3, b: &Rot3) -> f64 {
    let r = a.q.inverse() * b.q;
    let q = r.quaternion();
    let vn = Vector3::new(q.i, q.j, q.k).norm();
    2.0 * vn.atan2(q.w.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rot(rng: &mut ChaCha8Rng) -> Rot3 {
        // Normalized 4-gaussian is uniform on the quaternion sphere.
        let mut g = || -> f64 {
            let (u1, u2): (f64, f64) = (rng.random(), rng.random());
            (-2.0 * u1.max(1e-12).ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
        };
        let (w, x, y, z) = (g(), g(), g(), g());
        Rot3::from_quat_wxyz(w, x, y, z).unwrap()
    }

    fn random_tangent(rng: &mut ChaCha8Rng, norm: f64) -> TangentVec {
        let v = Vector3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        );
        v / v.norm() * norm
    }

    #[test]
    fn exp_zero_is_identity() {
        let r = Rot3::exp(&Vector3::zeros()).unwrap();
        assert_eq!(r.quat_wxyz(), [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn exp_quarter_turn_about_x() {
        let r = Rot3::exp(&Vector3::new(std::f64::consts::FRAC_PI_2, 0.0, 0.0)).unwrap();
        let v = r.rotate(&Vector3::new(0.0, 1.0, 0.0));
        assert_abs_diff_eq!(v, Vector3::new(0.0, 0.0, 1.0), epsilon = 1e-15);
    }

    #[test]
    fn exp_matches_rodrigues_oracle() {
        // Oracle: R = I + sinθ·K + (1−cosθ)·K² with K = skew(axis).
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let w = random_tangent(&mut rng, 0.3);
            let theta = w.norm();
            let axis = w / theta;
            let k = Matrix3::new(
                0.0, -axis.z, axis.y, axis.z, 0.0, -axis.x, -axis.y, axis.x, 0.0,
            );
            let oracle = Matrix3::identity() + k * theta.sin() + k * k * (1.0 - theta.cos());
            let m = Rot3::exp(&w).unwrap().matrix();
            assert!((m - oracle).abs().max() < 1e-12);
        }
    }

    #[test]
    fn exp_rejects_non_finite() {
        assert!(Rot3::exp(&Vector3::new(f64::NAN, 0.0, 0.0)).is_err());
        assert!(Rot3::exp(&Vector3::new(0.0, f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn log_identity_is_zero() {
        assert_eq!(Rot3::identity().log(), Vector3::zeros());
    }

    #[test]
    fn log_inverts_exp() {
        let w = Vector3::new(0.1, -0.2, 0.3);
        let back = Rot3::exp(&w).unwrap().log();
        assert_abs_diff_eq!(back, w, epsilon = 1e-10);
    }

    #[test]
    fn log_at_half_turn() {
        let r = Rot3::from_quat_wxyz(0.0, 0.0, 0.0, 1.0).unwrap();
        let w = r.log();
        assert_abs_diff_eq!(w.norm(), std::f64::consts::PI, epsilon = 1e-15);
        // Canonical sign picks the +z axis deterministically.
        assert!(w.z > 0.0);
        let again = Rot3::from_quat_wxyz(0.0, 0.0, 0.0, -1.0).unwrap();
        assert_eq!(again.log(), w);
    }

    #[test]
    fn small_angle_round_trip() {
        for scale in [1e-12, 1e-9, 1e-7] {
            let w = Vector3::new(0.6, -0.8, 0.0) * scale;
            let back = Rot3::exp(&w).unwrap().log();
            assert!((back - w).norm() <= 1e-12 * scale.max(1e-3));
        }
    }

    #[test]
    fn compose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let r = random_rot(&mut rng);
            assert_eq!(r.compose(&Rot3::identity()), r);
            assert!(geodesic_angle(&r.compose(&r.inverse()), &Rot3::identity()) < 1e-10);
        }
    }

    #[test]
    fn relative_matches_matrix_product_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let a = random_rot(&mut rng);
            let b = random_rot(&mut rng);
            let oracle = a.matrix().transpose() * b.matrix();
            let rel = a.relative(&b).matrix();
            assert!((rel - oracle).abs().max() < 1e-12);
            assert!(geodesic_angle(&a.compose(&a.relative(&b)), &b) < 1e-10);
        }
    }

    #[test]
    fn geodesic_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let r = random_rot(&mut rng);
        // Self-distance: the quaternion product leaves float residue in the
        // vector part, so exact zero is not attainable.
        assert!(geodesic_angle(&r, &r) < 1e-12);
        let turn = Rot3::exp(&Vector3::new(0.0, std::f64::consts::FRAC_PI_6, 0.0)).unwrap();
        assert_abs_diff_eq!(
            geodesic_angle(&Rot3::identity(), &turn),
            std::f64::consts::FRAC_PI_6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn geodesic_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..1000 {
            let (a, b, c) = (
                random_rot(&mut rng),
                random_rot(&mut rng),
                random_rot(&mut rng),
            );
            assert!(geodesic_angle(&a, &c) <= geodesic_angle(&a, &b) + geodesic_angle(&b, &c) + 1e-12);
        }
    }

    #[test]
    fn geodesic_bi_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..200 {
            let (g, a, b) = (
                random_rot(&mut rng),
                random_rot(&mut rng),
                random_rot(&mut rng),
            );
            let lhs = geodesic_angle(&g.compose(&a), &g.compose(&b));
            let rhs = geodesic_angle(&a, &b);
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-10);
            let lhs_r = geodesic_angle(&a.compose(&g), &b.compose(&g));
            assert_abs_diff_eq!(lhs_r, rhs, epsilon = 1e-10);
        }
    }

    #[test]
    fn matrix_form_is_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for _ in 0..100 {
            let m = random_rot(&mut rng).matrix();
            assert!((m.transpose() * m - Matrix3::identity()).abs().max() < MATRIX_ORTHO_TOL);
            assert!((m.determinant() - 1.0).abs() < MATRIX_ORTHO_TOL);
        }
    }

    #[test]
    fn from_matrix_round_trip_and_rejection() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let r = random_rot(&mut rng);
            let back = Rot3::from_matrix(&r.matrix()).unwrap();
            assert!(geodesic_angle(&r, &back) < 1e-9);
        }
        let mut bad = Matrix3::identity();
        bad[(0, 0)] = 1.1;
        assert!(Rot3::from_matrix(&bad).is_err());
    }

    #[test]
    fn serialization_is_canonical_and_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let r = random_rot(&mut rng);
            let line = r.format_quat();
            let parsed = Rot3::parse_quat(&line).unwrap();
            assert_eq!(parsed, r);
            assert_eq!(parsed.format_quat(), line);
            // The negated quaternion is the same rotation and must
            // canonicalize to the same bytes.
            let [w, x, y, z] = r.quat_wxyz();
            let neg = Rot3::from_quat_wxyz(-w, -x, -y, -z).unwrap();
            assert_eq!(neg.format_quat(), line);
        }
    }

    proptest! {
        #[test]
        fn prop_log_exp_round_trip(
            ax in -1.0f64..1.0, ay in -1.0f64..1.0, az in -1.0f64..1.0,
            scale in 1e-6f64..3.0
        ) {
            let v = Vector3::new(ax, ay, az);
            prop_assume!(v.norm() > 1e-3);
            let w = v / v.norm() * scale.min(std::f64::consts::PI - 1e-3);
            let back = Rot3::exp(&w).unwrap().log();
            prop_assert!((back - w).norm() < 1e-9);
        }

        #[test]
        fn prop_exp_log_round_trip(
            qw in -1.0f64..1.0, qx in -1.0f64..1.0, qy in -1.0f64..1.0, qz in -1.0f64..1.0
        ) {
            let n = (qw * qw + qx * qx + qy * qy + qz * qz).sqrt();
            prop_assume!(n > 1e-3);
            let r = Rot3::from_quat_wxyz(qw, qx, qy, qz).unwrap();
            prop_assume!(r.angle() < std::f64::consts::PI - 1e-6);
            let back = Rot3::exp(&r.log()).unwrap();
            prop_assert!(geodesic_angle(&r, &back) < LOG_EXP_TOL);
        }
    }
}
