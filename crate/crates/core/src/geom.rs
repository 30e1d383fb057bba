//! Core geometric types: 3D points, point clouds, rigid transforms and
//! rotation-error metrics.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A 3D point observation, in meters.
pub type Point3 = Vector3<f64>;

/// Element-wise tolerance for the orthonormality and determinant checks.
pub const ROTATION_TOL: f64 = 1e-9;

const NORMAL_TOL: f64 = 1e-6;

/// A rigid transform `x -> R x + t` with `R` a proper rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl RigidTransform {
    /// Builds a transform, checking that `rotation` is orthonormal with
    /// determinant +1 (element-wise tolerance 1e-9).
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        validate_rotation(&rotation, ROTATION_TOL)?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTransform(
                "translation has non-finite entries".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    /// Internal constructor for rotations that are valid by construction
    /// (SVD projection, axis-angle, composition of valid transforms).
    pub(crate) fn from_parts_unchecked(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        debug_assert!(validate_rotation(&rotation, 1e-6).is_ok());
        Self {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Rotation by `angle_rad` about `axis` (normalized internally),
    /// followed by `translation`.
    pub fn from_axis_angle(axis: Vector3<f64>, angle_rad: f64, translation: Vector3<f64>) -> Self {
        let rotation = rotation_from_axis_angle(axis, angle_rad);
        Self {
            rotation,
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn apply_point(&self, p: &Point3) -> Point3 {
        self.rotation * p + self.translation
    }

    /// `(self ∘ other)(x) = self(other(x))`.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::from_parts_unchecked(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform::from_parts_unchecked(rt, -(rt * self.translation))
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

fn validate_rotation(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidTransform(
            "rotation has non-finite entries".into(),
        ));
    }
    let gram = r.transpose() * r;
    let dev = (gram - Matrix3::identity()).abs().max();
    if dev > tol {
        return Err(Error::InvalidTransform(format!(
            "rotation is not orthonormal (max deviation {dev:.3e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tol {
        return Err(Error::InvalidTransform(format!(
            "rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

/// Rodrigues formula; `axis` need not be unit length.
pub fn rotation_from_axis_angle(axis: Vector3<f64>, angle_rad: f64) -> Matrix3<f64> {
    let n = axis.norm();
    if n == 0.0 {
        return Matrix3::identity();
    }
    let u = axis / n;
    let (s, c) = angle_rad.sin_cos();
    let cross = Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0);
    Matrix3::identity() + s * cross + (1.0 - c) * (cross * cross)
}

/// Projects an arbitrary matrix onto the nearest proper rotation via SVD.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("svd u requested");
    let v_t = svd.v_t.expect("svd v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let u_flipped = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        r = u_flipped * v_t;
    }
    r
}

/// An ordered set of 3D points with optional per-point unit normals and
/// optional per-point positive weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PointCloud {
    points: Vec<Point3>,
    normals: Option<Vec<Vector3<f64>>>,
    weights: Option<Vec<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Result<Self> {
        validate_points(&points)?;
        Ok(Self {
            points,
            normals: None,
            weights: None,
        })
    }

    pub fn with_normals(points: Vec<Point3>, normals: Vec<Vector3<f64>>) -> Result<Self> {
        let mut cloud = Self::new(points)?;
        cloud.set_normals(normals)?;
        Ok(cloud)
    }

    pub(crate) fn from_parts_unchecked(
        points: Vec<Point3>,
        normals: Option<Vec<Vector3<f64>>>,
        weights: Option<Vec<f64>>,
    ) -> Self {
        Self {
            points,
            normals,
            weights,
        }
    }

    pub fn set_normals(&mut self, normals: Vec<Vector3<f64>>) -> Result<()> {
        if normals.len() != self.points.len() {
            return Err(Error::InvalidCloud(format!(
                "{} normals for {} points",
                normals.len(),
                self.points.len()
            )));
        }
        for (i, n) in normals.iter().enumerate() {
            if !n.iter().all(|v| v.is_finite()) || (n.norm() - 1.0).abs() > NORMAL_TOL {
                return Err(Error::InvalidCloud(format!(
                    "normal {i} is not unit length"
                )));
            }
        }
        self.normals = Some(normals);
        Ok(())
    }

    pub fn set_weights(&mut self, weights: Vec<f64>) -> Result<()> {
        if weights.len() != self.points.len() {
            return Err(Error::InvalidCloud(format!(
                "{} weights for {} points",
                weights.len(),
                self.points.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w <= 0.0) {
            return Err(Error::InvalidCloud(format!(
                "weight {i} is not strictly positive and finite"
            )));
        }
        self.weights = Some(weights);
        Ok(())
    }

    pub fn points(&self) -> &[Point3] {
        &self.points
    }

    pub fn normals(&self) -> Option<&[Vector3<f64>]> {
        self.normals.as_deref()
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

fn validate_points(points: &[Point3]) -> Result<()> {
    for (i, p) in points.iter().enumerate() {
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidCloud(format!(
                "point {i} has non-finite coordinates"
            )));
        }
    }
    Ok(())
}

/// Maps every point to `R x + t`; normals rotate, weights are copied.
pub fn apply_transform(t: &RigidTransform, cloud: &PointCloud) -> PointCloud {
    let points = cloud.points.iter().map(|p| t.apply_point(p)).collect();
    let normals = cloud
        .normals
        .as_ref()
        .map(|ns| ns.iter().map(|n| t.rotation * n).collect());
    PointCloud::from_parts_unchecked(points, normals, cloud.weights.clone())
}

/// Geodesic distance between two rotations in degrees, computed from the
/// Frobenius distance as `2 asin(d_F / sqrt(8))`. The asin argument is
/// clamped to [0, 1]; rounding can push it past 1 near 180 degrees.
pub fn geodesic_rotation_error_deg(r_est: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> f64 {
    let frob = (r_est - r_gt).norm();
    let arg = (frob / 8.0f64.sqrt()).clamp(0.0, 1.0);
    (2.0 * arg.asin()).to_degrees()
}

/// Euclidean norm of the translation difference, in meters.
pub fn translation_error(t_est: &Vector3<f64>, t_gt: &Vector3<f64>) -> f64 {
    (t_est - t_gt).norm()
}

/// Solves `min_{R,t} sum_j w_j || R src_j + t - dst_j ||^2` over proper
/// rotations (weighted orthogonal Procrustes). Reflections from the SVD are
/// corrected by flipping the sign of the last singular direction. A cross
/// covariance that vanishes entirely keeps `fallback`'s rotation so callers
/// see a deterministic result instead of an arbitrary SVD basis.
pub fn weighted_procrustes(
    src: &[Point3],
    dst: &[Point3],
    weights: &[f64],
    fallback: &RigidTransform,
) -> RigidTransform {
    debug_assert_eq!(src.len(), dst.len());
    debug_assert_eq!(src.len(), weights.len());

    let mut w_sum = 0.0;
    let mut src_acc = Vector3::zeros();
    let mut dst_acc = Vector3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        w_sum += w;
        src_acc += w * s;
        dst_acc += w * d;
    }
    if w_sum <= 0.0 {
        return *fallback;
    }
    let src_centroid = src_acc / w_sum;
    let dst_centroid = dst_acc / w_sum;

    let mut cross = Matrix3::zeros();
    for ((s, d), &w) in src.iter().zip(dst).zip(weights) {
        cross += w * (s - src_centroid) * (d - dst_centroid).transpose();
    }

    let rotation = if cross.norm() < 1e-300 {
        *fallback.rotation()
    } else {
        // maximize tr(R A) with A = sum w (s - s̄)(d - d̄)^T
        let svd = cross.svd(true, true);
        let u = svd.u.expect("svd u requested");
        let v_t = svd.v_t.expect("svd v_t requested");
        let v = v_t.transpose();
        let det = (v * u.transpose()).determinant();
        let sign = if det < 0.0 { -1.0 } else { 1.0 };
        v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, sign)) * u.transpose()
    };
    let translation = dst_centroid - rotation * src_centroid;
    RigidTransform::from_parts_unchecked(rotation, translation)
}

/// Serializable transform entry: row-major rotation plus translation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransformEntry {
    pub set_id: usize,
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

impl TransformEntry {
    pub fn from_transform(set_id: usize, t: &RigidTransform) -> Self {
        let r = t.rotation();
        let mut rotation = [0.0; 9];
        for row in 0..3 {
            for col in 0..3 {
                rotation[row * 3 + col] = r[(row, col)];
            }
        }
        Self {
            set_id,
            rotation,
            translation: [t.translation().x, t.translation().y, t.translation().z],
        }
    }

    /// Validates the stored rotation (1e-6 tolerance) and re-orthonormalizes
    /// it through an SVD projection.
    pub fn to_transform(&self) -> Result<RigidTransform> {
        let m = Matrix3::from_row_slice(&self.rotation);
        validate_rotation(&m, 1e-6)?;
        let rotation = nearest_rotation(&m);
        let translation = Vector3::from_row_slice(&self.translation);
        Ok(RigidTransform::from_parts_unchecked(rotation, translation))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut ChaCha8Rng) -> Matrix3<f64> {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        rotation_from_axis_angle(axis, angle)
    }

    fn random_transform(rng: &mut ChaCha8Rng) -> RigidTransform {
        let t = Vector3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
        );
        RigidTransform::from_parts_unchecked(random_rotation(rng), t)
    }

    // Independent oracle: rotate a vector with quaternion algebra, q v q*.
    fn quaternion_rotate(axis: Vector3<f64>, angle: f64, v: Vector3<f64>) -> Vector3<f64> {
        let u = axis.normalize();
        let (s, c) = ((angle / 2.0).sin(), (angle / 2.0).cos());
        let (qw, qx, qy, qz) = (c, s * u.x, s * u.y, s * u.z);
        // t = 2 q_vec x v, v' = v + qw t + q_vec x t
        let qv = Vector3::new(qx, qy, qz);
        let t = 2.0 * qv.cross(&v);
        v + qw * t + qv.cross(&t)
    }

    #[test]
    fn identity_transform_is_a_no_op() {
        let cloud = PointCloud::new(vec![
            Vector3::new(1.0, 2.0, 3.0),
            Vector3::new(-0.5, 0.0, 4.0),
        ])
        .unwrap();
        let out = apply_transform(&RigidTransform::identity(), &cloud);
        assert_eq!(out.points(), cloud.points());
    }

    #[test]
    fn quarter_turn_about_z() {
        let t = RigidTransform::from_axis_angle(
            Vector3::z(),
            std::f64::consts::FRAC_PI_2,
            Vector3::zeros(),
        );
        let p = t.apply_point(&Vector3::new(1.0, 0.0, 0.0));
        assert_abs_diff_eq!(p, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn apply_transform_matches_quaternion_oracle() {
        let axis = Vector3::new(1.0, 1.0, 1.0) / 3.0f64.sqrt();
        let angle = 30.0f64.to_radians();
        let translation = Vector3::new(1.0, 2.0, 3.0);
        let point = Vector3::new(0.5, -0.2, 0.1);

        let t = RigidTransform::from_axis_angle(axis, angle, translation);
        let got = t.apply_point(&point);
        let expected = quaternion_rotate(axis, angle, point) + translation;
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
        // Frozen from the quaternion oracle.
        let frozen = Vector3::new(
            1.5374785217660714,
            1.9601282525764456,
            2.902393225657483,
        );
        assert_abs_diff_eq!(got, frozen, epsilon = 1e-12);
    }

    #[test]
    fn compose_with_identity_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = random_transform(&mut rng);
        let id = RigidTransform::identity();
        assert_abs_diff_eq!(id.compose(&a).rotation(), a.rotation(), epsilon = 1e-15);
        let round = a.compose(&a.inverse());
        assert_abs_diff_eq!(round.rotation(), id.rotation(), epsilon = 1e-12);
        assert_abs_diff_eq!(round.translation(), id.translation(), epsilon = 1e-12);
    }

    #[test]
    fn compose_matches_pointwise_application() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = random_transform(&mut rng);
        let b = random_transform(&mut rng);
        let ab = a.compose(&b);
        for _ in 0..100 {
            let p = Vector3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            );
            assert_abs_diff_eq!(ab.apply_point(&p), a.apply_point(&b.apply_point(&p)), epsilon = 1e-10);
        }
    }

    #[test]
    fn geodesic_error_basics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let r = random_rotation(&mut rng);
        assert_eq!(geodesic_rotation_error_deg(&r, &r), 0.0);

        let r45 = rotation_from_axis_angle(Vector3::new(0.3, -1.0, 0.5), 45.0f64.to_radians());
        assert_abs_diff_eq!(
            geodesic_rotation_error_deg(&Matrix3::identity(), &r45),
            45.0,
            epsilon = 1e-9
        );
    }

    #[test]
    fn geodesic_error_matches_trace_formula() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..200 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let got = geodesic_rotation_error_deg(&a, &b);
            let tr = (a.transpose() * b).trace();
            let expected = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos().to_degrees();
            assert_abs_diff_eq!(got, expected, epsilon = 1e-9);
        }
    }

    #[test]
    fn geodesic_error_is_symmetric_and_right_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let a = random_rotation(&mut rng);
            let b = random_rotation(&mut rng);
            let q = random_rotation(&mut rng);
            let d = geodesic_rotation_error_deg(&a, &b);
            assert_abs_diff_eq!(d, geodesic_rotation_error_deg(&b, &a), epsilon = 1e-12);
            assert_abs_diff_eq!(
                d,
                geodesic_rotation_error_deg(&(a * q), &(b * q)),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn translation_error_basics() {
        assert_eq!(
            translation_error(&Vector3::new(1.0, 2.0, 3.0), &Vector3::new(1.0, 2.0, 3.0)),
            0.0
        );
        assert_eq!(
            translation_error(&Vector3::new(1.0, 0.0, 0.0), &Vector3::zeros()),
            1.0
        );
        assert_eq!(
            translation_error(&Vector3::new(1.0, 2.0, 3.0), &Vector3::new(4.0, 6.0, 3.0)),
            5.0
        );
    }

    #[test]
    fn transform_preserves_pairwise_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let t = random_transform(&mut rng);
        let pts: Vec<Point3> = (0..40)
            .map(|_| {
                Vector3::new(
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                    rng.random_range(-4.0..4.0),
                )
            })
            .collect();
        let cloud = PointCloud::new(pts.clone()).unwrap();
        let mapped = apply_transform(&t, &cloud);
        for i in 0..pts.len() {
            for j in (i + 1)..pts.len() {
                let before = (pts[i] - pts[j]).norm();
                let after = (mapped.points()[i] - mapped.points()[j]).norm();
                assert_abs_diff_eq!(before, after, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn normals_rotate_with_the_cloud() {
        let mut cloud = PointCloud::new(vec![Vector3::zeros()]).unwrap();
        cloud.set_normals(vec![Vector3::x()]).unwrap();
        let t = RigidTransform::from_axis_angle(
            Vector3::z(),
            std::f64::consts::FRAC_PI_2,
            Vector3::new(5.0, 0.0, 0.0),
        );
        let out = apply_transform(&t, &cloud);
        assert_abs_diff_eq!(out.normals().unwrap()[0], Vector3::y(), epsilon = 1e-12);
    }

    #[test]
    fn rejects_bad_rotations_and_clouds() {
        let shear = Matrix3::new(1.0, 0.5, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(RigidTransform::new(shear, Vector3::zeros()).is_err());
        let reflection = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(RigidTransform::new(reflection, Vector3::zeros()).is_err());
        assert!(PointCloud::new(vec![Vector3::new(f64::NAN, 0.0, 0.0)]).is_err());
        let mut c = PointCloud::new(vec![Vector3::zeros()]).unwrap();
        assert!(c.set_weights(vec![0.0]).is_err());
        assert!(c.set_normals(vec![Vector3::new(2.0, 0.0, 0.0)]).is_err());
    }

    #[test]
    fn transform_entry_round_trip_revalidates() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let t = random_transform(&mut rng);
        let entry = TransformEntry::from_transform(3, &t);
        let back = entry.to_transform().unwrap();
        assert_abs_diff_eq!(back.rotation(), t.rotation(), epsilon = 1e-9);
        assert_abs_diff_eq!(back.translation(), t.translation(), epsilon = 1e-12);

        let bad = TransformEntry {
            set_id: 0,
            rotation: [1.0, 0.2, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0],
            translation: [0.0; 3],
        };
        assert!(bad.to_transform().is_err());
    }
}
