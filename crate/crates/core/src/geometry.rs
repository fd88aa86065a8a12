//! SE(3) poses, rotation conversions, trajectory association and ATE metrics.
//!
//! Conventions held throughout the crate:
//! - Hamilton quaternions in (w, x, y, z) order, world-from-body.
//! - `a.compose(&b)` has the semantics of the homogeneous product `A * B`.
//! - Tangent vectors of SE(3) are ordered `[translation; rotation]`.

use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};

use crate::error::{Error, Result};

/// Norm tolerance applied when a quaternion is accepted without renormalising.
const UNIT_TOL: f64 = 1e-9;

/// A rigid body pose: world-frame position plus world-from-body orientation.
///
/// The same type doubles as a general rigid transform (`RigidTransform`), with
/// `position` as the translation and `orientation` as the rotation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub position: Vector3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

pub type RigidTransform = Pose;

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            position: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
        }
    }

    pub fn new(position: Vector3<f64>, orientation: UnitQuaternion<f64>) -> Self {
        Self {
            position,
            orientation,
        }
        .normalized()
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self {
            position: Vector3::new(x, y, z),
            orientation: UnitQuaternion::identity(),
        }
    }

    /// Pose with zero roll/pitch and the given heading about world z.
    pub fn from_position_yaw(position: Vector3<f64>, yaw: f64) -> Self {
        Self {
            position,
            orientation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
        }
    }

    /// Rotation matrix of the orientation.
    pub fn rotation(&self) -> Matrix3<f64> {
        quat_to_rotation_unit(&self.orientation)
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.position
    }

    /// `self * other` in homogeneous-matrix semantics.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            position: self.position + self.orientation * other.position,
            orientation: self.orientation * other.orientation,
        }
        .normalized()
    }

    pub fn inverse(&self) -> Pose {
        let inv_q = self.orientation.inverse();
        Pose {
            position: -(inv_q * self.position),
            orientation: inv_q,
        }
        .normalized()
    }

    /// `self⁻¹ * other`: the pose of `other` expressed in the frame of `self`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.position + self.orientation * p
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.position);
        m
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().all(|v| v.is_finite())
            && self.orientation.coords.iter().all(|v| v.is_finite())
    }

    /// Re-projects the orientation onto the unit sphere.
    pub fn normalized(mut self) -> Self {
        let q = self.orientation.into_inner();
        let n = q.norm();
        if (n - 1.0).abs() > 1e-15 {
            self.orientation = UnitQuaternion::new_unchecked(q / n);
        }
        self
    }

    /// Heading (rotation about world z) of the body x axis.
    pub fn yaw(&self) -> f64 {
        let fwd = self.orientation * Vector3::x();
        fwd.y.atan2(fwd.x)
    }

    /// Apply a tangent-space increment `[dt; dθ]`: translation added in the
    /// world frame, rotation right-multiplied as `R * Exp(dθ)`.
    pub fn retract(&self, delta: &nalgebra::Vector6<f64>) -> Pose {
        let dt = delta.fixed_rows::<3>(0).into_owned();
        let dr = delta.fixed_rows::<3>(3).into_owned();
        Pose {
            position: self.position + dt,
            orientation: self.orientation * so3_exp(&dr),
        }
        .normalized()
    }
}

pub fn compose(a: &RigidTransform, b: &RigidTransform) -> RigidTransform {
    a.compose(b)
}

pub fn invert(t: &RigidTransform) -> RigidTransform {
    t.inverse()
}

/// Rotation matrix of a (possibly non-unit) quaternion. Non-unit inputs are
/// normalised first; a zero quaternion is rejected.
pub fn quat_to_rotation(q: &Quaternion<f64>) -> Result<Matrix3<f64>> {
    let n = q.norm();
    if !(n.is_finite() && n > f64::EPSILON) {
        return Err(Error::InvalidInput(format!(
            "quaternion norm {n} cannot be normalised"
        )));
    }
    let q = if (n - 1.0).abs() > 1e-6 { q / n } else { *q };
    Ok(rotation_from_components(q.w, q.i, q.j, q.k))
}

fn quat_to_rotation_unit(q: &UnitQuaternion<f64>) -> Matrix3<f64> {
    let q = q.quaternion();
    rotation_from_components(q.w, q.i, q.j, q.k)
}

fn rotation_from_components(w: f64, x: f64, y: f64, z: f64) -> Matrix3<f64> {
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, xz, yz) = (x * y, x * z, y * z);
    let (wx, wy, wz) = (w * x, w * y, w * z);
    Matrix3::new(
        1.0 - 2.0 * (yy + zz),
        2.0 * (xy - wz),
        2.0 * (xz + wy),
        2.0 * (xy + wz),
        1.0 - 2.0 * (xx + zz),
        2.0 * (yz - wx),
        2.0 * (xz - wy),
        2.0 * (yz + wx),
        1.0 - 2.0 * (xx + yy),
    )
}

/// Inverse of [`quat_to_rotation`] (Shepperd's method); the result has `w >= 0`.
pub fn rotation_to_quat(r: &Matrix3<f64>) -> UnitQuaternion<f64> {
    let trace = r.trace();
    let (w, x, y, z);
    if trace > r[(0, 0)] && trace > r[(1, 1)] && trace > r[(2, 2)] {
        let s = 2.0 * (1.0 + trace).sqrt();
        w = 0.25 * s;
        x = (r[(2, 1)] - r[(1, 2)]) / s;
        y = (r[(0, 2)] - r[(2, 0)]) / s;
        z = (r[(1, 0)] - r[(0, 1)]) / s;
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = 2.0 * (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt();
        w = (r[(2, 1)] - r[(1, 2)]) / s;
        x = 0.25 * s;
        y = (r[(0, 1)] + r[(1, 0)]) / s;
        z = (r[(0, 2)] + r[(2, 0)]) / s;
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = 2.0 * (1.0 - r[(0, 0)] + r[(1, 1)] - r[(2, 2)]).sqrt();
        w = (r[(0, 2)] - r[(2, 0)]) / s;
        x = (r[(0, 1)] + r[(1, 0)]) / s;
        y = 0.25 * s;
        z = (r[(1, 2)] + r[(2, 1)]) / s;
    } else {
        let s = 2.0 * (1.0 - r[(0, 0)] - r[(1, 1)] + r[(2, 2)]).sqrt();
        w = (r[(1, 0)] - r[(0, 1)]) / s;
        x = (r[(0, 2)] + r[(2, 0)]) / s;
        y = (r[(1, 2)] + r[(2, 1)]) / s;
        z = 0.25 * s;
    }
    let q = Quaternion::new(w, x, y, z);
    let q = if q.w < 0.0 { -q } else { q };
    UnitQuaternion::new_normalize(q)
}

/// Accepts a quaternion read from an external source. Components within
/// `1e-9` of unit norm are kept bit-exact; others are renormalised.
pub fn unit_quaternion_from_wxyz(w: f64, x: f64, y: f64, z: f64) -> Result<UnitQuaternion<f64>> {
    let q = Quaternion::new(w, x, y, z);
    let n = q.norm();
    if !(n.is_finite() && n > f64::EPSILON) {
        return Err(Error::InvalidInput(format!(
            "quaternion ({w}, {x}, {y}, {z}) cannot be normalised"
        )));
    }
    if (n - 1.0).abs() <= UNIT_TOL {
        Ok(UnitQuaternion::new_unchecked(q))
    } else {
        Ok(UnitQuaternion::new_unchecked(q / n))
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Exponential map of SO(3): rotation vector to unit quaternion.
pub fn so3_exp(v: &Vector3<f64>) -> UnitQuaternion<f64> {
    let theta_sq = v.norm_squared();
    let theta = theta_sq.sqrt();
    let half = 0.5 * theta;
    let (w, k) = if theta < 1e-4 {
        // Taylor expansions of cos(θ/2) and sin(θ/2)/θ.
        (
            1.0 - theta_sq / 8.0 + theta_sq * theta_sq / 384.0,
            0.5 - theta_sq / 48.0 + theta_sq * theta_sq / 3840.0,
        )
    } else {
        (half.cos(), half.sin() / theta)
    };
    UnitQuaternion::new_normalize(Quaternion::new(w, k * v.x, k * v.y, k * v.z))
}

/// Logarithm map of SO(3): unit quaternion to rotation vector with angle in `[0, π]`.
pub fn so3_log(q: &UnitQuaternion<f64>) -> Vector3<f64> {
    let mut q = *q.quaternion();
    if q.w < 0.0 {
        q = -q;
    }
    let v = Vector3::new(q.i, q.j, q.k);
    let s = v.norm();
    if s < 1e-8 {
        // 2·atan2(s, w)/s ≈ 2/w·(1 - s²/(3w²))
        let w = q.w;
        return v * (2.0 / w) * (1.0 - s * s / (3.0 * w * w));
    }
    let theta = 2.0 * s.atan2(q.w);
    v * (theta / s)
}

/// Inverse of the right Jacobian of SO(3).
pub fn so3_right_jacobian_inv(theta: &Vector3<f64>) -> Matrix3<f64> {
    let angle = theta.norm();
    let k = skew(theta);
    if angle < 1e-6 {
        return Matrix3::identity() + 0.5 * k + (1.0 / 12.0) * k * k;
    }
    let coef = 1.0 / (angle * angle) - (1.0 + angle.cos()) / (2.0 * angle * angle.sin());
    Matrix3::identity() + 0.5 * k + coef * k * k
}

/// One timestamped pose.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stamped {
    pub t: f64,
    pub pose: Pose,
}

/// Poses with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    samples: Vec<Stamped>,
}

impl Trajectory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_samples(samples: Vec<Stamped>) -> Result<Self> {
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(Error::NonMonotonicTimestamp {
                    prev: w[0].t,
                    next: w[1].t,
                });
            }
        }
        if let Some(bad) = samples.iter().find(|s| !s.t.is_finite() || !s.pose.is_finite()) {
            return Err(Error::NonFinite(format!("sample at t = {}", bad.t)));
        }
        Ok(Self { samples })
    }

    pub fn push(&mut self, t: f64, pose: Pose) -> Result<()> {
        if let Some(last) = self.samples.last() {
            if !(t > last.t) {
                return Err(Error::NonMonotonicTimestamp { prev: last.t, next: t });
            }
        }
        if !t.is_finite() || !pose.is_finite() {
            return Err(Error::NonFinite(format!("sample at t = {t}")));
        }
        self.samples.push(Stamped { t, pose });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Stamped] {
        &self.samples
    }

    pub fn iter(&self) -> impl Iterator<Item = &Stamped> {
        self.samples.iter()
    }

    pub fn first(&self) -> Option<&Stamped> {
        self.samples.first()
    }

    pub fn last(&self) -> Option<&Stamped> {
        self.samples.last()
    }

    /// Sum of Euclidean distances between consecutive positions.
    pub fn path_length(&self) -> f64 {
        self.samples
            .windows(2)
            .map(|w| (w[1].pose.position - w[0].pose.position).norm())
            .sum()
    }

    /// Index of the sample closest in time to `t`.
    pub fn nearest_index(&self, t: f64) -> Option<usize> {
        if self.samples.is_empty() {
            return None;
        }
        let i = self.samples.partition_point(|s| s.t < t);
        let candidates = [i.checked_sub(1), (i < self.samples.len()).then_some(i)];
        candidates
            .into_iter()
            .flatten()
            .min_by(|&a, &b| {
                let da = (self.samples[a].t - t).abs();
                let db = (self.samples[b].t - t).abs();
                da.total_cmp(&db).then(a.cmp(&b))
            })
    }

    /// Applies `transform * pose` to every sample.
    pub fn transformed(&self, transform: &RigidTransform) -> Trajectory {
        Trajectory {
            samples: self
                .samples
                .iter()
                .map(|s| Stamped {
                    t: s.t,
                    pose: transform.compose(&s.pose),
                })
                .collect(),
        }
    }
}

/// Default maximum timestamp gap for nearest-neighbour association.
pub const DEFAULT_MAX_GAP: f64 = 0.05;

/// Pairs every `est` sample with the nearest `reference` sample in time,
/// dropping pairs further apart than `max_gap`.
pub fn associate(est: &Trajectory, reference: &Trajectory, max_gap: f64) -> Vec<(usize, usize)> {
    est.samples
        .iter()
        .enumerate()
        .filter_map(|(i, s)| {
            let j = reference.nearest_index(s.t)?;
            ((reference.samples[j].t - s.t).abs() <= max_gap).then_some((i, j))
        })
        .collect()
}

/// Result of a rigid least-squares alignment.
#[derive(Debug, Clone, Copy)]
pub struct Alignment {
    /// Maps estimate positions onto reference positions.
    pub transform: RigidTransform,
    pub matches: usize,
    /// Matched points are (nearly) collinear so the rotation about their line
    /// is not observable; the SVD sign convention picked one.
    pub degenerate: bool,
}

/// Rigid (rotation + translation, no scale) alignment of `est` onto `reference`
/// over time-associated positions.
pub fn se3_align(est: &Trajectory, reference: &Trajectory, max_gap: f64) -> Result<Alignment> {
    let pairs = associate(est, reference, max_gap);
    let src: Vec<_> = pairs.iter().map(|&(i, _)| est.samples[i].pose.position).collect();
    let dst: Vec<_> = pairs
        .iter()
        .map(|&(_, j)| reference.samples[j].pose.position)
        .collect();
    align_points(&src, &dst)
}

/// Least-squares rigid transform taking `src` points onto `dst` points.
pub fn align_points(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Alignment> {
    if src.len() != dst.len() {
        return Err(Error::InvalidInput(format!(
            "point sets differ in size ({} vs {})",
            src.len(),
            dst.len()
        )));
    }
    let n = src.len();
    if n < 3 {
        return Err(Error::InsufficientData { needed: 3, got: n });
    }
    let inv_n = 1.0 / n as f64;
    let mu_src = src.iter().sum::<Vector3<f64>>() * inv_n;
    let mu_dst = dst.iter().sum::<Vector3<f64>>() * inv_n;
    let mut cov = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        cov += (d - mu_dst) * (s - mu_src).transpose();
    }
    cov *= inv_n;

    let svd = cov.svd(true, true);
    let u = svd.u.expect("svd u requested");
    let v_t = svd.v_t.expect("svd v_t requested");
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    let degenerate = sv[0] <= f64::EPSILON || sv[1] <= 1e-12 * sv[0];

    // nalgebra does not sort singular values; the reflection fix must hit the
    // smallest one.
    let mut s = Matrix3::identity();
    if (u * v_t).determinant() < 0.0 {
        let (min_idx, _) = svd
            .singular_values
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .expect("three singular values");
        s[(min_idx, min_idx)] = -1.0;
    }
    let r = u * s * v_t;
    let t = mu_dst - r * mu_src;
    Ok(Alignment {
        transform: Pose {
            position: t,
            orientation: rotation_to_quat(&r),
        },
        matches: n,
        degenerate,
    })
}

/// Root-mean-square absolute position error over associated samples, after an
/// optional rigid alignment of `est` onto `reference`.
pub fn rmse_ate(est: &Trajectory, reference: &Trajectory, align: bool, max_gap: f64) -> Result<f64> {
    let pairs = associate(est, reference, max_gap);
    if pairs.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let transform = if align {
        se3_align(est, reference, max_gap)?.transform
    } else {
        Pose::identity()
    };
    let sum_sq: f64 = pairs
        .iter()
        .map(|&(i, j)| {
            let p = transform.transform_point(&est.samples[i].pose.position);
            (p - reference.samples[j].pose.position).norm_squared()
        })
        .sum();
    Ok((sum_sq / pairs.len() as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng) -> Pose {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        Pose::new(
            Vector3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            ),
            UnitQuaternion::new_normalize(q),
        )
    }

    #[test]
    fn identity_quaternion_gives_identity_matrix() {
        let r = quat_to_rotation(&Quaternion::identity()).unwrap();
        assert_eq!(r, Matrix3::identity());
    }

    #[test]
    fn quarter_yaw_maps_x_to_y() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r = quat_to_rotation(&Quaternion::new(h, 0.0, 0.0, h)).unwrap();
        assert_relative_eq!(r * Vector3::x(), Vector3::y(), epsilon = 1e-15);
    }

    #[test]
    fn zero_quaternion_is_rejected() {
        assert!(matches!(
            quat_to_rotation(&Quaternion::new(0.0, 0.0, 0.0, 0.0)),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn rotation_matrices_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let q = random_pose(&mut rng).orientation;
            let r = quat_to_rotation(q.quaternion()).unwrap();
            assert!((r * r.transpose() - Matrix3::identity()).norm() < 1e-12);
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_round_trips_up_to_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let q = random_pose(&mut rng).orientation;
            let back = rotation_to_quat(&quat_to_rotation(q.quaternion()).unwrap());
            let d = (back.coords - q.coords).norm().min((back.coords + q.coords).norm());
            assert!(d < 1e-9, "round trip error {d}");
        }
    }

    #[test]
    fn compose_identity_and_translations() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let t = random_pose(&mut rng);
        assert_eq!(t.compose(&Pose::identity()), t);
        let c = Pose::from_translation(1.0, 0.0, 0.0).compose(&Pose::from_translation(0.0, 2.0, 0.0));
        assert_eq!(c, Pose::from_translation(1.0, 2.0, 0.0));
    }

    #[test]
    fn compose_matches_homogeneous_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..200 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            let dense = a.to_matrix() * b.to_matrix();
            assert!((a.compose(&b).to_matrix() - dense).abs().max() < 1e-12);
        }
    }

    #[test]
    fn invert_cases() {
        assert_eq!(invert(&Pose::identity()), Pose::identity());
        assert_eq!(
            invert(&Pose::from_translation(1.0, 2.0, 3.0)),
            Pose::from_translation(-1.0, -2.0, -3.0)
        );
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let t = random_pose(&mut rng);
            let back = invert(&invert(&t));
            assert!((back.to_matrix() - t.to_matrix()).abs().max() < 1e-12);
            let id = compose(&invert(&t), &t);
            assert!((id.to_matrix() - Matrix4::identity()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn composition_is_associative() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..200 {
            let (a, b, c) = (random_pose(&mut rng), random_pose(&mut rng), random_pose(&mut rng));
            let l = a.compose(&b).compose(&c).to_matrix();
            let r = a.compose(&b.compose(&c)).to_matrix();
            assert!((l - r).abs().max() < 1e-10);
        }
    }

    #[test]
    fn exp_log_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for scale in [1e-9, 1e-5, 1e-2, 1.0, 3.0] {
            for _ in 0..100 {
                let v = Vector3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
                .normalize()
                    * scale;
                assert_relative_eq!(so3_log(&so3_exp(&v)), v, epsilon = 1e-12, max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn trajectory_rejects_non_increasing_timestamps() {
        let mut t = Trajectory::new();
        t.push(1.0, Pose::identity()).unwrap();
        assert!(matches!(
            t.push(1.0, Pose::identity()),
            Err(Error::NonMonotonicTimestamp { .. })
        ));
    }

    fn line_traj(n: usize) -> Trajectory {
        let samples = (0..n)
            .map(|i| {
                let s = i as f64;
                Stamped {
                    t: s * 0.1,
                    pose: Pose::from_translation(s.sin() * 3.0, s * 0.5, (s * 0.3).cos()),
                }
            })
            .collect::<Vec<_>>();
        Trajectory::from_samples(samples).unwrap()
    }

    #[test]
    fn align_identical_is_identity() {
        let t = line_traj(50);
        let a = se3_align(&t, &t, DEFAULT_MAX_GAP).unwrap();
        assert!((a.transform.to_matrix() - Matrix4::identity()).abs().max() < 1e-9);
        assert!(!a.degenerate);
    }

    #[test]
    fn align_recovers_inverse_of_known_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let reference = line_traj(60);
        let offset = random_pose(&mut rng);
        let est = reference.transformed(&offset);
        let a = se3_align(&est, &reference, DEFAULT_MAX_GAP).unwrap();
        assert!((a.transform.to_matrix() - offset.inverse().to_matrix()).abs().max() < 1e-9);
        assert!(rmse_ate(&est, &reference, true, DEFAULT_MAX_GAP).unwrap() < 1e-9);
    }

    #[test]
    fn align_needs_three_matches() {
        let t = line_traj(2);
        assert!(matches!(
            se3_align(&t, &t, DEFAULT_MAX_GAP),
            Err(Error::InsufficientData { needed: 3, got: 2 })
        ));
    }

    #[test]
    fn collinear_points_are_flagged() {
        let samples = (0..10)
            .map(|i| Stamped {
                t: i as f64,
                pose: Pose::from_translation(i as f64, 0.0, 0.0),
            })
            .collect();
        let t = Trajectory::from_samples(samples).unwrap();
        let a = se3_align(&t, &t, DEFAULT_MAX_GAP).unwrap();
        assert!(a.degenerate);
        assert_relative_eq!(a.transform.rotation().determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn rmse_simple_cases() {
        let t = line_traj(30);
        assert_eq!(rmse_ate(&t, &t, false, DEFAULT_MAX_GAP).unwrap(), 0.0);
        let shifted = t.transformed(&Pose::from_translation(1.0, 0.0, 0.0));
        assert_relative_eq!(
            rmse_ate(&t, &shifted, false, DEFAULT_MAX_GAP).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let empty = Trajectory::new();
        assert!(rmse_ate(&empty, &t, false, DEFAULT_MAX_GAP).is_err());
    }

    #[test]
    fn association_drops_far_samples() {
        let a = line_traj(10);
        let shifted = a.iter().map(|s| Stamped { t: s.t + 0.2, pose: s.pose }).collect();
        let b = Trajectory::from_samples(shifted).unwrap();
        assert!(associate(&a, &b, 0.05).len() < a.len());
        assert_eq!(associate(&a, &a, 0.05).len(), a.len());
    }
}
