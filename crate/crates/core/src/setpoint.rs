//! Anti-aligning transform and the scale-preserved image setpoint.
//!
//! The ideal face-to-face configuration has the diver's frame anti-aligned with
//! the camera: `z_B . z_c = -1`, `x_B . x_c = -1`, `y_B . y_c = +1`, i.e. the
//! diver faces the camera, head up in the image, with the keypoint center on
//! the optical axis at the commanded standoff. Kabsch aligns the body axes with
//! the camera axes (diver facing away); a half turn about camera y then turns
//! the diver around. Projecting the transformed keypoints gives the setpoint,
//! which keeps the diver's true body proportions at that distance.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::body_frame::{BodyFrame, TorsoPose3D};
use crate::camera::CameraIntrinsics;
use crate::keypoints::{KeypointId, PerKeypoint};
use crate::{Error, ImagePoint, Mat3, Result, Vec3};

/// Proper rigid motion `p -> rotation * p + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidTransform {
    pub rotation: Mat3,
    pub translation: Vec3,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Mat3::identity(),
            translation: Vec3::zeros(),
        }
    }

    pub fn apply(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    pub fn apply_frame(&self, frame: &BodyFrame) -> BodyFrame {
        BodyFrame {
            origin: self.apply(&frame.origin),
            x_axis: self.rotation * frame.x_axis,
            y_axis: self.rotation * frame.y_axis,
            z_axis: self.rotation * frame.z_axis,
        }
    }
}

/// Rotation by pi about camera y, written out exactly.
pub fn half_turn_about_y() -> Mat3 {
    Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, -1.0))
}

/// Proper rotation `R` minimizing `sum |R * source_i - target_i|^2`.
///
/// The inputs are treated as direction vectors and are not centred.
pub fn kabsch_rotation(source: &[Vec3], target: &[Vec3]) -> Result<Mat3> {
    if source.len() != target.len() {
        return Err(Error::invalid(
            "target",
            format!("{} source vs {} target vectors", source.len(), target.len()),
        ));
    }
    if source.len() < 3 {
        return Err(Error::invalid("source", "need at least three correspondences"));
    }
    let h: Mat3 = source
        .iter()
        .zip(target)
        .map(|(s, t)| s * t.transpose())
        .sum();

    let svd = h.svd(true, true);
    let mut sv = [svd.singular_values[0], svd.singular_values[1], svd.singular_values[2]];
    sv.sort_by(|a, b| b.total_cmp(a));
    if !(sv[1] > 1e-12 * sv[0].max(f64::MIN_POSITIVE)) {
        return Err(Error::RankDeficient {
            singular_values: sv,
        });
    }
    let u = svd.u.expect("requested U");
    let v = svd.v_t.expect("requested V^T").transpose();
    let d = (v * u.transpose()).determinant().signum();
    Ok(v * Mat3::from_diagonal(&Vec3::new(1.0, 1.0, d)) * u.transpose())
}

/// Root-mean-square residual of `rotation * source_i - target_i`.
pub fn rmsd(rotation: &Mat3, source: &[Vec3], target: &[Vec3]) -> f64 {
    let sq: f64 = source
        .iter()
        .zip(target)
        .map(|(s, t)| (rotation * s - t).norm_squared())
        .sum();
    (sq / source.len() as f64).sqrt()
}

/// Rigid transform taking `frame` to the face-to-face configuration at `distance_m`.
pub fn anti_align_transform(frame: &BodyFrame, distance_m: f64) -> Result<RigidTransform> {
    if !(distance_m.is_finite() && distance_m > 0.0) {
        return Err(Error::invalid("distance_m", format!("must be > 0, got {distance_m}")));
    }
    let facing_away = kabsch_rotation(
        &[frame.x_axis, frame.y_axis, frame.z_axis],
        &[Vec3::x(), Vec3::y(), Vec3::z()],
    )?;
    let rotation = half_turn_about_y() * facing_away;
    let translation = Vec3::new(0.0, 0.0, distance_m) - rotation * frame.origin;
    Ok(RigidTransform {
        rotation,
        translation,
    })
}

/// Desired image positions of the six keypoints at a commanded standoff.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoint {
    pub distance_m: f64,
    pub points: PerKeypoint<ImagePoint>,
}

impl Setpoint {
    pub fn from_json_str(json: &str) -> Result<Self> {
        let sp: Setpoint =
            serde_json::from_str(json).map_err(|e| Error::invalid("setpoint", e.to_string()))?;
        if !(sp.distance_m > 0.0) || sp.points.values().any(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::invalid("setpoint", "distance must be > 0 and points finite"));
        }
        Ok(sp)
    }

    /// Per-keypoint mean of several setpoints commanded at the same distance.
    pub fn mean(setpoints: &[Setpoint]) -> Result<Setpoint> {
        let first = setpoints
            .first()
            .ok_or_else(|| Error::invalid("setpoints", "nothing to average"))?;
        if setpoints.iter().any(|s| s.distance_m != first.distance_m) {
            return Err(Error::invalid("setpoints", "distances differ"));
        }
        let n = setpoints.len() as f64;
        Ok(Setpoint {
            distance_m: first.distance_m,
            points: PerKeypoint::from_fn(|id| {
                setpoints.iter().map(|s| s.points[id]).sum::<ImagePoint>() / n
            }),
        })
    }

    /// Pixel distance between the two shoulders.
    pub fn shoulder_spread_px(&self) -> f64 {
        (self.points[KeypointId::LeftShoulder] - self.points[KeypointId::RightShoulder]).norm()
    }

    pub fn to_map(&self) -> BTreeMap<KeypointId, ImagePoint> {
        self.points.iter().map(|(id, p)| (id, *p)).collect()
    }
}

/// Project the anti-aligned torso: `s* = K(T p)` for each keypoint.
pub fn compute_setpoint(
    pose: &TorsoPose3D,
    frame: &BodyFrame,
    intrinsics: &CameraIntrinsics,
    distance_m: f64,
) -> Result<Setpoint> {
    let transform = anti_align_transform(frame, distance_m)?;
    let points = PerKeypoint::try_from_fn(|id| {
        intrinsics
            .project(&transform.apply(&pose.point(id)))
            .map_err(|e| e.at(id))
    })?;
    Ok(Setpoint { distance_m, points })
}

/// Per-keypoint Euclidean pixel errors and their sum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SetpointError {
    pub sum_euclidean_px: f64,
    pub per_keypoint_px: PerKeypoint<f64>,
}

impl SetpointError {
    pub const CSV_HEADER: &'static str = "frame,pose_label,distance_m,sum_px,b,lh,ls,n,rh,rs";

    /// One row of the per-frame error report, matching [`SetpointError::CSV_HEADER`].
    pub fn csv_row(&self, frame: u64, pose_label: &str, distance_m: f64) -> String {
        let mut row = format!(
            "{frame},{},{distance_m},{}",
            csv_field(pose_label),
            self.sum_euclidean_px
        );
        for v in self.per_keypoint_px.values() {
            write!(row, ",{v}").expect("write to String");
        }
        row
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Score `observed` against `baseline`.
///
/// With `center_align`, both point sets are translated so their centroids
/// coincide before differencing.
pub fn setpoint_error(
    observed: &BTreeMap<KeypointId, ImagePoint>,
    baseline: &Setpoint,
    center_align: bool,
) -> Result<SetpointError> {
    let missing: Vec<_> = KeypointId::ALL
        .into_iter()
        .filter(|id| !observed.contains_key(id))
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingKeypoint { missing });
    }
    let observed = PerKeypoint::from_fn(|id| observed[&id]);
    let shift = if center_align {
        let centroid = |pts: &PerKeypoint<ImagePoint>| pts.values().sum::<ImagePoint>() / 6.0;
        centroid(&baseline.points) - centroid(&observed)
    } else {
        ImagePoint::zeros()
    };
    let per_keypoint_px = PerKeypoint::from_fn(|id| (observed[id] + shift - baseline.points[id]).norm());
    Ok(SetpointError {
        sum_euclidean_px: per_keypoint_px.values().sum(),
        per_keypoint_px,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::body_frame::build_body_frame;
    use approx::assert_relative_eq;
    use nalgebra::{Rotation3, UnitQuaternion};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ideal(d: f64) -> BodyFrame {
        BodyFrame::new(Vec3::new(0.0, 0.0, d), -Vec3::x(), Vec3::y(), -Vec3::z()).unwrap()
    }

    fn random_rotation(rng: &mut impl Rng) -> Mat3 {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3]))
            .to_rotation_matrix()
            .into_inner()
    }

    #[test]
    fn kabsch_identity_on_basis() {
        let basis = [Vec3::x(), Vec3::y(), Vec3::z()];
        let r = kabsch_rotation(&basis, &basis).unwrap();
        assert_relative_eq!(r, Mat3::identity(), epsilon = 1e-15);
    }

    #[test]
    fn kabsch_recovers_random_rotation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let truth = random_rotation(&mut rng);
            let src: Vec<Vec3> = (0..5)
                .map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0)))
                .collect();
            let dst: Vec<Vec3> = src.iter().map(|s| truth * s).collect();
            let r = kabsch_rotation(&src, &dst).unwrap();
            assert!((r - truth).abs().max() < 1e-9);
        }
    }

    #[test]
    fn kabsch_never_returns_reflection() {
        let src = [Vec3::x(), Vec3::y(), Vec3::z()];
        let mirrored = [-Vec3::x(), Vec3::y(), Vec3::z()];
        let r = kabsch_rotation(&src, &mirrored).unwrap();
        assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn kabsch_beats_random_rotations() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let truth = random_rotation(&mut rng);
        let src: Vec<Vec3> = (0..6).map(|_| Vec3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
        let dst: Vec<Vec3> = src
            .iter()
            .map(|s| truth * s + Vec3::from_fn(|_, _| { let n: f64 = StandardNormal.sample(&mut rng); 0.05 * n }))
            .collect();
        let best = rmsd(&kabsch_rotation(&src, &dst).unwrap(), &src, &dst);
        for _ in 0..2000 {
            assert!(best <= rmsd(&random_rotation(&mut rng), &src, &dst));
        }
    }

    #[test]
    fn kabsch_rank_deficient() {
        let line = [Vec3::x(), 2.0 * Vec3::x(), -Vec3::x()];
        assert!(matches!(kabsch_rotation(&line, &line), Err(Error::RankDeficient { .. })));
        let zeros = [Vec3::zeros(); 3];
        assert!(matches!(kabsch_rotation(&zeros, &zeros), Err(Error::RankDeficient { .. })));
        // planar sets (one zero singular value) are still determined
        let plane = [Vec3::x(), Vec3::y(), Vec3::x() + Vec3::y()];
        assert!(kabsch_rotation(&plane, &plane).is_ok());
        assert!(kabsch_rotation(&plane[..2], &plane[..2]).is_err());
    }

    #[test]
    fn ideal_frame_is_fixed_point() {
        let t = anti_align_transform(&ideal(2.0), 2.0).unwrap();
        assert_relative_eq!(t.rotation, Mat3::identity(), epsilon = 1e-12);
        assert_relative_eq!(t.translation, Vec3::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn undoes_rotation_about_y() {
        let rot30 = Rotation3::from_axis_angle(&Vec3::y_axis(), 30f64.to_radians());
        let frame = BodyFrame::from_rotation(Vec3::new(0.0, 0.0, 2.0), &(rot30 * ideal(2.0).rotation())).unwrap();
        let t = anti_align_transform(&frame, 2.0).unwrap();
        let expected = Rotation3::from_axis_angle(&Vec3::y_axis(), -30f64.to_radians());
        assert_relative_eq!(t.rotation, *expected.matrix(), epsilon = 1e-12);
    }

    #[test]
    fn constraints_hold_for_random_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let origin = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(1.0..3.0));
            let frame = BodyFrame::from_rotation(origin, &random_rotation(&mut rng)).unwrap();
            let d = rng.random_range(0.5..4.0);
            let t = anti_align_transform(&frame, d).unwrap();
            let f = t.apply_frame(&frame);
            assert!((f.z_axis.dot(&Vec3::z()) + 1.0).abs() < 1e-9);
            assert!((f.x_axis.dot(&Vec3::x()) + 1.0).abs() < 1e-9);
            assert!((f.y_axis.dot(&Vec3::y()) - 1.0).abs() < 1e-9);
            assert!((f.origin - Vec3::new(0.0, 0.0, d)).norm() < 1e-9);
            assert!((t.rotation.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rejects_bad_distance() {
        assert!(anti_align_transform(&ideal(2.0), 0.0).is_err());
        assert!(anti_align_transform(&ideal(2.0), f64::NAN).is_err());
    }

    fn facing_pose(shoulder: f64) -> TorsoPose3D {
        use KeypointId::*;
        // built so the keypoint mean sits at (0, 0, 2)
        let raw = PerKeypoint::from_fn(|id| match id {
            LeftShoulder => Vec3::new(shoulder / 2.0, -0.275, 0.0),
            RightShoulder => Vec3::new(-shoulder / 2.0, -0.275, 0.0),
            LeftHip => Vec3::new(0.175, 0.275, 0.0),
            RightHip => Vec3::new(-0.175, 0.275, 0.0),
            NeckBase => Vec3::new(0.0, -0.275, 0.0),
            NoseBridge => Vec3::new(0.0, -0.525, -0.1),
        });
        let mean = raw.values().sum::<Vec3>() / 6.0;
        TorsoPose3D::new(raw.map(|_, p| p - mean + Vec3::new(0.0, 0.0, 2.0))).unwrap()
    }

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(800.0, 800.0, 640.0, 360.0, 1280, 720).unwrap()
    }

    #[test]
    fn facing_diver_at_commanded_distance_is_already_ideal() {
        let pose = facing_pose(0.45);
        let frame = build_body_frame(&pose).unwrap();
        let sp = compute_setpoint(&pose, &frame, &k(), 2.0).unwrap();
        for (id, p) in sp.points.iter() {
            let observed = k().project(&pose.point(id)).unwrap();
            assert!((p - observed).norm() < 1e-6);
        }
    }

    #[test]
    fn spread_scales_with_shoulder_depth() {
        let pose = facing_pose(0.45);
        let frame = build_body_frame(&pose).unwrap();
        let near = compute_setpoint(&pose, &frame, &k(), 1.0).unwrap();
        let far = compute_setpoint(&pose, &frame, &k(), 2.0).unwrap();
        // the nose pulls the keypoint centre 0.1/6 m in front of the shoulders
        let offset = 0.1 / 6.0;
        assert_relative_eq!(
            near.shoulder_spread_px() / far.shoulder_spread_px(),
            (2.0 + offset) / (1.0 + offset),
            epsilon = 1e-12
        );
    }

    #[test]
    fn spread_tracks_shoulder_width() {
        let sp = |w| {
            let pose = facing_pose(w);
            compute_setpoint(&pose, &build_body_frame(&pose).unwrap(), &k(), 2.0).unwrap()
        };
        assert_relative_eq!(sp(0.40).shoulder_spread_px() / sp(0.50).shoulder_spread_px(), 0.8, epsilon = 1e-6);
    }

    #[test]
    fn too_close_standoff_puts_points_behind_camera() {
        let pose = facing_pose(0.45);
        let frame = build_body_frame(&pose).unwrap();
        let e = compute_setpoint(&pose, &frame, &k(), 0.01).unwrap_err();
        assert!(matches!(e, Error::NonPositiveDepth { id: Some(KeypointId::NoseBridge), .. }));
    }

    fn baseline() -> Setpoint {
        Setpoint {
            distance_m: 2.0,
            points: PerKeypoint::from_fn(|id| ImagePoint::new(600.0 + 10.0 * id.index() as f64, 300.0 - 3.0 * id.index() as f64)),
        }
    }

    #[test]
    fn error_metric() {
        let b = baseline();
        let same = b.to_map();
        assert_eq!(setpoint_error(&same, &b, false).unwrap().sum_euclidean_px, 0.0);

        let shifted = b.points.iter().map(|(id, p)| (id, p + ImagePoint::new(10.0, 0.0))).collect();
        assert_relative_eq!(setpoint_error(&shifted, &b, true).unwrap().sum_euclidean_px, 0.0, epsilon = 1e-12);
        assert_relative_eq!(setpoint_error(&shifted, &b, false).unwrap().sum_euclidean_px, 60.0, epsilon = 1e-12);

        let mut one_off = same.clone();
        *one_off.get_mut(&KeypointId::NeckBase).unwrap() += ImagePoint::new(3.0, 4.0);
        let e = setpoint_error(&one_off, &b, false).unwrap();
        assert_relative_eq!(e.per_keypoint_px[KeypointId::NeckBase], 5.0, epsilon = 1e-12);
        assert_relative_eq!(e.sum_euclidean_px, 5.0, epsilon = 1e-12);
        assert_relative_eq!(e.sum_euclidean_px, e.per_keypoint_px.values().sum::<f64>(), epsilon = 1e-9);

        let mut partial = same;
        partial.remove(&KeypointId::RightHip);
        assert_eq!(
            setpoint_error(&partial, &b, false).unwrap_err(),
            Error::MissingKeypoint { missing: vec![KeypointId::RightHip] }
        );
    }

    #[test]
    fn setpoint_json_and_csv() {
        let b = Setpoint {
            distance_m: 2.0,
            points: PerKeypoint::from_fn(|id| ImagePoint::new(id.index() as f64, 0.5)),
        };
        let json = serde_json::to_string(&b).unwrap();
        assert_eq!(
            json,
            r#"{"distance_m":2.0,"points":{"b":[0.0,0.5],"lh":[1.0,0.5],"ls":[2.0,0.5],"n":[3.0,0.5],"rh":[4.0,0.5],"rs":[5.0,0.5]}}"#
        );
        assert_eq!(Setpoint::from_json_str(&json).unwrap(), b);
        assert!(Setpoint::from_json_str(r#"{"distance_m":2.0,"points":{}}"#).is_err());

        let e = setpoint_error(&b.to_map(), &b, false).unwrap();
        assert_eq!(e.csv_row(4, "Upright (facing)", 2.0), "4,Upright (facing),2,0,0,0,0,0,0,0");
        assert_eq!(csv_field("a,b"), "\"a,b\"");
    }

    #[test]
    fn mean_setpoint() {
        let a = baseline();
        let mut b = a;
        b.points[KeypointId::NoseBridge] += ImagePoint::new(2.0, 2.0);
        let m = Setpoint::mean(&[a, b]).unwrap();
        assert_eq!(m.points[KeypointId::NoseBridge], a.points[KeypointId::NoseBridge] + ImagePoint::new(1.0, 1.0));
        assert!(Setpoint::mean(&[]).is_err());
        let mut c = a;
        c.distance_m = 1.0;
        assert!(Setpoint::mean(&[a, c]).is_err());
    }
}
