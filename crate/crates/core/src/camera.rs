//! Pinhole camera and rectified stereo rig.
//!
//! Input is assumed to be rectified already: both cameras share intrinsics,
//! epipolar lines are horizontal, and the right camera sits `baseline_m`
//! along the left camera's +x axis. Every 3D result is in the left camera frame.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::body_frame::TorsoPose3D;
use crate::keypoints::{require_complete, KeypointId, PerKeypoint, PoseObservation2D};
use crate::{Error, ImagePoint, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if !(fx.is_finite() && fx > 0.0) {
            return Err(Error::invalid("fx", format!("must be > 0, got {fx}")));
        }
        if !(fy.is_finite() && fy > 0.0) {
            return Err(Error::invalid("fy", format!("must be > 0, got {fy}")));
        }
        if !(cx > 0.0 && cx < f64::from(width)) {
            return Err(Error::invalid("cx", format!("must lie in (0, {width}), got {cx}")));
        }
        if !(cy > 0.0 && cy < f64::from(height)) {
            return Err(Error::invalid("cy", format!("must lie in (0, {height}), got {cy}")));
        }
        Ok(CameraIntrinsics {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// Pinhole projection of a camera-frame point.
    pub fn project(&self, point: &Vec3) -> Result<ImagePoint> {
        if !(point.z > 0.0) {
            return Err(Error::NonPositiveDepth {
                z: point.z,
                id: None,
            });
        }
        Ok(ImagePoint::new(
            self.fx * point.x / point.z + self.cx,
            self.fy * point.y / point.z + self.cy,
        ))
    }

    /// Whether `p` lies within the image expanded by `margin_px` on every side.
    pub fn contains(&self, p: &ImagePoint, margin_px: f64) -> bool {
        p.x >= -margin_px
            && p.x <= f64::from(self.width) + margin_px
            && p.y >= -margin_px
            && p.y <= f64::from(self.height) + margin_px
    }
}

/// Free-function form of [`CameraIntrinsics::project`].
pub fn project(intrinsics: &CameraIntrinsics, point: &Vec3) -> Result<ImagePoint> {
    intrinsics.project(point)
}

/// Serializes with the flat calibration-file schema.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CalibrationFile", into = "CalibrationFile")]
pub struct StereoRig {
    pub intrinsics: CameraIntrinsics,
    pub baseline_m: f64,
}

/// On-disk calibration schema (flat JSON object).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: u32,
    height: u32,
    baseline_m: f64,
}

impl TryFrom<CalibrationFile> for StereoRig {
    type Error = Error;
    fn try_from(raw: CalibrationFile) -> Result<Self> {
        StereoRig::new(
            CameraIntrinsics::new(raw.fx, raw.fy, raw.cx, raw.cy, raw.width, raw.height)?,
            raw.baseline_m,
        )
    }
}

impl From<StereoRig> for CalibrationFile {
    fn from(rig: StereoRig) -> Self {
        let k = rig.intrinsics;
        CalibrationFile {
            fx: k.fx,
            fy: k.fy,
            cx: k.cx,
            cy: k.cy,
            width: k.width,
            height: k.height,
            baseline_m: rig.baseline_m,
        }
    }
}

impl StereoRig {
    pub fn new(intrinsics: CameraIntrinsics, baseline_m: f64) -> Result<Self> {
        if !(baseline_m.is_finite() && baseline_m > 0.0) {
            return Err(Error::invalid("baseline_m", format!("must be > 0, got {baseline_m}")));
        }
        Ok(StereoRig {
            intrinsics,
            baseline_m,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self> {
        let raw: CalibrationFile = serde_json::from_str(json)
            .map_err(|e| Error::invalid("calibration", e.to_string()))?;
        StereoRig::try_from(raw)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::invalid("calibration", format!("{}: {e}", path.display())))?;
        StereoRig::from_json_str(&text)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string(self).expect("plain numeric struct")
    }

    pub fn project_left(&self, point: &Vec3) -> Result<ImagePoint> {
        self.intrinsics.project(point)
    }

    pub fn project_right(&self, point: &Vec3) -> Result<ImagePoint> {
        self.intrinsics
            .project(&(point - Vec3::new(self.baseline_m, 0.0, 0.0)))
    }
}

impl Default for StereoRig {
    /// 1280x720 pair with a 0.2 m baseline.
    fn default() -> Self {
        StereoRig {
            intrinsics: CameraIntrinsics {
                fx: 800.0,
                fy: 800.0,
                cx: 640.0,
                cy: 360.0,
                width: 1280,
                height: 720,
            },
            baseline_m: 0.2,
        }
    }
}

/// Triangulate one correspondence of a rectified pair by disparity.
pub fn triangulate_pair(
    rig: &StereoRig,
    left: &ImagePoint,
    right: &ImagePoint,
    vert_tol_px: f64,
) -> Result<Vec3> {
    let k = &rig.intrinsics;
    let disparity = left.x - right.x;
    if !(disparity > 0.0) {
        return Err(Error::NonPositiveDisparity {
            disparity,
            id: None,
        });
    }
    let residual_px = (left.y - right.y).abs();
    if !(residual_px <= vert_tol_px) {
        return Err(Error::EpipolarViolation {
            residual_px,
            tol_px: vert_tol_px,
            id: None,
        });
    }
    let z = k.fx * rig.baseline_m / disparity;
    let v = 0.5 * (left.y + right.y);
    Ok(Vec3::new(
        (left.x - k.cx) * z / k.fx,
        (v - k.cy) * z / k.fy,
        z,
    ))
}

/// Triangulate the six torso keypoints of a stereo observation pair.
///
/// Confidence filtering is the caller's job; this only checks that both
/// sides carry every required id.
pub fn triangulate_pose(
    rig: &StereoRig,
    left: &PoseObservation2D,
    right: &PoseObservation2D,
    vert_tol_px: f64,
) -> Result<TorsoPose3D> {
    let (l, r) = match (require_complete(left), require_complete(right)) {
        (Ok(l), Ok(r)) => (l, r),
        _ => {
            let mut missing = left.missing();
            missing.extend(right.missing());
            missing.sort();
            missing.dedup();
            return Err(Error::InsufficientKeypoints { missing });
        }
    };
    let points = PerKeypoint::try_from_fn(|id: KeypointId| {
        triangulate_pair(rig, &l.point(id), &r.point(id), vert_tol_px).map_err(|e| e.at(id))
    })?;
    TorsoPose3D::new(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keypoints::{Keypoint2D, Side};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::new(500.0, 500.0, 320.0, 240.0, 640, 480).unwrap()
    }

    fn rig() -> StereoRig {
        StereoRig::new(k(), 0.1).unwrap()
    }

    #[test]
    fn optical_axis_hits_principal_point() {
        let p = k().project(&Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_eq!(p, ImagePoint::new(320.0, 240.0));
    }

    #[test]
    fn projects_off_axis_point() {
        // u = 500 * 0.2 / 2 + 320, v = 500 * -0.1 / 2 + 240
        let p = project(&k(), &Vec3::new(0.2, -0.1, 2.0)).unwrap();
        assert_relative_eq!(p.x, 370.0, epsilon = 1e-12);
        assert_relative_eq!(p.y, 215.0, epsilon = 1e-12);
    }

    #[test]
    fn zero_depth_rejected() {
        assert!(matches!(
            k().project(&Vec3::new(1.0, 1.0, 0.0)),
            Err(Error::NonPositiveDepth { .. })
        ));
        assert!(k().project(&Vec3::new(1.0, 1.0, -1.0)).is_err());
    }

    #[test]
    fn triangulates_by_disparity() {
        // d = 25 px, z = 500 * 0.1 / 25
        let p = triangulate_pair(
            &rig(),
            &ImagePoint::new(345.0, 240.0),
            &ImagePoint::new(320.0, 240.0),
            5.0,
        )
        .unwrap();
        assert_relative_eq!(p, Vec3::new(0.1, 0.0, 2.0), epsilon = 1e-12);
    }

    #[test]
    fn zero_disparity_rejected() {
        let e = triangulate_pair(
            &rig(),
            &ImagePoint::new(320.0, 240.0),
            &ImagePoint::new(320.0, 240.0),
            5.0,
        )
        .unwrap_err();
        assert!(matches!(e, Error::NonPositiveDisparity { .. }));
    }

    #[test]
    fn vertical_residual_rejected() {
        let e = triangulate_pair(
            &rig(),
            &ImagePoint::new(345.0, 240.0),
            &ImagePoint::new(320.0, 250.0),
            5.0,
        )
        .unwrap_err();
        assert!(matches!(e, Error::EpipolarViolation { .. }));
    }

    #[test]
    fn vertical_coordinates_are_averaged() {
        let p = triangulate_pair(
            &rig(),
            &ImagePoint::new(345.0, 238.0),
            &ImagePoint::new(320.0, 242.0),
            5.0,
        )
        .unwrap();
        assert_relative_eq!(p.y, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn doubling_disparity_halves_depth() {
        let l = ImagePoint::new(400.0, 300.0);
        let a = triangulate_pair(&rig(), &l, &ImagePoint::new(380.0, 300.0), 1.0).unwrap();
        let b = triangulate_pair(&rig(), &l, &ImagePoint::new(360.0, 300.0), 1.0).unwrap();
        assert_eq!(a.z, 2.0 * b.z);
    }

    #[test]
    fn calibration_file_validation() {
        let ok = r#"{"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480,"baseline_m":0.1}"#;
        assert_eq!(StereoRig::from_json_str(ok).unwrap(), rig());
        let back = StereoRig::from_json_str(&rig().to_json_string()).unwrap();
        assert_eq!(back, rig());

        let bad_cx = r#"{"fx":500,"fy":500,"cx":700,"cy":240,"width":640,"height":480,"baseline_m":0.1}"#;
        match StereoRig::from_json_str(bad_cx).unwrap_err() {
            Error::InvalidParameter { field, .. } => assert_eq!(field, "cx"),
            e => panic!("{e}"),
        }
        let bad_b = r#"{"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480,"baseline_m":0}"#;
        match StereoRig::from_json_str(bad_b).unwrap_err() {
            Error::InvalidParameter { field, .. } => assert_eq!(field, "baseline_m"),
            e => panic!("{e}"),
        }
        let missing = r#"{"fx":500,"fy":500,"cx":320,"cy":240,"width":640,"height":480}"#;
        let msg = StereoRig::from_json_str(missing).unwrap_err().to_string();
        assert!(msg.contains("baseline_m"), "{msg}");
        assert!(CameraIntrinsics::new(-1.0, 1.0, 1.0, 1.0, 2, 2).is_err());
    }

    fn obs(side: Side, pts: &[(KeypointId, ImagePoint)]) -> PoseObservation2D {
        PoseObservation2D::new(
            0,
            side,
            pts.iter()
                .map(|(id, p)| Keypoint2D::new(*id, p.x, p.y, 1.0).unwrap()),
        )
        .unwrap()
    }

    type Pixels = Vec<(KeypointId, ImagePoint)>;

    fn stereo_obs(pts: &PerKeypoint<Vec3>) -> (Pixels, Pixels) {
        let r = rig();
        (
            pts.iter().map(|(id, p)| (id, r.project_left(p).unwrap())).collect(),
            pts.iter().map(|(id, p)| (id, r.project_right(p).unwrap())).collect(),
        )
    }

    fn torso() -> PerKeypoint<Vec3> {
        PerKeypoint::from_fn(|id| {
            let i = id.index() as f64;
            Vec3::new(0.1 * i - 0.25, 0.05 * i * i - 0.3, 2.0 + 0.02 * i)
        })
    }

    #[test]
    fn pose_round_trip() {
        let pts = torso();
        let (l, r) = stereo_obs(&pts);
        let pose = triangulate_pose(&rig(), &obs(Side::Left, &l), &obs(Side::Right, &r), 5.0).unwrap();
        for (id, p) in pts.iter() {
            assert!((pose.point(id) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn pose_reports_missing_ids() {
        let (l, r) = stereo_obs(&torso());
        let l: Vec<_> = l.into_iter().filter(|(id, _)| *id != KeypointId::LeftHip).collect();
        let e = triangulate_pose(&rig(), &obs(Side::Left, &l), &obs(Side::Right, &r), 5.0).unwrap_err();
        assert_eq!(
            e,
            Error::InsufficientKeypoints {
                missing: vec![KeypointId::LeftHip]
            }
        );
    }

    #[test]
    fn pose_attributes_epipolar_failure() {
        let (l, mut r) = stereo_obs(&torso());
        for (id, p) in r.iter_mut() {
            if *id == KeypointId::RightShoulder {
                p.y += 10.0;
            }
        }
        let e = triangulate_pose(&rig(), &obs(Side::Left, &l), &obs(Side::Right, &r), 5.0).unwrap_err();
        assert!(matches!(e, Error::EpipolarViolation { .. }));
        assert_eq!(e.keypoint(), Some(KeypointId::RightShoulder));
    }

    proptest! {
        #[test]
        fn project_triangulate_identity(
            x in -1.5f64..1.5, y in -1.0f64..1.0, z in 0.3f64..20.0,
        ) {
            let r = rig();
            let p = Vec3::new(x, y, z);
            let back = triangulate_pair(&r, &r.project_left(&p).unwrap(), &r.project_right(&p).unwrap(), 1e-6).unwrap();
            prop_assert!((back - p).norm() < 1e-9 * z.max(1.0));
        }
    }
}
