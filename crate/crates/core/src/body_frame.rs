//! Body-fixed frame of the diver from six triangulated torso keypoints.
//!
//! The frame is built as follows:
//!
//! 1. `k_o` is the mean of all six keypoints (nose bridge included, which
//!    pulls it toward the upper torso).
//! 2. Four torso difference vectors
//!    `k_lsh = k_ls - k_lh`, `k_nlh = k_n - k_lh`,
//!    `k_nrh = k_n - k_rh`, `k_rsh = k_rs - k_rh`.
//! 3. Two plane normals `k_lx = k_lsh x k_nlh` and `k_rx = k_nrh x k_rsh`.
//!    Their normalized mean is the alignment vector, the body z-axis. With
//!    anatomical left/right labels it points out of the chest (anterior).
//! 4. The body y-axis points from `k_o` toward the hip midpoint. Because the
//!    nose bridge lies off the torso plane this direction is not exactly
//!    perpendicular to z, so its z component is removed before normalizing.
//! 5. `x = y x z`.
//!
//! For a diver upright and facing the camera this gives
//! `x = (-1, 0, 0)`, `y = (0, 1, 0)`, `z = (0, 0, -1)`.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::keypoints::{KeypointId, PerKeypoint};
use crate::{Error, Mat3, Result, Vec3};

/// Cross products shorter than this (m^2) are treated as collinear joints.
pub const DEGENERATE_CROSS_NORM: f64 = 1e-12;
/// Hip midpoint closer than this (m) to `k_o` leaves the y-axis undefined.
pub const DEGENERATE_Y_NORM: f64 = 1e-9;
/// Tolerance on the orthonormality and handedness of a frame.
pub const FRAME_TOL: f64 = 1e-9;

/// The six torso keypoints in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(transparent)]
pub struct TorsoPose3D {
    points: PerKeypoint<Vec3>,
}

impl TorsoPose3D {
    /// Every coordinate must be finite and every point in front of the camera.
    pub fn new(points: PerKeypoint<Vec3>) -> Result<Self> {
        for (id, p) in points.iter() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::invalid("points", format!("non-finite coordinate at `{id}`")));
            }
            if !(p.z > 0.0) {
                return Err(Error::NonPositiveDepth { z: p.z, id: Some(id) });
            }
        }
        Ok(TorsoPose3D { points })
    }

    pub fn point(&self, id: KeypointId) -> Vec3 {
        self.points[id]
    }

    pub fn points(&self) -> &PerKeypoint<Vec3> {
        &self.points
    }

    /// `rotation * p + translation` applied to every keypoint.
    pub fn transformed(&self, rotation: &Mat3, translation: &Vec3) -> Result<Self> {
        TorsoPose3D::new(self.points.map(|_, p| rotation * p + translation))
    }
}

impl<'de> Deserialize<'de> for TorsoPose3D {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let points = PerKeypoint::<Vec3>::deserialize(d)?;
        TorsoPose3D::new(points).map_err(D::Error::custom)
    }
}

/// Right-handed orthonormal frame affixed to the diver, expressed in the camera frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyFrame {
    pub origin: Vec3,
    pub x_axis: Vec3,
    pub y_axis: Vec3,
    pub z_axis: Vec3,
}

impl BodyFrame {
    /// Build a frame, checking orthonormality and handedness to [`FRAME_TOL`].
    pub fn new(origin: Vec3, x_axis: Vec3, y_axis: Vec3, z_axis: Vec3) -> Result<Self> {
        let frame = BodyFrame {
            origin,
            x_axis,
            y_axis,
            z_axis,
        };
        frame.check()?;
        Ok(frame)
    }

    /// Frame whose axes are the columns of `rotation`.
    pub fn from_rotation(origin: Vec3, rotation: &Mat3) -> Result<Self> {
        BodyFrame::new(
            origin,
            rotation.column(0).into(),
            rotation.column(1).into(),
            rotation.column(2).into(),
        )
    }

    fn check(&self) -> Result<()> {
        let axes = [self.x_axis, self.y_axis, self.z_axis];
        if !self.origin.iter().chain(axes.iter().flatten()).all(|c| c.is_finite()) {
            return Err(Error::invalid("frame", "non-finite component"));
        }
        for (name, a) in ["x", "y", "z"].iter().zip(&axes) {
            if (a.norm() - 1.0).abs() > FRAME_TOL {
                return Err(Error::invalid("frame", format!("{name} axis not unit length")));
            }
        }
        let dots = [
            self.x_axis.dot(&self.y_axis),
            self.y_axis.dot(&self.z_axis),
            self.z_axis.dot(&self.x_axis),
        ];
        if dots.iter().any(|d| d.abs() > FRAME_TOL) {
            return Err(Error::invalid("frame", "axes not orthogonal"));
        }
        if (self.rotation().determinant() - 1.0).abs() > FRAME_TOL {
            return Err(Error::invalid("frame", "axes not right-handed"));
        }
        Ok(())
    }

    /// Matrix with the axes as columns, mapping body coordinates to camera coordinates.
    pub fn rotation(&self) -> Mat3 {
        Mat3::from_columns(&[self.x_axis, self.y_axis, self.z_axis])
    }

    /// Geodesic angle (radians) of the rotation taking this frame's axes to `other`'s.
    pub fn angular_distance(&self, other: &BodyFrame) -> f64 {
        rotation_angle(&(self.rotation().transpose() * other.rotation()))
    }
}

/// Angle of a rotation matrix, accurate near zero.
pub fn rotation_angle(r: &Mat3) -> f64 {
    let sin_axis = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let cos = (r.trace() - 1.0) / 2.0;
    (sin_axis.norm() / 2.0).atan2(cos)
}

fn round_sig9(v: f64) -> f64 {
    format!("{v:.8e}").parse().expect("formatted float")
}

#[derive(Serialize, Deserialize)]
struct FrameJson {
    origin: [f64; 3],
    x: [f64; 3],
    y: [f64; 3],
    z: [f64; 3],
}

impl Serialize for BodyFrame {
    /// `{"origin":[..],"x":[..],"y":[..],"z":[..]}`, nine significant digits.
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let arr = |v: &Vec3| [round_sig9(v.x), round_sig9(v.y), round_sig9(v.z)];
        FrameJson {
            origin: arr(&self.origin),
            x: arr(&self.x_axis),
            y: arr(&self.y_axis),
            z: arr(&self.z_axis),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for BodyFrame {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = FrameJson::deserialize(d)?;
        let v = |a: [f64; 3]| Vec3::from(a);
        let frame = BodyFrame {
            origin: v(raw.origin),
            x_axis: v(raw.x),
            y_axis: v(raw.y),
            z_axis: v(raw.z),
        };
        // nine digits cannot meet FRAME_TOL, so only sanity-check the rounded axes
        let err = (frame.rotation().transpose() * frame.rotation() - Mat3::identity()).abs().max();
        if err > 1e-7 {
            return Err(D::Error::custom("frame axes are not orthonormal"));
        }
        Ok(frame)
    }
}

/// Mean of the six keypoints.
pub fn center_of_keypoints(pose: &TorsoPose3D) -> Vec3 {
    pose.points().values().sum::<Vec3>() / 6.0
}

/// Unit normal of the torso plane (the body z-axis).
pub fn alignment_vector(pose: &TorsoPose3D) -> Result<Vec3> {
    use KeypointId::*;
    let k = |id| pose.point(id);
    let lsh = k(LeftShoulder) - k(LeftHip);
    let nlh = k(NeckBase) - k(LeftHip);
    let nrh = k(NeckBase) - k(RightHip);
    let rsh = k(RightShoulder) - k(RightHip);

    let left_cross = lsh.cross(&nlh);
    let right_cross = nrh.cross(&rsh);
    if left_cross.norm() < DEGENERATE_CROSS_NORM {
        return Err(Error::DegenerateTorso("left shoulder, neck and left hip are collinear"));
    }
    if right_cross.norm() < DEGENERATE_CROSS_NORM {
        return Err(Error::DegenerateTorso("right shoulder, neck and right hip are collinear"));
    }
    let mean = (right_cross + left_cross) / 2.0;
    let norm = mean.norm();
    if norm < DEGENERATE_CROSS_NORM {
        return Err(Error::DegenerateTorso("left and right torso normals cancel"));
    }
    Ok(mean / norm)
}

pub fn build_body_frame(pose: &TorsoPose3D) -> Result<BodyFrame> {
    let z_axis = alignment_vector(pose)?;
    let origin = center_of_keypoints(pose);
    let hip_mid = (pose.point(KeypointId::LeftHip) + pose.point(KeypointId::RightHip)) / 2.0;

    let toward_hips = hip_mid - origin;
    let len = toward_hips.norm();
    if len < DEGENERATE_Y_NORM {
        return Err(Error::DegenerateYAxis("hip midpoint coincides with keypoint center"));
    }
    let raw_y = toward_hips / len;
    let in_plane = raw_y - raw_y.dot(&z_axis) * z_axis;
    let in_plane_len = in_plane.norm();
    if in_plane_len < DEGENERATE_Y_NORM {
        return Err(Error::DegenerateYAxis("hip direction is parallel to the torso normal"));
    }
    let y_axis = in_plane / in_plane_len;
    let x_axis = y_axis.cross(&z_axis);
    BodyFrame::new(origin, x_axis, y_axis, z_axis)
}
