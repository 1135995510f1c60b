//! Synthetic diver, stereo observation and noise harness.
//!
//! Body-local coordinates coincide with camera coordinates for a diver upright
//! and facing the camera: x to the camera's right (the diver's left), y down
//! (toward the hips), z away from the camera (the diver's back). Keypoints are
//! placed around the torso centre and then shifted so their mean, `k_o`, is the
//! body origin. The ground-truth body frame in these coordinates is
//! `x = (-1, 0, 0)`, `y = (0, 1, 0)`, `z = (0, 0, -1)`.
//!
//! Canonical poses are active rotations of that reference about `k_o`
//! (camera y points to the sea floor):
//!
//! | pose              | rotation            | chest (z_B) | head   |
//! |-------------------|---------------------|-------------|--------|
//! | Prone (surface)   | Rz(pi) * Rx(+90deg) | up (-y)     | toward camera |
//! | Prone (bottom)    | Rx(+90deg)          | down (+y)   | toward camera |
//! | Upright (away)    | Ry(pi)              | away (+z)   | up     |
//! | Upright (facing)  | identity            | camera (-z) | up     |
//! | Inverted (facing) | Rz(pi)              | camera (-z) | down   |
//! | Inverted (away)   | Rx(pi)              | away (+z)   | down   |

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Rotation3, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::body_frame::{build_body_frame, BodyFrame, TorsoPose3D};
use crate::camera::{triangulate_pose, StereoRig};
use crate::keypoints::{filter_by_confidence, Keypoint2D, KeypointId, PerKeypoint, PoseObservation2D, Side};
use crate::{Error, Mat3, Result, Vec3};

/// Torso dimensions of a synthetic diver, metres.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BodyShapeFields", into = "BodyShapeFields")]
pub struct BodyShape {
    pub shoulder_width_m: f64,
    pub hip_width_m: f64,
    /// Neck to hip midpoint.
    pub torso_height_m: f64,
    /// Nose bridge above the neck.
    pub nose_superior_m: f64,
    /// Nose bridge in front of the torso plane.
    pub nose_anterior_m: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyShapeFields {
    shoulder_width_m: f64,
    hip_width_m: f64,
    torso_height_m: f64,
    nose_superior_m: f64,
    nose_anterior_m: f64,
}

impl TryFrom<BodyShapeFields> for BodyShape {
    type Error = Error;
    fn try_from(f: BodyShapeFields) -> Result<Self> {
        BodyShape::new(
            f.shoulder_width_m,
            f.hip_width_m,
            f.torso_height_m,
            f.nose_superior_m,
            f.nose_anterior_m,
        )
    }
}

impl From<BodyShape> for BodyShapeFields {
    fn from(s: BodyShape) -> Self {
        BodyShapeFields {
            shoulder_width_m: s.shoulder_width_m,
            hip_width_m: s.hip_width_m,
            torso_height_m: s.torso_height_m,
            nose_superior_m: s.nose_superior_m,
            nose_anterior_m: s.nose_anterior_m,
        }
    }
}

impl BodyShape {
    pub fn new(
        shoulder_width_m: f64,
        hip_width_m: f64,
        torso_height_m: f64,
        nose_superior_m: f64,
        nose_anterior_m: f64,
    ) -> Result<Self> {
        let fields = [
            ("shoulder_width_m", shoulder_width_m),
            ("hip_width_m", hip_width_m),
            ("torso_height_m", torso_height_m),
            ("nose_superior_m", nose_superior_m),
            ("nose_anterior_m", nose_anterior_m),
        ];
        for (name, v) in fields {
            // a zero anterior offset gives a planar torso
            let ok = if name == "nose_anterior_m" { v >= 0.0 } else { v > 0.0 };
            if !(v.is_finite() && ok) {
                return Err(Error::invalid(name, format!("out of range: {v}")));
            }
        }
        Ok(BodyShape {
            shoulder_width_m,
            hip_width_m,
            torso_height_m,
            nose_superior_m,
            nose_anterior_m,
        })
    }

    /// Keypoints in body-local coordinates with their mean at the origin.
    pub fn local_keypoints(&self) -> PerKeypoint<Vec3> {
        use KeypointId::*;
        let (sw, hw, h) = (self.shoulder_width_m, self.hip_width_m, self.torso_height_m);
        let raw = PerKeypoint::from_fn(|id| match id {
            LeftShoulder => Vec3::new(sw / 2.0, -h / 2.0, 0.0),
            RightShoulder => Vec3::new(-sw / 2.0, -h / 2.0, 0.0),
            LeftHip => Vec3::new(hw / 2.0, h / 2.0, 0.0),
            RightHip => Vec3::new(-hw / 2.0, h / 2.0, 0.0),
            NeckBase => Vec3::new(0.0, -h / 2.0, 0.0),
            NoseBridge => Vec3::new(0.0, -h / 2.0 - self.nose_superior_m, -self.nose_anterior_m),
        });
        let mean = raw.values().sum::<Vec3>() / 6.0;
        raw.map(|_, p| p - mean)
    }
}

impl Default for BodyShape {
    fn default() -> Self {
        BodyShape {
            shoulder_width_m: 0.45,
            hip_width_m: 0.35,
            torso_height_m: 0.55,
            nose_superior_m: 0.25,
            nose_anterior_m: 0.10,
        }
    }
}

/// Orientation of the synthetic diver.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CanonicalPose {
    ProneSurface,
    ProneBottom,
    UprightAway,
    UprightFacing,
    InvertedFacing,
    InvertedAway,
    /// Arbitrary rotation of the upright-facing reference.
    Free { rotation: Rotation3<f64> },
}

impl CanonicalPose {
    /// The six named poses, in report row order.
    pub const CANONICAL: [CanonicalPose; 6] = [
        CanonicalPose::ProneSurface,
        CanonicalPose::ProneBottom,
        CanonicalPose::UprightAway,
        CanonicalPose::UprightFacing,
        CanonicalPose::InvertedFacing,
        CanonicalPose::InvertedAway,
    ];

    /// Human-readable row label.
    pub fn label(&self) -> &'static str {
        match self {
            CanonicalPose::ProneSurface => "Prone (surface)",
            CanonicalPose::ProneBottom => "Prone (bottom)",
            CanonicalPose::UprightAway => "Upright (away)",
            CanonicalPose::UprightFacing => "Upright (facing)",
            CanonicalPose::InvertedFacing => "Inverted (facing)",
            CanonicalPose::InvertedAway => "Inverted (away)",
            CanonicalPose::Free { .. } => "Free",
        }
    }

    /// Identifier used in scenario files.
    pub fn name(&self) -> &'static str {
        match self {
            CanonicalPose::ProneSurface => "prone_surface",
            CanonicalPose::ProneBottom => "prone_bottom",
            CanonicalPose::UprightAway => "upright_away",
            CanonicalPose::UprightFacing => "upright_facing",
            CanonicalPose::InvertedFacing => "inverted_facing",
            CanonicalPose::InvertedAway => "inverted_away",
            CanonicalPose::Free { .. } => "free",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        CanonicalPose::CANONICAL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| Error::invalid("pose", format!("unknown pose `{name}`")))
    }

    /// Rotation from body-local coordinates to the camera frame.
    pub fn rotation(&self) -> Mat3 {
        let rx = |a: f64| *Rotation3::from_axis_angle(&Vec3::x_axis(), a).matrix();
        let exact_half_turn = |diag: [f64; 3]| Mat3::from_diagonal(&Vec3::from(diag));
        // Rx(+90deg) written out so the table entries stay exact
        let rx90 = Mat3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        debug_assert!((rx(FRAC_PI_2) - rx90).abs().max() < 1e-15);
        match self {
            CanonicalPose::UprightFacing => Mat3::identity(),
            CanonicalPose::UprightAway => exact_half_turn([-1.0, 1.0, -1.0]),
            CanonicalPose::InvertedFacing => exact_half_turn([-1.0, -1.0, 1.0]),
            CanonicalPose::InvertedAway => exact_half_turn([1.0, -1.0, -1.0]),
            CanonicalPose::ProneBottom => rx90,
            CanonicalPose::ProneSurface => exact_half_turn([-1.0, -1.0, 1.0]) * rx90,
            CanonicalPose::Free { rotation } => *rotation.matrix(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum PoseRepr {
    Named(String),
    Free { free: FreeRepr },
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FreeRepr {
    /// Rotation vector, radians.
    axis_angle: [f64; 3],
}

impl Serialize for CanonicalPose {
    /// Named poses as strings, free poses as `{"free":{"axis_angle":[..]}}`.
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            CanonicalPose::Free { rotation } => PoseRepr::Free {
                free: FreeRepr {
                    axis_angle: rotation.scaled_axis().into(),
                },
            },
            named => PoseRepr::Named(named.name().to_string()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for CanonicalPose {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match PoseRepr::deserialize(d)? {
            PoseRepr::Named(name) => CanonicalPose::from_name(&name).map_err(serde::de::Error::custom),
            PoseRepr::Free { free } => Ok(CanonicalPose::Free {
                rotation: Rotation3::new(Vec3::from(free.axis_angle)),
            }),
        }
    }
}

/// A synthetic torso together with its analytically known body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticDiver {
    pub pose: TorsoPose3D,
    pub frame: BodyFrame,
}

/// Place a diver of `shape` in `pose` with its keypoint mean at `position`.
pub fn make_torso(shape: &BodyShape, pose: &CanonicalPose, position: &Vec3) -> Result<SyntheticDiver> {
    let r = pose.rotation();
    let points = shape.local_keypoints().map(|_, p| r * p + position);
    if let Some((id, p)) = points.iter().find(|(_, p)| !(p.z > 0.0)) {
        return Err(Error::BehindCamera { id, z: p.z });
    }
    let reference = Mat3::from_diagonal(&Vec3::new(-1.0, 1.0, -1.0));
    Ok(SyntheticDiver {
        pose: TorsoPose3D::new(points)?,
        frame: BodyFrame::from_rotation(*position, &(r * reference))?,
    })
}

/// Isotropic Gaussian pixel noise, per image axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub sigma_px: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn new(sigma_px: f64, seed: u64) -> Result<Self> {
        if !(sigma_px.is_finite() && sigma_px >= 0.0) {
            return Err(Error::invalid("sigma_px", format!("must be >= 0, got {sigma_px}")));
        }
        Ok(NoiseSpec { sigma_px, seed })
    }

    pub fn noiseless() -> Self {
        NoiseSpec { sigma_px: 0.0, seed: 0 }
    }

    /// Spec for trial `index` of a sweep: the seed is offset by the index.
    pub fn for_trial(&self, index: u64) -> Self {
        NoiseSpec {
            sigma_px: self.sigma_px,
            seed: self.seed.wrapping_add(index),
        }
    }
}

/// Project a pose into both cameras and add pixel noise. Confidences are 1.
///
/// Fails with `OutOfView` when a noiseless projection lies further than
/// `margin_px` outside either image.
pub fn observe(
    rig: &StereoRig,
    pose: &TorsoPose3D,
    noise: &NoiseSpec,
    frame_id: u64,
    margin_px: f64,
) -> Result<(PoseObservation2D, PoseObservation2D)> {
    let left = pose.points().map(|_, p| rig.project_left(p));
    let right = pose.points().map(|_, p| rig.project_right(p));
    let mut out_of_view = Vec::new();
    for id in KeypointId::ALL {
        let (l, r) = (left[id].clone()?, right[id].clone()?);
        if !rig.intrinsics.contains(&l, margin_px) || !rig.intrinsics.contains(&r, margin_px) {
            out_of_view.push(id);
        }
    }
    if !out_of_view.is_empty() {
        return Err(Error::OutOfView { ids: out_of_view });
    }

    let normal = Normal::new(0.0, noise.sigma_px)
        .map_err(|e| Error::invalid("sigma_px", e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut jitter = || {
        if noise.sigma_px > 0.0 {
            normal.sample(&mut rng)
        } else {
            0.0
        }
    };
    let mut left_kps = Vec::with_capacity(6);
    let mut right_kps = Vec::with_capacity(6);
    for id in KeypointId::ALL {
        let (l, r) = (left[id].clone()?, right[id].clone()?);
        left_kps.push(Keypoint2D::new(id, l.x + jitter(), l.y + jitter(), 1.0)?);
        right_kps.push(Keypoint2D::new(id, r.x + jitter(), r.y + jitter(), 1.0)?);
    }
    Ok((
        PoseObservation2D::new(frame_id, Side::Left, left_kps)?,
        PoseObservation2D::new(frame_id, Side::Right, right_kps)?,
    ))
}

/// Uniformly distributed rotation.
pub fn random_rotation(rng: &mut impl Rng) -> Rotation3<f64> {
    let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
    UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(q[0], q[1], q[2], q[3])).to_rotation_matrix()
}

/// Spherical angles `(theta, phi)` of a unit vector, polar axis camera y.
///
/// `theta` is the angle from +y, `phi` the azimuth in the x-z plane measured
/// from +z toward +x.
pub fn to_spherical(v: &Vec3) -> (f64, f64) {
    let v = v.normalize();
    (v.y.clamp(-1.0, 1.0).acos(), v.x.atan2(v.z))
}

pub fn from_spherical(theta: f64, phi: f64) -> Vec3 {
    Vec3::new(theta.sin() * phi.sin(), theta.cos(), theta.sin() * phi.cos())
}

/// Angular bounds, degrees, used for the three rating phases.
pub const PERTURBATION_PRESETS_DEG: [f64; 3] = [25.0, 15.0, 5.0];

/// Random unit vectors around `z_axis`, with `theta` and `phi` each drawn
/// uniformly within the given bounds of the original angles.
pub fn perturb_alignment(
    z_axis: &Vec3,
    theta_bound_deg: f64,
    phi_bound_deg: f64,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec3>> {
    if !(theta_bound_deg >= 0.0 && phi_bound_deg >= 0.0) {
        return Err(Error::invalid("bound", "angle bounds must be >= 0"));
    }
    if count == 0 {
        return Err(Error::invalid("count", "must be >= 1"));
    }
    if !(z_axis.norm() > 0.0) {
        return Err(Error::invalid("z_axis", "must be non-zero"));
    }
    let (theta, phi) = to_spherical(z_axis);
    let (tb, pb) = (theta_bound_deg.to_radians(), phi_bound_deg.to_radians());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..count)
        .map(|_| {
            let t = if tb > 0.0 { rng.random_range(theta - tb..=theta + tb) } else { theta };
            let p = if pb > 0.0 { rng.random_range(phi - pb..=phi + pb) } else { phi };
            from_spherical(t.clamp(0.0, PI), p)
        })
        .collect())
}

/// Configuration of a Monte Carlo frame-error sweep over pixel noise levels.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSweep {
    pub rig: StereoRig,
    pub shape: BodyShape,
    pub pose: CanonicalPose,
    pub position: Vec3,
    pub sigmas_px: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
    pub p_cutoff: f64,
    /// Usually disabled (infinite): a 5 px gate rejects nearly every frame at
    /// detector-level noise.
    pub vert_tol_px: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseLevelStats {
    pub sigma_px: f64,
    pub mean_angle_rad: f64,
    pub std_err_rad: f64,
    pub mean_origin_err_m: f64,
    pub n_used: usize,
    pub n_failed: usize,
}

impl NoiseSweep {
    /// Trial `i` at every level reuses seed `seed + i`, so levels differ only
    /// in noise scale.
    pub fn run(&self) -> Result<Vec<NoiseLevelStats>> {
        let truth = make_torso(&self.shape, &self.pose, &self.position)?;
        self.sigmas_px
            .iter()
            .map(|&sigma| {
                let noise = NoiseSpec::new(sigma, self.seed)?;
                let mut angles = Vec::with_capacity(self.trials);
                let mut origin_errs = Vec::with_capacity(self.trials);
                let mut failed = 0;
                for trial in 0..self.trials {
                    let (l, r) = observe(&self.rig, &truth.pose, &noise.for_trial(trial as u64), trial as u64, f64::INFINITY)?;
                    let est = filter_by_confidence(&l, self.p_cutoff)
                        .and_then(|l| Ok((l, filter_by_confidence(&r, self.p_cutoff)?)))
                        .and_then(|(l, r)| triangulate_pose(&self.rig, &l, &r, self.vert_tol_px))
                        .and_then(|pose| build_body_frame(&pose));
                    match est {
                        Ok(frame) => {
                            angles.push(frame.angular_distance(&truth.frame));
                            origin_errs.push((frame.origin - truth.frame.origin).norm());
                        }
                        Err(_) => failed += 1,
                    }
                }
                let n = angles.len();
                let mean = angles.iter().sum::<f64>() / n.max(1) as f64;
                let var = if n > 1 {
                    angles.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64
                } else {
                    0.0
                };
                Ok(NoiseLevelStats {
                    sigma_px: sigma,
                    mean_angle_rad: mean,
                    std_err_rad: (var / n.max(1) as f64).sqrt(),
                    mean_origin_err_m: origin_errs.iter().sum::<f64>() / n.max(1) as f64,
                    n_used: n,
                    n_failed: failed,
                })
            })
            .collect()
    }
}

/// Scenario file: a grid of poses and standoff distances observed for a
/// number of frames each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub rig: StereoRig,
    #[serde(default)]
    pub shape: BodyShape,
    pub poses: Vec<CanonicalPose>,
    /// Keypoint-centre depths along the optical axis, metres.
    pub distances: Vec<f64>,
    /// Frames per (pose, distance) cell.
    pub frames: usize,
    #[serde(default = "NoiseSpec::noiseless")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub margin_px: f64,
}

/// One generated stereo frame with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFrame {
    pub frame_id: u64,
    pub pose: CanonicalPose,
    pub distance_m: f64,
    pub left: PoseObservation2D,
    pub right: PoseObservation2D,
    pub truth: SyntheticDiver,
}

impl Scenario {
    pub fn from_json_str(json: &str) -> Result<Self> {
        let s: Scenario =
            serde_json::from_str(json).map_err(|e| Error::invalid("scenario", e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() || self.distances.is_empty() || self.frames == 0 {
            return Err(Error::invalid("scenario", "needs at least one pose, distance and frame"));
        }
        if let Some(d) = self.distances.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::invalid("distances", format!("must be > 0, got {d}")));
        }
        NoiseSpec::new(self.noise.sigma_px, self.noise.seed)?;
        Ok(())
    }

    pub fn total_frames(&self) -> usize {
        self.poses.len() * self.distances.len() * self.frames
    }

    /// Frames in pose-major, then distance, then frame order. Frame ids are
    /// consecutive from zero and seed the noise of each frame.
    pub fn frames(&self) -> impl Iterator<Item = Result<SyntheticFrame>> + '_ {
        let cells = self
            .poses
            .iter()
            .flat_map(move |p| self.distances.iter().map(move |d| (*p, *d)));
        cells
            .flat_map(move |(pose, d)| (0..self.frames).map(move |_| (pose, d)))
            .enumerate()
            .map(move |(i, (pose, distance_m))| {
                let frame_id = i as u64;
                let truth = make_torso(&self.shape, &pose, &Vec3::new(0.0, 0.0, distance_m))?;
                let (left, right) = observe(&self.rig, &truth.pose, &self.noise.for_trial(frame_id), frame_id, self.margin_px)?;
                Ok(SyntheticFrame {
                    frame_id,
                    pose,
                    distance_m,
                    left,
                    right,
                    truth,
                })
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::triangulate_pose;
    use approx::assert_relative_eq;

    #[test]
    fn upright_facing_reference() {
        let d = make_torso(&BodyShape::default(), &CanonicalPose::UprightFacing, &Vec3::new(0.0, 0.0, 2.0)).unwrap();
        assert_relative_eq!(d.frame.z_axis, Vec3::new(0.0, 0.0, -1.0));
        for id in [KeypointId::LeftShoulder, KeypointId::RightShoulder, KeypointId::LeftHip, KeypointId::RightHip, KeypointId::NeckBase] {
            assert_relative_eq!(d.pose.point(id).z, d.pose.point(KeypointId::NeckBase).z, epsilon = 1e-15);
        }
        assert_relative_eq!(crate::body_frame::center_of_keypoints(&d.pose), Vec3::new(0.0, 0.0, 2.0), epsilon = 1e-15);
    }

    #[test]
    fn computed_frame_matches_ground_truth_for_every_pose() {
        for pose in CanonicalPose::CANONICAL {
            let d = make_torso(&BodyShape::default(), &pose, &Vec3::new(0.1, -0.2, 2.5)).unwrap();
            let f = build_body_frame(&d.pose).unwrap();
            assert!(f.angular_distance(&d.frame) < 1e-12, "{}", pose.label());
            assert!((f.origin - d.frame.origin).norm() < 1e-12);
        }
    }

    #[test]
    fn pose_table_directions() {
        let chest = |p: CanonicalPose| p.rotation() * Vec3::new(0.0, 0.0, -1.0);
        let down = |p: CanonicalPose| p.rotation() * Vec3::y();
        assert_relative_eq!(chest(CanonicalPose::ProneBottom), Vec3::y(), epsilon = 1e-15);
        assert_relative_eq!(chest(CanonicalPose::ProneSurface), -Vec3::y(), epsilon = 1e-15);
        assert_relative_eq!(chest(CanonicalPose::UprightAway), Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(chest(CanonicalPose::InvertedFacing), -Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(chest(CanonicalPose::InvertedAway), Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(down(CanonicalPose::InvertedFacing), -Vec3::y(), epsilon = 1e-15);
        // prone: head toward the camera, hips away
        assert_relative_eq!(down(CanonicalPose::ProneBottom), Vec3::z(), epsilon = 1e-15);
        assert_relative_eq!(down(CanonicalPose::ProneSurface), Vec3::z(), epsilon = 1e-15);
        for p in CanonicalPose::CANONICAL {
            let r = p.rotation();
            assert_relative_eq!(r.determinant(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn rejects_degenerate_shape_and_behind_camera() {
        assert!(BodyShape::new(0.45, 0.35, 0.0, 0.25, 0.1).is_err());
        let e = make_torso(&BodyShape::default(), &CanonicalPose::UprightFacing, &Vec3::new(0.0, 0.0, 0.05)).unwrap_err();
        assert!(matches!(e, Error::BehindCamera { id: KeypointId::NoseBridge, .. }));
    }

    #[test]
    fn noiseless_round_trip() {
        let rig = StereoRig::default();
        let d = make_torso(&BodyShape::default(), &CanonicalPose::InvertedAway, &Vec3::new(0.2, 0.1, 2.0)).unwrap();
        let (l, r) = observe(&rig, &d.pose, &NoiseSpec::noiseless(), 0, 0.0).unwrap();
        let back = triangulate_pose(&rig, &l, &r, 1e-9).unwrap();
        for (id, p) in d.pose.points().iter() {
            assert!((back.point(id) - p).norm() < 1e-9);
        }
    }

    #[test]
    fn seeded_noise_is_reproducible() {
        let rig = StereoRig::default();
        let d = make_torso(&BodyShape::default(), &CanonicalPose::UprightFacing, &Vec3::new(0.0, 0.0, 2.0)).unwrap();
        let noise = NoiseSpec::new(12.75, 42).unwrap();
        let a = observe(&rig, &d.pose, &noise, 0, 0.0).unwrap();
        let b = observe(&rig, &d.pose, &noise, 0, 0.0).unwrap();
        assert_eq!(a, b);
        let c = observe(&rig, &d.pose, &noise.for_trial(1), 0, 0.0).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn out_of_view_lists_keypoints() {
        let rig = StereoRig::default();
        let d = make_torso(&BodyShape::default(), &CanonicalPose::UprightFacing, &Vec3::new(1.6, 0.0, 2.0)).unwrap();
        match observe(&rig, &d.pose, &NoiseSpec::noiseless(), 0, 0.0).unwrap_err() {
            Error::OutOfView { ids } => assert!(ids.contains(&KeypointId::LeftShoulder)),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn spherical_round_trip() {
        for v in [Vec3::new(0.3, -0.4, 0.5), -Vec3::z(), Vec3::x(), Vec3::new(-0.2, 0.9, -0.1)] {
            let (t, p) = to_spherical(&v);
            assert_relative_eq!(from_spherical(t, p), v.normalize(), epsilon = 1e-14);
        }
    }

    #[test]
    fn zero_bounds_are_identity() {
        for v in [Vec3::new(0.3, -0.4, 0.5).normalize(), Vec3::y(), -Vec3::y()] {
            for out in perturb_alignment(&v, 0.0, 0.0, 20, 1).unwrap() {
                assert!((out - v).norm() < 1e-12);
            }
        }
    }

    /// Triangle inequality through `(theta', phi)`: the deviation is at most
    /// `theta_bound + phi_bound * max sin(theta')` over the sampled theta range.
    fn box_bound(theta: f64, tb: f64, pb: f64) -> f64 {
        let (lo, hi) = ((theta - tb).max(0.0), (theta + tb).min(PI));
        let max_sin = if lo <= FRAC_PI_2 && FRAC_PI_2 <= hi { 1.0 } else { lo.sin().max(hi.sin()) };
        tb + pb * max_sin
    }

    #[test]
    fn perturbations_respect_bounds() {
        let z = Vec3::new(0.2, 0.3, -0.9).normalize();
        let (theta, _) = to_spherical(&z);
        for deg in PERTURBATION_PRESETS_DEG {
            let b = deg.to_radians();
            let bound = box_bound(theta, b, b);
            let samples = perturb_alignment(&z, deg, deg, 10_000, 9).unwrap();
            let mut max_dev: f64 = 0.0;
            for s in &samples {
                assert!((s.norm() - 1.0).abs() < 1e-12);
                max_dev = max_dev.max(s.dot(&z).clamp(-1.0, 1.0).acos());
            }
            assert!(max_dev <= bound + 1e-12, "{deg}: {max_dev} > {bound}");
            // the box is actually explored
            assert!(max_dev > 0.5 * b);
        }
    }

    #[test]
    fn perturb_rejects_bad_args() {
        assert!(perturb_alignment(&Vec3::z(), -1.0, 5.0, 3, 0).is_err());
        assert!(perturb_alignment(&Vec3::z(), 1.0, 5.0, 0, 0).is_err());
    }

    #[test]
    fn scenario_parsing_and_grid() {
        let json = r#"{"poses":["upright_facing",{"free":{"axis_angle":[0,0.5,0]}}],"distances":[1,2],"frames":3,"noise":{"sigma_px":1.0,"seed":5}}"#;
        let s = Scenario::from_json_str(json).unwrap();
        assert_eq!(s.total_frames(), 12);
        let frames: Vec<_> = s.frames().collect::<Result<_>>().unwrap();
        assert_eq!(frames.len(), 12);
        assert_eq!(frames[3].distance_m, 2.0);
        assert_eq!(frames[6].pose.name(), "free");
        assert!(frames.iter().enumerate().all(|(i, f)| f.frame_id == i as u64));
        assert!(Scenario::from_json_str(r#"{"poses":["sideways"],"distances":[1],"frames":1}"#).is_err());
        assert!(Scenario::from_json_str(r#"{"poses":["upright_facing"],"distances":[0],"frames":1}"#).is_err());
        let round: Scenario = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(round.poses[0], s.poses[0]);
    }
}
