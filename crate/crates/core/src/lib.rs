//! Face-to-face (F2F) setpoint computation for underwater robot-diver approach.
//!
//! The pipeline takes 2D torso keypoints detected in a rectified stereo pair,
//! triangulates them, affixes a right-handed body frame to the diver, computes
//! the rigid transform that anti-aligns that frame with the camera, and projects
//! the transformed torso into a scale-preserving image-plane setpoint suitable
//! as the goal of an image-based visual servo controller.
//!
//! ```text
//!  left/right keypoints ──► keypoints::filter_by_confidence
//!                        ──► camera::triangulate_pose        (TorsoPose3D)
//!                        ──► body_frame::build_body_frame    (BodyFrame)
//!                        ──► setpoint::anti_align_transform  (RigidTransform)
//!                        ──► setpoint::compute_setpoint      (Setpoint)
//! ```
//!
//! [`synth`] provides a synthetic diver with a known ground truth and a pixel
//! noise harness, and [`evaluation`] aggregates setpoint errors into pose by
//! distance tables and computes Fleiss' kappa for rating studies.
//!
//! Camera convention: z along the optical axis, x to the right, y down. All
//! 3D quantities are metres in the left camera frame.

// negated float comparisons below are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod body_frame;
pub mod camera;
pub mod cli;
mod error;
pub mod evaluation;
pub mod keypoints;
pub mod setpoint;
pub mod stream;
pub mod synth;

pub use body_frame::{build_body_frame, BodyFrame, TorsoPose3D};
pub use camera::{CameraIntrinsics, StereoRig};
pub use error::{Error, Result};
pub use keypoints::{Keypoint2D, KeypointId, PerKeypoint, PoseObservation2D, Side};
pub use setpoint::{compute_setpoint, RigidTransform, Setpoint, SetpointError};

/// 3-vector in metres, camera frame.
pub type Vec3 = nalgebra::Vector3<f64>;
/// 3x3 matrix (rotations, covariances).
pub type Mat3 = nalgebra::Matrix3<f64>;
/// Image-plane point `(u, v)` in pixels.
pub type ImagePoint = nalgebra::Vector2<f64>;

/// Confidence threshold applied to detector keypoints by default.
pub const DEFAULT_P_CUTOFF: f64 = 0.05;
/// Commanded robot-diver standoff used when none is given (metres).
pub const DEFAULT_DISTANCE_M: f64 = 2.0;
/// Maximum tolerated vertical disagreement between rectified correspondences (pixels).
pub const DEFAULT_VERT_TOL_PX: f64 = 5.0;
