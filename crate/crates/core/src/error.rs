use crate::keypoints::KeypointId;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn fmt_ids(ids: &[KeypointId]) -> String {
    ids.iter().map(|id| id.as_str()).collect::<Vec<_>>().join(", ")
}

fn fmt_at(id: &Option<KeypointId>) -> String {
    match id {
        Some(id) => format!(" at keypoint `{}`", id.as_str()),
        None => String::new(),
    }
}

/// Errors raised by the geometric pipeline, the synthetic harness and the
/// evaluation tools.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point has non-positive depth z = {z}{}", fmt_at(.id))]
    NonPositiveDepth { z: f64, id: Option<KeypointId> },

    #[error("non-positive disparity d = {disparity}{}", fmt_at(.id))]
    NonPositiveDisparity {
        disparity: f64,
        id: Option<KeypointId>,
    },

    #[error("epipolar violation: |v_left - v_right| = {residual_px} px exceeds {tol_px} px{}", fmt_at(.id))]
    EpipolarViolation {
        residual_px: f64,
        tol_px: f64,
        id: Option<KeypointId>,
    },

    #[error("insufficient keypoints, missing: {}", fmt_ids(.missing))]
    InsufficientKeypoints { missing: Vec<KeypointId> },

    #[error("duplicate keypoint `{}`", .0.as_str())]
    DuplicateKeypoint(KeypointId),

    #[error("degenerate torso: {0}")]
    DegenerateTorso(&'static str),

    #[error("degenerate body y-axis: {0}")]
    DegenerateYAxis(&'static str),

    #[error("rank deficient correspondence set (singular values {singular_values:?})")]
    RankDeficient { singular_values: [f64; 3] },

    #[error("keypoint sets differ, missing: {}", fmt_ids(.missing))]
    MissingKeypoint { missing: Vec<KeypointId> },

    #[error("keypoint `{}` is behind the camera (z = {z})", .id.as_str())]
    BehindCamera { id: KeypointId, z: f64 },

    #[error("keypoints out of view: {}", fmt_ids(.ids))]
    OutOfView { ids: Vec<KeypointId> },

    #[error("all {total} frames failed")]
    AllFramesFailed { total: usize },

    #[error("agreement statistic undefined: expected agreement is 1")]
    DegenerateAgreement,

    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },
}

impl Error {
    /// Short machine-readable name of the variant, used in JSONL error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::NonPositiveDepth { .. } => "NonPositiveDepth",
            Error::NonPositiveDisparity { .. } => "NonPositiveDisparity",
            Error::EpipolarViolation { .. } => "EpipolarViolation",
            Error::InsufficientKeypoints { .. } => "InsufficientKeypoints",
            Error::DuplicateKeypoint(_) => "DuplicateKeypoint",
            Error::DegenerateTorso(_) => "DegenerateTorso",
            Error::DegenerateYAxis(_) => "DegenerateYAxis",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::MissingKeypoint { .. } => "MissingKeypoint",
            Error::BehindCamera { .. } => "BehindCamera",
            Error::OutOfView { .. } => "OutOfView",
            Error::AllFramesFailed { .. } => "AllFramesFailed",
            Error::DegenerateAgreement => "DegenerateAgreement",
            Error::InvalidParameter { .. } => "InvalidParameter",
        }
    }

    /// The keypoint a per-point failure is attributed to, if any.
    pub fn keypoint(&self) -> Option<KeypointId> {
        match self {
            Error::NonPositiveDepth { id, .. }
            | Error::NonPositiveDisparity { id, .. }
            | Error::EpipolarViolation { id, .. } => *id,
            Error::BehindCamera { id, .. } => Some(*id),
            _ => None,
        }
    }

    pub(crate) fn at(self, keypoint: KeypointId) -> Self {
        match self {
            Error::NonPositiveDepth { z, .. } => Error::NonPositiveDepth {
                z,
                id: Some(keypoint),
            },
            Error::NonPositiveDisparity { disparity, .. } => Error::NonPositiveDisparity {
                disparity,
                id: Some(keypoint),
            },
            Error::EpipolarViolation {
                residual_px,
                tol_px,
                ..
            } => Error::EpipolarViolation {
                residual_px,
                tol_px,
                id: Some(keypoint),
            },
            other => other,
        }
    }

    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }
}
