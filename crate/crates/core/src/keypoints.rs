//! The six-keypoint torso convention and 2D detection containers.
//!
//! Only six anatomical points are needed to orient a diver: the bridge of the
//! nose, the base of the neck, and both shoulders and hips. Detectors usually
//! emit more; anything outside this set is ignored at ingestion.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::{Index, IndexMut};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{Error, ImagePoint, Result};

/// Torso keypoint identifier.
///
/// Variants are declared in the lexicographic order of their serialized
/// names, so the derived `Ord` sorts ids the same way their names sort.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum KeypointId {
    /// Bridge of the nose, `b`.
    NoseBridge,
    /// `lh`
    LeftHip,
    /// `ls`
    LeftShoulder,
    /// Base of the neck, `n`.
    NeckBase,
    /// `rh`
    RightHip,
    /// `rs`
    RightShoulder,
}

impl KeypointId {
    pub const ALL: [KeypointId; 6] = [
        KeypointId::NoseBridge,
        KeypointId::LeftHip,
        KeypointId::LeftShoulder,
        KeypointId::NeckBase,
        KeypointId::RightHip,
        KeypointId::RightShoulder,
    ];

    pub const fn as_str(self) -> &'static str {
        match self {
            KeypointId::NoseBridge => "b",
            KeypointId::LeftHip => "lh",
            KeypointId::LeftShoulder => "ls",
            KeypointId::NeckBase => "n",
            KeypointId::RightHip => "rh",
            KeypointId::RightShoulder => "rs",
        }
    }

    /// Position of this id in [`KeypointId::ALL`].
    pub const fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for KeypointId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for KeypointId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        KeypointId::ALL
            .into_iter()
            .find(|id| id.as_str() == s)
            .ok_or_else(|| Error::invalid("id", format!("unknown keypoint id `{s}`")))
    }
}

impl Serialize for KeypointId {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.as_str())
    }
}

impl<'de> Deserialize<'de> for KeypointId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One value for each of the six torso keypoints.
///
/// Serializes as a JSON object keyed by the keypoint names.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerKeypoint<T>([T; 6]);

impl<T> PerKeypoint<T> {
    pub fn from_fn(mut f: impl FnMut(KeypointId) -> T) -> Self {
        PerKeypoint(KeypointId::ALL.map(&mut f))
    }

    pub fn try_from_fn<E>(mut f: impl FnMut(KeypointId) -> std::result::Result<T, E>) -> std::result::Result<Self, E> {
        let mut out = Vec::with_capacity(6);
        for id in KeypointId::ALL {
            out.push(f(id)?);
        }
        match out.try_into() {
            Ok(values) => Ok(PerKeypoint(values)),
            Err(_) => unreachable!("six keypoints"),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (KeypointId, &T)> {
        KeypointId::ALL.into_iter().zip(self.0.iter())
    }

    pub fn values(&self) -> impl Iterator<Item = &T> {
        self.0.iter()
    }

    pub fn map<U>(&self, mut f: impl FnMut(KeypointId, &T) -> U) -> PerKeypoint<U> {
        PerKeypoint::from_fn(|id| f(id, &self[id]))
    }

    pub fn as_array(&self) -> &[T; 6] {
        &self.0
    }
}

impl<T> Index<KeypointId> for PerKeypoint<T> {
    type Output = T;
    fn index(&self, id: KeypointId) -> &T {
        &self.0[id.index()]
    }
}

impl<T> IndexMut<KeypointId> for PerKeypoint<T> {
    fn index_mut(&mut self, id: KeypointId) -> &mut T {
        &mut self.0[id.index()]
    }
}

impl<T: Serialize> Serialize for PerKeypoint<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_map(self.iter().map(|(id, v)| (id.as_str(), v)))
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for PerKeypoint<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let mut map = BTreeMap::<KeypointId, T>::deserialize(deserializer)?;
        let missing: Vec<_> = KeypointId::ALL
            .into_iter()
            .filter(|id| !map.contains_key(id))
            .map(KeypointId::as_str)
            .collect();
        if !missing.is_empty() {
            return Err(serde::de::Error::custom(format!(
                "missing keypoints: {}",
                missing.join(", ")
            )));
        }
        Ok(PerKeypoint::from_fn(|id| map.remove(&id).expect("checked above")))
    }
}

/// Which camera of the rectified pair an observation comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

/// A single labeled detection.
///
/// `u`, `v` may fall slightly outside the image; detectors extrapolate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint2D {
    pub id: KeypointId,
    pub u: f64,
    pub v: f64,
    pub p: f64,
}

impl Keypoint2D {
    pub fn new(id: KeypointId, u: f64, v: f64, p: f64) -> Result<Self> {
        if !(u.is_finite() && v.is_finite()) {
            return Err(Error::invalid("u/v", "image coordinates must be finite"));
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::invalid("p", format!("confidence {p} outside [0, 1]")));
        }
        Ok(Keypoint2D { id, u, v, p })
    }

    pub fn position(&self) -> ImagePoint {
        ImagePoint::new(self.u, self.v)
    }
}

/// The detections in one image, at most one per keypoint id.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseObservation2D {
    pub frame_id: u64,
    pub side: Side,
    keypoints: BTreeMap<KeypointId, Keypoint2D>,
}

impl PoseObservation2D {
    pub fn new(
        frame_id: u64,
        side: Side,
        keypoints: impl IntoIterator<Item = Keypoint2D>,
    ) -> Result<Self> {
        let mut map = BTreeMap::new();
        for kp in keypoints {
            if map.insert(kp.id, kp).is_some() {
                return Err(Error::DuplicateKeypoint(kp.id));
            }
        }
        Ok(PoseObservation2D {
            frame_id,
            side,
            keypoints: map,
        })
    }

    pub fn get(&self, id: KeypointId) -> Option<&Keypoint2D> {
        self.keypoints.get(&id)
    }

    pub fn keypoints(&self) -> impl Iterator<Item = &Keypoint2D> {
        self.keypoints.values()
    }

    pub fn len(&self) -> usize {
        self.keypoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keypoints.is_empty()
    }

    /// Required ids absent from this observation, sorted by name.
    pub fn missing(&self) -> Vec<KeypointId> {
        KeypointId::ALL
            .into_iter()
            .filter(|id| !self.keypoints.contains_key(id))
            .collect()
    }
}

/// Keep only keypoints whose confidence strictly exceeds `p_cutoff`.
pub fn filter_by_confidence(obs: &PoseObservation2D, p_cutoff: f64) -> Result<PoseObservation2D> {
    if !(0.0..=1.0).contains(&p_cutoff) {
        return Err(Error::invalid("p_cutoff", format!("{p_cutoff} outside [0, 1]")));
    }
    Ok(PoseObservation2D {
        frame_id: obs.frame_id,
        side: obs.side,
        keypoints: obs
            .keypoints
            .iter()
            .filter(|(_, kp)| kp.p > p_cutoff)
            .map(|(id, kp)| (*id, *kp))
            .collect(),
    })
}

/// An observation known to carry all six torso keypoints.
#[derive(Debug, Clone, PartialEq)]
pub struct CompleteObservation<'a> {
    obs: &'a PoseObservation2D,
}

impl CompleteObservation<'_> {
    pub fn observation(&self) -> &PoseObservation2D {
        self.obs
    }

    pub fn point(&self, id: KeypointId) -> ImagePoint {
        self.obs.keypoints[&id].position()
    }

    pub fn points(&self) -> PerKeypoint<ImagePoint> {
        PerKeypoint::from_fn(|id| self.point(id))
    }
}

pub fn require_complete(obs: &PoseObservation2D) -> Result<CompleteObservation<'_>> {
    let missing = obs.missing();
    if missing.is_empty() {
        Ok(CompleteObservation { obs })
    } else {
        Err(Error::InsufficientKeypoints { missing })
    }
}
