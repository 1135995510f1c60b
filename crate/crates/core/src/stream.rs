//! JSON Lines keypoint streams.
//!
//! One object per image:
//!
//! ```json
//! {"frame":0,"side":"left","keypoints":[{"id":"ls","u":612.5,"v":301.0,"p":0.97}]}
//! ```
//!
//! Ids outside the torso set are skipped and counted. Parse failures carry the
//! line number and the offending field.

use std::fmt;
use std::io::{BufRead, Write};

use serde_json::{json, Map, Value};

use crate::keypoints::{Keypoint2D, KeypointId, PoseObservation2D, Side};

/// A malformed stream line or an ordering violation.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamError {
    pub line: usize,
    pub field: Option<String>,
    pub message: String,
}

impl fmt::Display for StreamError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.field {
            Some(field) => write!(f, "line {}: field `{field}`: {}", self.line, self.message),
            None => write!(f, "line {}: {}", self.line, self.message),
        }
    }
}

impl std::error::Error for StreamError {}

fn field_err(line: usize, field: impl Into<String>, message: impl Into<String>) -> StreamError {
    StreamError {
        line,
        field: Some(field.into()),
        message: message.into(),
    }
}

fn get<'a>(obj: &'a Map<String, Value>, key: &str, path: &str, line: usize) -> Result<&'a Value, StreamError> {
    obj.get(key).ok_or_else(|| field_err(line, path, "missing"))
}

fn number(v: &Value, path: &str, line: usize) -> Result<f64, StreamError> {
    v.as_f64().ok_or_else(|| field_err(line, path, format!("expected a number, got {v}")))
}

/// One parsed line.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedLine {
    pub observation: PoseObservation2D,
    /// Keypoints with ids outside the torso set.
    pub unknown_ids: usize,
}

/// Parse a single JSONL record. `line` is 1-based and only used in errors.
pub fn parse_line(text: &str, line: usize) -> Result<ParsedLine, StreamError> {
    let value: Value = serde_json::from_str(text).map_err(|e| StreamError {
        line,
        field: None,
        message: format!("invalid JSON: {e}"),
    })?;
    let obj = value
        .as_object()
        .ok_or_else(|| StreamError { line, field: None, message: "expected a JSON object".into() })?;

    let frame = get(obj, "frame", "frame", line)?;
    let frame = frame
        .as_u64()
        .ok_or_else(|| field_err(line, "frame", format!("expected a non-negative integer, got {frame}")))?;
    let side = match get(obj, "side", "side", line)?.as_str() {
        Some("left") => Side::Left,
        Some("right") => Side::Right,
        _ => return Err(field_err(line, "side", "expected \"left\" or \"right\"")),
    };
    let kps = get(obj, "keypoints", "keypoints", line)?
        .as_array()
        .ok_or_else(|| field_err(line, "keypoints", "expected an array"))?;

    let mut keypoints = Vec::with_capacity(kps.len());
    let mut unknown_ids = 0;
    for (i, kp) in kps.iter().enumerate() {
        let path = |f: &str| format!("keypoints[{i}].{f}");
        let kp = kp
            .as_object()
            .ok_or_else(|| field_err(line, format!("keypoints[{i}]"), "expected an object"))?;
        let id = get(kp, "id", &path("id"), line)?
            .as_str()
            .ok_or_else(|| field_err(line, path("id"), "expected a string"))?;
        let u = number(get(kp, "u", &path("u"), line)?, &path("u"), line)?;
        let v = number(get(kp, "v", &path("v"), line)?, &path("v"), line)?;
        let p = number(get(kp, "p", &path("p"), line)?, &path("p"), line)?;
        let Ok(id) = id.parse::<KeypointId>() else {
            unknown_ids += 1;
            continue;
        };
        keypoints.push(Keypoint2D::new(id, u, v, p).map_err(|e| field_err(line, path("p"), e.to_string()))?);
    }
    let observation = PoseObservation2D::new(frame, side, keypoints)
        .map_err(|e| field_err(line, "keypoints", e.to_string()))?;
    Ok(ParsedLine { observation, unknown_ids })
}

/// Serialize one observation as a JSONL record (no trailing newline).
pub fn observation_to_json(obs: &PoseObservation2D) -> Value {
    json!({
        "frame": obs.frame_id,
        "side": obs.side,
        "keypoints": obs.keypoints().collect::<Vec<_>>(),
    })
}

pub fn write_observation(out: &mut impl Write, obs: &PoseObservation2D) -> std::io::Result<()> {
    serde_json::to_writer(&mut *out, &observation_to_json(obs))?;
    writeln!(out)
}

/// Iterator over the observations of one side in a keypoint stream.
///
/// Records of the other side are skipped, so a single interleaved stream can
/// feed both readers of a pair.
pub struct ObservationReader<R> {
    input: R,
    side: Side,
    line: usize,
    buf: String,
    unknown_ids: usize,
    other_side: usize,
}

impl<R: BufRead> ObservationReader<R> {
    pub fn new(input: R, side: Side) -> Self {
        ObservationReader {
            input,
            side,
            line: 0,
            buf: String::new(),
            unknown_ids: 0,
            other_side: 0,
        }
    }

    /// Keypoints ignored so far because their id is not a torso keypoint.
    pub fn unknown_ids(&self) -> usize {
        self.unknown_ids
    }

    /// Records skipped so far because they belong to the other camera.
    pub fn other_side_records(&self) -> usize {
        self.other_side
    }

    pub fn line(&self) -> usize {
        self.line
    }
}

impl<R: BufRead> Iterator for ObservationReader<R> {
    type Item = Result<PoseObservation2D, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            match self.input.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => self.line += 1,
                Err(e) => {
                    return Some(Err(StreamError {
                        line: self.line + 1,
                        field: None,
                        message: e.to_string(),
                    }))
                }
            }
            let text = self.buf.trim();
            if text.is_empty() {
                continue;
            }
            match parse_line(text, self.line) {
                Ok(parsed) => {
                    self.unknown_ids += parsed.unknown_ids;
                    if parsed.observation.side != self.side {
                        self.other_side += 1;
                        continue;
                    }
                    return Some(Ok(parsed.observation));
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Output of [`StereoPairs`].
#[derive(Debug, Clone, PartialEq)]
pub enum Paired {
    Both(PoseObservation2D, PoseObservation2D),
    /// A frame seen on only one side.
    Unpaired { frame: u64, side: Side },
}

impl Paired {
    pub fn frame(&self) -> u64 {
        match self {
            Paired::Both(l, _) => l.frame_id,
            Paired::Unpaired { frame, .. } => *frame,
        }
    }
}

/// Merge-join of left and right streams by frame id.
///
/// Both streams must list frames in strictly increasing order; memory use is
/// one pending observation per side.
pub struct StereoPairs<L, R>
where
    L: Iterator<Item = Result<PoseObservation2D, StreamError>>,
    R: Iterator<Item = Result<PoseObservation2D, StreamError>>,
{
    left: L,
    right: R,
    pending_left: Option<PoseObservation2D>,
    pending_right: Option<PoseObservation2D>,
    last_left: Option<u64>,
    last_right: Option<u64>,
    failed: bool,
}

impl<L, R> StereoPairs<L, R>
where
    L: Iterator<Item = Result<PoseObservation2D, StreamError>>,
    R: Iterator<Item = Result<PoseObservation2D, StreamError>>,
{
    pub fn new(left: L, right: R) -> Self {
        StereoPairs {
            left,
            right,
            pending_left: None,
            pending_right: None,
            last_left: None,
            last_right: None,
            failed: false,
        }
    }

    fn pull(
        it: &mut impl Iterator<Item = Result<PoseObservation2D, StreamError>>,
        last: &mut Option<u64>,
    ) -> Result<Option<PoseObservation2D>, StreamError> {
        match it.next() {
            None => Ok(None),
            Some(Err(e)) => Err(e),
            Some(Ok(obs)) => {
                if let Some(prev) = *last {
                    if obs.frame_id <= prev {
                        return Err(StreamError {
                            line: 0,
                            field: Some("frame".into()),
                            message: format!(
                                "{:?} stream: frame {} after frame {prev}; frames must be strictly increasing",
                                obs.side, obs.frame_id
                            ),
                        });
                    }
                }
                *last = Some(obs.frame_id);
                Ok(Some(obs))
            }
        }
    }
}

impl<L, R> Iterator for StereoPairs<L, R>
where
    L: Iterator<Item = Result<PoseObservation2D, StreamError>>,
    R: Iterator<Item = Result<PoseObservation2D, StreamError>>,
{
    type Item = Result<Paired, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.failed {
            return None;
        }
        let mut step = || -> Result<Option<Paired>, StreamError> {
            if self.pending_left.is_none() {
                self.pending_left = Self::pull(&mut self.left, &mut self.last_left)?;
            }
            if self.pending_right.is_none() {
                self.pending_right = Self::pull(&mut self.right, &mut self.last_right)?;
            }
            Ok(match (self.pending_left.take(), self.pending_right.take()) {
                (None, None) => None,
                (Some(l), None) => Some(Paired::Unpaired { frame: l.frame_id, side: Side::Left }),
                (None, Some(r)) => Some(Paired::Unpaired { frame: r.frame_id, side: Side::Right }),
                (Some(l), Some(r)) => {
                    if l.frame_id == r.frame_id {
                        Some(Paired::Both(l, r))
                    } else if l.frame_id < r.frame_id {
                        let frame = l.frame_id;
                        self.pending_right = Some(r);
                        Some(Paired::Unpaired { frame, side: Side::Left })
                    } else {
                        let frame = r.frame_id;
                        self.pending_left = Some(l);
                        Some(Paired::Unpaired { frame, side: Side::Right })
                    }
                }
            })
        };
        match step() {
            Ok(item) => item.map(Ok),
            Err(e) => {
                self.failed = true;
                Some(Err(e))
            }
        }
    }
}
