//! Batch scoring of setpoints against baselines, pose-by-distance error
//! tables, and Fleiss' kappa for multi-rater studies.

use std::fmt::Write as _;

use serde::Serialize;

use crate::body_frame::build_body_frame;
use crate::camera::{triangulate_pose, StereoRig};
use crate::keypoints::{filter_by_confidence, PoseObservation2D};
use crate::setpoint::{compute_setpoint, csv_field, setpoint_error, Setpoint, SetpointError};
use crate::{Error, Result, DEFAULT_P_CUTOFF, DEFAULT_VERT_TOL_PX};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvaluationConfig {
    pub rig: StereoRig,
    pub p_cutoff: f64,
    pub vert_tol_px: f64,
    /// Translate observed and baseline points onto a common centroid before scoring.
    pub center_align: bool,
}

impl EvaluationConfig {
    pub fn new(rig: StereoRig) -> Self {
        EvaluationConfig {
            rig,
            p_cutoff: DEFAULT_P_CUTOFF,
            vert_tol_px: DEFAULT_VERT_TOL_PX,
            center_align: true,
        }
    }
}

/// Left and right detections of one stereo frame.
#[derive(Debug, Clone, PartialEq)]
pub struct StereoFrame {
    pub left: PoseObservation2D,
    pub right: PoseObservation2D,
}

/// Run the full pipeline on one frame and score its setpoint against `baseline`.
///
/// The setpoint is commanded at the baseline's distance.
pub fn score_frame(
    left: &PoseObservation2D,
    right: &PoseObservation2D,
    baseline: &Setpoint,
    config: &EvaluationConfig,
) -> Result<(Setpoint, SetpointError)> {
    let left = filter_by_confidence(left, config.p_cutoff)?;
    let right = filter_by_confidence(right, config.p_cutoff)?;
    let pose = triangulate_pose(&config.rig, &left, &right, config.vert_tol_px)?;
    let frame = build_body_frame(&pose)?;
    let setpoint = compute_setpoint(&pose, &frame, &config.rig.intrinsics, baseline.distance_m)?;
    let err = setpoint_error(&setpoint.to_map(), baseline, config.center_align)?;
    Ok((setpoint, err))
}

/// Summary of one (pose, distance) cell.
///
/// With no frames used the statistics are NaN.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationRow {
    pub pose_label: String,
    pub distance_m: f64,
    pub mean_px: f64,
    /// Population standard deviation over the frames used.
    pub std_px: f64,
    pub min_px: f64,
    pub n_frames_used: usize,
    pub n_frames_failed: usize,
}

impl EvaluationRow {
    pub fn total_frames(&self) -> usize {
        self.n_frames_used + self.n_frames_failed
    }
}

/// Streaming mean, population variance (Welford) and minimum of per-frame errors.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ErrorAccumulator {
    n: usize,
    failed: usize,
    mean: f64,
    m2: f64,
    min: f64,
}

impl ErrorAccumulator {
    pub fn push(&mut self, sum_px: f64) {
        self.n += 1;
        let delta = sum_px - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (sum_px - self.mean);
        self.min = if self.n == 1 { sum_px } else { self.min.min(sum_px) };
    }

    pub fn push_failure(&mut self) {
        self.failed += 1;
    }

    pub fn push_result<T>(&mut self, outcome: &Result<T>, sum_px: impl FnOnce(&T) -> f64) {
        match outcome {
            Ok(v) => self.push(sum_px(v)),
            Err(_) => self.push_failure(),
        }
    }

    pub fn row(&self, pose_label: impl Into<String>, distance_m: f64) -> EvaluationRow {
        let (mean, std, min) = if self.n == 0 {
            (f64::NAN, f64::NAN, f64::NAN)
        } else {
            (self.mean, (self.m2 / self.n as f64).max(0.0).sqrt(), self.min)
        };
        EvaluationRow {
            pose_label: pose_label.into(),
            distance_m,
            mean_px: mean,
            std_px: std,
            min_px: min,
            n_frames_used: self.n,
            n_frames_failed: self.failed,
        }
    }
}

/// Score a sequence of frames against one baseline.
///
/// Frames failing anywhere in the pipeline are dropped and counted.
pub fn evaluate_sequence(
    frames: &[StereoFrame],
    baseline: &Setpoint,
    config: &EvaluationConfig,
    pose_label: &str,
) -> Result<EvaluationRow> {
    if frames.is_empty() {
        return Err(Error::invalid("frames", "need at least one frame"));
    }
    let mut acc = ErrorAccumulator::default();
    for f in frames {
        acc.push_result(&score_frame(&f.left, &f.right, baseline, config), |(_, e)| e.sum_euclidean_px);
    }
    let row = acc.row(pose_label, baseline.distance_m);
    if row.n_frames_used == 0 {
        return Err(Error::AllFramesFailed { total: frames.len() });
    }
    Ok(row)
}

/// Pose-by-distance table with "Across distances" and "Across poses" marginals.
///
/// Marginals are unweighted means of the cell means and of the cell standard
/// deviations, skipping cells where every frame failed.
#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationTable {
    poses: Vec<String>,
    distances: Vec<f64>,
    cells: Vec<Option<EvaluationRow>>,
}

fn mean_of(values: impl Iterator<Item = (f64, f64)>) -> Option<(f64, f64)> {
    let (mut n, mut a, mut b) = (0usize, 0.0, 0.0);
    for (x, y) in values {
        n += 1;
        a += x;
        b += y;
    }
    (n > 0).then(|| (a / n as f64, b / n as f64))
}

fn fmt_distance(d: f64) -> String {
    format!("{d} m")
}

fn fmt_cell(cell: Option<(f64, f64)>) -> String {
    match cell {
        Some((m, s)) => format!("{m:.2} ± {s:.2}"),
        None => "n/a".to_string(),
    }
}

impl EvaluationTable {
    /// Rows keep first-appearance order of pose labels; distances are sorted.
    pub fn from_rows(rows: impl IntoIterator<Item = EvaluationRow>) -> Self {
        let rows: Vec<_> = rows.into_iter().collect();
        let mut poses: Vec<String> = Vec::new();
        let mut distances: Vec<f64> = Vec::new();
        for r in &rows {
            if !poses.contains(&r.pose_label) {
                poses.push(r.pose_label.clone());
            }
            if !distances.contains(&r.distance_m) {
                distances.push(r.distance_m);
            }
        }
        distances.sort_by(f64::total_cmp);
        let mut cells = vec![None; poses.len() * distances.len()];
        for r in rows {
            let i = poses.iter().position(|p| *p == r.pose_label).expect("collected");
            let j = distances.iter().position(|d| *d == r.distance_m).expect("collected");
            cells[i * distances.len() + j] = Some(r);
        }
        EvaluationTable {
            poses,
            distances,
            cells,
        }
    }

    pub fn poses(&self) -> &[String] {
        &self.poses
    }

    pub fn distances(&self) -> &[f64] {
        &self.distances
    }

    pub fn cell(&self, pose: usize, distance: usize) -> Option<&EvaluationRow> {
        self.cells[pose * self.distances.len() + distance].as_ref()
    }

    fn stats(&self, pose: usize, distance: usize) -> Option<(f64, f64)> {
        self.cell(pose, distance)
            .filter(|r| r.n_frames_used > 0)
            .map(|r| (r.mean_px, r.std_px))
    }

    /// Mean and std marginal of a pose row.
    pub fn across_distances(&self, pose: usize) -> Option<(f64, f64)> {
        mean_of((0..self.distances.len()).filter_map(|j| self.stats(pose, j)))
    }

    /// Mean and std marginal of a distance column.
    pub fn across_poses(&self, distance: usize) -> Option<(f64, f64)> {
        mean_of((0..self.poses.len()).filter_map(|i| self.stats(i, distance)))
    }

    fn frame_counts(&self) -> (usize, usize) {
        self.cells.iter().flatten().fold((0, 0), |(u, f), r| {
            (u + r.n_frames_used, f + r.n_frames_failed)
        })
    }

    /// Aligned text table.
    pub fn to_text(&self) -> String {
        let mut header = vec!["Pose".to_string()];
        header.extend(self.distances.iter().map(|d| fmt_distance(*d)));
        header.push("Across distances".to_string());

        let mut body: Vec<Vec<String>> = Vec::new();
        for (i, pose) in self.poses.iter().enumerate() {
            let mut row = vec![pose.clone()];
            row.extend((0..self.distances.len()).map(|j| fmt_cell(self.stats(i, j))));
            row.push(fmt_cell(self.across_distances(i)));
            body.push(row);
        }
        let mut marginal = vec!["Across poses".to_string()];
        marginal.extend((0..self.distances.len()).map(|j| fmt_cell(self.across_poses(j))));
        marginal.push(String::new());

        let all = std::iter::once(&header).chain(&body).chain(std::iter::once(&marginal));
        let mut widths = vec![0; header.len()];
        for row in all {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let line = |row: &Vec<String>| {
            let cells: Vec<String> = row
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c}{}", " ".repeat(w - c.chars().count())))
                .collect();
            cells.join(" | ").trim_end().to_string()
        };
        let rule = widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-");

        let mut out = String::new();
        writeln!(out, "{}", line(&header)).unwrap();
        writeln!(out, "{rule}").unwrap();
        for row in &body {
            writeln!(out, "{}", line(row)).unwrap();
        }
        writeln!(out, "{rule}").unwrap();
        writeln!(out, "{}", line(&marginal)).unwrap();
        let (used, failed) = self.frame_counts();
        writeln!(out).unwrap();
        writeln!(out, "Cells: mean ± population std (px) of the per-frame sum of keypoint Euclidean errors.").unwrap();
        writeln!(out, "Marginals: unweighted means of cell means and of cell stds.").unwrap();
        writeln!(out, "Frames: {used} used, {failed} failed (failed frames are dropped).").unwrap();
        out
    }

    /// CSV in the same layout as [`EvaluationTable::to_text`]: one row per pose
    /// plus an `Across poses` row, a mean and a std column per distance.
    pub fn to_csv(&self) -> String {
        let num = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        let mut out = String::from("pose");
        for d in &self.distances {
            write!(out, ",mean_{d}m,std_{d}m").unwrap();
        }
        out.push_str(",mean_across_distances,std_across_distances\n");
        for (i, pose) in self.poses.iter().enumerate() {
            out.push_str(&csv_field(pose));
            for j in 0..self.distances.len() {
                let s = self.stats(i, j);
                write!(out, ",{},{}", num(s.map(|s| s.0)), num(s.map(|s| s.1))).unwrap();
            }
            let m = self.across_distances(i);
            writeln!(out, ",{},{}", num(m.map(|s| s.0)), num(m.map(|s| s.1))).unwrap();
        }
        out.push_str("Across poses");
        for j in 0..self.distances.len() {
            let s = self.across_poses(j);
            write!(out, ",{},{}", num(s.map(|s| s.0)), num(s.map(|s| s.1))).unwrap();
        }
        out.push_str(",,\n");
        out
    }

    /// One line per cell with every statistic, including min and frame counts.
    pub fn cells_csv(&self) -> String {
        let mut out = String::from("pose_label,distance_m,mean_px,std_px,min_px,n_frames_used,n_frames_failed\n");
        for r in self.cells.iter().flatten() {
            let f = |v: f64| if v.is_nan() { String::new() } else { v.to_string() };
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                csv_field(&r.pose_label),
                r.distance_m,
                f(r.mean_px),
                f(r.std_px),
                f(r.min_px),
                r.n_frames_used,
                r.n_frames_failed
            )
            .unwrap();
        }
        out
    }
}

/// Tallies of categorical ratings: one row per rated item, one column per
/// category, each row summing to the number of raters.
#[derive(Debug, Clone, PartialEq)]
pub struct RatingMatrix {
    counts: Vec<Vec<u32>>,
    raters: u32,
}

impl RatingMatrix {
    pub fn new(counts: Vec<Vec<u32>>) -> Result<Self> {
        let first = counts.first().ok_or_else(|| Error::invalid("counts", "need at least one item"))?;
        let categories = first.len();
        if categories < 2 {
            return Err(Error::invalid("counts", "need at least two categories"));
        }
        let raters: u32 = first.iter().sum();
        if raters < 2 {
            return Err(Error::invalid("counts", "need at least two raters per item"));
        }
        for (i, row) in counts.iter().enumerate() {
            if row.len() != categories {
                return Err(Error::invalid("counts", format!("item {i} has {} categories, expected {categories}", row.len())));
            }
            let s: u32 = row.iter().sum();
            if s != raters {
                return Err(Error::invalid("counts", format!("item {i} has {s} ratings, expected {raters}")));
            }
        }
        Ok(RatingMatrix { counts, raters })
    }

    /// Tally per-item label lists (`labels[item][rater]` is a category index).
    pub fn from_labels(labels: &[Vec<usize>], categories: usize) -> Result<Self> {
        let counts = labels
            .iter()
            .map(|item| {
                let mut row = vec![0u32; categories];
                for &c in item {
                    *row.get_mut(c).ok_or_else(|| Error::invalid("labels", format!("category {c} >= {categories}")))? += 1;
                }
                Ok(row)
            })
            .collect::<Result<Vec<_>>>()?;
        RatingMatrix::new(counts)
    }

    pub fn n_raters(&self) -> u32 {
        self.raters
    }

    pub fn n_items(&self) -> usize {
        self.counts.len()
    }

    pub fn n_categories(&self) -> usize {
        self.counts[0].len()
    }

    pub fn counts(&self) -> &[Vec<u32>] {
        &self.counts
    }
}

/// Fleiss' kappa, `(P - Pe) / (1 - Pe)`.
pub fn fleiss_kappa(matrix: &RatingMatrix) -> Result<f64> {
    let n = f64::from(matrix.n_raters());
    let items = matrix.n_items() as f64;
    let p_bar = matrix
        .counts()
        .iter()
        .map(|row| {
            let sq: f64 = row.iter().map(|&c| f64::from(c) * f64::from(c)).sum();
            (sq - n) / (n * (n - 1.0))
        })
        .sum::<f64>()
        / items;
    let p_e: f64 = (0..matrix.n_categories())
        .map(|j| {
            let col: f64 = matrix.counts().iter().map(|row| f64::from(row[j])).sum();
            let p = col / (items * n);
            p * p
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return Err(Error::DegenerateAgreement);
    }
    Ok((p_bar - p_e) / (1.0 - p_e))
}
