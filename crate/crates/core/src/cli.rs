//! Command-line front end.
//!
//! Every stream is JSON Lines. Exit codes: 0 success, 2 input or
//! configuration error, 3 when no frame makes it through the pipeline.
//! Per-frame failures are written inline as error records and never abort
//! a stream.

use std::collections::HashMap;
use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use crate::body_frame::build_body_frame;
use crate::camera::{triangulate_pose, StereoRig};
use crate::evaluation::{fleiss_kappa, score_frame, ErrorAccumulator, EvaluationConfig, EvaluationTable, RatingMatrix};
use crate::keypoints::{filter_by_confidence, PoseObservation2D, Side};
use crate::setpoint::{compute_setpoint, Setpoint, SetpointError};
use crate::stream::{write_observation, ObservationReader, Paired, StereoPairs, StreamError};
use crate::synth::{make_torso, perturb_alignment, CanonicalPose, Scenario};
use crate::{Error, Vec3, DEFAULT_DISTANCE_M, DEFAULT_P_CUTOFF, DEFAULT_VERT_TOL_PX};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_PIPELINE: i32 = 3;

#[derive(Debug)]
enum CliError {
    Input(String),
    Pipeline(String),
    /// The reader of our output went away; not an error for a filter.
    BrokenPipe,
}

impl CliError {
    fn code(&self) -> i32 {
        match self {
            CliError::Input(_) => EXIT_INPUT,
            CliError::Pipeline(_) => EXIT_PIPELINE,
            CliError::BrokenPipe => EXIT_OK,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Pipeline(m) => m,
            CliError::BrokenPipe => "",
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            CliError::BrokenPipe
        } else {
            CliError::Input(e.to_string())
        }
    }
}

impl From<StreamError> for CliError {
    fn from(e: StreamError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Input(e.to_string())
    }
}

type CliResult<T = ()> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "f2f", version, about = "Face-to-face setpoints from stereo torso keypoints")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Triangulate the six torso keypoints of every stereo frame.
    Triangulate(PipelineArgs),
    /// Compute the body frame of every stereo frame.
    Frame(PipelineArgs),
    /// Compute the face-to-face setpoint of every stereo frame.
    Setpoint(SetpointArgs),
    /// Score setpoints against baselines and print a pose x distance table.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic keypoint stream from a scenario file.
    Synth(SynthArgs),
    /// Sample perturbed alignment vectors.
    Perturb(PerturbArgs),
    /// Fleiss' kappa of a rating count matrix.
    Kappa(KappaArgs),
}

#[derive(Debug, Args)]
struct PipelineArgs {
    /// Stereo calibration JSON.
    #[arg(long)]
    calib: PathBuf,
    /// Left keypoint stream (JSONL).
    #[arg(long)]
    left: PathBuf,
    /// Right keypoint stream (JSONL); may be the same file as --left.
    #[arg(long)]
    right: PathBuf,
    #[arg(long, default_value_t = DEFAULT_P_CUTOFF)]
    p_cutoff: f64,
    /// Maximum vertical disagreement between correspondences, pixels.
    #[arg(long, default_value_t = DEFAULT_VERT_TOL_PX)]
    vert_tol: f64,
    /// Output file (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SetpointArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Commanded standoff, metres.
    #[arg(long, default_value_t = DEFAULT_DISTANCE_M)]
    distance: f64,
    /// Emit one setpoint: the per-keypoint mean over all successful frames.
    #[arg(long)]
    aggregate: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Baseline setpoint JSON; repeat for several distances.
    #[arg(long, required = true)]
    baseline: Vec<PathBuf>,
    /// Ground-truth sidecar from `synth` assigning frames to (pose, distance) cells.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Shift both point sets onto a common centroid before scoring.
    #[arg(long)]
    center_align: bool,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
    /// Also write one CSV row per scored frame.
    #[arg(long)]
    frames_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Scenario JSON.
    scenario: PathBuf,
    /// Observation stream output (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Ground-truth sidecar output; defaults to `<out>.truth.jsonl` when --out is given.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Directory to write the ideal baseline setpoint for every distance.
    #[arg(long)]
    baselines: Option<PathBuf>,
    /// Overrides the scenario's noise seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct PerturbArgs {
    /// Alignment vector as `x,y,z`.
    #[arg(long, allow_hyphen_values = true)]
    z: String,
    /// Bound on the polar angle (and the azimuth unless --phi-bound is set), degrees.
    #[arg(long, default_value_t = 25.0)]
    bound: f64,
    #[arg(long)]
    phi_bound: Option<f64>,
    #[arg(long, default_value_t = 3)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct KappaArgs {
    /// JSON array of per-item category counts, e.g. `[[3,0],[1,2]]`.
    matrix: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Resolved, validated settings shared by the pipeline subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub rig: StereoRig,
    pub left: PathBuf,
    pub right: PathBuf,
    pub p_cutoff: f64,
    pub distance_m: f64,
    pub vert_tol_px: f64,
    pub out: Option<PathBuf>,
}

fn check_file(path: &Path, what: &str) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} `{}` not found", path.display())))
    }
}

impl RunConfig {
    fn from_args(args: &PipelineArgs, distance_m: f64) -> CliResult<Self> {
        check_file(&args.calib, "calibration file")?;
        check_file(&args.left, "left stream")?;
        check_file(&args.right, "right stream")?;
        if !(0.0..=1.0).contains(&args.p_cutoff) {
            return Err(CliError::Input(format!("--p-cutoff {} outside [0, 1]", args.p_cutoff)));
        }
        if !(args.vert_tol >= 0.0) {
            return Err(CliError::Input(format!("--vert-tol {} must be >= 0", args.vert_tol)));
        }
        if !(distance_m.is_finite() && distance_m > 0.0) {
            return Err(CliError::Input(format!("--distance {distance_m} must be > 0")));
        }
        let rig = StereoRig::load(&args.calib)
            .map_err(|e| CliError::Input(format!("{}: {e}", args.calib.display())))?;
        Ok(RunConfig {
            rig,
            left: args.left.clone(),
            right: args.right.clone(),
            p_cutoff: args.p_cutoff,
            distance_m,
            vert_tol_px: args.vert_tol,
            out: args.out.clone(),
        })
    }

    fn pairs(&self) -> CliResult<impl Iterator<Item = Result<Paired, StreamError>>> {
        let open = |p: &Path| -> CliResult<BufReader<File>> {
            Ok(BufReader::new(File::open(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?))
        };
        Ok(StereoPairs::new(
            ObservationReader::new(open(&self.left)?, Side::Left),
            ObservationReader::new(open(&self.right)?, Side::Right),
        ))
    }

    fn filter(&self, l: &PoseObservation2D, r: &PoseObservation2D) -> crate::Result<(PoseObservation2D, PoseObservation2D)> {
        Ok((filter_by_confidence(l, self.p_cutoff)?, filter_by_confidence(r, self.p_cutoff)?))
    }
}

fn open_out<'a>(path: Option<&Path>, stdout: &'a mut dyn Write) -> CliResult<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(BufWriter::new(stdout)),
    })
}

fn error_record(frame: u64, e: &Error) -> Value {
    let mut err = json!({ "kind": e.kind(), "message": e.to_string() });
    if let Some(id) = e.keypoint() {
        err["keypoint"] = json!(id.as_str());
    }
    json!({ "frame": frame, "error": err })
}

fn unpaired_record(frame: u64, side: Side) -> Value {
    let missing = match side {
        Side::Left => "right",
        Side::Right => "left",
    };
    json!({
        "frame": frame,
        "error": { "kind": "unpaired", "message": format!("no {missing} observation"), "side": side },
    })
}

fn write_line(out: &mut dyn Write, v: &Value) -> CliResult {
    serde_json::to_writer(&mut *out, v).map_err(io::Error::from)?;
    writeln!(out)?;
    Ok(())
}

/// Shared per-frame driver: runs `stage` on every pair and writes its record.
fn per_frame(
    cfg: &RunConfig,
    stdout: &mut dyn Write,
    mut stage: impl FnMut(&PoseObservation2D, &PoseObservation2D) -> crate::Result<Value>,
) -> CliResult {
    let mut out = open_out(cfg.out.as_deref(), stdout)?;
    let (mut ok, mut total) = (0usize, 0usize);
    for item in cfg.pairs()? {
        let item = item?;
        total += 1;
        let frame = item.frame();
        let record = match item {
            Paired::Unpaired { frame, side } => unpaired_record(frame, side),
            Paired::Both(l, r) => match cfg.filter(&l, &r).and_then(|(l, r)| stage(&l, &r)) {
                Ok(mut v) => {
                    ok += 1;
                    let mut rec = json!({ "frame": frame });
                    rec.as_object_mut().unwrap().append(v.as_object_mut().expect("stage returns an object"));
                    rec
                }
                Err(e) => error_record(frame, &e),
            },
        };
        write_line(&mut *out, &record)?;
    }
    out.flush()?;
    if ok == 0 {
        return Err(CliError::Pipeline(format!("no frame succeeded ({total} frames read)")));
    }
    Ok(())
}

fn cmd_triangulate(args: &PipelineArgs, stdout: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::from_args(args, DEFAULT_DISTANCE_M)?;
    per_frame(&cfg, stdout, |l, r| {
        let pose = triangulate_pose(&cfg.rig, l, r, cfg.vert_tol_px)?;
        Ok(json!({ "points": pose }))
    })
}

fn cmd_frame(args: &PipelineArgs, stdout: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::from_args(args, DEFAULT_DISTANCE_M)?;
    per_frame(&cfg, stdout, |l, r| {
        let pose = triangulate_pose(&cfg.rig, l, r, cfg.vert_tol_px)?;
        Ok(json!({ "body_frame": build_body_frame(&pose)? }))
    })
}

fn frame_setpoint(cfg: &RunConfig, l: &PoseObservation2D, r: &PoseObservation2D) -> crate::Result<Setpoint> {
    let pose = triangulate_pose(&cfg.rig, l, r, cfg.vert_tol_px)?;
    let frame = build_body_frame(&pose)?;
    compute_setpoint(&pose, &frame, &cfg.rig.intrinsics, cfg.distance_m)
}

fn cmd_setpoint(args: &SetpointArgs, stdout: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::from_args(&args.pipeline, args.distance)?;
    if !args.aggregate {
        return per_frame(&cfg, stdout, |l, r| Ok(json!({ "setpoint": frame_setpoint(&cfg, l, r)? })));
    }
    let mut sum = [crate::ImagePoint::zeros(); 6];
    let (mut n, mut total) = (0usize, 0usize);
    for item in cfg.pairs()? {
        total += 1;
        if let Paired::Both(l, r) = item? {
            if let Ok(sp) = cfg.filter(&l, &r).and_then(|(l, r)| frame_setpoint(&cfg, &l, &r)) {
                n += 1;
                for (acc, p) in sum.iter_mut().zip(sp.points.values()) {
                    *acc += p;
                }
            }
        }
    }
    if n == 0 {
        return Err(CliError::Pipeline(format!("no frame succeeded ({total} frames read)")));
    }
    let mean = Setpoint {
        distance_m: cfg.distance_m,
        points: crate::PerKeypoint::from_fn(|id| sum[id.index()] / n as f64),
    };
    let mut out = open_out(cfg.out.as_deref(), stdout)?;
    write_line(&mut *out, &serde_json::to_value(mean).expect("setpoint serializes"))?;
    out.flush()?;
    Ok(())
}

fn load_setpoint(path: &Path) -> CliResult<Setpoint> {
    check_file(path, "baseline file")?;
    let text = std::fs::read_to_string(path)?;
    Setpoint::from_json_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// Frame id to (row label, distance) from a `synth` ground-truth sidecar.
fn load_labels(path: &Path) -> CliResult<HashMap<u64, (String, f64)>> {
    check_file(path, "labels file")?;
    let mut labels = HashMap::new();
    for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |what: &str| CliError::Input(format!("{}: line {}: {what}", path.display(), i + 1));
        let v: Value = serde_json::from_str(&line).map_err(|e| bad(&e.to_string()))?;
        let frame = v["frame"].as_u64().ok_or_else(|| bad("field `frame` missing or invalid"))?;
        let label = v["label"].as_str().ok_or_else(|| bad("field `label` missing or invalid"))?;
        let d = v["distance_m"].as_f64().ok_or_else(|| bad("field `distance_m` missing or invalid"))?;
        labels.insert(frame, (label.to_string(), d));
    }
    Ok(labels)
}

fn cmd_evaluate(args: &EvaluateArgs, stdout: &mut dyn Write) -> CliResult {
    let cfg = RunConfig::from_args(&args.pipeline, DEFAULT_DISTANCE_M)?;
    let baselines = args.baseline.iter().map(|p| load_setpoint(p)).collect::<CliResult<Vec<_>>>()?;
    let labels = args.labels.as_deref().map(load_labels).transpose()?;
    if labels.is_none() && baselines.len() != 1 {
        return Err(CliError::Input("several baselines need --labels to assign frames".into()));
    }
    let eval = EvaluationConfig {
        rig: cfg.rig,
        p_cutoff: cfg.p_cutoff,
        vert_tol_px: cfg.vert_tol_px,
        center_align: args.center_align,
    };
    let mut frames_csv = match &args.frames_csv {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?);
            writeln!(w, "{}", SetpointError::CSV_HEADER)?;
            Some(w)
        }
        None => None,
    };

    let mut cells: Vec<((String, f64), ErrorAccumulator)> = Vec::new();
    for item in cfg.pairs()? {
        let item = item?;
        let frame = item.frame();
        let (label, distance) = match &labels {
            Some(map) => map
                .get(&frame)
                .cloned()
                .ok_or_else(|| CliError::Input(format!("frame {frame} has no label")))?,
            None => ("all".to_string(), baselines[0].distance_m),
        };
        let baseline = baselines
            .iter()
            .find(|b| (b.distance_m - distance).abs() < 1e-9)
            .ok_or_else(|| CliError::Input(format!("no baseline for distance {distance} m")))?;
        let key = (label, distance);
        let idx = match cells.iter().position(|(k, _)| *k == key) {
            Some(i) => i,
            None => {
                cells.push((key, ErrorAccumulator::default()));
                cells.len() - 1
            }
        };
        let acc = &mut cells[idx].1;
        match item {
            Paired::Unpaired { .. } => acc.push_failure(),
            Paired::Both(l, r) => match score_frame(&l, &r, baseline, &eval) {
                Ok((_, err)) => {
                    acc.push(err.sum_euclidean_px);
                    if let Some(w) = frames_csv.as_mut() {
                        writeln!(w, "{}", err.csv_row(frame, &cells[idx].0 .0, distance))?;
                    }
                }
                Err(_) => acc.push_failure(),
            },
        }
    }
    if let Some(mut w) = frames_csv {
        w.flush()?;
    }
    let rows: Vec<_> = cells.iter().map(|((label, d), acc)| acc.row(label.clone(), *d)).collect();
    let total: usize = rows.iter().map(|r| r.total_frames()).sum();
    if rows.iter().all(|r| r.n_frames_used == 0) {
        return Err(CliError::Pipeline(Error::AllFramesFailed { total }.to_string()));
    }
    let table = EvaluationTable::from_rows(rows);
    let mut out = open_out(cfg.out.as_deref(), stdout)?;
    match args.format {
        Format::Table => out.write_all(table.to_text().as_bytes())?,
        Format::Csv => out.write_all(table.to_csv().as_bytes())?,
    }
    out.flush()?;
    Ok(())
}

fn cmd_synth(args: &SynthArgs, stdout: &mut dyn Write) -> CliResult {
    check_file(&args.scenario, "scenario file")?;
    let text = std::fs::read_to_string(&args.scenario)?;
    let mut scenario = Scenario::from_json_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.scenario.display())))?;
    if let Some(seed) = args.seed {
        scenario.noise.seed = seed;
    }
    let truth_path = args.truth.clone().or_else(|| {
        args.out.as_ref().map(|o| {
            let mut p = o.clone().into_os_string();
            p.push(".truth.jsonl");
            PathBuf::from(p)
        })
    });
    // validate every frame before writing anything
    for f in scenario.frames() {
        f.map_err(|e| CliError::Input(format!("scenario cannot be rendered: {e}")))?;
    }

    let mut out = open_out(args.out.as_deref(), stdout)?;
    let mut truth = match &truth_path {
        Some(p) => Some(BufWriter::new(File::create(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?)),
        None => None,
    };
    for f in scenario.frames() {
        let f = f?;
        write_observation(&mut out, &f.left)?;
        write_observation(&mut out, &f.right)?;
        if let Some(t) = truth.as_mut() {
            let rec = json!({
                "frame": f.frame_id,
                "pose": f.pose,
                "label": f.pose.label(),
                "distance_m": f.distance_m,
                "points": f.truth.pose,
                "body_frame": f.truth.frame,
            });
            write_line(t, &rec)?;
        }
    }
    out.flush()?;
    if let Some(mut t) = truth {
        t.flush()?;
    }

    if let Some(dir) = &args.baselines {
        std::fs::create_dir_all(dir)?;
        for &d in &scenario.distances {
            let diver = make_torso(&scenario.shape, &CanonicalPose::UprightFacing, &Vec3::new(0.0, 0.0, d))?;
            let sp = compute_setpoint(&diver.pose, &diver.frame, &scenario.rig.intrinsics, d)?;
            let path = dir.join(format!("baseline_{d}m.json"));
            let mut w = BufWriter::new(File::create(&path)?);
            write_line(&mut w, &serde_json::to_value(sp).expect("setpoint serializes"))?;
            w.flush()?;
        }
    }
    Ok(())
}

fn cmd_perturb(args: &PerturbArgs, stdout: &mut dyn Write) -> CliResult {
    let parts: Vec<f64> = args
        .z
        .split(',')
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Input(format!("--z: {e}")))?;
    let [x, y, z] = parts[..] else {
        return Err(CliError::Input("--z expects three comma-separated numbers".into()));
    };
    let v = Vec3::new(x, y, z);
    let samples = perturb_alignment(&v, args.bound, args.phi_bound.unwrap_or(args.bound), args.count, args.seed)?;
    let mut out = open_out(args.out.as_deref(), stdout)?;
    for s in samples {
        write_line(&mut *out, &json!([s.x, s.y, s.z]))?;
    }
    out.flush()?;
    Ok(())
}

fn cmd_kappa(args: &KappaArgs, stdout: &mut dyn Write) -> CliResult {
    check_file(&args.matrix, "matrix file")?;
    let text = std::fs::read_to_string(&args.matrix)?;
    let counts: Vec<Vec<u32>> = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", args.matrix.display())))?;
    let m = RatingMatrix::new(counts)?;
    let kappa = fleiss_kappa(&m).map_err(|e| CliError::Pipeline(e.to_string()))?;
    let mut out = open_out(args.out.as_deref(), stdout)?;
    write_line(
        &mut *out,
        &json!({
            "kappa": kappa,
            "items": m.n_items(),
            "raters": m.n_raters(),
            "categories": m.n_categories(),
        }),
    )?;
    out.flush()?;
    Ok(())
}

/// Parse `args` (including the program name) and run; returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match &cli.command {
        Command::Triangulate(a) => cmd_triangulate(a, stdout),
        Command::Frame(a) => cmd_frame(a, stdout),
        Command::Setpoint(a) => cmd_setpoint(a, stdout),
        Command::Evaluate(a) => cmd_evaluate(a, stdout),
        Command::Synth(a) => cmd_synth(a, stdout),
        Command::Perturb(a) => cmd_perturb(a, stdout),
        Command::Kappa(a) => cmd_kappa(a, stdout),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(CliError::BrokenPipe) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {}", e.message());
            e.code()
        }
    }
}

/// Entry point for the binary.
pub fn main() -> i32 {
    run(std::env::args_os(), &mut io::stdout().lock(), &mut io::stderr().lock())
}
