//! The streaming pipeline in memory: render a scenario to JSON Lines, read
//! the left and right records back, pair them and compute setpoints.
//!
//! cargo run --example jsonl_pipeline

use std::io::Cursor;

use f2f::camera::triangulate_pose;
use f2f::keypoints::filter_by_confidence;
use f2f::stream::{write_observation, ObservationReader, Paired, StereoPairs};
use f2f::synth::Scenario;
use f2f::{build_body_frame, compute_setpoint, Side};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let scenario = Scenario::from_json_str(
        r#"{"poses": ["prone_bottom", "inverted_facing"], "distances": [2.5], "frames": 3,
            "noise": {"sigma_px": 1.5, "seed": 9}}"#,
    )?;
    let mut jsonl = Vec::new();
    for frame in scenario.frames() {
        let frame = frame?;
        write_observation(&mut jsonl, &frame.left)?;
        write_observation(&mut jsonl, &frame.right)?;
    }
    println!("{}", String::from_utf8_lossy(&jsonl).lines().next().unwrap_or_default());

    let rig = scenario.rig;
    let pairs = StereoPairs::new(
        ObservationReader::new(Cursor::new(&jsonl), Side::Left),
        ObservationReader::new(Cursor::new(&jsonl), Side::Right),
    );
    for pair in pairs {
        let Paired::Both(left, right) = pair? else { continue };
        let left = filter_by_confidence(&left, f2f::DEFAULT_P_CUTOFF)?;
        let right = filter_by_confidence(&right, f2f::DEFAULT_P_CUTOFF)?;
        let pose = triangulate_pose(&rig, &left, &right, f64::INFINITY)?;
        let frame = build_body_frame(&pose)?;
        let sp = compute_setpoint(&pose, &frame, &rig.intrinsics, 2.0)?;
        let neck = sp.points[f2f::KeypointId::NeckBase];
        println!("frame {}: shoulder spread {:.1} px, neck at ({:.1}, {:.1})", left.frame_id, sp.shoulder_spread_px(), neck.x, neck.y);
    }
    Ok(())
}
