//! Synthetic version of the pose x distance error table: six canonical poses
//! at 1, 2 and 3 m, 50 noisy frames each, scored against the ideal setpoint.
//!
//! cargo run --example evaluation_table [sigma_px]

use f2f::evaluation::{score_frame, ErrorAccumulator, EvaluationConfig, EvaluationTable};
use f2f::synth::{make_torso, BodyShape, CanonicalPose, NoiseSpec, Scenario};
use f2f::{compute_setpoint, StereoRig, Vec3};

fn main() -> f2f::Result<()> {
    let sigma = std::env::args().nth(1).map_or(2.0, |s| s.parse().expect("sigma in pixels"));
    let scenario = Scenario {
        rig: StereoRig::default(),
        shape: BodyShape::default(),
        poses: CanonicalPose::CANONICAL.to_vec(),
        distances: vec![1.0, 2.0, 3.0],
        frames: 50,
        noise: NoiseSpec::new(sigma, 1)?,
        margin_px: 0.0,
    };
    let mut config = EvaluationConfig::new(scenario.rig);
    config.center_align = true;

    let mut cells: Vec<(CanonicalPose, f64, ErrorAccumulator)> = Vec::new();
    for frame in scenario.frames() {
        let frame = frame?;
        if cells.last().is_none_or(|(p, d, _)| *p != frame.pose || *d != frame.distance_m) {
            cells.push((frame.pose, frame.distance_m, ErrorAccumulator::default()));
        }
        let ideal = make_torso(&scenario.shape, &CanonicalPose::UprightFacing, &Vec3::new(0.0, 0.0, frame.distance_m))?;
        let baseline = compute_setpoint(&ideal.pose, &ideal.frame, &scenario.rig.intrinsics, frame.distance_m)?;
        let acc = &mut cells.last_mut().expect("pushed above").2;
        acc.push_result(&score_frame(&frame.left, &frame.right, &baseline, &config), |(_, e)| e.sum_euclidean_px);
    }
    let table = EvaluationTable::from_rows(cells.iter().map(|(p, d, acc)| acc.row(p.label(), *d)));
    print!("{}", table.to_text());
    Ok(())
}
