//! Setpoints keep each diver's proportions: broader shoulders give a wider
//! setpoint, a shorter standoff a larger one.
//!
//! cargo run --example setpoint_scale

use f2f::synth::{make_torso, BodyShape, CanonicalPose};
use f2f::{build_body_frame, compute_setpoint, StereoRig, Vec3};

fn spread(rig: &StereoRig, shape: &BodyShape, pose: CanonicalPose, distance: f64) -> f2f::Result<f64> {
    // where the diver is does not matter, only what shape it has
    let diver = make_torso(shape, &pose, &Vec3::new(0.3, -0.2, 3.0))?;
    let frame = build_body_frame(&diver.pose)?;
    Ok(compute_setpoint(&diver.pose, &frame, &rig.intrinsics, distance)?.shoulder_spread_px())
}

fn main() -> f2f::Result<()> {
    let rig = StereoRig::default();
    let narrow = BodyShape::new(0.40, 0.35, 0.55, 0.25, 0.0)?;
    let broad = BodyShape::new(0.50, 0.35, 0.55, 0.25, 0.0)?;

    let (n, b) = (spread(&rig, &narrow, CanonicalPose::ProneSurface, 2.0)?, spread(&rig, &broad, CanonicalPose::UprightAway, 2.0)?);
    println!("at 2 m: 0.40 m shoulders -> {n:.2} px, 0.50 m -> {b:.2} px, ratio {:.6}", n / b);

    let (near, far) = (spread(&rig, &broad, CanonicalPose::InvertedAway, 1.0)?, spread(&rig, &broad, CanonicalPose::InvertedAway, 2.0)?);
    println!("0.50 m shoulders: 1 m -> {near:.2} px, 2 m -> {far:.2} px, ratio {:.6}", near / far);

    let diver = make_torso(&BodyShape::default(), &CanonicalPose::ProneBottom, &Vec3::new(0.0, 0.1, 2.5))?;
    let setpoint = compute_setpoint(&diver.pose, &build_body_frame(&diver.pose)?, &rig.intrinsics, 2.0)?;
    println!("{}", serde_json::to_string_pretty(&setpoint).expect("serializable"));
    Ok(())
}
