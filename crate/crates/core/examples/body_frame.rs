//! Body frames of the six canonical diver poses, recovered from noiseless stereo.
//!
//! cargo run --example body_frame

use f2f::camera::triangulate_pose;
use f2f::synth::{make_torso, observe, BodyShape, CanonicalPose, NoiseSpec};
use f2f::{build_body_frame, StereoRig, Vec3};

fn main() -> f2f::Result<()> {
    let rig = StereoRig::default();
    let shape = BodyShape::default();
    for pose in CanonicalPose::CANONICAL {
        let diver = make_torso(&shape, &pose, &Vec3::new(0.0, 0.0, 2.0))?;
        let (left, right) = observe(&rig, &diver.pose, &NoiseSpec::noiseless(), 0, 0.0)?;
        let frame = build_body_frame(&triangulate_pose(&rig, &left, &right, 5.0)?)?;
        let fmt = |v: Vec3| format!("({:5.2} {:5.2} {:5.2})", v.x, v.y, v.z);
        println!(
            "{:<18} x {}  y {}  z {}  error {:.1e} rad",
            pose.label(),
            fmt(frame.x_axis),
            fmt(frame.y_axis),
            fmt(frame.z_axis),
            frame.angular_distance(&diver.frame)
        );
    }
    Ok(())
}
