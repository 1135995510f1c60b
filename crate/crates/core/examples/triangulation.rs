//! Project a point into a rectified stereo pair and triangulate it back.
//!
//! cargo run --example triangulation

use f2f::camera::triangulate_pair;
use f2f::{StereoRig, Vec3};

fn main() -> f2f::Result<()> {
    let rig = StereoRig::default();
    println!("{}", rig.to_json_string());

    for point in [Vec3::new(0.1, -0.05, 1.0), Vec3::new(0.1, -0.05, 2.0), Vec3::new(-0.3, 0.2, 4.0)] {
        let left = rig.project_left(&point)?;
        let right = rig.project_right(&point)?;
        let back = triangulate_pair(&rig, &left, &right, 5.0)?;
        println!(
            "({:5.2} {:5.2} {:5.2})  left ({:7.2}, {:7.2})  disparity {:6.2} px  -> ({:5.2} {:5.2} {:5.2})",
            point.x,
            point.y,
            point.z,
            left.x,
            left.y,
            left.x - right.x,
            back.x,
            back.y,
            back.z
        );
    }

    // a mismatched correspondence breaks the epipolar constraint
    let p = Vec3::new(0.0, 0.0, 2.0);
    let mut right = rig.project_right(&p)?;
    right.y += 12.0;
    match triangulate_pair(&rig, &rig.project_left(&p)?, &right, 5.0) {
        Err(e) => println!("rejected: {e}"),
        Ok(q) => println!("unexpected: {q}"),
    }
    Ok(())
}
