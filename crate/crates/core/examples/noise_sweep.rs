//! Body-frame error under growing pixel noise, up to detector-level noise.
//!
//! cargo run --release --example noise_sweep

use f2f::synth::{BodyShape, CanonicalPose, NoiseSweep};
use f2f::{StereoRig, Vec3};

fn main() -> f2f::Result<()> {
    for distance in [1.0, 2.0, 3.0] {
        let sweep = NoiseSweep {
            rig: StereoRig::default(),
            shape: BodyShape::default(),
            pose: CanonicalPose::UprightFacing,
            position: Vec3::new(0.0, 0.0, distance),
            sigmas_px: vec![0.0, 0.5, 2.0, 5.0, 12.75],
            trials: 1000,
            seed: 3,
            p_cutoff: f2f::DEFAULT_P_CUTOFF,
            vert_tol_px: f64::INFINITY,
        };
        println!("diver at {distance} m");
        for s in sweep.run()? {
            println!(
                "  sigma {:5.2} px: frame error {:6.2} ± {:.2} deg, origin error {:.3} m ({} used, {} failed)",
                s.sigma_px,
                s.mean_angle_rad.to_degrees(),
                s.std_err_rad.to_degrees(),
                s.mean_origin_err_m,
                s.n_used,
                s.n_failed
            );
        }
    }
    Ok(())
}
