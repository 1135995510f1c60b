//! Kabsch recovers the rotation between corresponded vector sets and beats
//! any rotation found by random search.
//!
//! cargo run --example kabsch

use f2f::body_frame::rotation_angle;
use f2f::setpoint::{kabsch_rotation, rmsd};
use f2f::synth::random_rotation;
use f2f::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> f2f::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let truth = *random_rotation(&mut rng).matrix();
    let source: Vec<Vec3> = (0..10)
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let target: Vec<Vec3> = source
        .iter()
        .map(|s| truth * s + Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)))
        .collect();

    let est = kabsch_rotation(&source, &target)?;
    println!("kabsch rmsd {:.4}, {:.3} deg from the true rotation", rmsd(&est, &source, &target), rotation_angle(&(est.transpose() * truth)).to_degrees());

    let best = (0..10_000)
        .map(|_| rmsd(random_rotation(&mut rng).matrix(), &source, &target))
        .fold(f64::INFINITY, f64::min);
    println!("best of 10000 random rotations: rmsd {best:.4}");
    Ok(())
}
