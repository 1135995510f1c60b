//! Tooling for a perceptual rating study: perturb a diver's alignment vector
//! within shrinking angular bounds, then measure rater agreement.
//!
//! cargo run --example rating_study

use f2f::evaluation::{fleiss_kappa, RatingMatrix};
use f2f::synth::{perturb_alignment, PERTURBATION_PRESETS_DEG};
use f2f::Vec3;

fn main() -> f2f::Result<()> {
    let facing = Vec3::new(0.0, 0.0, -1.0);
    for bound in PERTURBATION_PRESETS_DEG {
        let samples = perturb_alignment(&facing, bound, bound, 4, 17)?;
        let off: Vec<String> = samples
            .iter()
            .map(|v| format!("{:.1}", v.angle(&facing).to_degrees()))
            .collect();
        println!("bound {bound:>4} deg: deviations {} deg", off.join(", "));
    }

    // 6 raters label 5 images as facing (0) or not facing (1)
    let labels = vec![
        vec![0, 0, 0, 0, 0, 0],
        vec![0, 0, 0, 0, 1, 0],
        vec![1, 1, 1, 0, 1, 1],
        vec![1, 1, 1, 1, 1, 1],
        vec![0, 1, 0, 1, 0, 0],
    ];
    let m = RatingMatrix::from_labels(&labels, 2)?;
    println!("counts {:?}", m.counts());
    println!("fleiss kappa {:.3}", fleiss_kappa(&m)?);
    Ok(())
}
