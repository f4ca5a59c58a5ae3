// Cosine schedule, forward noising and the deterministic DDIM step.
//
// ```bash
// cargo run -p colorguide --example noise_schedule
// ```

use colorguide::schedule::NoiseSchedule;
use colorguide::tensor::{seeded_rng, standard_normal_vec};

pub fn run() -> colorguide::Result<()> {
    let s = NoiseSchedule::cosine(50, 1e-4)?;
    println!("T = {}, alpha_1 = {:.4}, alpha_25 = {:.4}, alpha_T = {:.1e}", s.num_steps(), s.alpha(1), s.alpha(25), s.alpha(50));

    let mut rng = seeded_rng(0);
    let z0 = standard_normal_vec(&mut rng, 8);
    let eps = standard_normal_vec(&mut rng, 8);
    let z = s.forward_noise(&z0, 30, &eps)?;

    // With the true noise, the predicted signal is exact and every DDIM step
    // lands on the same trajectory.
    let back = s.predict_z0(&z, 30, &eps)?;
    let err = back.iter().zip(&z0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("z0 recovered from (z_30, eps) with max error {err:.1e}");
    let mut cur = z;
    for t in (1..=30).rev() {
        cur = s.ddim_step(&cur, t, &eps)?;
    }
    let err = cur.iter().zip(&z0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("30 DDIM steps back to t = 0, max error {err:.1e}");
    Ok(())
}

#[allow(dead_code)]
fn main() -> colorguide::Result<()> {
    run()
}
