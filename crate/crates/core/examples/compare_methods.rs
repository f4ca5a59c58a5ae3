// A small version of the method comparison: mean color error and
// realism over many seeded runs.
//
// ```bash
// cargo run --release -p colorguide --example compare_methods -- 200
// ```

use colorguide::colormap::ColorMapOperator;
use colorguide::guidance::{Experiment, GuidanceMode};
use colorguide::oracle::DemoMixtureSpec;
use colorguide::schedule::NoiseSchedule;

pub fn run_with(n: u64) -> colorguide::Result<()> {
    let spec = DemoMixtureSpec::default();
    let op = ColorMapOperator::new(spec.dims(), 4)?;
    let exp = Experiment::calibrated(spec.build()?, NoiseSchedule::default(), op, 1000, 1)?;
    let seeds: Vec<u64> = (0..n).collect();
    let modes = [GuidanceMode::None, GuidanceMode::Initialized, GuidanceMode::Universal, GuidanceMode::FinePixel, GuidanceMode::Enforced];
    let (summary, _) = exp.compare(&modes, &seeds)?;
    println!("universal s matched to the fine curve: {:.3}", summary.universal_scale);
    println!("{:<12} {:>18} {:>16}", "mode", "color MSE", "log p(x)");
    for m in &summary.modes {
        println!("{:<12} {:>8.5} ± {:<7.5} {:>7.1} ± {:<6.1}", m.mode.to_string(), m.color_mse_mean, m.color_mse_se, m.loglik_mean, m.loglik_std);
    }
    Ok(())
}

pub fn run() -> colorguide::Result<()> {
    run_with(20)
}

#[allow(dead_code)]
fn main() -> colorguide::Result<()> {
    let n = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(50);
    run_with(n)
}
