// Every color-control mode on one target, with the per-step guidance
// magnitudes of the fine mode.

use std::sync::Arc;

use colorguide::calibration::{estimate_lambda, CalibrationProfile};
use colorguide::colormap::ColorMapOperator;
use colorguide::guidance::{GuidanceConfig, GuidanceMode, Sampler};
use colorguide::latentspace::IdentityCodec;
use colorguide::oracle::{DemoMixtureSpec, ExactDenoiser};
use colorguide::schedule::NoiseSchedule;
use colorguide::tensor::seeded_rng;

pub fn run() -> colorguide::Result<()> {
    let spec = DemoMixtureSpec::default();
    let model = Arc::new(spec.build()?);
    let schedule = NoiseSchedule::default();
    let den = ExactDenoiser::new(Arc::clone(&model), schedule.clone());
    let profile = CalibrationProfile::new(estimate_lambda(&den, &model, &schedule, 500, 1)?, 0.0, 1.0)?;
    let op = ColorMapOperator::new(spec.dims(), 4)?;
    let codec = IdentityCodec::new(spec.dims());
    let sampler = Sampler::new(&den, &schedule, &op, &codec)?.with_realism(&model);
    let target = op.apply(&model.sample(&mut seeded_rng(7)))?;

    println!("{:<12} {:>10} {:>10}", "mode", "color MSE", "log p(x)");
    for mode in GuidanceMode::ALL {
        let cfg = GuidanceConfig::new(mode).with_target(target.clone()).with_profile(profile.clone());
        let r = sampler.sample(&cfg, 1)?;
        println!("{:<12} {:>10.5} {:>10.1}", mode.to_string(), r.color_mse.unwrap(), r.realism_loglik.unwrap());
        if mode == GuidanceMode::FinePixel {
            let n = &r.per_step_guidance_norm;
            println!("             |G_t| at t = 50, 25, 1: {:.2}, {:.2}, {:.2}", n[49], n[24], n[0]);
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> colorguide::Result<()> {
    run()
}
