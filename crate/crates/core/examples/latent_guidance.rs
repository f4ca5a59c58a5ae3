// Fine guidance in latent space: the same target, sampled through the
// identity, orthogonal and saturating toy codecs.

use std::sync::Arc;

use colorguide::calibration::calibrate;
use colorguide::colormap::ColorMapOperator;
use colorguide::guidance::{GuidanceConfig, GuidanceMode, Sampler};
use colorguide::latentspace::{latent_model, CodecKind, CodecSpec};
use colorguide::oracle::{DemoMixtureSpec, ExactDenoiser};
use colorguide::schedule::NoiseSchedule;
use colorguide::tensor::seeded_rng;

pub fn run() -> colorguide::Result<()> {
    let spec = DemoMixtureSpec { height: 8, width: 8, ..DemoMixtureSpec::default() };
    let model = Arc::new(spec.build()?);
    let schedule = NoiseSchedule::default();
    let op = ColorMapOperator::new(spec.dims(), 2)?;
    let target = op.apply(&model.sample(&mut seeded_rng(42)))?;
    for kind in [CodecKind::Identity, CodecKind::Orthogonal, CodecKind::Saturating] {
        let cs = CodecSpec { kind, gain: 2.0, seed: 7 };
        let codec = cs.build(spec.dims())?;
        let lat = latent_model(codec.as_ref(), &cs, &model)?;
        let den = ExactDenoiser::new(lat.clone(), schedule.clone());
        let profile = calibrate(&den, &lat, &schedule, codec.as_ref(), 200, 3)?;
        let sampler = Sampler::new(&den, &schedule, &op, codec.as_ref())?.with_realism(&model);
        let mut mse = [0.0; 2];
        for (i, mode) in [GuidanceMode::None, GuidanceMode::FineLatent].into_iter().enumerate() {
            let cfg = GuidanceConfig::new(mode).with_target(target.clone()).with_profile(profile.clone());
            for seed in 0..8 {
                mse[i] += sampler.sample(&cfg, seed)?.color_mse.unwrap() / 8.0;
            }
        }
        println!("{:<10} (a, b) = ({:+.3}, {:.3})  color MSE unguided {:.4} -> guided {:.4}", kind.to_string(), profile.a_bar, profile.b_bar, mse[0], mse[1]);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> colorguide::Result<()> {
    run()
}
