// Measuring the constants of fine guidance: the denoiser error scale per
// timestep and the decoder's response to latent noise.

use std::sync::Arc;

use colorguide::calibration::{calibrate, guidance_scale_curve, matched_universal_scale};
use colorguide::guidance::GuidanceMode;
use colorguide::latentspace::{latent_model, CodecKind, CodecSpec};
use colorguide::oracle::{DemoMixtureSpec, ExactDenoiser};
use colorguide::schedule::NoiseSchedule;

pub fn run() -> colorguide::Result<()> {
    let spec = DemoMixtureSpec { height: 8, width: 8, ..DemoMixtureSpec::default() };
    let model = Arc::new(spec.build()?);
    let schedule = NoiseSchedule::default();
    for kind in [CodecKind::Identity, CodecKind::Orthogonal, CodecKind::Saturating] {
        let cs = CodecSpec { kind, gain: 1.0, seed: 0 };
        let codec = cs.build(spec.dims())?;
        let lat = latent_model(codec.as_ref(), &cs, &model)?;
        let den = ExactDenoiser::new(lat.clone(), schedule.clone());
        let p = calibrate(&den, &lat, &schedule, codec.as_ref(), 300, 1)?;
        println!(
            "{:<10} a_bar = {:+.4}  b_bar = {:.4}  lambda_bar(1) = {:.3}  lambda_bar(T) = {:.3}",
            kind.to_string(),
            p.a_bar,
            p.b_bar,
            p.lambda_bar[0],
            p.lambda_bar[49]
        );
        if kind == CodecKind::Identity {
            let fine = guidance_scale_curve(Some(&p), &schedule, GuidanceMode::FinePixel)?;
            let uni = guidance_scale_curve(None, &schedule, GuidanceMode::Universal)?;
            let s_u = matched_universal_scale(&p, &schedule)?;
            println!("  t   fine   universal (s = {s_u:.2})");
            for t in [1, 10, 25, 40, 50] {
                println!("  {t:>2}  {:.3}  {:.3}", fine[t - 1], s_u * uni[t - 1]);
            }
            print!("{}", &p.to_csv()[..120]);
            println!("...");
        }
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> colorguide::Result<()> {
    run()
}
