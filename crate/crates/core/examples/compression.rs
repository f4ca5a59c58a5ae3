// Compress an image to a semantic vector plus a color map, write the
// stream, and decode it by guided sampling of the conditioned model.

use std::sync::Arc;

use colorguide::calibration::{estimate_lambda, CalibrationProfile};
use colorguide::codec::{
    evaluate_pair, read_stream, write_metrics_csv, CodecConfig, ConditionalDenoiser, DecodeOptions, Decoder, Encoder,
    DEFAULT_TEMPERATURE,
};
use colorguide::guidance::GuidanceMode;
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

    let config = CodecConfig { m: 4, ..CodecConfig::default() };
    let enc = Encoder::new(spec.dims(), config)?;
    let cond = ConditionalDenoiser::new(Arc::clone(&model), schedule, enc.embedder(), DEFAULT_TEMPERATURE)?;
    let codec = IdentityCodec::new(spec.dims());
    let dec = Decoder::new(&cond, &codec, &profile)?;

    let image = model.sample(&mut seeded_rng(5));
    let bytes = enc.encode_to_bytes(&image)?;
    let stream = read_stream(&bytes)?;
    println!("{} bytes on disk, payload {} bits (semantic {} + color {})", bytes.len(), stream.payload_bits(), stream.d_s(), stream.color.rate_bits());

    let mut rows = Vec::new();
    for mode in [GuidanceMode::FinePixel, GuidanceMode::Universal, GuidanceMode::None] {
        let out = dec.decode(&stream, &DecodeOptions { mode, ..DecodeOptions::default() }, 1)?;
        let mut r = evaluate_pair(&image, &out.image, enc.operator(), enc.embedder(), &model)?;
        (r.id, r.mode, r.b_c, r.b_s, r.rate_bits, r.seed) = ("img5".into(), mode.to_string(), config.b_c, config.b_s, stream.payload_bits(), 1);
        rows.push(r);
    }
    write_metrics_csv(&rows, std::io::stdout())?;
    Ok(())
}

#[allow(dead_code)]
fn main() -> colorguide::Result<()> {
    run()
}
