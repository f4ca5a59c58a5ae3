//! Calibration constants for fine guidance: the per-step prediction error
//! scale `lambda_bar_t` and the decoder noise response `(a_bar, b_bar)`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::guidance::GuidanceMode;
use crate::latentspace::LatentCodec;
use crate::oracle::{Denoiser, MixtureModel};
use crate::schedule::NoiseSchedule;
use crate::tensor::{keyed_rng, standard_normal_vec};

pub const MIN_LAMBDA_SAMPLES: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationProfile {
    /// `lambda_bar[t - 1]` for `t = 1..=T`.
    pub lambda_bar: Vec<f64>,
    pub a_bar: f64,
    pub b_bar: f64,
    pub seed: u64,
    pub sample_count: usize,
}

impl CalibrationProfile {
    pub fn new(lambda_bar: Vec<f64>, a_bar: f64, b_bar: f64) -> Result<Self> {
        let p = Self {
            lambda_bar,
            a_bar,
            b_bar,
            seed: 0,
            sample_count: 0,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_bar.is_empty() {
            return Err(Error::InvalidArgument("empty lambda profile".into()));
        }
        if let Some(l) = self.lambda_bar.iter().find(|l| !(**l >= 0.0) || !l.is_finite()) {
            return Err(Error::InvalidArgument(format!("lambda_bar must be finite and >= 0, got {l}")));
        }
        if !(self.b_bar > 0.0) || !self.b_bar.is_finite() {
            return Err(Error::InvalidArgument(format!("b_bar must be positive, got {}", self.b_bar)));
        }
        if !self.a_bar.is_finite() {
            return Err(Error::InvalidArgument("a_bar must be finite".into()));
        }
        Ok(())
    }

    pub fn num_steps(&self) -> usize {
        self.lambda_bar.len()
    }

    pub fn lambda(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.lambda_bar.len() {
            return Err(Error::TimestepOutOfRange {
                t,
                min: 1,
                max: self.lambda_bar.len(),
            });
        }
        Ok(self.lambda_bar[t - 1])
    }

    /// Indexed by timestep with a zero at `t = 0`; the layout
    /// [`PerturbedDenoiser`](crate::oracle::PerturbedDenoiser) expects.
    pub fn lambdas_by_timestep(&self) -> Vec<f64> {
        std::iter::once(0.0).chain(self.lambda_bar.iter().copied()).collect()
    }

    pub fn check_schedule(&self, schedule: &NoiseSchedule) -> Result<()> {
        if self.num_steps() != schedule.num_steps() {
            return Err(Error::InvalidArgument(format!(
                "profile covers {} steps but the schedule has {}",
                self.num_steps(),
                schedule.num_steps()
            )));
        }
        Ok(())
    }

    /// Plain-text form: `#`-prefixed header lines with the decoder response
    /// and provenance, then a `t,lambda_bar` table.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "# a_bar={}", self.a_bar).unwrap();
        writeln!(s, "# b_bar={}", self.b_bar).unwrap();
        writeln!(s, "# seed={}", self.seed).unwrap();
        writeln!(s, "# n={}", self.sample_count).unwrap();
        s.push_str("t,lambda_bar\n");
        for (i, l) in self.lambda_bar.iter().enumerate() {
            writeln!(s, "{},{}", i + 1, l).unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::InvalidArgument(format!("calibration profile: {msg}"));
        let (mut a, mut b, mut seed, mut n) = (None, None, 0u64, 0usize);
        let mut lambda = Vec::new();
        let mut header_seen = false;
        for (no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(kv) = line.strip_prefix('#') {
                let Some((k, v)) = kv.split_once('=') else { continue };
                let v = v.trim();
                let num = |v: &str| v.parse::<f64>().map_err(|e| bad(format!("line {}: {e}", no + 1)));
                match k.trim() {
                    "a_bar" => a = Some(num(v)?),
                    "b_bar" => b = Some(num(v)?),
                    "seed" => seed = v.parse().map_err(|e| bad(format!("line {}: {e}", no + 1)))?,
                    "n" => n = v.parse().map_err(|e| bad(format!("line {}: {e}", no + 1)))?,
                    _ => {}
                }
                continue;
            }
            if !header_seen {
                if line.replace(' ', "") != "t,lambda_bar" {
                    return Err(bad(format!("expected 't,lambda_bar' header, found '{line}'")));
                }
                header_seen = true;
                continue;
            }
            let (t, l) = line
                .split_once(',')
                .ok_or_else(|| bad(format!("line {}: expected two columns", no + 1)))?;
            let t: usize = t.trim().parse().map_err(|e| bad(format!("line {}: {e}", no + 1)))?;
            if t != lambda.len() + 1 {
                return Err(bad(format!("line {}: expected t = {}, found {t}", no + 1, lambda.len() + 1)));
            }
            lambda.push(l.trim().parse::<f64>().map_err(|e| bad(format!("line {}: {e}", no + 1)))?);
        }
        let p = Self {
            lambda_bar: lambda,
            a_bar: a.ok_or(Error::MissingCalibration("a_bar"))?,
            b_bar: b.ok_or(Error::MissingCalibration("b_bar"))?,
            seed,
            sample_count: n,
        };
        p.validate()?;
        Ok(p)
    }
}

/// RMS of `predict(z_t, t) - eps` over coordinates and samples, for every
/// `t = 1..=T`. Samples `z_0` are drawn from `model`, which must live in the
/// denoiser's space.
pub fn estimate_lambda<D: Denoiser + ?Sized>(
    denoiser: &D,
    model: &MixtureModel,
    schedule: &NoiseSchedule,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_samples < MIN_LAMBDA_SAMPLES {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_LAMBDA_SAMPLES} samples, got {n_samples}"
        )));
    }
    if denoiser.dim() != model.dim() {
        return Err(Error::ShapeMismatch {
            expected: denoiser.dim(),
            got: model.dim(),
        });
    }
    let steps = schedule.num_steps();
    let per_sample: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = keyed_rng(seed, i as u64, u64::MAX);
            let x0 = model.sample(&mut rng);
            (1..=steps)
                .map(|t| {
                    let eps = standard_normal_vec(&mut rng, x0.len());
                    let z = schedule.forward_noise(&x0, t, &eps).expect("shapes match");
                    let hat = denoiser.predict(&z, t, i as u64);
                    hat.iter().zip(&eps).map(|(a, b)| (a - b) * (a - b)).sum::<f64>()
                })
                .collect()
        })
        .collect();
    let mut sums = vec![0.0; steps];
    for row in &per_sample {
        for (s, v) in sums.iter_mut().zip(row) {
            *s += v;
        }
    }
    let count = (n_samples * model.dim()) as f64;
    Ok(sums.into_iter().map(|s| (s / count).sqrt()).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderResponse {
    pub a_bar: f64,
    pub b_bar: f64,
    /// Mean per-pixel shift at every grid point.
    pub shifts: Vec<f64>,
    /// Output standard deviation at every grid point.
    pub stds: Vec<f64>,
}

/// Fits `shift = a_bar * lambda` and `std = b_bar * lambda` (least squares
/// through the origin) from the decoder's reaction to latent noise
/// `z + lambda eps` around each of `latents`.
pub fn estimate_decoder_response(
    codec: &dyn LatentCodec,
    latents: &[Vec<f64>],
    lambda_grid: &[f64],
    n_noise: usize,
    seed: u64,
) -> Result<DecoderResponse> {
    if lambda_grid.len() < 3 {
        return Err(Error::InvalidArgument("decoder response needs at least 3 noise levels".into()));
    }
    if lambda_grid.iter().any(|l| !(*l > 0.0) || !l.is_finite()) {
        return Err(Error::InvalidArgument("noise levels must be positive".into()));
    }
    let mut sorted = lambda_grid.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("noise levels must be distinct".into()));
    }
    if latents.is_empty() || n_noise < 2 {
        return Err(Error::InvalidArgument("need latents and at least 2 noise draws".into()));
    }
    for z in latents {
        crate::error::check_len(codec.latent_dim(), z.len())?;
    }
    let pixels = codec.image_dims().len();
    let mut shifts = Vec::with_capacity(lambda_grid.len());
    let mut stds = Vec::with_capacity(lambda_grid.len());
    for (g, &lam) in lambda_grid.iter().enumerate() {
        // (sum of shifts, sum of per-pixel unbiased variances) per latent
        let stats: Vec<(f64, f64)> = latents
            .par_iter()
            .enumerate()
            .map(|(i, z)| {
                let base = codec.decode(z);
                let mut rng = keyed_rng(seed, i as u64, g as u64);
                let mut sum = vec![0.0; pixels];
                let mut sq = vec![0.0; pixels];
                for _ in 0..n_noise {
                    let noisy: Vec<f64> = standard_normal_vec(&mut rng, z.len())
                        .iter()
                        .zip(z)
                        .map(|(e, z)| z + lam * e)
                        .collect();
                    for (k, (x, b)) in codec.decode(&noisy).iter().zip(&base).enumerate() {
                        let d = x - b;
                        sum[k] += d;
                        sq[k] += d * d;
                    }
                }
                let n = n_noise as f64;
                let shift: f64 = sum.iter().sum::<f64>() / n;
                let var: f64 = sum
                    .iter()
                    .zip(&sq)
                    .map(|(s, q)| (q - s * s / n) / (n - 1.0))
                    .sum();
                (shift, var)
            })
            .collect();
        let denom = (latents.len() * pixels) as f64;
        shifts.push(stats.iter().map(|s| s.0).sum::<f64>() / denom);
        stds.push((stats.iter().map(|s| s.1).sum::<f64>() / denom).sqrt());
    }
    let ll: f64 = lambda_grid.iter().map(|l| l * l).sum();
    let fit = |ys: &[f64]| lambda_grid.iter().zip(ys).map(|(l, y)| l * y).sum::<f64>() / ll;
    Ok(DecoderResponse {
        a_bar: fit(&shifts),
        b_bar: fit(&stds),
        shifts,
        stds,
    })
}

pub const DEFAULT_LAMBDA_GRID: [f64; 4] = [0.025, 0.05, 0.1, 0.2];

/// Full calibration: `lambda_bar` from `n_samples` draws of the (latent)
/// data model, then the decoder response around encodings of up to 64 of
/// them.
pub fn calibrate<D: Denoiser + ?Sized>(
    denoiser: &D,
    latent_model: &MixtureModel,
    schedule: &NoiseSchedule,
    codec: &dyn LatentCodec,
    n_samples: usize,
    seed: u64,
) -> Result<CalibrationProfile> {
    let lambda_bar = estimate_lambda(denoiser, latent_model, schedule, n_samples, seed)?;
    let latents: Vec<Vec<f64>> = (0..n_samples.min(64))
        .map(|i| latent_model.sample(&mut keyed_rng(seed ^ 0x5eed, i as u64, 0)))
        .collect();
    let resp = estimate_decoder_response(codec, &latents, &DEFAULT_LAMBDA_GRID, 64, seed)?;
    Ok(CalibrationProfile {
        lambda_bar,
        a_bar: resp.a_bar,
        b_bar: resp.b_bar,
        seed,
        sample_count: n_samples,
    })
}

/// Gradient scale of `mode` at step `t`:
/// `sqrt(1 - alpha_t)` for universal guidance, `sqrt(alpha_t) / (2 lambda_bar_t)`
/// for fine pixel guidance and `sqrt(alpha_t) / (2 b_bar lambda_bar_t)` in
/// latent space.
pub fn guidance_scale(
    profile: Option<&CalibrationProfile>,
    schedule: &NoiseSchedule,
    mode: GuidanceMode,
    t: usize,
) -> Result<f64> {
    if t > schedule.num_steps() {
        return Err(Error::TimestepOutOfRange {
            t,
            min: 0,
            max: schedule.num_steps(),
        });
    }
    let alpha = schedule.alpha(t);
    match mode {
        GuidanceMode::Universal => Ok((1.0 - alpha).sqrt()),
        GuidanceMode::FinePixel | GuidanceMode::FineLatent => {
            let p = profile.ok_or(Error::MissingCalibration("profile"))?;
            let lam = p.lambda(t)?;
            if lam == 0.0 {
                return Err(Error::ZeroLambda(t));
            }
            let b = if mode == GuidanceMode::FineLatent { p.b_bar } else { 1.0 };
            Ok(alpha.sqrt() / (2.0 * b * lam))
        }
        other => Err(Error::InvalidArgument(format!("mode '{other}' has no gradient scale"))),
    }
}

/// [`guidance_scale`] for `t = 1..=T`.
pub fn guidance_scale_curve(
    profile: Option<&CalibrationProfile>,
    schedule: &NoiseSchedule,
    mode: GuidanceMode,
) -> Result<Vec<f64>> {
    if let Some(p) = profile {
        p.check_schedule(schedule)?;
    }
    (1..=schedule.num_steps())
        .map(|t| guidance_scale(profile, schedule, mode, t))
        .collect()
}

/// Universal-guidance weight whose mean scale over the trajectory equals the
/// mean fine-guidance scale.
pub fn matched_universal_scale(profile: &CalibrationProfile, schedule: &NoiseSchedule) -> Result<f64> {
    let fine = guidance_scale_curve(Some(profile), schedule, GuidanceMode::FinePixel)?;
    let uni = guidance_scale_curve(None, schedule, GuidanceMode::Universal)?;
    Ok(fine.iter().sum::<f64>() / uni.iter().sum::<f64>())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::colormap::ImageDims;
    use crate::latentspace::{IdentityCodec, OrthogonalCodec, SaturatingCodec};
    use crate::oracle::{Component, Covariance, DemoMixtureSpec, ExactDenoiser, PerturbedDenoiser};
    use crate::tensor::seeded_rng;

    fn gaussian(d: usize, var: f64) -> MixtureModel {
        MixtureModel::new(vec![Component {
            weight: 1.0,
            mean: vec![0.5; d],
            cov: Covariance::Isotropic(var),
        }])
        .unwrap()
    }

    fn within(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs()
    }

    #[test]
    fn single_gaussian_lambda_matches_closed_form() {
        let s = NoiseSchedule::default();
        let var = 0.05;
        let model = gaussian(4, var);
        let den = ExactDenoiser::new(model.clone(), s.clone());
        let lam = estimate_lambda(&den, &model, &s, 10_000, 3).unwrap();
        for t in 1..=50 {
            let a = s.alpha(t);
            let want = (a * var / (a * var + 1.0 - a)).sqrt();
            assert!(within(lam[t - 1], want, 0.02), "t={t}: {} vs {want}", lam[t - 1]);
        }
    }

    #[test]
    fn injected_noise_adds_in_quadrature() {
        let s = NoiseSchedule::default();
        let var = 0.05;
        let model = gaussian(4, var);
        let base = ExactDenoiser::new(model.clone(), s.clone());
        let pert = PerturbedDenoiser::new(&base, vec![0.3; 51], 9).unwrap();
        let lam = estimate_lambda(&pert, &model, &s, 10_000, 4).unwrap();
        for t in 1..=50 {
            let a = s.alpha(t);
            let want = (a * var / (a * var + 1.0 - a) + 0.09).sqrt();
            assert!(within(lam[t - 1], want, 0.05));
        }
    }

    #[test]
    fn doubling_injected_noise_quadruples_excess_variance() {
        let s = NoiseSchedule::cosine(10, 1e-4).unwrap();
        let model = gaussian(8, 0.05);
        let base = ExactDenoiser::new(model.clone(), s.clone());
        let clean = estimate_lambda(&base, &model, &s, 4000, 1).unwrap();
        let p1 = PerturbedDenoiser::new(&base, vec![0.2; 11], 2).unwrap();
        let p2 = PerturbedDenoiser::new(&base, vec![0.4; 11], 2).unwrap();
        let l1 = estimate_lambda(&p1, &model, &s, 4000, 1).unwrap();
        let l2 = estimate_lambda(&p2, &model, &s, 4000, 1).unwrap();
        for t in 0..10 {
            let e1 = l1[t] * l1[t] - clean[t] * clean[t];
            let e2 = l2[t] * l2[t] - clean[t] * clean[t];
            assert!(within(e2 / e1, 4.0, 0.05), "{}", e2 / e1);
        }
    }

    #[test]
    fn spread_mixture_is_uninformative_at_the_last_step() {
        // Components spread far wider than 1/sqrt(alpha_T): at t = T the
        // noisy sample tells nothing and the error RMS approaches 1.
        let s = NoiseSchedule::default();
        let mut rng = seeded_rng(6);
        let comps = (0..4)
            .map(|_| Component {
                weight: 0.25,
                mean: standard_normal_vec(&mut rng, 3).into_iter().map(|v| 1000.0 * v).collect(),
                cov: Covariance::Isotropic(1e6),
            })
            .collect();
        let model = MixtureModel::new(comps).unwrap();
        let den = ExactDenoiser::new(model.clone(), s.clone());
        let lam = estimate_lambda(&den, &model, &s, 4000, 2).unwrap();
        assert!(within(lam[49], 1.0, 0.1), "{}", lam[49]);
    }

    #[test]
    fn estimator_is_seeded_and_checks_inputs() {
        let s = NoiseSchedule::cosine(5, 1e-3).unwrap();
        let model = gaussian(3, 0.1);
        let den = ExactDenoiser::new(model.clone(), s.clone());
        assert_eq!(
            estimate_lambda(&den, &model, &s, 200, 5).unwrap(),
            estimate_lambda(&den, &model, &s, 200, 5).unwrap()
        );
        assert!(estimate_lambda(&den, &model, &s, 99, 5).is_err());
        assert!(estimate_lambda(&den, &gaussian(2, 0.1), &s, 200, 5).is_err());
    }

    fn latents(d: usize, n: usize) -> Vec<Vec<f64>> {
        let mut rng = seeded_rng(1);
        (0..n)
            .map(|_| standard_normal_vec(&mut rng, d).into_iter().map(|v| 0.5 + 0.2 * v).collect())
            .collect()
    }

    #[test]
    fn identity_and_orthogonal_decoders_have_unit_response() {
        let dims = ImageDims::new(4, 4, 3);
        let z = latents(48, 64);
        for codec in [
            Box::new(IdentityCodec::new(dims)) as Box<dyn LatentCodec>,
            Box::new(OrthogonalCodec::new(dims, 3)),
        ] {
            let r = estimate_decoder_response(codec.as_ref(), &z, &DEFAULT_LAMBDA_GRID, 64, 7).unwrap();
            assert!(r.a_bar.abs() < 0.02, "{}", r.a_bar);
            assert!((r.b_bar - 1.0).abs() < 0.02, "{}", r.b_bar);
        }
    }

    #[derive(Debug)]
    struct Doubling(ImageDims);

    impl LatentCodec for Doubling {
        fn kind(&self) -> crate::latentspace::CodecKind {
            crate::latentspace::CodecKind::Orthogonal
        }
        fn image_dims(&self) -> ImageDims {
            self.0
        }
        fn latent_dim(&self) -> usize {
            self.0.len()
        }
        fn encode(&self, x: &[f64]) -> Vec<f64> {
            x.iter().map(|v| v / 2.0).collect()
        }
        fn decode(&self, z: &[f64]) -> Vec<f64> {
            z.iter().map(|v| v * 2.0).collect()
        }
        fn decode_vjp(&self, _z: &[f64], v: &[f64]) -> Vec<f64> {
            v.iter().map(|v| v * 2.0).collect()
        }
        fn round_trip_tolerance(&self) -> f64 {
            0.0
        }
    }

    #[test]
    fn scaled_decoder_doubles_the_gain() {
        let dims = ImageDims::new(4, 4, 1);
        let r = estimate_decoder_response(&Doubling(dims), &latents(16, 64), &DEFAULT_LAMBDA_GRID, 64, 2).unwrap();
        assert!(r.a_bar.abs() < 0.04);
        assert!((r.b_bar - 2.0).abs() < 0.04, "{}", r.b_bar);
    }

    #[test]
    fn saturation_attenuates_noise_and_vanishes_with_large_gain() {
        let dims = ImageDims::new(4, 4, 1);
        let tight = SaturatingCodec::new(dims, 1.0, 3).unwrap();
        // encodings of positive data, where the contraction biases outputs down
        let z: Vec<Vec<f64>> = latents(16, 64).iter().map(|x| tight.encode(x)).collect();
        let r = estimate_decoder_response(&tight, &z, &DEFAULT_LAMBDA_GRID, 64, 1).unwrap();
        assert!(r.b_bar < 1.0);
        assert!(r.a_bar < -1e-3, "{}", r.a_bar);
        let loose = SaturatingCodec::new(dims, 1e4, 3).unwrap();
        let r = estimate_decoder_response(&loose, &z, &DEFAULT_LAMBDA_GRID, 64, 1).unwrap();
        assert!(r.a_bar.abs() < 0.02 && (r.b_bar - 1.0).abs() < 0.02);
    }

    #[test]
    fn decoder_response_rejects_degenerate_grids() {
        let c = IdentityCodec::new(ImageDims::new(2, 2, 1));
        let z = latents(4, 4);
        assert!(estimate_decoder_response(&c, &z, &[0.1, 0.2], 8, 0).is_err());
        assert!(estimate_decoder_response(&c, &z, &[0.1, 0.1, 0.2], 8, 0).is_err());
        assert!(estimate_decoder_response(&c, &z, &[0.1, -0.1, 0.2], 8, 0).is_err());
        assert!(estimate_decoder_response(&c, &z, &[0.1, 0.2, 0.3], 1, 0).is_err());
    }

    #[test]
    fn scale_curves() {
        let s = NoiseSchedule::default();
        let p = CalibrationProfile::new((1..=50).map(|t| 0.01 * t as f64).collect(), 0.0, 1.0).unwrap();
        let uni = guidance_scale_curve(None, &s, GuidanceMode::Universal).unwrap();
        let fine = guidance_scale_curve(Some(&p), &s, GuidanceMode::FinePixel).unwrap();
        let lat = guidance_scale_curve(Some(&p), &s, GuidanceMode::FineLatent).unwrap();
        assert_eq!(fine, lat);
        assert_eq!(guidance_scale(None, &s, GuidanceMode::Universal, 0).unwrap(), 0.0);
        assert!(uni.windows(2).all(|w| w[0] < w[1]));
        assert!(fine.iter().all(|v| *v > 0.0));
        let p2 = CalibrationProfile { b_bar: 2.0, ..p.clone() };
        let lat2 = guidance_scale_curve(Some(&p2), &s, GuidanceMode::FineLatent).unwrap();
        for (a, b) in lat2.iter().zip(&fine) {
            assert_eq!(*a, b / 2.0);
        }
        assert!(matches!(
            guidance_scale_curve(None, &s, GuidanceMode::FinePixel),
            Err(Error::MissingCalibration(_))
        ));
        let mut zero = p.clone();
        zero.lambda_bar[9] = 0.0;
        assert_eq!(
            guidance_scale_curve(Some(&zero), &s, GuidanceMode::FinePixel),
            Err(Error::ZeroLambda(10))
        );
        let k = matched_universal_scale(&p, &s).unwrap();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        assert!((k * mean(&uni) - mean(&fine)).abs() < 1e-12 * mean(&fine));
    }

    #[test]
    fn calibrated_demo_curve_dominates_universal_late() {
        let spec = DemoMixtureSpec {
            height: 8,
            width: 8,
            ..DemoMixtureSpec::default()
        };
        let model = spec.build().unwrap();
        let s = NoiseSchedule::default();
        let den = ExactDenoiser::new(model.clone(), s.clone());
        let codec = IdentityCodec::new(spec.dims());
        let p = calibrate(&den, &model, &s, &codec, 500, 1).unwrap();
        let fine = guidance_scale(Some(&p), &s, GuidanceMode::FinePixel, 1).unwrap();
        let uni = guidance_scale(None, &s, GuidanceMode::Universal, 1).unwrap();
        assert!(fine >= 10.0 * uni);
        assert!(p.a_bar.abs() < 0.02 && (p.b_bar - 1.0).abs() < 0.02);
    }

    #[test]
    fn profile_csv_round_trip() {
        let p = CalibrationProfile {
            lambda_bar: vec![0.1, 0.123456789012345, 1.0 / 3.0],
            a_bar: -0.0123,
            b_bar: 0.97,
            seed: 42,
            sample_count: 10_000,
        };
        let text = p.to_csv();
        assert!(text.contains("# a_bar=-0.0123"));
        assert_eq!(CalibrationProfile::from_csv(&text).unwrap(), p);
        assert!(CalibrationProfile::from_csv("t,lambda_bar\n1,0.1\n").is_err());
        assert!(CalibrationProfile::from_csv("# a_bar=0\n# b_bar=1\nt,lambda_bar\n2,0.1\n").is_err());
        assert!(CalibrationProfile::from_csv("# a_bar=0\n# b_bar=0\nt,lambda_bar\n1,0.1\n").is_err());
        assert!(CalibrationProfile::new(vec![-0.1], 0.0, 1.0).is_err());
    }
}
