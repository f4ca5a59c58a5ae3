use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::{calibrate, matched_universal_scale, CalibrationProfile};
use crate::colormap::{ColorMap, ColorMapOperator};
use crate::error::Result;
use crate::guidance::{GuidanceConfig, GuidanceMode, Sampler};
use crate::latentspace::IdentityCodec;
use crate::oracle::{ExactDenoiser, MixtureModel};
use crate::schedule::NoiseSchedule;
use crate::tensor::keyed_rng;

const REFERENCE_DRAW: u64 = 2;

/// Pixel-space comparison of color-control methods on a known mixture.
///
/// Run `seed` draws a reference image from the mixture, takes its color map
/// as the target and generates one sample with the given mode.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: Arc<MixtureModel>,
    pub schedule: NoiseSchedule,
    pub op: ColorMapOperator,
    pub profile: CalibrationProfile,
    pub universal_scale: f64,
    pub init_fraction: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub seed: u64,
    pub mode: GuidanceMode,
    pub color_mse: f64,
    pub loglik: f64,
    #[serde(skip)]
    pub image: Vec<f64>,
    #[serde(skip)]
    pub reference: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub mode: GuidanceMode,
    pub n: usize,
    pub color_mse_mean: f64,
    pub color_mse_std: f64,
    pub color_mse_se: f64,
    pub loglik_mean: f64,
    pub loglik_std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonSummary {
    pub modes: Vec<ModeSummary>,
    pub universal_scale: f64,
}

/// Mean and sample standard deviation (0 for a single value).
fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl ModeSummary {
    pub fn from_records(mode: GuidanceMode, records: &[RunRecord]) -> Self {
        let mse: Vec<f64> = records.iter().map(|r| r.color_mse).collect();
        let ll: Vec<f64> = records.iter().map(|r| r.loglik).collect();
        let (m, s) = mean_sd(&mse);
        let (lm, ls) = mean_sd(&ll);
        Self {
            mode,
            n: records.len(),
            color_mse_mean: m,
            color_mse_std: s,
            color_mse_se: s / (records.len() as f64).sqrt(),
            loglik_mean: lm,
            loglik_std: ls,
        }
    }
}

impl Experiment {
    pub fn new(
        model: impl Into<Arc<MixtureModel>>,
        schedule: NoiseSchedule,
        op: ColorMapOperator,
        profile: CalibrationProfile,
    ) -> Result<Self> {
        let universal_scale = matched_universal_scale(&profile, &schedule)?;
        Ok(Self {
            model: model.into(),
            schedule,
            op,
            profile,
            universal_scale,
            init_fraction: super::DEFAULT_INIT_FRACTION,
            scale: 1.0,
        })
    }

    /// Calibrates the exact denoiser with `n_calibration` samples first.
    pub fn calibrated(
        model: impl Into<Arc<MixtureModel>>,
        schedule: NoiseSchedule,
        op: ColorMapOperator,
        n_calibration: usize,
        seed: u64,
    ) -> Result<Self> {
        let model = model.into();
        let den = ExactDenoiser::new(Arc::clone(&model), schedule.clone());
        let codec = IdentityCodec::new(op.dims());
        let profile = calibrate(&den, &model, &schedule, &codec, n_calibration, seed)?;
        Self::new(model, schedule, op, profile)
    }

    /// Same model and calibration, different color-map resolution.
    pub fn with_operator(&self, op: ColorMapOperator) -> Self {
        Self { op, ..self.clone() }
    }

    pub fn reference(&self, seed: u64) -> Vec<f64> {
        self.model.sample(&mut keyed_rng(seed, REFERENCE_DRAW, 0))
    }

    pub fn target(&self, seed: u64) -> Result<ColorMap> {
        self.op.apply(&self.reference(seed))
    }

    pub fn config(&self, mode: GuidanceMode) -> GuidanceConfig {
        GuidanceConfig::new(mode)
            .with_profile(self.profile.clone())
            .with_universal_scale(self.universal_scale)
            .with_init_fraction(self.init_fraction)
            .with_scale(self.scale)
    }

    pub fn run_one(&self, mode: GuidanceMode, seed: u64) -> Result<RunRecord> {
        let den = ExactDenoiser::new(Arc::clone(&self.model), self.schedule.clone());
        let codec = IdentityCodec::new(self.op.dims());
        let sampler = Sampler::new(&den, &self.schedule, &self.op, &codec)?.with_realism(&self.model);
        let reference = self.reference(seed);
        let config = self.config(mode).with_target(self.op.apply(&reference)?);
        let res = sampler.sample(&config, seed)?;
        Ok(RunRecord {
            seed,
            mode,
            color_mse: res.color_mse.expect("target set"),
            loglik: res.realism_loglik.expect("realism model set"),
            image: res.image,
            reference,
        })
    }

    /// One run per seed, in parallel; results keep the order of `seeds`.
    pub fn run(&self, mode: GuidanceMode, seeds: &[u64]) -> Result<Vec<RunRecord>> {
        seeds.par_iter().map(|&s| self.run_one(mode, s)).collect()
    }

    pub fn compare(&self, modes: &[GuidanceMode], seeds: &[u64]) -> Result<(ComparisonSummary, Vec<Vec<RunRecord>>)> {
        let mut all = Vec::with_capacity(modes.len());
        let mut summaries = Vec::with_capacity(modes.len());
        for &mode in modes {
            let records = self.run(mode, seeds)?;
            summaries.push(ModeSummary::from_records(mode, &records));
            all.push(records);
        }
        Ok((
            ComparisonSummary {
                modes: summaries,
                universal_scale: self.universal_scale,
            },
            all,
        ))
    }
}
