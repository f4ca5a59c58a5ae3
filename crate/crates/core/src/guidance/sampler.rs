use serde::{Deserialize, Serialize};

use crate::calibration::{matched_universal_scale, CalibrationProfile};
use crate::colormap::{ColorMap, ColorMapOperator};
use crate::error::{check_len, Error, Result};
use crate::guidance::{GuidanceMode, GuidanceTerms};
use crate::latentspace::LatentCodec;
use crate::oracle::{Denoiser, MixtureModel};
use crate::schedule::{NoiseSchedule, Sample};
use crate::tensor::{keyed_rng, norm, standard_normal_vec};

pub const DEFAULT_INIT_FRACTION: f64 = 0.55;

/// RNG stream keys within a sample's seed.
const START_NOISE: u64 = 0;
const INIT_NOISE: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    pub mode: GuidanceMode,
    /// Required by every mode except `none`; when present with `none`, the
    /// result still reports the color error against it.
    #[serde(skip)]
    pub target: Option<ColorMap>,
    /// Extra multiplier on the gradient terms.
    pub scale: f64,
    /// `tau / T` for initialized diffusion.
    pub init_fraction: f64,
    #[serde(skip)]
    pub profile: Option<CalibrationProfile>,
    /// `s` of universal guidance. When absent it is matched to the fine
    /// scale curve of `profile`.
    pub universal_scale: Option<f64>,
    /// Treat the noise prediction as constant when differentiating.
    pub frozen_denoiser: bool,
    pub record_trajectory: bool,
}

impl GuidanceConfig {
    pub fn new(mode: GuidanceMode) -> Self {
        Self {
            mode,
            target: None,
            scale: 1.0,
            init_fraction: DEFAULT_INIT_FRACTION,
            profile: None,
            universal_scale: None,
            frozen_denoiser: false,
            record_trajectory: false,
        }
    }

    pub fn with_target(mut self, target: ColorMap) -> Self {
        self.target = Some(target);
        self
    }

    pub fn with_profile(mut self, profile: CalibrationProfile) -> Self {
        self.profile = Some(profile);
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_universal_scale(mut self, s: f64) -> Self {
        self.universal_scale = Some(s);
        self
    }

    pub fn with_init_fraction(mut self, f: f64) -> Self {
        self.init_fraction = f;
        self
    }

    pub fn with_frozen_denoiser(mut self, frozen: bool) -> Self {
        self.frozen_denoiser = frozen;
        self
    }

    pub fn with_trajectory(mut self, record: bool) -> Self {
        self.record_trajectory = record;
        self
    }

    pub fn validate(&self, codec: &dyn LatentCodec, schedule: &NoiseSchedule) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidArgument(format!("scale must be >= 0, got {}", self.scale)));
        }
        if self.mode != GuidanceMode::None && self.target.is_none() {
            return Err(Error::InvalidArgument(format!("mode '{}' needs a color target", self.mode)));
        }
        match self.mode {
            GuidanceMode::Enforced | GuidanceMode::FinePixel if !codec.is_identity() => {
                return Err(Error::IncompatibleCodec(format!(
                    "mode '{}' works in pixel space only, got the {} codec",
                    self.mode,
                    codec.kind()
                )));
            }
            GuidanceMode::Initialized if !(self.init_fraction > 0.0 && self.init_fraction <= 1.0) => {
                return Err(Error::InvalidArgument(format!(
                    "init fraction must lie in (0, 1], got {}",
                    self.init_fraction
                )));
            }
            _ => {}
        }
        if self.mode.is_fine() {
            self.profile.as_ref().ok_or(Error::MissingCalibration("profile"))?.check_schedule(schedule)?;
        }
        if self.mode == GuidanceMode::Universal {
            match (self.universal_scale, &self.profile) {
                (Some(s), _) if !(s >= 0.0) || !s.is_finite() => {
                    return Err(Error::InvalidArgument(format!("universal scale must be >= 0, got {s}")));
                }
                (None, None) => return Err(Error::MissingCalibration("universal_scale")),
                _ => {}
            }
        }
        Ok(())
    }

    fn resolved_universal_scale(&self, schedule: &NoiseSchedule) -> Result<f64> {
        match (self.universal_scale, &self.profile) {
            (Some(s), _) => Ok(s),
            (None, Some(p)) => matched_universal_scale(p, schedule),
            (None, None) => Err(Error::MissingCalibration("universal_scale")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GuidedSampleResult {
    pub image: Vec<f64>,
    pub latent: Vec<f64>,
    pub latent_trajectory: Option<Vec<(usize, Vec<f64>)>>,
    /// Against the target, when there is one.
    pub color_mse: Option<f64>,
    /// Under the realism model, when the sampler has one.
    pub realism_loglik: Option<f64>,
    /// `|G_t|` at `t = 1..=T` (index `t - 1`); zero where nothing was applied.
    pub per_step_guidance_norm: Vec<f64>,
    /// The factor the gradient was multiplied by at each step.
    pub per_step_scale: Vec<f64>,
    pub start_timestep: usize,
}

/// Replaces the low frequencies of `z0_hat` by those of the target.
pub fn apply_enforced(z0_hat: &[f64], c: &ColorMap, op: &ColorMapOperator) -> Result<Vec<f64>> {
    let target = op.lift(c)?;
    let own = op.project(z0_hat)?;
    Ok(z0_hat
        .iter()
        .zip(&own)
        .zip(&target)
        .map(|((x, o), t)| t + (x - o))
        .collect())
}

/// `round(fraction * T)`, kept within `[1, T]`.
pub fn initial_timestep(schedule: &NoiseSchedule, fraction: f64) -> usize {
    let t = (fraction * schedule.num_steps() as f64).round() as usize;
    t.clamp(1, schedule.num_steps())
}

/// `z_tau = sqrt(alpha_tau) E(lift(c)) + sqrt(1 - alpha_tau) eps`.
pub fn init_from_color(
    c: &ColorMap,
    op: &ColorMapOperator,
    codec: &dyn LatentCodec,
    schedule: &NoiseSchedule,
    tau: usize,
    seed: u64,
) -> Result<Sample> {
    if tau == 0 || tau > schedule.num_steps() {
        return Err(Error::TimestepOutOfRange {
            t: tau,
            min: 1,
            max: schedule.num_steps(),
        });
    }
    let z0 = codec.encode(&op.lift(c)?);
    let eps = standard_normal_vec(&mut keyed_rng(seed, INIT_NOISE, 0), z0.len());
    Ok(Sample {
        data: schedule.forward_noise(&z0, tau, &eps)?,
        timestep: tau,
    })
}

/// Guided deterministic DDIM in the codec's latent space.
pub struct Sampler<'a, D: Denoiser + ?Sized> {
    denoiser: &'a D,
    schedule: &'a NoiseSchedule,
    op: &'a ColorMapOperator,
    codec: &'a dyn LatentCodec,
    realism: Option<&'a MixtureModel>,
}

impl<'a, D: Denoiser + ?Sized> Sampler<'a, D> {
    pub fn new(
        denoiser: &'a D,
        schedule: &'a NoiseSchedule,
        op: &'a ColorMapOperator,
        codec: &'a dyn LatentCodec,
    ) -> Result<Self> {
        GuidanceTerms::new(denoiser, schedule, op, codec)?;
        Ok(Self {
            denoiser,
            schedule,
            op,
            codec,
            realism: None,
        })
    }

    /// Scores decoded images by their log-likelihood under `model`.
    pub fn with_realism(mut self, model: &'a MixtureModel) -> Self {
        self.realism = Some(model);
        self
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        self.schedule
    }

    /// Runs the full reverse process; the start is drawn from `seed`.
    pub fn sample(&self, config: &GuidanceConfig, seed: u64) -> Result<GuidedSampleResult> {
        config.validate(self.codec, self.schedule)?;
        let start = if config.mode == GuidanceMode::Initialized {
            let tau = initial_timestep(self.schedule, config.init_fraction);
            let target = config.target.as_ref().expect("validated");
            init_from_color(target, self.op, self.codec, self.schedule, tau, seed)?
        } else {
            let t = self.schedule.num_steps();
            Sample {
                data: standard_normal_vec(&mut keyed_rng(seed, START_NOISE, 0), self.codec.latent_dim()),
                timestep: t,
            }
        };
        self.sample_from(config, start, seed)
    }

    /// Runs the reverse process from an explicit starting point.
    pub fn sample_from(&self, config: &GuidanceConfig, start: Sample, seed: u64) -> Result<GuidedSampleResult> {
        config.validate(self.codec, self.schedule)?;
        check_len(self.codec.latent_dim(), start.data.len())?;
        if start.timestep > self.schedule.num_steps() {
            return Err(Error::TimestepOutOfRange {
                t: start.timestep,
                min: 0,
                max: self.schedule.num_steps(),
            });
        }
        let steps = self.schedule.num_steps();
        let terms = GuidanceTerms::new(self.denoiser, self.schedule, self.op, self.codec)?
            .with_frozen_denoiser(config.frozen_denoiser)
            .with_stream(seed);
        let universal = if config.mode == GuidanceMode::Universal {
            config.resolved_universal_scale(self.schedule)?
        } else {
            0.0
        };
        let mut norms = vec![0.0; steps];
        let mut scales = vec![0.0; steps];
        let mut trajectory = config.record_trajectory.then(Vec::new);
        let mut z = start.data;
        for t in (1..=start.timestep).rev() {
            if let Some(tr) = trajectory.as_mut() {
                tr.push((t, z.clone()));
            }
            let mut eps = self.denoiser.predict(&z, t, seed);
            match config.mode {
                GuidanceMode::Enforced => {
                    let target = config.target.as_ref().expect("validated");
                    let alpha = self.schedule.alpha(t);
                    let z0 = self.schedule.predict_z0(&z, t, &eps)?;
                    let fixed = apply_enforced(&z0, target, self.op)?;
                    let k = (1.0 - alpha).sqrt();
                    let new_eps: Vec<f64> = z
                        .iter()
                        .zip(&fixed)
                        .map(|(z, x)| (z - alpha.sqrt() * x) / k)
                        .collect();
                    norms[t - 1] = norm(&crate::tensor::sub(&new_eps, &eps));
                    eps = new_eps;
                }
                mode if mode.is_gradient() => {
                    let target = config.target.as_ref().expect("validated");
                    let (g, scale) =
                        terms.term_with_eps(mode, &z, t, &eps, target, config.profile.as_ref(), universal)?;
                    let s = config.scale;
                    scales[t - 1] = s * scale;
                    if s != 0.0 && scale != 0.0 {
                        norms[t - 1] = s * norm(&g);
                        for (e, g) in eps.iter_mut().zip(&g) {
                            *e += s * g;
                        }
                    }
                }
                _ => {}
            }
            z = self.schedule.ddim_step(&z, t, &eps)?;
        }
        if let Some(tr) = trajectory.as_mut() {
            tr.push((0, z.clone()));
        }
        let image = self.codec.decode(&z);
        let color_mse = match &config.target {
            Some(c) => Some(self.op.apply(&image)?.mse(c)?),
            None => None,
        };
        let realism_loglik = match self.realism {
            Some(m) => Some(m.log_likelihood(&image)?),
            None => None,
        };
        Ok(GuidedSampleResult {
            image,
            latent: z,
            latent_trajectory: trajectory,
            color_mse,
            realism_loglik,
            per_step_guidance_norm: norms,
            per_step_scale: scales,
            start_timestep: start.timestep,
        })
    }
}
