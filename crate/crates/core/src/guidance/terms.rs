use crate::calibration::{guidance_scale, CalibrationProfile};
use crate::colormap::{ColorMap, ColorMapOperator};
use crate::error::{check_len, Error, Result};
use crate::guidance::GuidanceMode;
use crate::latentspace::LatentCodec;
use crate::oracle::Denoiser;
use crate::schedule::NoiseSchedule;

/// The gradient-based correction terms at a single `(z_t, t)`.
///
/// Every term is a scaled gradient of the color loss
/// `|c - A D(z0_hat(z_t)) - offset|^2`, where `z0_hat` is the denoiser's
/// predicted signal. The gradient flows through the denoiser Jacobian unless
/// `frozen_denoiser` is set, in which case the noise prediction is treated as
/// a constant.
pub struct GuidanceTerms<'a, D: Denoiser + ?Sized> {
    pub denoiser: &'a D,
    pub schedule: &'a NoiseSchedule,
    pub op: &'a ColorMapOperator,
    pub codec: &'a dyn LatentCodec,
    pub frozen_denoiser: bool,
    /// Sample id handed to the denoiser.
    pub stream: u64,
}

impl<'a, D: Denoiser + ?Sized> GuidanceTerms<'a, D> {
    pub fn new(
        denoiser: &'a D,
        schedule: &'a NoiseSchedule,
        op: &'a ColorMapOperator,
        codec: &'a dyn LatentCodec,
    ) -> Result<Self> {
        check_len(codec.latent_dim(), denoiser.dim())?;
        if codec.image_dims() != op.dims() {
            return Err(Error::IncompatibleCodec(format!(
                "codec decodes {:?} but the color operator expects {:?}",
                codec.image_dims(),
                op.dims()
            )));
        }
        Ok(Self {
            denoiser,
            schedule,
            op,
            codec,
            frozen_denoiser: false,
            stream: 0,
        })
    }

    pub fn with_frozen_denoiser(mut self, frozen: bool) -> Self {
        self.frozen_denoiser = frozen;
        self
    }

    pub fn with_stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.schedule.num_steps() {
            return Err(Error::TimestepOutOfRange {
                t,
                min: 1,
                max: self.schedule.num_steps(),
            });
        }
        Ok(())
    }

    fn check_inputs(&self, z_t: &[f64], t: usize, c: &ColorMap) -> Result<()> {
        self.check_t(t)?;
        check_len(self.denoiser.dim(), z_t.len())?;
        if c.m != self.op.m() || c.channels != self.op.dims().channels {
            return Err(Error::InvalidArgument(format!(
                "target color map is {}x{}x{}, operator produces {}x{}x{}",
                c.m,
                c.m,
                c.channels,
                self.op.m(),
                self.op.m(),
                self.op.dims().channels
            )));
        }
        Ok(())
    }

    /// `A D(z0_hat)` for a given noise prediction.
    pub fn predicted_color_with_eps(&self, z_t: &[f64], t: usize, eps: &[f64]) -> Result<ColorMap> {
        let z0 = self.schedule.predict_z0(z_t, t, eps)?;
        self.op.apply(&self.codec.decode(&z0))
    }

    pub fn predicted_color(&self, z_t: &[f64], t: usize) -> Result<ColorMap> {
        self.check_t(t)?;
        let eps = self.denoiser.predict(z_t, t, self.stream);
        self.predicted_color_with_eps(z_t, t, &eps)
    }

    /// Expected color shift a latent decoder adds at step `t`:
    /// `a_bar lambda_bar_t sqrt(1 - alpha_t) / sqrt(alpha_t) * A 1`.
    pub fn latent_offset(&self, profile: &CalibrationProfile, t: usize) -> Result<ColorMap> {
        self.check_t(t)?;
        let alpha = self.schedule.alpha(t);
        let k = profile.a_bar * profile.lambda(t)? * (1.0 - alpha).sqrt() / alpha.sqrt();
        let mut ones = self.op.ones_response();
        ones.coeffs.iter_mut().for_each(|v| *v *= k);
        Ok(ones)
    }

    fn residual(&self, predicted: &ColorMap, c: &ColorMap, offset: Option<&ColorMap>) -> ColorMap {
        let mut r = c.clone();
        match offset {
            Some(off) => {
                for ((r, p), o) in r.coeffs.iter_mut().zip(&predicted.coeffs).zip(&off.coeffs) {
                    *r = *r - p - o;
                }
            }
            None => {
                for (r, p) in r.coeffs.iter_mut().zip(&predicted.coeffs) {
                    *r -= p;
                }
            }
        }
        r
    }

    /// `|c - A D(z0_hat) - offset|^2`.
    pub fn color_loss(&self, z_t: &[f64], t: usize, c: &ColorMap, offset: Option<&ColorMap>) -> Result<f64> {
        self.check_inputs(z_t, t, c)?;
        let eps = self.denoiser.predict(z_t, t, self.stream);
        let pred = self.predicted_color_with_eps(z_t, t, &eps)?;
        Ok(crate::tensor::norm_sq(&self.residual(&pred, c, offset).coeffs))
    }

    /// Gradient of [`color_loss`](Self::color_loss) with respect to `z_t`,
    /// given the denoiser output `eps` at `(z_t, t)`.
    pub fn color_loss_gradient_with_eps(
        &self,
        z_t: &[f64],
        t: usize,
        eps: &[f64],
        c: &ColorMap,
        offset: Option<&ColorMap>,
    ) -> Result<Vec<f64>> {
        self.check_inputs(z_t, t, c)?;
        let alpha = self.schedule.alpha(t);
        let z0 = self.schedule.predict_z0(z_t, t, eps)?;
        let pred = self.op.apply(&self.codec.decode(&z0))?;
        let r = self.residual(&pred, c, offset);
        let g_img: Vec<f64> = self.op.lift(&r)?.into_iter().map(|v| -2.0 * v).collect();
        let g = self.codec.decode_vjp(&z0, &g_img);
        let inv = 1.0 / alpha.sqrt();
        if self.frozen_denoiser {
            return Ok(g.into_iter().map(|v| v * inv).collect());
        }
        let k = (1.0 - alpha).sqrt();
        let jg = self.denoiser.vjp(z_t, t, &g);
        Ok(g.iter().zip(&jg).map(|(g, j)| (g - k * j) * inv).collect())
    }

    pub fn color_loss_gradient(
        &self,
        z_t: &[f64],
        t: usize,
        c: &ColorMap,
        offset: Option<&ColorMap>,
    ) -> Result<Vec<f64>> {
        self.check_inputs(z_t, t, c)?;
        let eps = self.denoiser.predict(z_t, t, self.stream);
        self.color_loss_gradient_with_eps(z_t, t, &eps, c, offset)
    }

    fn require_pixel_space(&self) -> Result<()> {
        if !self.codec.is_identity() {
            return Err(Error::IncompatibleCodec(format!(
                "pixel-space guidance needs the identity codec, got {}",
                self.codec.kind()
            )));
        }
        Ok(())
    }

    /// Scale and offset of a gradient term; `universal_weight` is the `s` of
    /// universal guidance.
    fn weighting(
        &self,
        mode: GuidanceMode,
        t: usize,
        profile: Option<&CalibrationProfile>,
        universal_weight: f64,
    ) -> Result<(f64, Option<ColorMap>)> {
        match mode {
            GuidanceMode::FinePixel => {
                self.require_pixel_space()?;
                Ok((guidance_scale(profile, self.schedule, mode, t)?, None))
            }
            GuidanceMode::FineLatent => {
                let p = profile.ok_or(Error::MissingCalibration("profile"))?;
                let scale = guidance_scale(Some(p), self.schedule, mode, t)?;
                Ok((scale, Some(self.latent_offset(p, t)?)))
            }
            GuidanceMode::Universal => Ok((
                universal_weight * guidance_scale(None, self.schedule, mode, t)?,
                None,
            )),
            other => Err(Error::InvalidArgument(format!("mode '{other}' has no gradient term"))),
        }
    }

    /// The correction `G` added to the noise prediction, and the scale it
    /// was built with.
    pub(crate) fn term_with_eps(
        &self,
        mode: GuidanceMode,
        z_t: &[f64],
        t: usize,
        eps: &[f64],
        c: &ColorMap,
        profile: Option<&CalibrationProfile>,
        universal_weight: f64,
    ) -> Result<(Vec<f64>, f64)> {
        self.check_inputs(z_t, t, c)?;
        let (scale, offset) = self.weighting(mode, t, profile, universal_weight)?;
        let grad = self.color_loss_gradient_with_eps(z_t, t, eps, c, offset.as_ref())?;
        Ok((grad.into_iter().map(|g| scale * g).collect(), scale))
    }

    fn term(
        &self,
        mode: GuidanceMode,
        z_t: &[f64],
        t: usize,
        c: &ColorMap,
        profile: Option<&CalibrationProfile>,
        universal_weight: f64,
    ) -> Result<Vec<f64>> {
        self.check_inputs(z_t, t, c)?;
        let eps = self.denoiser.predict(z_t, t, self.stream);
        Ok(self.term_with_eps(mode, z_t, t, &eps, c, profile, universal_weight)?.0)
    }

    fn objective(
        &self,
        mode: GuidanceMode,
        z_t: &[f64],
        t: usize,
        c: &ColorMap,
        profile: Option<&CalibrationProfile>,
        universal_weight: f64,
    ) -> Result<f64> {
        self.check_inputs(z_t, t, c)?;
        let (scale, offset) = self.weighting(mode, t, profile, universal_weight)?;
        Ok(scale * self.color_loss(z_t, t, c, offset.as_ref())?)
    }

    /// `sqrt(alpha_t) / (2 lambda_bar_t) * grad |c - A z0_hat|^2`.
    pub fn fine_pixel(&self, z_t: &[f64], t: usize, c: &ColorMap, profile: &CalibrationProfile) -> Result<Vec<f64>> {
        self.term(GuidanceMode::FinePixel, z_t, t, c, Some(profile), 0.0)
    }

    /// `sqrt(alpha_t) / (2 b_bar lambda_bar_t) * grad |c - A D(z0_hat) - offset_t|^2`.
    pub fn fine_latent(&self, z_t: &[f64], t: usize, c: &ColorMap, profile: &CalibrationProfile) -> Result<Vec<f64>> {
        self.term(GuidanceMode::FineLatent, z_t, t, c, Some(profile), 0.0)
    }

    /// `s sqrt(1 - alpha_t) * grad |c - A D(z0_hat)|^2`.
    pub fn universal(&self, z_t: &[f64], t: usize, c: &ColorMap, s: f64) -> Result<Vec<f64>> {
        self.term(GuidanceMode::Universal, z_t, t, c, None, s)
    }

    /// The scalar whose gradient is [`fine_pixel`](Self::fine_pixel).
    pub fn fine_pixel_objective(&self, z_t: &[f64], t: usize, c: &ColorMap, profile: &CalibrationProfile) -> Result<f64> {
        self.objective(GuidanceMode::FinePixel, z_t, t, c, Some(profile), 0.0)
    }

    pub fn fine_latent_objective(&self, z_t: &[f64], t: usize, c: &ColorMap, profile: &CalibrationProfile) -> Result<f64> {
        self.objective(GuidanceMode::FineLatent, z_t, t, c, Some(profile), 0.0)
    }

    pub fn universal_objective(&self, z_t: &[f64], t: usize, c: &ColorMap, s: f64) -> Result<f64> {
        self.objective(GuidanceMode::Universal, z_t, t, c, None, s)
    }
}
