use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};

use crate::colormap::{ImageDims, Quantizer};
use crate::error::{check_len, Error, Result};
use crate::oracle::{ExactDenoiser, MixtureModel};
use crate::schedule::NoiseSchedule;
use crate::tensor::{dot, norm, seeded_rng};

pub const DEFAULT_SEMANTIC_DIM: usize = 768;
pub const DEFAULT_TEMPERATURE: f64 = 0.05;

/// Seeded random-projection image embedder with unit-norm output.
///
/// `embed(x) = P (x - 0.5) / |P (x - 0.5)|` with `P` a Gaussian matrix drawn
/// from the seed. A flat mid-gray image has no direction; it maps to the
/// first basis vector.
#[derive(Debug, Clone)]
pub struct SemanticEmbedder {
    dims: ImageDims,
    dim: usize,
    seed: u64,
    projection: Arc<Vec<f64>>,
}

impl SemanticEmbedder {
    pub fn new(dims: ImageDims, dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 || dim > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("semantic dimension {dim} not in [1, 65535]")));
        }
        if dims.is_empty() {
            return Err(Error::InvalidArgument("empty image".into()));
        }
        let mut rng = seeded_rng(seed);
        let projection = (0..dim * dims.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        Ok(Self {
            dims,
            dim,
            seed,
            projection: Arc::new(projection),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn embed(&self, image: &[f64]) -> Result<Vec<f64>> {
        check_len(self.dims.len(), image.len())?;
        let centered: Vec<f64> = image.iter().map(|v| v - 0.5).collect();
        let mut e: Vec<f64> = self.projection.chunks_exact(image.len()).map(|row| dot(row, &centered)).collect();
        let n = norm(&e);
        if n > 0.0 && n.is_finite() {
            e.iter_mut().for_each(|v| *v /= n);
        } else {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[0] = 1.0;
        }
        Ok(e)
    }

    /// Three per-coordinate standard deviations of a unit vector in
    /// `dim` dimensions.
    pub fn clamp(&self) -> f64 {
        default_clamp(self.dim)
    }
}

pub fn default_clamp(dim: usize) -> f64 {
    3.0 / (dim as f64).sqrt()
}

/// Clamps to `[-clamp, clamp]` then quantizes uniformly to `bits` bits.
pub fn semantic_quantizer(clamp: f64, bits: u8) -> Quantizer {
    Quantizer::new(-clamp, clamp, bits)
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d = norm(a) * norm(b);
    if d == 0.0 {
        0.0
    } else {
        dot(a, b) / d
    }
}

/// A mixture whose component weights follow a semantic vector: component
/// `k` is up-weighted by `softmax(cos(sigma, e_k) / temperature)`, where
/// `e_k` embeds the component mean.
///
/// When every component is equally similar the weights are untouched, so
/// the conditional model is the unconditional one.
#[derive(Debug, Clone)]
pub struct ConditionalDenoiser {
    /// The model the denoiser works on (latent space for latent codecs).
    model: Arc<MixtureModel>,
    /// The pixel-space model, for realism scores.
    pixel: Arc<MixtureModel>,
    schedule: NoiseSchedule,
    embeddings: Vec<Vec<f64>>,
    temperature: f64,
}

impl ConditionalDenoiser {
    pub fn new(
        model: impl Into<Arc<MixtureModel>>,
        schedule: NoiseSchedule,
        embedder: &SemanticEmbedder,
        temperature: f64,
    ) -> Result<Self> {
        let model = model.into();
        check_len(embedder.dims().len(), model.dim())?;
        let embeddings = model
            .components()
            .iter()
            .map(|c| embedder.embed(&c.mean))
            .collect::<Result<_>>()?;
        Self::with_embeddings(model, schedule, embeddings, temperature)
    }

    /// Explicit per-component embeddings.
    pub fn with_embeddings(
        model: impl Into<Arc<MixtureModel>>,
        schedule: NoiseSchedule,
        embeddings: Vec<Vec<f64>>,
        temperature: f64,
    ) -> Result<Self> {
        let model = model.into();
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature}")));
        }
        check_len(model.components().len(), embeddings.len())?;
        Ok(Self {
            pixel: Arc::clone(&model),
            model,
            schedule,
            embeddings,
            temperature,
        })
    }

    /// Denoise in a latent space: `latent` must be the latent image of the
    /// pixel model, component for component.
    pub fn in_latent_space(mut self, latent: impl Into<Arc<MixtureModel>>) -> Result<Self> {
        let latent = latent.into();
        check_len(self.model.components().len(), latent.components().len())?;
        self.model = latent;
        Ok(self)
    }

    /// The unconditional model the denoiser works on.
    pub fn unconditional(&self) -> &Arc<MixtureModel> {
        &self.model
    }

    pub fn pixel_model(&self) -> &Arc<MixtureModel> {
        &self.pixel
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Normalized component weights given `sigma`.
    pub fn weights(&self, sigma: &[f64]) -> Result<Vec<f64>> {
        for e in &self.embeddings {
            check_len(e.len(), sigma.len())?;
        }
        let logits: Vec<f64> = self
            .model
            .components()
            .iter()
            .zip(&self.embeddings)
            .map(|(c, e)| c.weight.ln() + cosine(sigma, e) / self.temperature)
            .collect();
        let lse = crate::tensor::log_sum_exp(&logits);
        Ok(logits.iter().map(|l| (l - lse).exp()).collect())
    }

    pub fn conditional_model(&self, sigma: &[f64]) -> Result<MixtureModel> {
        self.model.reweighted(&self.weights(sigma)?)
    }

    /// The exact denoiser of the conditional model.
    pub fn denoiser(&self, sigma: &[f64]) -> Result<ExactDenoiser> {
        Ok(ExactDenoiser::new(self.conditional_model(sigma)?, self.schedule.clone()))
    }
}
