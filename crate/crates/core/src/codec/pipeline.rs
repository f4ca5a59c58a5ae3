use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationProfile;
use crate::codec::semantic::{semantic_quantizer, ConditionalDenoiser, SemanticEmbedder, DEFAULT_SEMANTIC_DIM};
use crate::codec::stream::EncodedImage;
use crate::colormap::{ColorMap, ColorMapOperator, ImageDims};
use crate::error::{check_len, Error, Result, StreamError};
use crate::guidance::{GuidanceConfig, GuidanceMode, GuidedSampleResult, Sampler};
use crate::latentspace::LatentCodec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CodecConfig {
    /// Color-map side.
    pub m: usize,
    /// Bits per color code.
    pub b_c: u8,
    /// Bits per semantic coordinate.
    pub b_s: u8,
    /// Semantic dimension.
    pub d_s: usize,
    /// Seed of the semantic projection.
    pub embed_seed: u64,
}

impl Default for CodecConfig {
    fn default() -> Self {
        Self {
            m: 16,
            b_c: 5,
            b_s: 1,
            d_s: DEFAULT_SEMANTIC_DIM,
            embed_seed: 0,
        }
    }
}

impl CodecConfig {
    pub fn validate(&self, dims: ImageDims) -> Result<()> {
        if dims.channels != 3 {
            return Err(Error::InvalidArgument(format!("codec needs RGB images, got {} channels", dims.channels)));
        }
        if dims.height > u16::MAX as usize || dims.width > u16::MAX as usize {
            return Err(Error::InvalidArgument("image too large for the stream header".into()));
        }
        if self.m == 0 || self.m > dims.height.min(dims.width) || self.m > u8::MAX as usize {
            return Err(Error::InvalidArgument(format!(
                "m = {} must lie in [1, {}]",
                self.m,
                dims.height.min(dims.width).min(255)
            )));
        }
        if !(1..=8).contains(&self.b_c) {
            return Err(Error::InvalidArgument(format!("b_c = {} not in [1, 8]", self.b_c)));
        }
        if !(1..=16).contains(&self.b_s) {
            return Err(Error::InvalidArgument(format!("b_s = {} not in [1, 16]", self.b_s)));
        }
        if self.d_s == 0 || self.d_s > u16::MAX as usize {
            return Err(Error::InvalidArgument(format!("d_s = {} not in [1, 65535]", self.d_s)));
        }
        Ok(())
    }

    /// Payload bits of a stream with this configuration.
    pub fn payload_bits(&self) -> usize {
        self.b_s as usize * self.d_s + crate::colormap::rate_bits(self.m, self.b_c)
    }
}

/// Serializes an encoded image.
pub fn write_stream(e: &EncodedImage) -> Vec<u8> {
    e.to_bytes()
}

pub fn read_stream(bytes: &[u8]) -> std::result::Result<EncodedImage, StreamError> {
    EncodedImage::from_bytes(bytes)
}

/// Image -> (semantic codes, wire color map).
#[derive(Debug, Clone)]
pub struct Encoder {
    config: CodecConfig,
    op: ColorMapOperator,
    embedder: SemanticEmbedder,
}

impl Encoder {
    pub fn new(dims: ImageDims, config: CodecConfig) -> Result<Self> {
        config.validate(dims)?;
        Ok(Self {
            op: ColorMapOperator::new(dims, config.m)?,
            embedder: SemanticEmbedder::new(dims, config.d_s, config.embed_seed)?,
            config,
        })
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn operator(&self) -> &ColorMapOperator {
        &self.op
    }

    pub fn embedder(&self) -> &SemanticEmbedder {
        &self.embedder
    }

    pub fn encode(&self, image: &[f64]) -> Result<EncodedImage> {
        check_len(self.op.dims().len(), image.len())?;
        let clamp = self.embedder.clamp() as f32;
        let q = semantic_quantizer(clamp as f64, self.config.b_s);
        let semantic = self.embedder.embed(image)?.iter().map(|&v| q.code(v)).collect();
        let color = self.op.to_wire(&self.op.apply(image)?, self.config.b_c)?;
        Ok(EncodedImage {
            height: self.op.dims().height as u16,
            width: self.op.dims().width as u16,
            b_s: self.config.b_s,
            clamp,
            semantic,
            color,
        })
    }

    pub fn encode_to_bytes(&self, image: &[f64]) -> Result<Vec<u8>> {
        Ok(self.encode(image)?.to_bytes())
    }
}

/// Reconstruction levels of the semantic codes.
pub(crate) fn dequantize_semantic(e: &EncodedImage) -> Vec<f64> {
    let q = semantic_quantizer(e.clamp as f64, e.b_s);
    e.semantic.iter().map(|&c| q.value(c)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeOptions {
    /// `fine_pixel`/`fine_latent` for the codec proper; `universal` and
    /// `none` exist for comparisons.
    pub mode: GuidanceMode,
    /// Sample from the unconditional model instead of the semantic one.
    pub ignore_semantics: bool,
    pub universal_scale: Option<f64>,
    pub scale: f64,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        Self {
            mode: GuidanceMode::FinePixel,
            ignore_semantics: false,
            universal_scale: None,
            scale: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct DecodedImage {
    pub image: Vec<f64>,
    /// Dequantized color map used as the guidance target.
    pub target: ColorMap,
    pub semantic: Vec<f64>,
    pub sample: GuidedSampleResult,
}

/// Stream -> image, by guided sampling of the semantic-conditioned model.
pub struct Decoder<'a> {
    pub model: &'a ConditionalDenoiser,
    pub codec: &'a dyn LatentCodec,
    pub profile: &'a CalibrationProfile,
}

impl<'a> Decoder<'a> {
    pub fn new(model: &'a ConditionalDenoiser, codec: &'a dyn LatentCodec, profile: &'a CalibrationProfile) -> Result<Self> {
        profile.check_schedule(model.schedule())?;
        check_len(model.unconditional().dim(), codec.latent_dim())?;
        Ok(Self { model, codec, profile })
    }

    pub fn decode_bytes(&self, bytes: &[u8], options: &DecodeOptions, seed: u64) -> Result<DecodedImage> {
        self.decode(&read_stream(bytes)?, options, seed)
    }

    pub fn decode(&self, e: &EncodedImage, options: &DecodeOptions, seed: u64) -> Result<DecodedImage> {
        let dims = ImageDims::new(e.height as usize, e.width as usize, 3);
        if dims != self.codec.image_dims() {
            return Err(Error::InvalidArgument(format!(
                "stream holds a {}x{} image, model generates {:?}",
                e.height,
                e.width,
                self.codec.image_dims()
            )));
        }
        let op = ColorMapOperator::new(dims, e.m())?;
        let target = op.from_wire(&e.color)?;
        let semantic = dequantize_semantic(e);
        let den = if options.ignore_semantics {
            crate::oracle::ExactDenoiser::new(std::sync::Arc::clone(self.model.unconditional()), self.model.schedule().clone())
        } else {
            self.model.denoiser(&semantic)?
        };
        let schedule = self.model.schedule();
        let sampler = Sampler::new(&den, schedule, &op, self.codec)?.with_realism(self.model.pixel_model());
        let mut config = GuidanceConfig::new(options.mode)
            .with_target(target.clone())
            .with_profile(self.profile.clone())
            .with_scale(options.scale);
        config.universal_scale = options.universal_scale;
        let sample = sampler.sample(&config, seed)?;
        Ok(DecodedImage {
            image: sample.image.clone(),
            target,
            semantic,
            sample,
        })
    }
}
