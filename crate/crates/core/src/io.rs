//! Image files and model configs.

use std::path::Path;

use image::{DynamicImage, ImageBuffer, ImageFormat, Luma, Rgb};
use serde::{Deserialize, Serialize};

use crate::codec::{CodecConfig, DEFAULT_TEMPERATURE};
use crate::colormap::ImageDims;
use crate::error::{Error, Result};
use crate::oracle::DemoMixtureSpec;
use crate::schedule::{NoiseSchedule, DEFAULT_ALPHA_MIN, DEFAULT_STEPS};

/// Reads a PNG or binary PPM/PGM as a planar `[0, 1]` tensor.
pub fn read_image(path: &Path) -> Result<(ImageDims, Vec<f64>)> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(e) => Error::Io(format!("{}: {e}", path.display())),
        e => Error::InvalidArgument(format!("{}: {e}", path.display())),
    })?;
    Ok(from_dynamic(&img))
}

pub fn from_dynamic(img: &DynamicImage) -> (ImageDims, Vec<f64>) {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let plane = w * h;
        let mut out = vec![0.0; 3 * plane];
        for (x, y, p) in rgb.enumerate_pixels() {
            let i = y as usize * w + x as usize;
            for c in 0..3 {
                out[c * plane + i] = p[c] as f64 / 255.0;
            }
        }
        (ImageDims::new(h, w, 3), out)
    } else {
        let g = img.to_luma8();
        (ImageDims::new(h, w, 1), g.pixels().map(|p| p[0] as f64 / 255.0).collect())
    }
}

/// 8-bit image of a planar tensor; values are clipped to `[0, 1]`.
pub fn to_dynamic(dims: ImageDims, data: &[f64]) -> Result<DynamicImage> {
    crate::error::check_len(dims.len(), data.len())?;
    let q = |v: f64| (v.clamp(0.0, 1.0) * 255.0).round() as u8;
    let (w, h, plane) = (dims.width as u32, dims.height as u32, dims.plane());
    match dims.channels {
        1 => Ok(DynamicImage::ImageLuma8(ImageBuffer::from_fn(w, h, |x, y| {
            Luma([q(data[(y * w + x) as usize])])
        }))),
        3 => Ok(DynamicImage::ImageRgb8(ImageBuffer::from_fn(w, h, |x, y| {
            let i = (y * w + x) as usize;
            Rgb([q(data[i]), q(data[plane + i]), q(data[2 * plane + i])])
        }))),
        c => Err(Error::InvalidArgument(format!("cannot save a {c}-channel image"))),
    }
}

/// Writes PNG, or binary PPM/PGM for `.ppm`/`.pgm`/`.pnm` paths.
pub fn write_image(path: &Path, dims: ImageDims, data: &[f64]) -> Result<()> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
    let format = match ext.as_str() {
        "png" => ImageFormat::Png,
        "ppm" | "pgm" | "pnm" => ImageFormat::Pnm,
        _ => return Err(Error::InvalidArgument(format!("{}: use a .png or .ppm extension", path.display()))),
    };
    to_dynamic(dims, data)?.save_with_format(path, format).map_err(|e| match e {
        image::ImageError::IoError(e) => Error::Io(format!("{}: {e}", path.display())),
        e => Error::InvalidArgument(format!("{}: {e}", path.display())),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSpec {
    pub steps: usize,
    pub alpha_min: f64,
}

impl Default for ScheduleSpec {
    fn default() -> Self {
        Self {
            steps: DEFAULT_STEPS,
            alpha_min: DEFAULT_ALPHA_MIN,
        }
    }
}

impl ScheduleSpec {
    pub fn build(&self) -> Result<NoiseSchedule> {
        NoiseSchedule::cosine(self.steps, self.alpha_min)
    }
}

/// Everything needed to rebuild the synthetic world: data model, noise
/// schedule, color-map size and codec settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub mixture: DemoMixtureSpec,
    pub schedule: ScheduleSpec,
    /// Color-map side used by sampling and comparisons.
    pub color_m: usize,
    /// Softmax temperature of semantic conditioning.
    pub temperature: f64,
    pub codec: CodecConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            mixture: DemoMixtureSpec::default(),
            schedule: ScheduleSpec::default(),
            color_m: 4,
            temperature: DEFAULT_TEMPERATURE,
            codec: CodecConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("model config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
