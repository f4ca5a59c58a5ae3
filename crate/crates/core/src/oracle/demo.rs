use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::colormap::ImageDims;
use crate::dct::DctBasis;
use crate::error::{Error, Result};
use crate::oracle::{Component, Covariance, MixtureModel};
use crate::tensor::{mean_std, seeded_rng, standard_normal_vec};

/// Recipe for the synthetic image mixture used by the examples and the
/// comparison harness.
///
/// Every component mean is a smooth color field (random low-frequency DCT
/// coefficients around a random mid-range color) plus a fixed high-frequency
/// texture, so components differ in their color maps and samples carry detail
/// that a color map alone cannot pin down.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemoMixtureSpec {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub components: usize,
    /// Isotropic per-component variance.
    pub variance: f64,
    /// Pixel standard deviation of the high-frequency texture.
    pub texture: f64,
    /// Side of the random low-frequency block of each mean.
    pub smooth_block: usize,
    /// Standard deviation of the non-DC low-frequency coefficients.
    pub smooth_std: f64,
    /// Range of per-channel mean colors.
    pub color_range: (f64, f64),
    pub seed: u64,
}

impl Default for DemoMixtureSpec {
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            channels: 3,
            components: 6,
            variance: 0.012,
            texture: 0.5,
            smooth_block: 3,
            smooth_std: 0.6,
            color_range: (0.25, 0.75),
            seed: 1,
        }
    }
}

impl DemoMixtureSpec {
    pub fn dims(&self) -> ImageDims {
        ImageDims::new(self.height, self.width, self.channels)
    }

    pub fn build(&self) -> Result<MixtureModel> {
        let dims = self.dims();
        if dims.is_empty() || self.components == 0 {
            return Err(Error::InvalidArgument("demo mixture needs positive sizes".into()));
        }
        if !(self.texture >= 0.0) || !(self.smooth_std >= 0.0) {
            return Err(Error::InvalidArgument("texture and smooth_std must be non-negative".into()));
        }
        let (lo, hi) = self.color_range;
        if !(lo <= hi) {
            return Err(Error::InvalidArgument(format!("empty color range [{lo}, {hi}]")));
        }
        let (h, w) = (self.height, self.width);
        let rows = DctBasis::new(h);
        let cols = DctBasis::new(w);
        let block = self.smooth_block.min(h).min(w).max(1);
        let (cut_r, cut_c) = ((h / 2).max(1), (w / 2).max(1));
        let dc_scale = (dims.plane() as f64).sqrt();
        let low = Normal::new(0.0, self.smooth_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let color = Uniform::new_inclusive(lo, hi).map_err(|e| Error::InvalidArgument(e.to_string()))?;

        let mut rng = seeded_rng(self.seed);
        let weight = 1.0 / self.components as f64;
        let mut comps = Vec::with_capacity(self.components);
        for _ in 0..self.components {
            let mut smooth = vec![0.0; dims.len()];
            let mut coeffs = vec![0.0; h * w];
            for plane in smooth.chunks_exact_mut(dims.plane()) {
                coeffs.iter_mut().for_each(|c| *c = 0.0);
                for u in 0..block {
                    for v in 0..block {
                        coeffs[u * w + v] = low.sample(&mut rng);
                    }
                }
                coeffs[0] = color.sample(&mut rng) * dc_scale;
                plane.copy_from_slice(&DctBasis::inverse_block(&rows, &cols, &coeffs, h, w));
            }

            let mut detail = Vec::with_capacity(dims.len());
            for _ in 0..self.channels {
                let noise = standard_normal_vec(&mut rng, dims.plane());
                let mut f = DctBasis::forward_block(&rows, &cols, &noise, h, w);
                for u in 0..cut_r {
                    for v in 0..cut_c {
                        f[u * w + v] = 0.0;
                    }
                }
                detail.extend(DctBasis::inverse_block(&rows, &cols, &f, h, w));
            }
            let (_, sd) = mean_std(&detail);
            let k = if sd > 0.0 { self.texture / sd } else { 0.0 };

            let mean = smooth.iter().zip(&detail).map(|(s, d)| s + k * d).collect();
            comps.push(Component {
                weight,
                mean,
                cov: Covariance::Isotropic(self.variance),
            });
        }
        MixtureModel::normalized(comps)
    }
}

/// Draws a random well-conditioned mixture, mostly for tests.
pub fn random_mixture<R: Rng + ?Sized>(
    rng: &mut R,
    dim: usize,
    components: usize,
    diagonal: bool,
) -> MixtureModel {
    let comps = (0..components)
        .map(|_| {
            let mean = standard_normal_vec(rng, dim);
            let cov = if diagonal {
                Covariance::Diagonal((0..dim).map(|_| rng.random_range(0.1..1.5)).collect())
            } else {
                Covariance::Isotropic(rng.random_range(0.1..1.5))
            };
            Component {
                weight: rng.random_range(0.2..1.0),
                mean,
                cov,
            }
        })
        .collect();
    MixtureModel::normalized(comps).expect("valid by construction")
}
