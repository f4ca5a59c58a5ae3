//! Noise schedule, forward noising and the deterministic DDIM reverse step.

use std::f64::consts::FRAC_PI_2;
use std::fmt::Write as _;

use crate::error::{check_len, Error, Result};
use crate::tensor::is_finite;

/// Offset of the cosine curve near `t = 0`.
const COSINE_OFFSET: f64 = 0.008;

/// Default number of generation steps.
pub const DEFAULT_STEPS: usize = 50;
pub const DEFAULT_ALPHA_MIN: f64 = 1e-4;

/// The `{alpha_t}` sequence for `t = 0..=T`.
///
/// `alpha_0` is exactly one and the sequence is strictly decreasing. Samplers
/// that start from pure noise expect `alpha_T` near zero; see
/// [`NoiseSchedule::is_fully_noising`].
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    alphas: Vec<f64>,
}

/// A signal at a given timestep.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub data: Vec<f64>,
    pub timestep: usize,
}

impl NoiseSchedule {
    /// Cosine-shaped cumulative signal level, affinely rescaled so that
    /// `alpha_0 = 1` and `alpha_T = alpha_min`.
    pub fn cosine(num_steps: usize, alpha_min: f64) -> Result<Self> {
        if num_steps < 2 {
            return Err(Error::InvalidArgument(format!(
                "schedule needs at least 2 steps, got {num_steps}"
            )));
        }
        if !(alpha_min > 0.0 && alpha_min < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha_min must lie in (0, 1), got {alpha_min}"
            )));
        }
        let f = |t: usize| {
            let x = (t as f64 / num_steps as f64 + COSINE_OFFSET) / (1.0 + COSINE_OFFSET);
            (x * FRAC_PI_2).cos().powi(2)
        };
        let (f0, ft) = (f(0), f(num_steps));
        let mut alphas: Vec<f64> = (0..=num_steps)
            .map(|t| alpha_min + (1.0 - alpha_min) * (f(t) - ft) / (f0 - ft))
            .collect();
        alphas[0] = 1.0;
        alphas[num_steps] = alpha_min;
        Self::from_alphas(alphas)
    }

    /// Validates an explicit `alpha` table.
    pub fn from_alphas(alphas: Vec<f64>) -> Result<Self> {
        if alphas.len() < 3 {
            return Err(Error::InvalidArgument("schedule needs T >= 2".into()));
        }
        if (alphas[0] - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "alpha_0 must be 1, got {}",
                alphas[0]
            )));
        }
        if alphas.windows(2).any(|w| !(w[1] < w[0]) || w[1] <= 0.0) {
            return Err(Error::InvalidArgument(
                "alphas must be positive and strictly decreasing".into(),
            ));
        }
        Ok(Self { alphas })
    }

    pub fn num_steps(&self) -> usize {
        self.alphas.len() - 1
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t]
    }

    pub fn alphas(&self) -> &[f64] {
        &self.alphas
    }

    /// True when `alpha_T < 1e-3`, i.e. `z_T` is indistinguishable from noise.
    pub fn is_fully_noising(&self) -> bool {
        *self.alphas.last().unwrap() < 1e-3
    }

    fn check_t(&self, t: usize, min: usize) -> Result<()> {
        if t < min || t > self.num_steps() {
            Err(Error::TimestepOutOfRange {
                t,
                min,
                max: self.num_steps(),
            })
        } else {
            Ok(())
        }
    }

    /// `z_t = sqrt(alpha_t) z_0 + sqrt(1 - alpha_t) eps`
    pub fn forward_noise(&self, z0: &[f64], t: usize, eps: &[f64]) -> Result<Vec<f64>> {
        self.check_t(t, 0)?;
        check_len(z0.len(), eps.len())?;
        let a = self.alphas[t];
        let (sa, sb) = (a.sqrt(), (1.0 - a).sqrt());
        Ok(z0.iter().zip(eps).map(|(z, e)| sa * z + sb * e).collect())
    }

    /// Predicted clean signal implied by a noise estimate.
    pub fn predict_z0(&self, z_t: &[f64], t: usize, eps_hat: &[f64]) -> Result<Vec<f64>> {
        self.check_t(t, 1)?;
        check_len(z_t.len(), eps_hat.len())?;
        let a = self.alphas[t];
        let (sa, sb) = (a.sqrt(), (1.0 - a).sqrt());
        Ok(z_t
            .iter()
            .zip(eps_hat)
            .map(|(z, e)| (z - sb * e) / sa)
            .collect())
    }

    /// Deterministic DDIM update from `t` to `t - 1`.
    pub fn ddim_step(&self, z_t: &[f64], t: usize, eps_hat: &[f64]) -> Result<Vec<f64>> {
        let z0 = self.predict_z0(z_t, t, eps_hat)?;
        let prev = self.alphas[t - 1];
        let (sa, sb) = (prev.sqrt(), (1.0 - prev).sqrt());
        let out: Vec<f64> = z0.iter().zip(eps_hat).map(|(z, e)| sa * z + sb * e).collect();
        debug_assert!(is_finite(&out));
        Ok(out)
    }

    /// Plain-text `(t, alpha_t)` table.
    pub fn to_table(&self) -> String {
        let mut s = String::from("t,alpha\n");
        for (t, a) in self.alphas.iter().enumerate() {
            let _ = writeln!(s, "{t},{a:.17e}");
        }
        s
    }
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self::cosine(DEFAULT_STEPS, DEFAULT_ALPHA_MIN).expect("default schedule is valid")
    }
}
