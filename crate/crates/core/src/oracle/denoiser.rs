use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::oracle::MixtureModel;
use crate::schedule::NoiseSchedule;
use crate::tensor::{dot, keyed_rng, standard_normal_vec};

/// A noise predictor `eps(z_t, t)`.
///
/// `stream` identifies the sample being generated. Deterministic denoisers
/// ignore it; noisy ones derive their perturbation from it so results do not
/// depend on call order or thread scheduling.
pub trait Denoiser: Send + Sync {
    fn dim(&self) -> usize;

    fn predict(&self, z_t: &[f64], t: usize, stream: u64) -> Vec<f64>;

    /// `J^T v` with `J = d predict / d z_t`. The default falls back to central
    /// finite differences of `v . predict`.
    fn vjp(&self, z_t: &[f64], t: usize, v: &[f64]) -> Vec<f64> {
        const H: f64 = 1e-6;
        let mut z = z_t.to_vec();
        (0..z.len())
            .map(|j| {
                let orig = z[j];
                z[j] = orig + H;
                let plus = dot(v, &self.predict(&z, t, 0));
                z[j] = orig - H;
                let minus = dot(v, &self.predict(&z, t, 0));
                z[j] = orig;
                (plus - minus) / (2.0 * H)
            })
            .collect()
    }

    /// Dense Jacobian, assembled row by row from [`vjp`](Self::vjp).
    fn jacobian(&self, z_t: &[f64], t: usize) -> DMatrix<f64> {
        let d = self.dim();
        let mut j = DMatrix::zeros(d, d);
        let mut e = vec![0.0; d];
        for i in 0..d {
            e[i] = 1.0;
            let row = self.vjp(z_t, t, &e);
            for (k, v) in row.into_iter().enumerate() {
                j[(i, k)] = v;
            }
            e[i] = 0.0;
        }
        j
    }
}

impl<D: Denoiser + ?Sized> Denoiser for &D {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict(&self, z_t: &[f64], t: usize, stream: u64) -> Vec<f64> {
        (**self).predict(z_t, t, stream)
    }
    fn vjp(&self, z_t: &[f64], t: usize, v: &[f64]) -> Vec<f64> {
        (**self).vjp(z_t, t, v)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Arc<D> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict(&self, z_t: &[f64], t: usize, stream: u64) -> Vec<f64> {
        (**self).predict(z_t, t, stream)
    }
    fn vjp(&self, z_t: &[f64], t: usize, v: &[f64]) -> Vec<f64> {
        (**self).vjp(z_t, t, v)
    }
}

impl<D: Denoiser + ?Sized> Denoiser for Box<D> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn predict(&self, z_t: &[f64], t: usize, stream: u64) -> Vec<f64> {
        (**self).predict(z_t, t, stream)
    }
    fn vjp(&self, z_t: &[f64], t: usize, v: &[f64]) -> Vec<f64> {
        (**self).vjp(z_t, t, v)
    }
}

/// The Bayes-optimal noise predictor of a Gaussian mixture,
/// `eps = -sqrt(1 - alpha_t) grad log p_t(z_t)`.
#[derive(Debug, Clone)]
pub struct ExactDenoiser {
    model: Arc<MixtureModel>,
    schedule: NoiseSchedule,
}

impl ExactDenoiser {
    pub fn new(model: impl Into<Arc<MixtureModel>>, schedule: NoiseSchedule) -> Self {
        Self {
            model: model.into(),
            schedule,
        }
    }

    pub fn model(&self) -> &MixtureModel {
        &self.model
    }

    pub fn schedule(&self) -> &NoiseSchedule {
        &self.schedule
    }

    /// Tweedie estimate `E[z_0 | z_t]`.
    pub fn posterior_mean(&self, z_t: &[f64], t: usize) -> Result<Vec<f64>> {
        let eps = self.try_predict(z_t, t)?;
        self.schedule.predict_z0(z_t, t, &eps)
    }

    pub fn try_predict(&self, z_t: &[f64], t: usize) -> Result<Vec<f64>> {
        let score = self.model.marginal_score(&self.schedule, z_t, t)?;
        let k = -(1.0 - self.schedule.alpha(t)).sqrt();
        Ok(score.into_iter().map(|s| k * s).collect())
    }

    pub fn try_vjp(&self, z_t: &[f64], t: usize, v: &[f64]) -> Result<Vec<f64>> {
        if t > self.schedule.num_steps() {
            return Err(Error::TimestepOutOfRange {
                t,
                min: 0,
                max: self.schedule.num_steps(),
            });
        }
        let alpha = self.schedule.alpha(t);
        let state = self.model.state(alpha, z_t)?;
        let k = -(1.0 - alpha).sqrt();
        // J_eps = -sqrt(1 - alpha) H, with H symmetric.
        Ok(state.hessian_vec(v).into_iter().map(|h| k * h).collect())
    }
}

impl Denoiser for ExactDenoiser {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn predict(&self, z_t: &[f64], t: usize, _stream: u64) -> Vec<f64> {
        self.try_predict(z_t, t).expect("exact denoiser called with invalid input")
    }

    fn vjp(&self, z_t: &[f64], t: usize, v: &[f64]) -> Vec<f64> {
        self.try_vjp(z_t, t, v).expect("exact denoiser called with invalid input")
    }
}

/// A base denoiser plus isotropic Gaussian error of per-timestep scale
/// `lambda_t`, independent of `z_t`.
#[derive(Debug, Clone)]
pub struct PerturbedDenoiser<D> {
    base: D,
    lambdas: Vec<f64>,
    seed: u64,
}

impl<D: Denoiser> PerturbedDenoiser<D> {
    /// `lambdas` is indexed by timestep and has length `T + 1`.
    pub fn new(base: D, lambdas: Vec<f64>, seed: u64) -> Result<Self> {
        if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "perturbation scale must be non-negative, got {l}"
            )));
        }
        Ok(Self { base, lambdas, seed })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    /// The error added for `(stream, t)`; a pure function of its inputs.
    pub fn perturbation(&self, stream: u64, t: usize) -> Vec<f64> {
        let lam = self.lambdas.get(t).copied().unwrap_or(0.0);
        if lam == 0.0 {
            return vec![0.0; self.base.dim()];
        }
        let mut rng = keyed_rng(self.seed, stream, t as u64);
        standard_normal_vec(&mut rng, self.base.dim())
            .into_iter()
            .map(|e| lam * e)
            .collect()
    }
}

impl<D: Denoiser> Denoiser for PerturbedDenoiser<D> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn predict(&self, z_t: &[f64], t: usize, stream: u64) -> Vec<f64> {
        let mut eps = self.base.predict(z_t, t, stream);
        if self.lambdas.get(t).is_some_and(|l| *l > 0.0) {
            for (e, p) in eps.iter_mut().zip(self.perturbation(stream, t)) {
                *e += p;
            }
        }
        eps
    }

    fn vjp(&self, z_t: &[f64], t: usize, v: &[f64]) -> Vec<f64> {
        self.base.vjp(z_t, t, v)
    }
}
