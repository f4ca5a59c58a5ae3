use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::schedule::NoiseSchedule;
use crate::tensor::{dot, log_sum_exp, standard_normal_vec};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Per-component covariance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariance {
    /// `s I`
    Isotropic(f64),
    Diagonal(Vec<f64>),
    /// Full matrix; produced by conditioning, rarely written by hand.
    #[serde(skip)]
    Dense(DMatrix<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub cov: Covariance,
}

/// Gaussian mixture over flattened images.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureModel {
    dim: usize,
    components: Vec<Component>,
}

/// `alpha Sigma + (1 - alpha) I`, factored for solves.
pub(crate) enum NoisyCov {
    Iso(f64),
    Diag(Vec<f64>),
    Dense(Cholesky<f64, Dyn>),
}

impl NoisyCov {
    fn new(cov: &Covariance, alpha: f64, index: usize) -> Result<Self> {
        let noise = 1.0 - alpha;
        Ok(match cov {
            Covariance::Isotropic(s) => NoisyCov::Iso(alpha * s + noise),
            Covariance::Diagonal(d) => NoisyCov::Diag(d.iter().map(|s| alpha * s + noise).collect()),
            Covariance::Dense(m) => {
                let mut c = m * alpha;
                for i in 0..c.nrows() {
                    c[(i, i)] += noise;
                }
                NoisyCov::Dense(Cholesky::new(c).ok_or(Error::NotPositiveDefinite(index))?)
            }
        })
    }

    pub(crate) fn solve(&self, r: &[f64]) -> Vec<f64> {
        match self {
            NoisyCov::Iso(v) => r.iter().map(|x| x / v).collect(),
            NoisyCov::Diag(d) => r.iter().zip(d).map(|(x, v)| x / v).collect(),
            NoisyCov::Dense(ch) => ch.solve(&DVector::from_column_slice(r)).as_slice().to_vec(),
        }
    }

    fn log_det(&self, dim: usize) -> f64 {
        match self {
            NoisyCov::Iso(v) => dim as f64 * v.ln(),
            NoisyCov::Diag(d) => d.iter().map(|v| v.ln()).sum(),
            NoisyCov::Dense(ch) => 2.0 * ch.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>(),
        }
    }
}

/// Everything needed for the score and its Hessian at one `(z_t, t)`.
pub(crate) struct PosteriorState {
    pub responsibilities: Vec<f64>,
    /// Component scores `-(Sigma_t)^-1 (z - sqrt(alpha) mu_k)`.
    pub grads: Vec<Vec<f64>>,
    pub score: Vec<f64>,
    pub covs: Vec<NoisyCov>,
    pub log_density: f64,
}

impl PosteriorState {
    /// Hessian of `log p_t` applied to `u`.
    pub fn hessian_vec(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        for ((r, g), cov) in self.responsibilities.iter().zip(&self.grads).zip(&self.covs) {
            if *r == 0.0 {
                continue;
            }
            let pu = cov.solve(u);
            let gu = dot(g, u);
            for i in 0..u.len() {
                out[i] += r * (g[i] * gu - pu[i]);
            }
        }
        let su = dot(&self.score, u);
        for i in 0..u.len() {
            out[i] -= self.score[i] * su;
        }
        out
    }
}

impl MixtureModel {
    pub fn new(components: Vec<Component>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidArgument("mixture needs at least one component".into()))?;
        let dim = first.mean.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("zero-dimensional mixture".into()));
        }
        let mut total = 0.0;
        for (i, c) in components.iter().enumerate() {
            check_len(dim, c.mean.len())?;
            if !(c.weight >= 0.0) || !c.weight.is_finite() {
                return Err(Error::InvalidArgument(format!("weight {} is negative", c.weight)));
            }
            total += c.weight;
            match &c.cov {
                Covariance::Isotropic(s) if !(*s > 0.0) => return Err(Error::NotPositiveDefinite(i)),
                Covariance::Diagonal(d) => {
                    check_len(dim, d.len())?;
                    if d.iter().any(|v| !(*v > 0.0)) {
                        return Err(Error::NotPositiveDefinite(i));
                    }
                }
                Covariance::Dense(m) => {
                    if m.nrows() != dim || m.ncols() != dim {
                        return Err(Error::ShapeMismatch {
                            expected: dim * dim,
                            got: m.len(),
                        });
                    }
                    if Cholesky::new(m.clone()).is_none() {
                        return Err(Error::NotPositiveDefinite(i));
                    }
                }
                _ => {}
            }
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { dim, components })
    }

    /// Builds a mixture after normalizing the weights.
    pub fn normalized(mut components: Vec<Component>) -> Result<Self> {
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidArgument("weights sum to zero".into()));
        }
        for c in &mut components {
            c.weight /= total;
        }
        Self::new(components)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    /// Same components, new weights (renormalized).
    pub fn reweighted(&self, weights: &[f64]) -> Result<Self> {
        check_len(self.components.len(), weights.len())?;
        let comps = self
            .components
            .iter()
            .zip(weights)
            .map(|(c, &w)| Component {
                weight: w,
                ..c.clone()
            })
            .collect();
        Self::normalized(comps)
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for c in &self.components {
            crate::tensor::axpy(c.weight, &c.mean, &mut m);
        }
        m
    }

    /// Marginal variance of every coordinate.
    pub fn coordinate_variance(&self) -> Vec<f64> {
        let mean = self.mean();
        let mut second = vec![0.0; self.dim];
        for c in &self.components {
            for i in 0..self.dim {
                let var = match &c.cov {
                    Covariance::Isotropic(s) => *s,
                    Covariance::Diagonal(d) => d[i],
                    Covariance::Dense(m) => m[(i, i)],
                };
                second[i] += c.weight * (var + c.mean[i] * c.mean[i]);
            }
        }
        second.iter().zip(&mean).map(|(s, m)| s - m * m).collect()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.components.len() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        self.sample_component(pick, rng)
    }

    pub fn sample_component<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> Vec<f64> {
        let c = &self.components[k];
        let n = standard_normal_vec(rng, self.dim);
        match &c.cov {
            Covariance::Isotropic(s) => {
                let sd = s.sqrt();
                c.mean.iter().zip(&n).map(|(m, e)| m + sd * e).collect()
            }
            Covariance::Diagonal(d) => c
                .mean
                .iter()
                .zip(&n)
                .zip(d)
                .map(|((m, e), v)| m + v.sqrt() * e)
                .collect(),
            Covariance::Dense(m) => {
                let l = Cholesky::new(m.clone()).expect("validated at construction").unpack();
                let x = l * DVector::from_vec(n);
                c.mean.iter().zip(x.iter()).map(|(a, b)| a + b).collect()
            }
        }
    }

    pub(crate) fn state(&self, alpha: f64, z: &[f64]) -> Result<PosteriorState> {
        check_len(self.dim, z.len())?;
        let sa = alpha.sqrt();
        let k = self.components.len();
        let mut logits = Vec::with_capacity(k);
        let mut grads = Vec::with_capacity(k);
        let mut covs = Vec::with_capacity(k);
        for (i, c) in self.components.iter().enumerate() {
            let cov = NoisyCov::new(&c.cov, alpha, i)?;
            let diff: Vec<f64> = z.iter().zip(&c.mean).map(|(x, m)| x - sa * m).collect();
            let sol = cov.solve(&diff);
            let quad = dot(&diff, &sol);
            let log_n = -0.5 * (quad + cov.log_det(self.dim) + self.dim as f64 * LN_2PI);
            logits.push(if c.weight > 0.0 { c.weight.ln() + log_n } else { f64::NEG_INFINITY });
            grads.push(sol.into_iter().map(|v| -v).collect::<Vec<_>>());
            covs.push(cov);
        }
        let lse = log_sum_exp(&logits);
        let responsibilities: Vec<f64> = logits.iter().map(|l| (l - lse).exp()).collect();
        let mut score = vec![0.0; self.dim];
        for (r, g) in responsibilities.iter().zip(&grads) {
            crate::tensor::axpy(*r, g, &mut score);
        }
        Ok(PosteriorState {
            responsibilities,
            grads,
            score,
            covs,
            log_density: lse,
        })
    }

    /// `grad log p_t(z_t)` of the noised marginal.
    pub fn marginal_score(&self, schedule: &NoiseSchedule, z_t: &[f64], t: usize) -> Result<Vec<f64>> {
        check_t(schedule, t)?;
        Ok(self.state(schedule.alpha(t), z_t)?.score)
    }

    /// `log p_t(z_t)`.
    pub fn marginal_log_density(&self, schedule: &NoiseSchedule, z_t: &[f64], t: usize) -> Result<f64> {
        check_t(schedule, t)?;
        Ok(self.state(schedule.alpha(t), z_t)?.log_density)
    }

    /// Component posterior probabilities given `z_t`.
    pub fn responsibilities(&self, schedule: &NoiseSchedule, z_t: &[f64], t: usize) -> Result<Vec<f64>> {
        check_t(schedule, t)?;
        Ok(self.state(schedule.alpha(t), z_t)?.responsibilities)
    }

    /// Exact log-density of the clean data distribution.
    pub fn log_likelihood(&self, x: &[f64]) -> Result<f64> {
        Ok(self.state(1.0, x)?.log_density)
    }
}

fn check_t(schedule: &NoiseSchedule, t: usize) -> Result<()> {
    if t > schedule.num_steps() {
        return Err(Error::TimestepOutOfRange {
            t,
            min: 0,
            max: schedule.num_steps(),
        });
    }
    Ok(())
}
