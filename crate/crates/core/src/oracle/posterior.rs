use nalgebra::{Cholesky, DMatrix, DVector};

use crate::colormap::{ColorMap, ColorMapOperator};
use crate::error::{check_len, Error, Result};
use crate::oracle::{Component, Covariance, MixtureModel};

/// Dense `A` (rank x dim). Rows are the lifted unit color maps since `A`
/// has orthonormal rows.
pub fn operator_matrix(op: &ColorMapOperator) -> DMatrix<f64> {
    let (r, d) = (op.rank(), op.dims().len());
    let mut a = DMatrix::zeros(r, d);
    let mut e = ColorMap::zeros(op.m(), op.dims().channels);
    for i in 0..r {
        e.coeffs[i] = 1.0;
        let row = op.lift(&e).expect("shape matches operator");
        for (j, v) in row.into_iter().enumerate() {
            a[(i, j)] = v;
        }
        e.coeffs[i] = 0.0;
    }
    a
}

fn dense_cov(cov: &Covariance, d: usize) -> DMatrix<f64> {
    match cov {
        Covariance::Isotropic(s) => DMatrix::identity(d, d) * *s,
        Covariance::Diagonal(v) => DMatrix::from_diagonal(&DVector::from_column_slice(v)),
        Covariance::Dense(m) => m.clone(),
    }
}

/// Exact `p(z_0 | c)` under the observation model `c = A z_0 + sigma n`.
///
/// Each component is conditioned in closed form and reweighted by its
/// evidence `N(c; A mu_k, A Sigma_k A^T + sigma^2 I)`.
pub fn exact_color_posterior(
    model: &MixtureModel,
    op: &ColorMapOperator,
    c: &ColorMap,
    obs_noise: f64,
) -> Result<MixtureModel> {
    if !(obs_noise > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "observation noise must be positive, got {obs_noise}"
        )));
    }
    check_len(model.dim(), op.dims().len())?;
    check_len(op.rank(), c.coeffs.len())?;
    let d = model.dim();
    let a = operator_matrix(op);
    let target = DVector::from_column_slice(&c.coeffs);
    let mut comps = Vec::with_capacity(model.components().len());
    let mut log_w = Vec::with_capacity(model.components().len());
    for (i, comp) in model.components().iter().enumerate() {
        let sigma = dense_cov(&comp.cov, d);
        let sat = &sigma * a.transpose(); // Sigma A^T, d x r
        let mut s = &a * &sat;
        for k in 0..s.nrows() {
            s[(k, k)] += obs_noise * obs_noise;
        }
        let chol = Cholesky::new(s).ok_or(Error::NotPositiveDefinite(i))?;
        let mu = DVector::from_column_slice(&comp.mean);
        let resid = &target - &a * &mu;
        let sol = chol.solve(&resid);
        let mean = &mu + &sat * &sol;
        // K = Sigma A^T S^-1; Sigma' = Sigma - K (Sigma A^T)^T
        let kt = chol.solve(&sat.transpose());
        let mut post = &sigma - &sat * kt;
        post = (&post + post.transpose()) * 0.5;
        let log_det: f64 = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let r = resid.len() as f64;
        let evidence = -0.5 * (resid.dot(&sol) + log_det + r * (2.0 * std::f64::consts::PI).ln());
        log_w.push(if comp.weight > 0.0 {
            comp.weight.ln() + evidence
        } else {
            f64::NEG_INFINITY
        });
        comps.push(Component {
            weight: 0.0,
            mean: mean.as_slice().to_vec(),
            cov: Covariance::Dense(post),
        });
    }
    let lse = crate::tensor::log_sum_exp(&log_w);
    for (c, l) in comps.iter_mut().zip(&log_w) {
        c.weight = (l - lse).exp();
    }
    MixtureModel::normalized(comps)
}

/// Observation noise matching half a quantizer step of a `bits`-deep color
/// palette, expressed in DCT-coefficient units.
pub fn default_observation_noise(op: &ColorMapOperator, bits: u8) -> f64 {
    let step = 1.0 / (1u32 << bits) as f64;
    0.5 * step * (op.dims().plane() as f64).sqrt() / op.m() as f64
}
