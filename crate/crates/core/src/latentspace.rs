//! Encoder/decoder pairs for latent diffusion. All toy codecs keep the latent
//! dimension equal to the image dimension.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::colormap::ImageDims;
use crate::error::{Error, Result};
use crate::oracle::{Component, Covariance, MixtureModel};
use crate::tensor::{seeded_rng, standard_normal_vec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodecKind {
    Identity,
    Orthogonal,
    Saturating,
}

impl fmt::Display for CodecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CodecKind::Identity => "identity",
            CodecKind::Orthogonal => "orthogonal",
            CodecKind::Saturating => "saturating",
        })
    }
}

impl FromStr for CodecKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(CodecKind::Identity),
            "orthogonal" => Ok(CodecKind::Orthogonal),
            "saturating" => Ok(CodecKind::Saturating),
            other => Err(Error::InvalidArgument(format!("unknown codec '{other}'"))),
        }
    }
}

pub trait LatentCodec: Send + Sync + fmt::Debug {
    fn kind(&self) -> CodecKind;
    fn image_dims(&self) -> ImageDims;
    fn latent_dim(&self) -> usize;
    fn encode(&self, x: &[f64]) -> Vec<f64>;
    fn decode(&self, z: &[f64]) -> Vec<f64>;
    /// `J_D(z)^T v`.
    fn decode_vjp(&self, z: &[f64], v: &[f64]) -> Vec<f64>;
    /// Declared bound on `|decode(encode(x)) - x|` over the data range.
    fn round_trip_tolerance(&self) -> f64;

    fn is_identity(&self) -> bool {
        self.kind() == CodecKind::Identity
    }
}

/// Pixel-space diffusion: no encoder at all.
#[derive(Debug, Clone)]
pub struct IdentityCodec {
    dims: ImageDims,
}

impl IdentityCodec {
    pub fn new(dims: ImageDims) -> Self {
        Self { dims }
    }
}

impl LatentCodec for IdentityCodec {
    fn kind(&self) -> CodecKind {
        CodecKind::Identity
    }
    fn image_dims(&self) -> ImageDims {
        self.dims
    }
    fn latent_dim(&self) -> usize {
        self.dims.len()
    }
    fn encode(&self, x: &[f64]) -> Vec<f64> {
        x.to_vec()
    }
    fn decode(&self, z: &[f64]) -> Vec<f64> {
        z.to_vec()
    }
    fn decode_vjp(&self, _z: &[f64], v: &[f64]) -> Vec<f64> {
        v.to_vec()
    }
    fn round_trip_tolerance(&self) -> f64 {
        0.0
    }
}

/// Haar-distributed orthogonal matrix from a seed (QR of a Gaussian matrix
/// with the sign convention fixed so the distribution is uniform).
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed);
    let g = DMatrix::from_vec(n, n, standard_normal_vec(&mut rng, n * n));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

fn mul(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (m * DVector::from_column_slice(x)).as_slice().to_vec()
}

fn mul_t(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    m.tr_mul(&DVector::from_column_slice(x)).as_slice().to_vec()
}

/// `encode(x) = Q x`, `decode(z) = Q^T z`.
#[derive(Debug, Clone)]
pub struct OrthogonalCodec {
    dims: ImageDims,
    q: DMatrix<f64>,
}

impl OrthogonalCodec {
    pub fn new(dims: ImageDims, seed: u64) -> Self {
        Self {
            dims,
            q: random_orthogonal(dims.len(), seed),
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Distribution of `Q x` for `x ~ model`.
    pub fn pushforward(&self, model: &MixtureModel) -> Result<MixtureModel> {
        pushforward(&self.q, model)
    }
}

pub(crate) fn pushforward(q: &DMatrix<f64>, model: &MixtureModel) -> Result<MixtureModel> {
    if model.dim() != q.ncols() {
        return Err(Error::ShapeMismatch {
            expected: q.ncols(),
            got: model.dim(),
        });
    }
    let comps = model
        .components()
        .iter()
        .map(|c| Component {
            weight: c.weight,
            mean: mul(q, &c.mean),
            cov: match &c.cov {
                Covariance::Isotropic(s) => Covariance::Isotropic(*s),
                Covariance::Diagonal(d) => {
                    let m = q * DMatrix::from_diagonal(&DVector::from_column_slice(d)) * q.transpose();
                    Covariance::Dense((&m + m.transpose()) * 0.5)
                }
                Covariance::Dense(s) => {
                    let m = q * s * q.transpose();
                    Covariance::Dense((&m + m.transpose()) * 0.5)
                }
            },
        })
        .collect();
    MixtureModel::new(comps)
}

impl LatentCodec for OrthogonalCodec {
    fn kind(&self) -> CodecKind {
        CodecKind::Orthogonal
    }
    fn image_dims(&self) -> ImageDims {
        self.dims
    }
    fn latent_dim(&self) -> usize {
        self.dims.len()
    }
    fn encode(&self, x: &[f64]) -> Vec<f64> {
        mul(&self.q, x)
    }
    fn decode(&self, z: &[f64]) -> Vec<f64> {
        mul_t(&self.q, z)
    }
    fn decode_vjp(&self, _z: &[f64], v: &[f64]) -> Vec<f64> {
        mul(&self.q, v)
    }
    fn round_trip_tolerance(&self) -> f64 {
        1e-10
    }
}

/// A smooth nonlinear decoder, `decode(z) = g tanh(Q^T z / g)`, standing in
/// for a VAE whose output reacts sub-linearly to latent noise. The encoder
/// is its exact inverse on `(-g, g)`.
#[derive(Debug, Clone)]
pub struct SaturatingCodec {
    dims: ImageDims,
    q: DMatrix<f64>,
    gain: f64,
}

impl SaturatingCodec {
    pub fn new(dims: ImageDims, gain: f64, seed: u64) -> Result<Self> {
        if !(gain > 0.0) || !gain.is_finite() {
            return Err(Error::InvalidArgument(format!("gain must be positive, got {gain}")));
        }
        Ok(Self {
            dims,
            q: random_orthogonal(dims.len(), seed),
            gain,
        })
    }

    pub fn gain(&self) -> f64 {
        self.gain
    }
}

/// Largest `|x| / gain` the encoder inverts; beyond it inputs are clipped.
const SATURATION_LIMIT: f64 = 1.0 - 1e-12;

impl LatentCodec for SaturatingCodec {
    fn kind(&self) -> CodecKind {
        CodecKind::Saturating
    }
    fn image_dims(&self) -> ImageDims {
        self.dims
    }
    fn latent_dim(&self) -> usize {
        self.dims.len()
    }
    fn encode(&self, x: &[f64]) -> Vec<f64> {
        let g = self.gain;
        let pre: Vec<f64> = x
            .iter()
            .map(|v| g * (v / g).clamp(-SATURATION_LIMIT, SATURATION_LIMIT).atanh())
            .collect();
        mul(&self.q, &pre)
    }
    fn decode(&self, z: &[f64]) -> Vec<f64> {
        let g = self.gain;
        mul_t(&self.q, z).into_iter().map(|u| g * (u / g).tanh()).collect()
    }
    fn decode_vjp(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let g = self.gain;
        let w: Vec<f64> = mul_t(&self.q, z)
            .into_iter()
            .zip(v)
            .map(|(u, v)| {
                let t = (u / g).tanh();
                (1.0 - t * t) * v
            })
            .collect();
        mul(&self.q, &w)
    }
    fn round_trip_tolerance(&self) -> f64 {
        1e-9 * self.gain.max(1.0)
    }
}

/// Codec choice as written in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecSpec {
    pub kind: CodecKind,
    pub gain: f64,
    pub seed: u64,
}

impl Default for CodecSpec {
    fn default() -> Self {
        Self {
            kind: CodecKind::Identity,
            gain: 4.0,
            seed: 0,
        }
    }
}

impl CodecSpec {
    pub fn build(&self, dims: ImageDims) -> Result<Box<dyn LatentCodec>> {
        Ok(match self.kind {
            CodecKind::Identity => Box::new(IdentityCodec::new(dims)),
            CodecKind::Orthogonal => Box::new(OrthogonalCodec::new(dims, self.seed)),
            CodecKind::Saturating => Box::new(SaturatingCodec::new(dims, self.gain, self.seed)?),
        })
    }
}

/// The data distribution as seen in latent space. Exact for the linear
/// codecs; for the saturating codec the latent law is not a mixture, so the
/// linear part `Q` is pushed forward as an approximation.
pub fn latent_model(codec: &dyn LatentCodec, spec: &CodecSpec, model: &MixtureModel) -> Result<MixtureModel> {
    match codec.kind() {
        CodecKind::Identity => Ok(model.clone()),
        CodecKind::Orthogonal | CodecKind::Saturating => {
            pushforward(&random_orthogonal(codec.latent_dim(), spec.seed), model)
        }
    }
}
