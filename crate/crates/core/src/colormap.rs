//! Color maps: low-frequency DCT truncation of an image, its minimum-energy
//! lift back to pixel space, and the quantized YUV 4:2:0 wire form.
//!
//! A color map holds the `m x m` lowest 2-D DCT-II coefficients of every
//! channel (orthonormal convention, so the operator is a partial isometry).
//! On the wire the same information travels as an `m x m` thumbnail in
//! BT.601 full-range YUV with 2x chroma subsampling.

use serde::{Deserialize, Serialize};

use crate::bitio::{BitReader, BitWriter};
use crate::dct::DctBasis;
use crate::error::{check_len, Error, Result, StreamError};

/// Planar image geometry, `[channel][row][col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageDims {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl ImageDims {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn plane(&self) -> usize {
        self.height * self.width
    }
}

/// DCT coefficients `[channel][u][v]` of the retained `m x m` block.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorMap {
    pub m: usize,
    pub channels: usize,
    pub coeffs: Vec<f64>,
}

impl ColorMap {
    pub fn zeros(m: usize, channels: usize) -> Self {
        Self {
            m,
            channels,
            coeffs: vec![0.0; m * m * channels],
        }
    }

    pub fn mse(&self, other: &ColorMap) -> Result<f64> {
        if self.m != other.m || self.channels != other.channels {
            return Err(Error::InvalidArgument(format!(
                "color map shapes differ: {}x{}x{} vs {}x{}x{}",
                self.m, self.m, self.channels, other.m, other.m, other.channels
            )));
        }
        Ok(crate::tensor::mean_squared_error(&self.coeffs, &other.coeffs))
    }
}

/// The linear operator `A` mapping an image to its color map.
#[derive(Debug, Clone)]
pub struct ColorMapOperator {
    dims: ImageDims,
    m: usize,
    rows: DctBasis,
    cols: DctBasis,
    thumb: DctBasis,
}

impl ColorMapOperator {
    pub fn new(dims: ImageDims, m: usize) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::InvalidArgument("empty image dimensions".into()));
        }
        if m == 0 || m > dims.height.min(dims.width) {
            return Err(Error::InvalidArgument(format!(
                "color map size {m} must lie in [1, {}]",
                dims.height.min(dims.width)
            )));
        }
        Ok(Self {
            dims,
            m,
            rows: DctBasis::new(dims.height),
            cols: DctBasis::new(dims.width),
            thumb: DctBasis::new(m),
        })
    }

    pub fn dims(&self) -> ImageDims {
        self.dims
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of retained coefficients, `m^2 * channels`.
    pub fn rank(&self) -> usize {
        self.m * self.m * self.dims.channels
    }

    pub fn apply(&self, image: &[f64]) -> Result<ColorMap> {
        check_len(self.dims.len(), image.len())?;
        let plane = self.dims.plane();
        let mut coeffs = Vec::with_capacity(self.rank());
        for ch in image.chunks_exact(plane) {
            coeffs.extend(DctBasis::forward_block(
                &self.rows, &self.cols, ch, self.m, self.m,
            ));
        }
        Ok(ColorMap {
            m: self.m,
            channels: self.dims.channels,
            coeffs,
        })
    }

    fn check_map(&self, c: &ColorMap) -> Result<()> {
        if c.m != self.m || c.channels != self.dims.channels {
            return Err(Error::InvalidArgument(format!(
                "color map is {}x{}x{}, operator expects {}x{}x{}",
                c.m, c.m, c.channels, self.m, self.m, self.dims.channels
            )));
        }
        check_len(self.rank(), c.coeffs.len())
    }

    /// Minimum-energy image with the given color map (zero-padded inverse
    /// DCT). This is the adjoint of [`apply`](Self::apply).
    pub fn lift(&self, c: &ColorMap) -> Result<Vec<f64>> {
        self.check_map(c)?;
        let mut out = Vec::with_capacity(self.dims.len());
        for block in c.coeffs.chunks_exact(self.m * self.m) {
            out.extend(DctBasis::inverse_block(
                &self.rows, &self.cols, block, self.m, self.m,
            ));
        }
        Ok(out)
    }

    /// `lift(apply(x))`: the low-frequency part of an image.
    pub fn project(&self, image: &[f64]) -> Result<Vec<f64>> {
        self.lift(&self.apply(image)?)
    }

    /// `A 1`, the color map of an all-ones image.
    pub fn ones_response(&self) -> ColorMap {
        self.apply(&vec![1.0; self.dims.len()])
            .expect("dimensions match by construction")
    }

    fn thumb_scale(&self) -> f64 {
        self.m as f64 / (self.dims.plane() as f64).sqrt()
    }

    /// `m x m` spatial thumbnail in pixel units, planar per channel.
    pub fn thumbnail(&self, c: &ColorMap) -> Result<Vec<f64>> {
        self.check_map(c)?;
        let k = self.thumb_scale();
        let mut out = Vec::with_capacity(self.rank());
        for block in c.coeffs.chunks_exact(self.m * self.m) {
            let px = DctBasis::inverse_block(&self.thumb, &self.thumb, block, self.m, self.m);
            out.extend(px.into_iter().map(|v| v * k));
        }
        Ok(out)
    }

    pub fn from_thumbnail(&self, thumb: &[f64]) -> Result<ColorMap> {
        check_len(self.rank(), thumb.len())?;
        let k = 1.0 / self.thumb_scale();
        let mut coeffs = Vec::with_capacity(self.rank());
        for px in thumb.chunks_exact(self.m * self.m) {
            let block = DctBasis::forward_block(&self.thumb, &self.thumb, px, self.m, self.m);
            coeffs.extend(block.into_iter().map(|v| v * k));
        }
        Ok(ColorMap {
            m: self.m,
            channels: self.dims.channels,
            coeffs,
        })
    }

    /// Quantizes a three-channel color map to its YUV 4:2:0 wire form.
    pub fn to_wire(&self, c: &ColorMap, bits: u8) -> Result<QuantizedColorMap> {
        if self.dims.channels != 3 {
            return Err(Error::InvalidArgument(
                "wire form requires a 3-channel color map".into(),
            ));
        }
        check_bits(bits)?;
        let m = self.m;
        let n = m * m;
        let thumb = self.thumbnail(c)?;
        let (r, g, b) = (&thumb[..n], &thumb[n..2 * n], &thumb[2 * n..]);
        let mut y = vec![0.0; n];
        let mut u = vec![0.0; n];
        let mut v = vec![0.0; n];
        for i in 0..n {
            (y[i], u[i], v[i]) = rgb_to_yuv(r[i], g[i], b[i]);
        }
        let (lq, cq) = (Quantizer::luma(bits), Quantizer::chroma(bits));
        Ok(QuantizedColorMap {
            m,
            bits,
            luma: y.iter().map(|&x| lq.code(x)).collect(),
            chroma_u: pool_half(&u, m).iter().map(|&x| cq.code(x)).collect(),
            chroma_v: pool_half(&v, m).iter().map(|&x| cq.code(x)).collect(),
        })
    }

    /// Dequantizes a wire color map back to DCT coefficients.
    pub fn from_wire(&self, q: &QuantizedColorMap) -> Result<ColorMap> {
        if self.dims.channels != 3 {
            return Err(Error::InvalidArgument(
                "wire form requires a 3-channel color map".into(),
            ));
        }
        if q.m != self.m {
            return Err(Error::InvalidArgument(format!(
                "wire color map has m = {}, operator expects {}",
                q.m, self.m
            )));
        }
        q.validate()?;
        let m = self.m;
        let n = m * m;
        let (lq, cq) = (Quantizer::luma(q.bits), Quantizer::chroma(q.bits));
        let u_half: Vec<f64> = q.chroma_u.iter().map(|&c| cq.value(c)).collect();
        let v_half: Vec<f64> = q.chroma_v.iter().map(|&c| cq.value(c)).collect();
        let (u, v) = (upsample_nearest(&u_half, m), upsample_nearest(&v_half, m));
        let mut thumb = vec![0.0; 3 * n];
        for i in 0..n {
            let (r, g, b) = yuv_to_rgb(lq.value(q.luma[i]), u[i], v[i]);
            thumb[i] = r;
            thumb[n + i] = g;
            thumb[2 * n + i] = b;
        }
        let c = self.from_thumbnail(&thumb)?;
        self.apply(&self.lift(&c)?)
    }
}

fn check_bits(bits: u8) -> Result<()> {
    if (1..=8).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "bits per channel must lie in [1, 8], got {bits}"
        )))
    }
}

/// BT.601 full-range.
pub fn rgb_to_yuv(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let y = 0.299 * r + 0.587 * g + 0.114 * b;
    let u = -0.168_736 * r - 0.331_264 * g + 0.5 * b;
    let v = 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    (y, u, v)
}

pub fn yuv_to_rgb(y: f64, u: f64, v: f64) -> (f64, f64, f64) {
    // Exact inverse of the forward matrix above.
    const INV: [[f64; 3]; 3] = inverse_yuv();
    (
        INV[0][0] * y + INV[0][1] * u + INV[0][2] * v,
        INV[1][0] * y + INV[1][1] * u + INV[1][2] * v,
        INV[2][0] * y + INV[2][1] * u + INV[2][2] * v,
    )
}

const fn inverse_yuv() -> [[f64; 3]; 3] {
    let a = [
        [0.299, 0.587, 0.114],
        [-0.168_736, -0.331_264, 0.5],
        [0.5, -0.418_688, -0.081_312],
    ];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
        - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    [
        [
            (a[1][1] * a[2][2] - a[1][2] * a[2][1]) / det,
            (a[0][2] * a[2][1] - a[0][1] * a[2][2]) / det,
            (a[0][1] * a[1][2] - a[0][2] * a[1][1]) / det,
        ],
        [
            (a[1][2] * a[2][0] - a[1][0] * a[2][2]) / det,
            (a[0][0] * a[2][2] - a[0][2] * a[2][0]) / det,
            (a[0][2] * a[1][0] - a[0][0] * a[1][2]) / det,
        ],
        [
            (a[1][0] * a[2][1] - a[1][1] * a[2][0]) / det,
            (a[0][1] * a[2][0] - a[0][0] * a[2][1]) / det,
            (a[0][0] * a[1][1] - a[0][1] * a[1][0]) / det,
        ],
    ]
}

pub(crate) fn half(m: usize) -> usize {
    m.div_ceil(2)
}

/// 2x2 average pooling with edge replication for odd sizes.
fn pool_half(plane: &[f64], m: usize) -> Vec<f64> {
    let h = half(m);
    let at = |r: usize, c: usize| plane[r.min(m - 1) * m + c.min(m - 1)];
    let mut out = Vec::with_capacity(h * h);
    for r in 0..h {
        for c in 0..h {
            let (r2, c2) = (2 * r, 2 * c);
            out.push(0.25 * (at(r2, c2) + at(r2, c2 + 1) + at(r2 + 1, c2) + at(r2 + 1, c2 + 1)));
        }
    }
    out
}

fn upsample_nearest(plane: &[f64], m: usize) -> Vec<f64> {
    let h = half(m);
    (0..m * m).map(|i| plane[(i / m / 2) * h + (i % m) / 2]).collect()
}

/// Mid-rise uniform quantizer over a fixed range.
#[derive(Debug, Clone, Copy)]
pub struct Quantizer {
    lo: f64,
    hi: f64,
    levels: u32,
}

impl Quantizer {
    pub fn new(lo: f64, hi: f64, bits: u8) -> Self {
        Self {
            lo,
            hi,
            levels: 1u32 << bits,
        }
    }

    pub fn luma(bits: u8) -> Self {
        Self::new(0.0, 1.0, bits)
    }

    pub fn chroma(bits: u8) -> Self {
        Self::new(-0.5, 0.5, bits)
    }

    pub fn step(&self) -> f64 {
        (self.hi - self.lo) / self.levels as f64
    }

    pub fn code(&self, x: f64) -> u16 {
        // Values within rounding noise of a decision boundary go up, so that
        // e.g. an exact mid-gray does not split across two codes.
        let k = ((x - self.lo) / self.step() + 1e-9).floor();
        k.clamp(0.0, (self.levels - 1) as f64) as u16
    }

    pub fn value(&self, code: u16) -> f64 {
        self.lo + (code as f64 + 0.5) * self.step()
    }
}

/// Wire form of a color map: `[u8 m][u8 b_c][luma][U][V]`, each code
/// `b_c` bits wide, MSB-first, planes packed without padding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuantizedColorMap {
    pub m: usize,
    pub bits: u8,
    pub luma: Vec<u16>,
    pub chroma_u: Vec<u16>,
    pub chroma_v: Vec<u16>,
}

impl QuantizedColorMap {
    /// Bits spent on codes, `b_c (m^2 + 2 ceil(m/2)^2)`.
    pub fn rate_bits(&self) -> usize {
        rate_bits(self.m, self.bits)
    }

    /// Bits of the two-byte `(m, b_c)` prefix.
    pub const HEADER_BITS: usize = 16;

    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits)?;
        let h = half(self.m);
        if self.luma.len() != self.m * self.m
            || self.chroma_u.len() != h * h
            || self.chroma_v.len() != h * h
        {
            return Err(Error::InvalidArgument("plane sizes do not match m".into()));
        }
        let max = (1u32 << self.bits) - 1;
        let bad = self
            .luma
            .iter()
            .chain(&self.chroma_u)
            .chain(&self.chroma_v)
            .find(|&&c| c as u32 > max);
        match bad {
            Some(c) => Err(Error::InvalidArgument(format!(
                "code {c} exceeds {max} for {} bits",
                self.bits
            ))),
            None => Ok(()),
        }
    }

    pub fn write(&self, w: &mut BitWriter) {
        w.write_u8(self.m as u8);
        w.write_u8(self.bits);
        for &c in self.luma.iter().chain(&self.chroma_u).chain(&self.chroma_v) {
            w.write_bits(c as u64, self.bits as u32);
        }
    }

    pub fn read(r: &mut BitReader<'_>) -> std::result::Result<Self, StreamError> {
        let m = r.read_u8()? as usize;
        let bits = r.read_u8()?;
        if m == 0 {
            return Err(StreamError::InvalidField {
                field: "color.m",
                reason: "must be positive".into(),
            });
        }
        if !(1..=8).contains(&bits) {
            return Err(StreamError::InvalidField {
                field: "color.b_c",
                reason: format!("{bits} not in [1, 8]"),
            });
        }
        let h = half(m);
        let mut read_plane = |n: usize| -> std::result::Result<Vec<u16>, StreamError> {
            (0..n).map(|_| Ok(r.read_bits(bits as u32)? as u16)).collect()
        };
        let luma = read_plane(m * m)?;
        let chroma_u = read_plane(h * h)?;
        let chroma_v = read_plane(h * h)?;
        Ok(Self {
            m,
            bits,
            luma,
            chroma_u,
            chroma_v,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BitWriter::new();
        self.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, StreamError> {
        Self::read(&mut BitReader::new(bytes))
    }
}

/// Fixed-length rate of a wire color map. Equals `1.5 b_c m^2` for even `m`.
pub fn rate_bits(m: usize, bits: u8) -> usize {
    let h = half(m);
    bits as usize * (m * m + 2 * h * h)
}
