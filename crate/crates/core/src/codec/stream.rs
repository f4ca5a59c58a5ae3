use crate::bitio::{BitReader, BitWriter};
use crate::colormap::{rate_bits, QuantizedColorMap};
use crate::error::StreamError;

pub const MAGIC: [u8; 4] = *b"CGC1";
pub const FORMAT_VERSION: u8 = 1;

/// Fixed-size part of the stream: magic, version, H, W, m, b_c, b_s, d_s and
/// the f32 clamp, plus the `(m, b_c)` prefix of the color wire.
pub const HEADER_BITS: usize = 144 + QuantizedColorMap::HEADER_BITS;

/// A compressed image: quantized semantic vector plus wire color map.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedImage {
    pub height: u16,
    pub width: u16,
    pub b_s: u8,
    /// Half-width of the semantic quantizer range.
    pub clamp: f32,
    pub semantic: Vec<u16>,
    pub color: QuantizedColorMap,
}

impl EncodedImage {
    pub fn m(&self) -> usize {
        self.color.m
    }

    pub fn b_c(&self) -> u8 {
        self.color.bits
    }

    pub fn d_s(&self) -> usize {
        self.semantic.len()
    }

    /// `b_s d_s + b_c (m^2 + 2 ceil(m/2)^2)`, headers excluded.
    pub fn payload_bits(&self) -> usize {
        self.b_s as usize * self.d_s() + rate_bits(self.m(), self.b_c())
    }

    pub fn total_bits(&self) -> usize {
        HEADER_BITS + self.payload_bits()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = BitWriter::new();
        w.write_bytes(&MAGIC);
        w.write_u8(FORMAT_VERSION);
        w.write_u16(self.height);
        w.write_u16(self.width);
        w.write_u8(self.m() as u8);
        w.write_u8(self.b_c());
        w.write_u8(self.b_s);
        w.write_u16(self.d_s() as u16);
        w.write_f32(self.clamp);
        for &c in &self.semantic {
            w.write_bits(c as u64, self.b_s as u32);
        }
        self.color.write(&mut w);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, StreamError> {
        let mut r = BitReader::new(bytes);
        let mut magic = [0u8; 4];
        for b in &mut magic {
            *b = r.read_u8()?;
        }
        if magic != MAGIC {
            return Err(StreamError::BadMagic(magic));
        }
        let version = r.read_u8()?;
        if version != FORMAT_VERSION {
            return Err(StreamError::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let height = r.read_u16()?;
        let width = r.read_u16()?;
        let m = r.read_u8()?;
        let b_c = r.read_u8()?;
        let b_s = r.read_u8()?;
        let d_s = r.read_u16()?;
        let clamp = r.read_f32()?;
        let invalid = |field, reason: String| StreamError::InvalidField { field, reason };
        if height == 0 || width == 0 {
            return Err(invalid("dims", format!("{height}x{width} is empty")));
        }
        if m == 0 || m as u16 > height.min(width) {
            return Err(invalid("m", format!("{m} not in [1, {}]", height.min(width))));
        }
        if !(1..=8).contains(&b_c) {
            return Err(invalid("b_c", format!("{b_c} not in [1, 8]")));
        }
        if !(1..=16).contains(&b_s) {
            return Err(invalid("b_s", format!("{b_s} not in [1, 16]")));
        }
        if d_s == 0 {
            return Err(invalid("d_s", "must be positive".into()));
        }
        if !(clamp > 0.0) || !clamp.is_finite() {
            return Err(invalid("clamp", format!("{clamp} is not a positive finite value")));
        }
        let semantic = (0..d_s)
            .map(|_| Ok(r.read_bits(b_s as u32)? as u16))
            .collect::<Result<Vec<_>, StreamError>>()?;
        let color = QuantizedColorMap::read(&mut r)?;
        if color.m != m as usize || color.bits != b_c {
            return Err(invalid(
                "color",
                format!("wire says m={} b_c={}, header says m={m} b_c={b_c}", color.m, color.bits),
            ));
        }
        let used = r.position();
        let pad = (8 - used % 8) % 8;
        if pad > 0 && r.read_bits(pad as u32)? != 0 {
            return Err(invalid("padding", "non-zero padding bits".into()));
        }
        let extra = r.remaining_bits() / 8;
        if extra > 0 {
            return Err(StreamError::TrailingData(extra));
        }
        Ok(Self {
            height,
            width,
            b_s,
            clamp,
            semantic,
            color,
        })
    }
}
