//! QTRL1 trial files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "QTRL1"  dtype:u8  channels:u32  samples:u32  scale_num:u32  scale_den:u32  payload
//! ```
//!
//! dtype 1 is i8 and dtype 2 is f32. A scale of 0/0 means "absent". The
//! payload is row-major and channel-first: every sample of channel 0, then
//! channel 1, and so on.

use std::fs;
use std::path::Path;

use qeegnet::model::{Layout, Scale};
use qeegnet::{ModelShape, QTensor};
use thiserror::Error;

pub const MAGIC: &[u8; 5] = b"QTRL1";
const HEADER_LEN: usize = 5 + 1 + 4 * 4;

#[derive(Debug, Error)]
pub enum TrialError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected QTRL1")]
    BadMagic,
    #[error("truncated header: {0} bytes")]
    Truncated(usize),
    #[error("unknown dtype code {0} (1 = i8, 2 = f32)")]
    BadDtype(u8),
    #[error("scale {0}/{1} is not a positive rational")]
    BadScale(u32, u32),
    #[error("payload is {found} bytes, expected {expected}")]
    PayloadLength { expected: usize, found: usize },
    #[error("trial is {found}, the model expects {expected}")]
    Shape { expected: String, found: String },
    #[error("f32 trial has no input scale; write one into the header to quantize it")]
    MissingScale,
    #[error("trial scale {found} does not match the model input scale {expected}")]
    ScaleMismatch { expected: Scale, found: Scale },
    #[error("scale {0} does not fit the 32-bit header fields")]
    ScaleTooWide(Scale),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TrialData {
    I8(Vec<i8>),
    F32(Vec<f32>),
}

impl TrialData {
    fn code(&self) -> u8 {
        match self {
            TrialData::I8(_) => 1,
            TrialData::F32(_) => 2,
        }
    }

    fn len(&self) -> usize {
        match self {
            TrialData::I8(v) => v.len(),
            TrialData::F32(v) => v.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialFile {
    pub channels: usize,
    pub samples: usize,
    pub scale: Option<Scale>,
    pub data: TrialData,
}

impl TrialFile {
    /// An i8 trial file carrying the tensor's scale.
    pub fn from_qtensor(t: &QTensor) -> Self {
        let shape = t.shape();
        TrialFile { channels: shape[0], samples: shape[1], scale: Some(t.scale()), data: TrialData::I8(t.to_dense()) }
    }

    pub fn encode(&self) -> Result<Vec<u8>, TrialError> {
        let mut out = Vec::with_capacity(HEADER_LEN + self.data.len() * 4);
        out.extend_from_slice(MAGIC);
        out.push(self.data.code());
        out.extend_from_slice(&(self.channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.samples as u32).to_le_bytes());
        let (num, den) = match self.scale {
            None => (0, 0),
            Some(s) => (
                u32::try_from(s.num()).map_err(|_| TrialError::ScaleTooWide(s))?,
                u32::try_from(s.den()).map_err(|_| TrialError::ScaleTooWide(s))?,
            ),
        };
        out.extend_from_slice(&num.to_le_bytes());
        out.extend_from_slice(&den.to_le_bytes());
        match &self.data {
            TrialData::I8(v) => out.extend(v.iter().map(|&x| x as u8)),
            TrialData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TrialError> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(TrialError::BadMagic);
        }
        if bytes.len() < HEADER_LEN {
            return Err(TrialError::Truncated(bytes.len()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[6 + 4 * i..10 + 4 * i].try_into().unwrap());
        let (channels, samples) = (word(0) as usize, word(1) as usize);
        let (num, den) = (word(2), word(3));
        let scale = match (num, den) {
            (0, 0) => None,
            _ => Some(Scale::new(num.into(), den.into()).ok_or(TrialError::BadScale(num, den))?),
        };
        let payload = &bytes[HEADER_LEN..];
        let n = channels * samples;
        let width = match bytes[5] {
            1 => 1,
            2 => 4,
            d => return Err(TrialError::BadDtype(d)),
        };
        if payload.len() != n * width {
            return Err(TrialError::PayloadLength { expected: n * width, found: payload.len() });
        }
        let data = if width == 1 {
            TrialData::I8(payload.iter().map(|&b| b as i8).collect())
        } else {
            TrialData::F32(payload.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
        };
        Ok(TrialFile { channels, samples, scale, data })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self, TrialError> {
        TrialFile::decode(&fs::read(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), TrialError> {
        Ok(fs::write(path, self.encode()?)?)
    }

    fn check(&self, shape: &ModelShape, input_scale: Scale) -> Result<Scale, TrialError> {
        if (self.channels, self.samples) != (shape.channels, shape.samples) {
            return Err(TrialError::Shape {
                expected: format!("{}x{}", shape.channels, shape.samples),
                found: format!("{}x{}", self.channels, self.samples),
            });
        }
        let scale = match (&self.data, self.scale) {
            (TrialData::F32(_), None) => return Err(TrialError::MissingScale),
            (_, Some(s)) => s,
            (TrialData::I8(_), None) => input_scale,
        };
        if scale != input_scale {
            return Err(TrialError::ScaleMismatch { expected: input_scale, found: scale });
        }
        Ok(scale)
    }

    /// The trial on the model's input grid. f32 samples are rounded half
    /// away from zero and saturated to i8.
    pub fn to_qtensor(&self, shape: &ModelShape, input_scale: Scale) -> Result<QTensor, TrialError> {
        let scale = self.check(shape, input_scale)?;
        let q: Vec<i8> = match &self.data {
            TrialData::I8(v) => v.clone(),
            TrialData::F32(v) => {
                v.iter().map(|&x| (x as f64 / scale.value()).round().clamp(-128.0, 127.0) as i8).collect()
            }
        };
        Ok(QTensor::from_dense(&[self.channels, self.samples], Layout::TimeInnermost, &q, scale))
    }

    /// Real-valued samples, before any quantization.
    pub fn to_real(&self, shape: &ModelShape, input_scale: Scale) -> Result<Vec<f64>, TrialError> {
        let scale = self.check(shape, input_scale)?;
        Ok(match &self.data {
            TrialData::I8(v) => v.iter().map(|&x| x as f64 * scale.value()).collect(),
            TrialData::F32(v) => v.iter().map(|&x| x as f64).collect(),
        })
    }
}
