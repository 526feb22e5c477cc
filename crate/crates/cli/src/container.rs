//! The tensor container: a minimal, dependency-free binary format for
//! exchanging images, labels, and spike traces between commands.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "FSTA"          magic, 4 bytes
//! version   u8    currently 1
//! dtype     u8    0 = f32, 1 = f64, 2 = u8 restricted to {0, 1}
//! rank      u8
//! extents   u32 × rank
//! payload   raw elements, row-major
//! ```
//!
//! A rank-4 header is therefore 4 + 1 + 1 + 1 + 16 = 23 bytes. Reads check
//! magic, version, dtype, and that the payload length matches the extents
//! exactly (no trailing bytes), so a roundtrip is bit-exact by construction.

use std::fmt;
use std::path::Path;

use fsta_core::Tensor;

pub const MAGIC: [u8; 4] = *b"FSTA";
pub const VERSION: u8 = 1;

#[derive(Debug)]
pub enum ContainerError {
    Io { path: String, message: String },
    BadMagic { found: [u8; 4] },
    UnsupportedVersion { found: u8 },
    UnsupportedDtype { code: u8 },
    Truncated { needed: usize, available: usize },
    PayloadLength { expected: usize, actual: usize },
    NonBinaryByte { index: usize, value: u8 },
    ExtentOverflow { extent: usize },
    LengthMismatch { shape: Vec<usize>, len: usize },
}

impl fmt::Display for ContainerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContainerError::Io { path, message } => write!(f, "{path}: {message}"),
            ContainerError::BadMagic { found } => {
                write!(f, "bad container magic {found:?}, expected {MAGIC:?}")
            }
            ContainerError::UnsupportedVersion { found } => {
                write!(f, "unsupported container version {found} (this reader handles {VERSION})")
            }
            ContainerError::UnsupportedDtype { code } => {
                write!(f, "unsupported dtype code {code} (known: 0 = f32, 1 = f64, 2 = u8-binary)")
            }
            ContainerError::Truncated { needed, available } => {
                write!(f, "container truncated: need {needed} more bytes, {available} available")
            }
            ContainerError::PayloadLength { expected, actual } => {
                write!(f, "payload length mismatch: extents imply {expected} bytes, found {actual}")
            }
            ContainerError::NonBinaryByte { index, value } => {
                write!(f, "binary payload holds {value} at element {index}; only 0/1 allowed")
            }
            ContainerError::ExtentOverflow { extent } => {
                write!(f, "extent {extent} does not fit the 32-bit header field")
            }
            ContainerError::LengthMismatch { shape, len } => {
                write!(f, "shape {shape:?} does not match {len} elements")
            }
        }
    }
}

impl std::error::Error for ContainerError {}

/// Element storage, mirroring the three dtype codes.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    F64(Vec<f64>),
    /// Spike events; every byte must be 0 or 1.
    Binary(Vec<u8>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::F64(v) => v.len(),
            Payload::Binary(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn dtype_code(&self) -> u8 {
        match self {
            Payload::F32(_) => 0,
            Payload::F64(_) => 1,
            Payload::Binary(_) => 2,
        }
    }

    fn elem_bytes(code: u8) -> Option<usize> {
        match code {
            0 => Some(4),
            1 => Some(8),
            2 => Some(1),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub shape: Vec<usize>,
    pub payload: Payload,
}

impl Container {
    pub fn new(shape: Vec<usize>, payload: Payload) -> Result<Self, ContainerError> {
        let numel: usize = shape.iter().product();
        if numel != payload.len() {
            return Err(ContainerError::LengthMismatch { shape, len: payload.len() });
        }
        if let Payload::Binary(bytes) = &payload {
            if let Some(i) = bytes.iter().position(|&b| b > 1) {
                return Err(ContainerError::NonBinaryByte { index: i, value: bytes[i] });
            }
        }
        Ok(Container { shape, payload })
    }

    pub fn from_tensor(t: &Tensor<f64>) -> Self {
        Container {
            shape: t.shape().to_vec(),
            payload: Payload::F64(t.data().to_vec()),
        }
    }

    /// Widen to an `f64` tensor: f32 exactly, binary bytes as 0.0/1.0.
    pub fn to_tensor(&self) -> Tensor<f64> {
        let data: Vec<f64> = match &self.payload {
            Payload::F32(v) => v.iter().map(|&x| x as f64).collect(),
            Payload::F64(v) => v.clone(),
            Payload::Binary(v) => v.iter().map(|&b| b as f64).collect(),
        };
        Tensor::from_vec(self.shape.clone(), data).expect("shape/payload agreement checked")
    }

    pub fn numel(&self) -> usize {
        self.payload.len()
    }
}

pub fn encode(container: &Container) -> Result<Vec<u8>, ContainerError> {
    let rank = container.shape.len();
    let elem = Payload::elem_bytes(container.payload.dtype_code()).expect("own dtype");
    let mut bytes = Vec::with_capacity(7 + 4 * rank + elem * container.numel());
    bytes.extend_from_slice(&MAGIC);
    bytes.push(VERSION);
    bytes.push(container.payload.dtype_code());
    bytes.push(rank as u8);
    for &extent in &container.shape {
        let e = u32::try_from(extent)
            .map_err(|_| ContainerError::ExtentOverflow { extent })?;
        bytes.extend_from_slice(&e.to_le_bytes());
    }
    match &container.payload {
        Payload::F32(v) => {
            for x in v {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        Payload::F64(v) => {
            for x in v {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        Payload::Binary(v) => bytes.extend_from_slice(v),
    }
    Ok(bytes)
}

pub fn decode(bytes: &[u8]) -> Result<Container, ContainerError> {
    let take = |offset: usize, len: usize| -> Result<&[u8], ContainerError> {
        bytes.get(offset..offset + len).ok_or(ContainerError::Truncated {
            needed: offset + len - bytes.len().min(offset + len),
            available: bytes.len().saturating_sub(offset),
        })
    };

    let magic = take(0, 4)?;
    if magic != MAGIC {
        return Err(ContainerError::BadMagic { found: [magic[0], magic[1], magic[2], magic[3]] });
    }
    let version = take(4, 1)?[0];
    if version != VERSION {
        return Err(ContainerError::UnsupportedVersion { found: version });
    }
    let dtype = take(5, 1)?[0];
    let elem = Payload::elem_bytes(dtype).ok_or(ContainerError::UnsupportedDtype { code: dtype })?;
    let rank = take(6, 1)?[0] as usize;

    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        let word = take(7 + 4 * i, 4)?;
        shape.push(u32::from_le_bytes([word[0], word[1], word[2], word[3]]) as usize);
    }
    let numel: usize = shape.iter().product();
    let payload_offset = 7 + 4 * rank;
    let actual = bytes.len() - payload_offset.min(bytes.len());
    if actual != numel * elem {
        return Err(ContainerError::PayloadLength { expected: numel * elem, actual });
    }
    let raw = &bytes[payload_offset..];

    let payload = match dtype {
        0 => Payload::F32(
            raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect(),
        ),
        1 => Payload::F64(
            raw.chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
        ),
        2 => Payload::Binary(raw.to_vec()),
        _ => unreachable!("dtype validated above"),
    };
    Container::new(shape, payload)
}

pub fn write_container(path: &Path, container: &Container) -> Result<(), ContainerError> {
    let bytes = encode(container)?;
    std::fs::write(path, bytes).map_err(|e| ContainerError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn read_container(path: &Path) -> Result<Container, ContainerError> {
    let bytes = std::fs::read(path).map_err(|e| ContainerError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    decode(&bytes)
}
