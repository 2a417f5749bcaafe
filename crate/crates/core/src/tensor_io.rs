//! Binary tensor files and JSON video manifests.
//!
//! Tensor layout, all integers little-endian:
//!
//! ```text
//! "AENT" | u32 version (=1) | u32 ndim | u64 dims[ndim] | u32 dtype (1=f32, 2=f64) | payload
//! ```
//!
//! The payload is the row-major element array in the same byte order.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, FormatError, Result};
use crate::timeline::{build_grid, GroundTruthAction, SnippetGrid, VideoMeta};

pub const MAGIC: [u8; 4] = *b"AENT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn code(self) -> u32 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self, FormatError> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(FormatError::UnknownDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }

    fn first_non_finite(&self) -> Option<usize> {
        match self {
            TensorData::F32(v) => v.iter().position(|x| !x.is_finite()),
            TensorData::F64(v) => v.iter().position(|x| !x.is_finite()),
        }
    }
}

/// A dense row-major tensor of finite reals.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: TensorData,
}

fn checked_numel(dims: &[usize]) -> Result<usize, FormatError> {
    if dims.is_empty() {
        return Err(FormatError::EmptyDims);
    }
    let mut n: usize = 1;
    for (index, &d) in dims.iter().enumerate() {
        if d == 0 {
            return Err(FormatError::ZeroDim { index });
        }
        n = n.checked_mul(d).ok_or(FormatError::DimOverflow)?;
    }
    Ok(n)
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self, FormatError> {
        let expected = checked_numel(&dims)?;
        if data.len() != expected {
            return Err(FormatError::LengthMismatch {
                len: data.len(),
                expected,
            });
        }
        if let Some(i) = data.first_non_finite() {
            return Err(FormatError::NonFinite(i));
        }
        Ok(Tensor { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, FormatError> {
        Tensor::new(dims, TensorData::F64(data))
    }

    pub fn from_f32(dims: Vec<usize>, data: Vec<f32>) -> Result<Self, FormatError> {
        Tensor::new(dims, TensorData::F32(data))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> Dtype {
        match self.data {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Values widened to f64 (lossless for both dtypes).
    pub fn to_f64(&self) -> Vec<f64> {
        match &self.data {
            TensorData::F32(v) => v.iter().map(|&x| f64::from(x)).collect(),
            TensorData::F64(v) => v.clone(),
        }
    }

    pub fn into_f64(self) -> Vec<f64> {
        match self.data {
            TensorData::F32(v) => v.into_iter().map(f64::from).collect(),
            TensorData::F64(v) => v,
        }
    }
}

pub fn encode_tensor(t: &Tensor) -> Vec<u8> {
    let dtype = t.dtype();
    let mut out = Vec::with_capacity(16 + 8 * t.dims.len() + dtype.size() * t.numel());
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    out.extend_from_slice(&dtype.code().to_le_bytes());
    match &t.data {
        TensorData::F32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        TensorData::F64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
    }
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FormatError> {
        let end = self.pos.checked_add(n).ok_or(FormatError::DimOverflow)?;
        if end > self.buf.len() {
            return Err(FormatError::Truncated {
                needed: end,
                found: self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FormatError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, FormatError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn decode_tensor(bytes: &[u8]) -> Result<Tensor, FormatError> {
    let mut cur = Cursor { buf: bytes, pos: 0 };
    let magic: [u8; 4] = cur.take(4)?.try_into().unwrap();
    if magic != MAGIC {
        return Err(FormatError::BadMagic(magic));
    }
    let version = cur.u32()?;
    if version != FORMAT_VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let ndim = cur.u32()? as usize;
    if ndim == 0 {
        return Err(FormatError::EmptyDims);
    }
    // Guard against absurd ndim before allocating.
    if ndim.checked_mul(8).is_none_or(|n| n > bytes.len()) {
        return Err(FormatError::Truncated {
            needed: 12 + ndim.saturating_mul(8),
            found: bytes.len(),
        });
    }
    let mut dims = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        let d = cur.u64()?;
        dims.push(usize::try_from(d).map_err(|_| FormatError::DimOverflow)?);
    }
    let dtype = Dtype::from_code(cur.u32()?)?;
    let numel = checked_numel(&dims)?;
    let nbytes = numel.checked_mul(dtype.size()).ok_or(FormatError::DimOverflow)?;
    let payload = cur.take(nbytes)?;
    if cur.pos != bytes.len() {
        return Err(FormatError::TrailingBytes(bytes.len() - cur.pos));
    }
    let data = match dtype {
        Dtype::F32 => TensorData::F32(
            payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
        Dtype::F64 => TensorData::F64(
            payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        ),
    };
    Tensor::new(dims, data)
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// followed by a rename, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.flush().map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn write_tensor(t: &Tensor, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_tensor(t))
}

pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(decode_tensor(&bytes)?)
}

/// Agent bounding box `[x1, y1, x2, y2]` in normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentBox(pub [f64; 4]);

impl AgentBox {
    pub fn x1(&self) -> f64 {
        self.0[0]
    }
    pub fn y1(&self) -> f64 {
        self.0[1]
    }
    pub fn x2(&self) -> f64 {
        self.0[2]
    }
    pub fn y2(&self) -> f64 {
        self.0[3]
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if let Some(v) = self.0.iter().find(|v| !(v.is_finite() && (0.0..=1.0).contains(*v))) {
            return Err(format!("coordinate {v} outside [0, 1]"));
        }
        if self.x1() >= self.x2() {
            return Err(format!("x1 {} must be less than x2 {}", self.x1(), self.x2()));
        }
        if self.y1() >= self.y2() {
            return Err(format!("y1 {} must be less than y2 {}", self.y1(), self.y2()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnippetEntry {
    pub index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_file: Option<String>,
    #[serde(default)]
    pub agent_boxes: Vec<AgentBox>,
}

/// One video's metadata, annotations and per-snippet detector output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub video: VideoMeta,
    pub annotations: Vec<GroundTruthAction>,
    pub snippets: Vec<SnippetEntry>,
}

impl Manifest {
    /// Enforces every invariant, reporting the first offending field path.
    pub fn validate(&self) -> Result<()> {
        self.video.validate()?;
        let grid = build_grid(&self.video)?;
        for (i, a) in self.annotations.iter().enumerate() {
            a.validate(self.video.duration_seconds)
                .map_err(|(field, msg)| Error::validation(format!("annotations[{i}].{field}"), msg))?;
        }
        let mut seen = HashSet::new();
        for (i, s) in self.snippets.iter().enumerate() {
            if s.index >= grid.len() {
                return Err(Error::validation(
                    format!("snippets[{i}].index"),
                    format!("{} outside [0, {})", s.index, grid.len()),
                ));
            }
            if !seen.insert(s.index) {
                return Err(Error::validation(
                    format!("snippets[{i}].index"),
                    format!("duplicate snippet index {}", s.index),
                ));
            }
            for (k, b) in s.agent_boxes.iter().enumerate() {
                b.validate()
                    .map_err(|msg| Error::validation(format!("snippets[{i}].agent_boxes[{k}]"), msg))?;
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<SnippetGrid> {
        build_grid(&self.video)
    }

    pub fn snippet(&self, index: usize) -> Option<&SnippetEntry> {
        self.snippets.iter().find(|s| s.index == index)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let manifest: Manifest = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::validation(path, e.into_inner().to_string())
    })?;
    manifest.validate()?;
    Ok(manifest)
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), m.to_json().as_bytes())
}
