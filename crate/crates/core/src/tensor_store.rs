//! Checkpoint container format.
//!
//! Layout: the 8-byte magic `MAPCKPT1`, a little-endian `u64` byte length,
//! a UTF-8 JSON manifest of exactly that length, then the raw concatenated
//! tensor data. All numeric payloads are little-endian IEEE-754; BF16 is the
//! upper 16 bits of a binary32 and is decode-only.
//!
//! Manifest JSON:
//! `{"tensors": [{"name", "dtype", "shape", "offset", "byte_len"}], "meta": {"step"?, "tokens"?}}`
//! with `offset` relative to the start of the data section.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"MAPCKPT1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Dtype {
    F32,
    F64,
    Bf16,
}

impl Dtype {
    pub fn size_bytes(self) -> u64 {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::Bf16 => 2,
        }
    }

    /// BF16 payloads can be decoded but never encoded from values.
    pub fn is_writable(self) -> bool {
        !matches!(self, Dtype::Bf16)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::Bf16 => "bf16",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Dtype::F32),
            "f64" => Ok(Dtype::F64),
            "bf16" => Ok(Dtype::Bf16),
            other => Err(Error::UnsupportedDtype {
                found: other.to_string(),
            }),
        }
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorMeta {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<u64>,
    /// Byte offset into the data section.
    pub offset: u64,
    pub byte_len: u64,
}

impl TensorMeta {
    pub fn element_count(&self) -> Option<u64> {
        self.shape.iter().try_fold(1u64, |acc, &d| acc.checked_mul(d))
    }
}

/// Key-value annotations carried in the manifest. `step` and `tokens` are the
/// well-known keys; anything else (e.g. merge provenance) rides in `extra`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArchiveMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tokens: Option<u64>,
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

/// One checkpoint: a validated manifest plus the raw data section.
/// Immutable after open; concurrent readers are safe.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorArchive {
    manifest: Vec<TensorMeta>,
    data: Vec<u8>,
    meta: ArchiveMeta,
}

#[derive(Serialize, Deserialize)]
struct TensorMetaDoc {
    name: String,
    dtype: String,
    shape: Vec<u64>,
    offset: u64,
    byte_len: u64,
}

#[derive(Serialize, Deserialize)]
struct ManifestDoc {
    tensors: Vec<TensorMetaDoc>,
    #[serde(default)]
    meta: ArchiveMeta,
}

impl TensorArchive {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 || &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::MalformedManifest(
                "file does not start with the MAPCKPT1 magic and a manifest length".into(),
            ));
        }
        let len_bytes: [u8; 8] = bytes[8..16].try_into().unwrap();
        let manifest_len = u64::from_le_bytes(len_bytes) as usize;
        let data_start = 16usize
            .checked_add(manifest_len)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::MalformedManifest("manifest length exceeds file size".into())
            })?;
        let doc: ManifestDoc = serde_json::from_slice(&bytes[16..data_start])
            .map_err(|e| Error::MalformedManifest(format!("manifest JSON: {e}")))?;
        let data = bytes[data_start..].to_vec();

        let mut manifest = Vec::with_capacity(doc.tensors.len());
        for t in doc.tensors {
            manifest.push(TensorMeta {
                name: t.name,
                dtype: Dtype::parse(&t.dtype)?,
                shape: t.shape,
                offset: t.offset,
                byte_len: t.byte_len,
            });
        }
        let archive = TensorArchive {
            manifest,
            data,
            meta: doc.meta,
        };
        archive.validate()?;
        Ok(archive)
    }

    fn validate(&self) -> Result<()> {
        let mut names = BTreeSet::new();
        let mut spans: Vec<(u64, u64)> = Vec::with_capacity(self.manifest.len());
        for t in &self.manifest {
            if t.name.is_empty() {
                return Err(Error::MalformedManifest("empty tensor name".into()));
            }
            if !names.insert(t.name.as_str()) {
                return Err(Error::MalformedManifest(format!(
                    "duplicate tensor name {:?}",
                    t.name
                )));
            }
            let count = t.element_count().ok_or_else(|| {
                Error::MalformedManifest(format!("shape overflow for tensor {:?}", t.name))
            })?;
            let expected = count.checked_mul(t.dtype.size_bytes()).ok_or_else(|| {
                Error::MalformedManifest(format!("byte length overflow for tensor {:?}", t.name))
            })?;
            if expected != t.byte_len {
                return Err(Error::MalformedManifest(format!(
                    "tensor {:?}: byte_len {} but shape {:?} with dtype {} implies {}",
                    t.name, t.byte_len, t.shape, t.dtype, expected
                )));
            }
            let end = t.offset.checked_add(t.byte_len).ok_or_else(|| {
                Error::MalformedManifest(format!("offset overflow for tensor {:?}", t.name))
            })?;
            if end > self.data.len() as u64 {
                return Err(Error::MalformedManifest(format!(
                    "tensor {:?} region [{}, {}) exceeds data section of {} bytes",
                    t.name, t.offset, end, self.data.len()
                )));
            }
            if t.byte_len > 0 {
                spans.push((t.offset, end));
            }
        }
        spans.sort_unstable();
        for pair in spans.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::MalformedManifest(format!(
                    "overlapping tensor data regions [{}, {}) and [{}, {})",
                    pair[0].0, pair[0].1, pair[1].0, pair[1].1
                )));
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> &[TensorMeta] {
        &self.manifest
    }

    pub fn meta(&self) -> &ArchiveMeta {
        &self.meta
    }

    pub fn tensor_meta(&self, name: &str) -> Option<&TensorMeta> {
        self.manifest.iter().find(|t| t.name == name)
    }

    pub fn raw_bytes(&self, name: &str) -> Result<&[u8]> {
        let meta = self.tensor_meta(name).ok_or_else(|| Error::NameNotFound {
            name: name.to_string(),
        })?;
        let start = meta.offset as usize;
        Ok(&self.data[start..start + meta.byte_len as usize])
    }

    /// Reads a tensor widened to f64. F32 -> F64 and BF16 -> F64 conversions
    /// are exact, so no information is lost.
    pub fn read_tensor(&self, name: &str) -> Result<Vec<f64>> {
        let meta = self.tensor_meta(name).ok_or_else(|| Error::NameNotFound {
            name: name.to_string(),
        })?;
        let bytes = self.raw_bytes(name)?;
        let values = match meta.dtype {
            Dtype::F64 => bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
            Dtype::F32 => bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
                .collect(),
            Dtype::Bf16 => bytes
                .chunks_exact(2)
                .map(|c| {
                    let half = u16::from_le_bytes(c.try_into().unwrap());
                    f32::from_bits((half as u32) << 16) as f64
                })
                .collect(),
        };
        Ok(values)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let doc = ManifestDoc {
            tensors: self
                .manifest
                .iter()
                .map(|t| TensorMetaDoc {
                    name: t.name.clone(),
                    dtype: t.dtype.as_str().to_string(),
                    shape: t.shape.clone(),
                    offset: t.offset,
                    byte_len: t.byte_len,
                })
                .collect(),
            meta: self.meta.clone(),
        };
        let manifest_json = serde_json::to_vec(&doc).expect("manifest serialization");
        let mut out = Vec::with_capacity(16 + manifest_json.len() + self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest_json.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest_json);
        out.extend_from_slice(&self.data);
        out
    }

    /// Whole-file atomic write: temp file in the target directory, then rename.
    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
        let mut tmp = tempfile::NamedTempFile::new_in(dir.unwrap_or_else(|| Path::new(".")))
            .map_err(|e| Error::io(path, e))?;
        tmp.write_all(&self.to_bytes())
            .map_err(|e| Error::io(path, e))?;
        tmp.persist(path)
            .map_err(|e| Error::io(path, e.error))?;
        Ok(())
    }
}

/// Input for building an archive from values.
#[derive(Debug, Clone)]
pub struct TensorInit {
    pub name: String,
    pub dtype: Dtype,
    pub shape: Vec<u64>,
    pub values: Vec<f64>,
}

impl TensorInit {
    pub fn new(
        name: impl Into<String>,
        dtype: Dtype,
        shape: Vec<u64>,
        values: Vec<f64>,
    ) -> Self {
        TensorInit {
            name: name.into(),
            dtype,
            shape,
            values,
        }
    }
}

/// Builds an archive from values, assigning contiguous offsets in input order.
/// F32 values are rounded to nearest-even on encode; F64 is bit-exact.
pub fn build_archive(tensors: &[TensorInit], meta: ArchiveMeta) -> Result<TensorArchive> {
    let mut manifest = Vec::with_capacity(tensors.len());
    let mut data = Vec::new();
    let mut seen = BTreeSet::new();
    for t in tensors {
        if t.name.is_empty() {
            return Err(Error::Domain("tensor name must be non-empty".into()));
        }
        if !seen.insert(t.name.as_str()) {
            return Err(Error::Domain(format!("duplicate tensor name {:?}", t.name)));
        }
        if !t.dtype.is_writable() {
            return Err(Error::UnwritableDtype {
                dtype: t.dtype.to_string(),
            });
        }
        let count = t
            .shape
            .iter()
            .try_fold(1u64, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Domain(format!("shape overflow for tensor {:?}", t.name)))?;
        if count != t.values.len() as u64 {
            return Err(Error::Domain(format!(
                "tensor {:?}: {} values supplied for shape {:?} (expected {})",
                t.name,
                t.values.len(),
                t.shape,
                count
            )));
        }
        let offset = data.len() as u64;
        match t.dtype {
            Dtype::F64 => {
                for &v in &t.values {
                    data.extend_from_slice(&v.to_le_bytes());
                }
            }
            Dtype::F32 => {
                for &v in &t.values {
                    data.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            Dtype::Bf16 => unreachable!("rejected above"),
        }
        manifest.push(TensorMeta {
            name: t.name.clone(),
            dtype: t.dtype,
            shape: t.shape.clone(),
            offset,
            byte_len: data.len() as u64 - offset,
        });
    }
    Ok(TensorArchive {
        manifest,
        data,
        meta,
    })
}

/// Builds and atomically writes an archive in one step.
pub fn write_archive(
    path: impl AsRef<Path>,
    tensors: &[TensorInit],
    meta: ArchiveMeta,
) -> Result<()> {
    build_archive(tensors, meta)?.write(path)
}

/// One schema difference between archives being merged.
#[derive(Debug, Clone, PartialEq)]
pub enum CompatIssue {
    MissingTensor {
        archive: usize,
        name: String,
    },
    ExtraTensor {
        archive: usize,
        name: String,
    },
    ShapeMismatch {
        name: String,
        reference: Vec<u64>,
        archive: usize,
        found: Vec<u64>,
    },
    DtypeMismatch {
        name: String,
        reference: Dtype,
        archive: usize,
        found: Dtype,
    },
}

impl fmt::Display for CompatIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CompatIssue::MissingTensor { archive, name } => {
                write!(f, "archive {archive} is missing tensor {name:?}")
            }
            CompatIssue::ExtraTensor { archive, name } => {
                write!(f, "archive {archive} has extra tensor {name:?}")
            }
            CompatIssue::ShapeMismatch {
                name,
                reference,
                archive,
                found,
            } => write!(
                f,
                "tensor {name:?}: shape {reference:?} in archive 0 but {found:?} in archive {archive}"
            ),
            CompatIssue::DtypeMismatch {
                name,
                reference,
                archive,
                found,
            } => write!(
                f,
                "tensor {name:?}: dtype {reference} in archive 0 but {found} in archive {archive}"
            ),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CompatReport {
    pub issues: Vec<CompatIssue>,
}

impl CompatReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for CompatReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("OK");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

/// Checks that all archives share identical tensor name sets, shapes, and
/// dtypes. Mismatches are report entries, not failures; archive 0 is the
/// reference the others are compared against.
pub fn validate_compat(archives: &[&TensorArchive]) -> Result<CompatReport> {
    if archives.is_empty() {
        return Err(Error::Domain(
            "validate_compat requires at least one archive".into(),
        ));
    }
    let reference = archives[0];
    let mut issues = Vec::new();
    for (idx, other) in archives.iter().enumerate().skip(1) {
        for t in reference.tensors() {
            match other.tensor_meta(&t.name) {
                None => issues.push(CompatIssue::MissingTensor {
                    archive: idx,
                    name: t.name.clone(),
                }),
                Some(o) => {
                    if o.shape != t.shape {
                        issues.push(CompatIssue::ShapeMismatch {
                            name: t.name.clone(),
                            reference: t.shape.clone(),
                            archive: idx,
                            found: o.shape.clone(),
                        });
                    }
                    if o.dtype != t.dtype {
                        issues.push(CompatIssue::DtypeMismatch {
                            name: t.name.clone(),
                            reference: t.dtype,
                            archive: idx,
                            found: o.dtype,
                        });
                    }
                }
            }
        }
        for o in other.tensors() {
            if reference.tensor_meta(&o.name).is_none() {
                issues.push(CompatIssue::ExtraTensor {
                    archive: idx,
                    name: o.name.clone(),
                });
            }
        }
    }
    Ok(CompatReport { issues })
}
