//! Versioned binary checkpoints.
//!
//! Layout (little endian):
//!
//! ```text
//! b"SWISCKPT"  u32 version  u64 config_hash  u64 epoch
//! str backbone  u32 in_channels  u32 projector_hidden  f64 bn_momentum
//! u32 n_tensors, then per tensor: str name  u32 ndim  u64 dims[ndim]  f32 data[..]
//! u64 FNV-1a of everything above
//! ```
//!
//! `str` is a `u32` byte length followed by UTF-8.

use std::path::Path;

use swis_core::encoder::{fnv1a, BackboneKind, EncoderConfig, PatchEncoder};

use crate::error::{Error, IoContext, Result};

const MAGIC: &[u8; 8] = b"SWISCKPT";
pub const VERSION: u32 = 1;

pub type NamedTensor = (String, Vec<usize>, Vec<f32>);

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub epoch: u64,
    pub config: EncoderConfig,
    pub tensors: Vec<NamedTensor>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| Error::IncompatibleCheckpoint("truncated file".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::IncompatibleCheckpoint("invalid UTF-8".into()))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn from_encoder(encoder: &PatchEncoder, epoch: u64) -> Self {
        Self {
            epoch,
            config: encoder.config,
            tensors: encoder.named_tensors(),
        }
    }

    pub fn config_hash(&self) -> u64 {
        self.config.hash()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.config_hash().to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        put_str(&mut out, self.config.backbone.name());
        out.extend_from_slice(&(self.config.in_channels as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.projector_hidden as u32).to_le_bytes());
        out.extend_from_slice(&(self.config.bn_momentum as f64).to_le_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, shape, data) in &self.tensors {
            put_str(&mut out, name);
            out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
            for &d in shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let sum = fnv1a(&out);
        out.extend_from_slice(&sum.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |m: String| Error::IncompatibleCheckpoint(m);
        if bytes.len() < 8 + 4 + 8 || &bytes[..8] != MAGIC {
            return Err(bad("not a checkpoint file".into()));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        if fnv1a(body) != u64::from_le_bytes(tail.try_into().unwrap()) {
            return Err(bad("checksum mismatch".into()));
        }
        let mut r = Reader { buf: body, pos: 8 };
        let version = r.u32()?;
        if version != VERSION {
            return Err(bad(format!("format version {version}, expected {VERSION}")));
        }
        let hash = r.u64()?;
        let epoch = r.u64()?;
        let backbone: BackboneKind = r.str()?.parse().map_err(|e: swis_core::Error| bad(e.to_string()))?;
        let config = EncoderConfig {
            backbone,
            in_channels: r.u32()? as usize,
            projector_hidden: r.u32()? as usize,
            bn_momentum: r.f64()? as f32,
        };
        if config.hash() != hash {
            return Err(bad(format!(
                "stored config hash {hash:016x} does not match its model description {:016x}",
                config.hash()
            )));
        }
        let n = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            let name = r.str()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(8));
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .ok_or_else(|| bad(format!("tensor {name} is too large")))?;
            let raw = r.take(len.checked_mul(4).ok_or_else(|| bad("tensor too large".into()))?)?;
            let data = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
            tensors.push((name, shape, data));
        }
        if r.pos != body.len() {
            return Err(bad("trailing bytes".into()));
        }
        Ok(Self { epoch, config, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::write_atomic(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).context(|| format!("reading checkpoint {}", path.display()))?;
        Self::from_bytes(&bytes)
    }

    /// Fail unless the checkpoint was produced for a model with `expected`'s
    /// parameter layout.
    pub fn check_compatible(&self, expected: &EncoderConfig) -> Result<()> {
        if self.config_hash() != expected.hash() {
            return Err(Error::IncompatibleCheckpoint(format!(
                "checkpoint holds {} (hash {:016x}), configuration asks for {} (hash {:016x})",
                self.config.canonical(),
                self.config_hash(),
                expected.canonical(),
                expected.hash()
            )));
        }
        Ok(())
    }

    pub fn into_encoder(self) -> Result<PatchEncoder> {
        let mut enc = PatchEncoder::new(self.config, 0)?;
        enc.load_tensors(&self.tensors)
            .map_err(|e| Error::IncompatibleCheckpoint(e.to_string()))?;
        Ok(enc)
    }
}
