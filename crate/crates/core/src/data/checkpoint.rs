//! Binary checkpoint: header, model configuration, named tensors, optimizer moments.
//!
//! ```text
//! "GRRN" u32:version u32:len config-text
//! u64:step u32:epoch u8:bn_frozen
//! u32:count { u16:len name u8:rank u32*rank:extents f32*n:data }*count
//! u64:adam_step u8:has_moments [ { f32*n:m f32*n:v }*count ]
//! ```
//! All integers and floats are little-endian.

use std::io::Write;
use std::path::Path;

use crate::error::{GrrnError, Result};
use crate::model::{Grrn, ModelConfig, ParamStore};
use crate::tensor::Tensor;
use crate::training::OptimizerState;

pub const MAGIC: &[u8; 4] = b"GRRN";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: Grrn<f32>,
    pub optimizer: OptimizerState<f32>,
    /// Optimizer steps taken so far.
    pub step: u64,
    /// Epochs fully completed.
    pub epoch: u32,
}

impl Checkpoint {
    pub fn new(model: Grrn<f32>) -> Self {
        let optimizer = OptimizerState::new(model.params());
        Checkpoint {
            model,
            optimizer,
            step: 0,
            epoch: 0,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        let cfg = self.model.config().to_text();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.push(u8::from(self.model.is_bn_frozen()));
        let entries = self.model.params().entries();
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for e in entries {
            out.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(e.value.rank() as u8);
            for &d in e.value.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            put_floats(&mut out, e.value.data());
        }
        out.extend_from_slice(&self.optimizer.step.to_le_bytes());
        out.push(1);
        for (m, v) in self.optimizer.m.iter().zip(&self.optimizer.v) {
            put_floats(&mut out, m.data());
            put_floats(&mut out, v.data());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(r.error_at(0, "bad magic, not a checkpoint"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(r.error_at(4, &format!("unsupported version {version}")));
        }
        let cfg_len = r.u32()? as usize;
        let cfg_at = r.pos;
        let cfg_text = std::str::from_utf8(r.take(cfg_len)?).map_err(|_| r.error_at(cfg_at, "config is not UTF-8"))?;
        let config = ModelConfig::from_text(cfg_text).map_err(|e| r.error_at(cfg_at, &e.to_string()))?;
        let step = r.u64()?;
        let epoch = r.u32()?;
        let frozen = match r.u8()? {
            0 => false,
            1 => true,
            b => return Err(r.error_at(r.pos - 1, &format!("bad frozen flag {b}"))),
        };
        let template = Grrn::<f32>::new(config.clone(), 0).map_err(|e| r.error_at(cfg_at, &e.to_string()))?;
        let count_at = r.pos;
        let count = r.u32()? as usize;
        if count != template.params().len() {
            return Err(r.error_at(
                count_at,
                &format!("{count} tensors, configuration needs {}", template.params().len()),
            ));
        }
        let mut params = ParamStore::new();
        for want in template.params().entries() {
            let at = r.pos;
            let name_len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?).map_err(|_| r.error_at(at, "tensor name is not UTF-8"))?;
            let rank = r.u8()? as usize;
            let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            if name != want.name || shape != want.value.shape() {
                return Err(r.error_at(
                    at,
                    &format!(
                        "tensor {name:?} {shape:?} does not match expected {:?} {:?}",
                        want.name,
                        want.value.shape()
                    ),
                ));
            }
            let data = r.floats(want.value.len())?;
            params
                .add(name, want.kind, Tensor::new(&shape, data)?)
                .map_err(|e| r.error_at(at, &e.to_string()))?;
        }
        let mut optimizer = OptimizerState::new(&params);
        optimizer.step = r.u64()?;
        match r.u8()? {
            0 => {}
            1 => {
                for i in 0..params.len() {
                    let shape = params.entries()[i].value.shape().to_vec();
                    let n = params.entries()[i].value.len();
                    optimizer.m[i] = Tensor::new(&shape, r.floats(n)?)?;
                    optimizer.v[i] = Tensor::new(&shape, r.floats(n)?)?;
                }
            }
            b => return Err(r.error_at(r.pos - 1, &format!("bad moments flag {b}"))),
        }
        if r.pos != bytes.len() {
            return Err(r.error_at(r.pos, "trailing bytes after checkpoint"));
        }
        let model = Grrn::from_params(config, params, frozen)?;
        Ok(Checkpoint {
            model,
            optimizer,
            step,
            epoch,
        })
    }
}

fn put_floats(out: &mut Vec<u8>, data: &[f32]) {
    out.reserve(data.len() * 4);
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn error_at(&self, offset: usize, message: &str) -> GrrnError {
        GrrnError::Format {
            offset,
            message: message.to_string(),
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            self.error_at(self.pos, &format!("truncated: needed {n} bytes, {} left", self.bytes.len() - self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn floats(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| self.error_at(self.pos, "tensor too large"))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect())
    }
}

/// Write atomically: a temporary sibling file renamed over `path`.
pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| GrrnError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = std::fs::File::create(&tmp).map_err(|e| GrrnError::io(&tmp, e))?;
    f.write_all(&ckpt.to_bytes()).map_err(|e| GrrnError::io(&tmp, e))?;
    f.sync_all().map_err(|e| GrrnError::io(&tmp, e))?;
    drop(f);
    std::fs::rename(&tmp, path).map_err(|e| GrrnError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(|e| GrrnError::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
