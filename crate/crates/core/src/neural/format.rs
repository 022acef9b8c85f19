//! Binary model files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! "G3DC"  u32 version
//! u32 x4  input dims
//! u32     layer count, then per layer a tag byte and its fields
//! u32     buffer count, then per buffer:
//!         u64 length, u32 CRC32 of (buffer index, length), f64 x length
//! u32     CRC32 of every preceding byte
//! ```

use std::path::Path;

use super::conv::KernelDims;
use super::model::{LayerSpec, ModelParams, ModelSpec};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"G3DC";
pub const VERSION: u32 = 1;

const TAG_CONV: u8 = 1;
const TAG_POOL: u8 = 2;
const TAG_FLATTEN: u8 = 3;
const TAG_DROPOUT: u8 = 4;
const TAG_DENSE: u8 = 5;
const TAG_TANH: u8 = 6;
const TAG_SOFTMAX: u8 = 7;

// Generous ceilings so a corrupt count fails cleanly instead of allocating.
const MAX_LAYERS: u32 = 1024;
const MAX_DIM: u32 = 1 << 20;

pub fn encode_model(spec: &ModelSpec, params: &ModelParams) -> Result<Vec<u8>> {
    let reference = ModelParams::zeros(spec)?;
    if !reference.same_shape(params) {
        return Err(Error::Shape("parameters do not match the model spec".into()));
    }
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    for d in spec.input {
        put_dim(&mut out, d)?;
    }
    put_u32(&mut out, spec.layers.len() as u32);
    for layer in &spec.layers {
        match layer {
            LayerSpec::Conv3d { filters, kernel } => {
                out.push(TAG_CONV);
                for d in [*filters, kernel.time, kernel.rows, kernel.cols] {
                    put_dim(&mut out, d)?;
                }
            }
            LayerSpec::MaxPool3d { window, stride } => {
                out.push(TAG_POOL);
                for d in window.iter().chain(stride) {
                    put_dim(&mut out, *d)?;
                }
            }
            LayerSpec::Flatten => out.push(TAG_FLATTEN),
            LayerSpec::Dropout { rate } => {
                out.push(TAG_DROPOUT);
                out.extend_from_slice(&rate.to_le_bytes());
            }
            LayerSpec::Dense { units } => {
                out.push(TAG_DENSE);
                put_dim(&mut out, *units)?;
            }
            LayerSpec::Tanh => out.push(TAG_TANH),
            LayerSpec::Softmax => out.push(TAG_SOFTMAX),
        }
    }
    let buffers = params.buffers();
    put_u32(&mut out, buffers.len() as u32);
    for (i, buf) in buffers.iter().enumerate() {
        out.extend_from_slice(&(buf.len() as u64).to_le_bytes());
        put_u32(&mut out, shape_crc(i, buf.len()));
        for v in buf.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    put_u32(&mut out, crc);
    Ok(out)
}

pub fn decode_model(bytes: &[u8]) -> Result<(ModelSpec, ModelParams)> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 4] = r.take(4, "magic")?.try_into().unwrap();
    if &magic != MAGIC {
        return Err(r.fail_at(0, format!("bad magic {magic:?}, expected \"G3DC\"")));
    }
    let version = r.u32("version")?;
    if version != VERSION {
        return Err(r.fail_at(4, format!("unsupported version {version}")));
    }
    let mut input = [0; 4];
    for d in &mut input {
        *d = r.dim("input dim")?;
    }
    let count = r.u32("layer count")?;
    if count > MAX_LAYERS {
        return Err(r.fail(format!("implausible layer count {count}")));
    }
    let mut layers = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let at = r.pos;
        let tag = r.take(1, "layer tag")?[0];
        let layer = match tag {
            TAG_CONV => {
                let filters = r.dim("conv filters")?;
                let (t, h, w) = (r.dim("kernel")?, r.dim("kernel")?, r.dim("kernel")?);
                LayerSpec::Conv3d { filters, kernel: KernelDims::new(t, h, w) }
            }
            TAG_POOL => {
                let mut v = [0; 6];
                for d in &mut v {
                    *d = r.dim("pool dims")?;
                }
                LayerSpec::MaxPool3d { window: [v[0], v[1], v[2]], stride: [v[3], v[4], v[5]] }
            }
            TAG_FLATTEN => LayerSpec::Flatten,
            TAG_DROPOUT => LayerSpec::Dropout { rate: r.f64("dropout rate")? },
            TAG_DENSE => LayerSpec::Dense { units: r.dim("dense units")? },
            TAG_TANH => LayerSpec::Tanh,
            TAG_SOFTMAX => LayerSpec::Softmax,
            other => return Err(r.fail_at(at, format!("unknown layer tag {other}"))),
        };
        layers.push(layer);
    }
    let spec = ModelSpec { input, layers };
    let spec_end = r.pos;
    let mut params = ModelParams::zeros(&spec).map_err(|e| r.fail_at(spec_end, format!("invalid model spec: {e}")))?;

    let n_buffers = r.u32("buffer count")? as usize;
    let expected = params.buffers().len();
    if n_buffers != expected {
        return Err(r.fail(format!("spec needs {expected} parameter buffers, file has {n_buffers}")));
    }
    for (i, buf) in params.buffers_mut().into_iter().enumerate() {
        let at = r.pos;
        let len = r.u64("buffer length")?;
        let crc = r.u32("shape checksum")?;
        if len != buf.len() as u64 {
            return Err(r.fail_at(at, format!("buffer {i} has {len} values, spec needs {}", buf.len())));
        }
        if crc != shape_crc(i, buf.len()) {
            return Err(r.fail_at(at + 8, format!("shape checksum mismatch on buffer {i}")));
        }
        for v in buf.iter_mut() {
            *v = r.f64("parameter")?;
        }
    }
    let body_end = r.pos;
    let stored = r.u32("file checksum")?;
    let actual = crc32fast::hash(&bytes[..body_end]);
    if stored != actual {
        return Err(r.fail_at(body_end, format!("file checksum {stored:08x} != computed {actual:08x}")));
    }
    if r.pos != bytes.len() {
        return Err(r.fail(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    if !params.all_finite() {
        return Err(r.fail_at(spec_end, "non-finite parameter".into()));
    }
    Ok((spec, params))
}

pub fn save_model(params: &ModelParams, spec: &ModelSpec, path: &Path) -> Result<()> {
    let bytes = encode_model(spec, params)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<(ModelParams, ModelSpec)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (spec, params) = decode_model(&bytes)?;
    Ok((params, spec))
}

fn shape_crc(index: usize, len: usize) -> u32 {
    let mut h = crc32fast::Hasher::new();
    h.update(&(index as u64).to_le_bytes());
    h.update(&(len as u64).to_le_bytes());
    h.finalize()
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_dim(out: &mut Vec<u8>, d: usize) -> Result<()> {
    let v = u32::try_from(d)
        .ok()
        .filter(|&v| v <= MAX_DIM)
        .ok_or_else(|| Error::Shape(format!("dimension {d} too large to store")))?;
    put_u32(out, v);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn fail(&self, message: String) -> Error {
        self.fail_at(self.pos, message)
    }

    fn fail_at(&self, offset: usize, message: String) -> Error {
        Error::Format { offset, message }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&[u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(self.fail(format!(
                "truncated: {what} needs {n} bytes, {} left",
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn dim(&mut self, what: &str) -> Result<usize> {
        let at = self.pos;
        let v = self.u32(what)?;
        if v > MAX_DIM {
            return Err(self.fail_at(at, format!("implausible {what} {v}")));
        }
        Ok(v as usize)
    }
}
