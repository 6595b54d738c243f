//! Versioned binary checkpoints.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "PDRCKPT\0" | version u32
//! input_dim u32 | n_hidden u32 | hidden u32 × n_hidden | embed_dim u32
//! num_classes u32 | voxel_size f64
//! n_layers u32 | (in u32, out u32) × n_layers
//! per layer: weight f32 × in·out, bias f32 × out   (declaration order)
//! has_bank u8 | [momentum f64 | initialized u8 × C | prototypes f32 × C·D]
//! ```

use std::path::Path;

use crate::bank::MemoryBank;
use crate::error::{Error, Result};
use crate::matrix::Mat;
use crate::model::{Linear, Model, ModelConfig};

pub const MAGIC: &[u8; 8] = b"PDRCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: Model,
    pub bank: Option<MemoryBank>,
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

pub fn encode(model: &Model, bank: Option<&MemoryBank>) -> Vec<u8> {
    let cfg = model.config();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    put_u32(&mut out, cfg.input_dim);
    put_u32(&mut out, cfg.hidden.len());
    cfg.hidden.iter().for_each(|&h| put_u32(&mut out, h));
    put_u32(&mut out, cfg.embed_dim);
    put_u32(&mut out, cfg.num_classes);
    out.extend_from_slice(&cfg.voxel_size.to_le_bytes());
    put_u32(&mut out, model.layers().len());
    for l in model.layers() {
        put_u32(&mut out, l.in_dim);
        put_u32(&mut out, l.out_dim);
    }
    for l in model.layers() {
        for v in l.weight.iter().chain(&l.bias) {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }
    match bank {
        None => out.push(0),
        Some(b) => {
            out.push(1);
            out.extend_from_slice(&b.momentum().to_le_bytes());
            out.extend(b.initialized().iter().map(|&i| i as u8));
            for v in b.prototypes().as_slice() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Format("checkpoint is truncated".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f32(&mut self) -> Result<f64> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()) as f64)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f32()).collect()
    }
}

/// Caps header counts so a corrupt file cannot request huge allocations.
const MAX_DIM: usize = 1 << 20;

fn dim(v: usize, what: &str) -> Result<usize> {
    if v > MAX_DIM {
        return Err(Error::Format(format!("implausible {what} {v}")));
    }
    Ok(v)
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(MAGIC.len())? != MAGIC {
        return Err(Error::Format("not a checkpoint (bad magic)".into()));
    }
    let version = r.u32()? as u32;
    if version != VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let input_dim = dim(r.u32()?, "input width")?;
    let n_hidden = dim(r.u32()?, "hidden layer count")?;
    let hidden = (0..n_hidden)
        .map(|_| r.u32().and_then(|h| dim(h, "hidden width")))
        .collect::<Result<Vec<_>>>()?;
    let embed_dim = dim(r.u32()?, "embedding width")?;
    let num_classes = dim(r.u32()?, "class count")?;
    let voxel_size = r.f64()?;
    let config = ModelConfig {
        input_dim,
        hidden,
        embed_dim,
        num_classes,
        voxel_size,
    };
    config
        .validate()
        .map_err(|e| Error::Format(format!("bad model header: {e}")))?;

    let n_layers = dim(r.u32()?, "layer count")?;
    let shapes = (0..n_layers)
        .map(|_| Ok((r.u32()?, r.u32()?)))
        .collect::<Result<Vec<_>>>()?;
    if shapes != config.layer_shapes() {
        return Err(Error::Format("layer shapes do not match the model header".into()));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for (i, o) in shapes {
        let mut l = Linear::zeros(i, o);
        l.weight = r.f32s(i * o)?;
        l.bias = r.f32s(o)?;
        layers.push(l);
    }
    let model = Model::from_layers(config, layers).map_err(|e| Error::Format(e.to_string()))?;

    let bank = match r.u8()? {
        0 => None,
        1 => {
            let momentum = r.f64()?;
            let initialized = (0..num_classes)
                .map(|_| match r.u8()? {
                    0 => Ok(false),
                    1 => Ok(true),
                    b => Err(Error::Format(format!("bad bank flag {b}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let protos = Mat::from_vec(num_classes, embed_dim, r.f32s(num_classes * embed_dim)?);
            Some(MemoryBank::from_parts(protos, momentum, initialized).map_err(|e| Error::Format(e.to_string()))?)
        }
        b => return Err(Error::Format(format!("bad bank marker {b}"))),
    };
    if r.pos != bytes.len() {
        return Err(Error::Format("trailing bytes after checkpoint".into()));
    }
    Ok(Checkpoint { model, bank })
}

pub fn save(path: impl AsRef<Path>, model: &Model, bank: Option<&MemoryBank>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(model, bank)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}
