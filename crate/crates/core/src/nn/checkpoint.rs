//! Model checkpoints.
//!
//! ```text
//! "ACPANET1"       8 octets
//! version          u16 LE (1)
//! config length    u32 LE, then that many octets of key = value text
//! tensor count     u32 LE
//! per tensor       name length u16 LE, name, rank u8, dims u32 LE each,
//!                  dtype u8 (0 = f64), values LE
//! ```
//!
//! Tensors are parameters followed by BatchNorm running statistics, both in
//! the model's canonical order. Values are stored bit for bit.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::model::{Model, ModelConfig};
use super::tensor::Tensor;
use super::NnError;
use crate::kv::KvDoc;

pub const CKPT_MAGIC: [u8; 8] = *b"ACPANET1";
pub const CKPT_VERSION: u16 = 1;
const DTYPE_F64: u8 = 0;

pub fn write_checkpoint<W: Write>(mut w: W, model: &Model) -> Result<(), NnError> {
    let cfg = model.config.to_kv().to_text();
    w.write_all(&CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    w.write_all(&(cfg.len() as u32).to_le_bytes())?;
    w.write_all(cfg.as_bytes())?;
    let params = model.named_params();
    let buffers = model.named_buffers();
    let tensors = params
        .iter()
        .map(|(n, p)| (n, &p.value))
        .chain(buffers.iter().map(|(n, t)| (n, *t)));
    w.write_all(&((params.len() + buffers.len()) as u32).to_le_bytes())?;
    for (name, t) in tensors {
        w.write_all(&(name.len() as u16).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        w.write_all(&[t.shape().len() as u8])?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes())?;
        }
        w.write_all(&[DTYPE_F64])?;
        for v in t.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], NnError> {
        if self.buf.len() < n {
            return Err(NnError::Truncated(what));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, NnError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Model, NnError> {
    let mut r = Reader { buf: bytes };
    if r.take(8, "header")? != CKPT_MAGIC {
        return Err(NnError::BadMagic);
    }
    let version = r.u16("header")?;
    if version != CKPT_VERSION {
        return Err(NnError::VersionMismatch(version));
    }
    let cfg_len = r.u32("header")? as usize;
    let text = std::str::from_utf8(r.take(cfg_len, "config")?)
        .map_err(|_| NnError::BadConfig("checkpoint config is not UTF-8".into()))?;
    let config = ModelConfig::from_kv(&KvDoc::parse(text)?)?;
    let mut model = Model::new(config, 0)?;

    let count = r.u32("tensor count")? as usize;
    let names: Vec<String> = model
        .named_params()
        .into_iter()
        .map(|(n, _)| n)
        .chain(model.named_buffers().into_iter().map(|(n, _)| n))
        .collect();
    if count != names.len() {
        return Err(NnError::ShapeMismatch(format!(
            "checkpoint has {count} tensors, configuration needs {}",
            names.len()
        )));
    }
    let shapes: Vec<Vec<usize>> = model
        .named_params()
        .into_iter()
        .map(|(_, p)| p.value.shape().to_vec())
        .chain(model.named_buffers().into_iter().map(|(_, t)| t.shape().to_vec()))
        .collect();
    let mut values = Vec::with_capacity(count);
    for (expected, shape) in names.iter().zip(&shapes) {
        let name_len = r.u16("tensor name")? as usize;
        let name = r.take(name_len, "tensor name")?;
        if name != expected.as_bytes() {
            return Err(NnError::ShapeMismatch(format!(
                "expected tensor `{expected}`, found `{}`",
                String::from_utf8_lossy(name)
            )));
        }
        let rank = r.take(1, "tensor rank")?[0] as usize;
        let dims = (0..rank)
            .map(|_| r.u32("tensor dims").map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if &dims != shape {
            return Err(NnError::ShapeMismatch(format!(
                "`{expected}` stored as {dims:?}, model has {shape:?}"
            )));
        }
        let dtype = r.take(1, "tensor dtype")?[0];
        if dtype != DTYPE_F64 {
            return Err(NnError::BadConfig(format!("`{expected}` has unsupported dtype {dtype}")));
        }
        let n: usize = dims.iter().product();
        let raw = r.take(8 * n, "tensor values")?;
        let data = raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect();
        values.push(Tensor::from_vec(&dims, data)?);
    }
    if !r.buf.is_empty() {
        return Err(NnError::ShapeMismatch(format!("{} trailing octets", r.buf.len())));
    }
    let mut values = values.into_iter();
    for p in model.params_mut() {
        p.value = values.next().unwrap();
    }
    for b in model.buffers_mut() {
        *b = values.next().unwrap();
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &Model) -> Result<(), NnError> {
    write_checkpoint(BufWriter::new(fs::File::create(path)?), model)
}

pub fn load_checkpoint(path: &Path) -> Result<Model, NnError> {
    read_checkpoint(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mode;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn trained() -> Model {
        let cfg = ModelConfig {
            stem_channels: 4,
            stages: vec![(4, 1), (8, 1)],
            cbam_reduction: 2,
            fc_hidden: 8,
            ..ModelConfig::default()
        };
        let mut m = Model::new(cfg, 7).unwrap();
        let x = Tensor::randn(&[3, 8, 5, 6], 1.0, &mut ChaCha8Rng::seed_from_u64(1));
        m.forward_train(&x).unwrap();
        m
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let m = trained();
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &m).unwrap();
        let back = read_checkpoint(&buf).unwrap();
        let x = Tensor::randn(&[2, 8, 5, 6], 1.0, &mut ChaCha8Rng::seed_from_u64(2));
        let a = m.forward(&x, Mode::Eval).unwrap().0;
        let b = back.forward(&x, Mode::Eval).unwrap().0;
        assert!(a.data().iter().zip(b.data()).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert_eq!(back.named_buffers(), m.named_buffers());
    }

    #[test]
    fn rejects_corruption() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &trained()).unwrap();
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 1]), Err(NnError::Truncated(_))));
        let mut v = buf.clone();
        v[8] = 9;
        assert!(matches!(read_checkpoint(&v), Err(NnError::VersionMismatch(9))));
        let mut v = buf.clone();
        v[0] = b'X';
        assert!(matches!(read_checkpoint(&v), Err(NnError::BadMagic)));
    }

    #[test]
    fn class_count_mismatch() {
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &trained()).unwrap();
        let key = b"n_classes = 4";
        let at = buf.windows(key.len()).position(|w| w == key).unwrap();
        buf[at + "n_classes = ".len()] = b'3';
        let r = read_checkpoint(&buf);
        assert!(matches!(r, Err(NnError::ShapeMismatch(_))), "{r:?}");
    }
}
