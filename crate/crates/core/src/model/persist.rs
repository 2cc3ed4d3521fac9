//! Binary model file.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic     8 bytes  "SPTUCKR\0"
//! version   u32
//! order N   u32
//! dims      N × u64
//! ranks     N × u64
//! r_core    u64
//! B(1..N)   J_n × R_core f64 each, row-major
//! A(1..N)   I_n × J_n f64 each, row-major
//! ```

use std::fs;
use std::path::Path;

use super::{FactorMatrix, KruskalCore, Matrix, Ranks, TuckerModel};
use crate::error::{Error, Result};
use crate::sptensor::Shape;

pub const MAGIC: &[u8; 8] = b"SPTUCKR\0";
pub const FORMAT_VERSION: u32 = 1;

pub fn serialize(model: &TuckerModel) -> Vec<u8> {
    let order = model.order();
    let mut out = Vec::with_capacity(model.bytes() + 32 + 16 * order);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(order as u32).to_le_bytes());
    for &d in model.shape().dims() {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for &j in model.ranks().dims() {
        out.extend_from_slice(&(j as u64).to_le_bytes());
    }
    out.extend_from_slice(&(model.ranks().r_core() as u64).to_le_bytes());
    let mats = model.core().matrices().iter().chain(model.factors());
    for m in mats {
        for v in m.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        match end {
            Some(end) => {
                let s = &self.buf[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Format(format!(
                "truncated file: {what} needs {n} bytes at offset {}, {} left",
                self.pos,
                self.buf.len() - self.pos
            ))),
        }
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<usize> {
        let v = u64::from_le_bytes(self.take(8, what)?.try_into().unwrap());
        usize::try_from(v).map_err(|_| Error::Format(format!("{what} {v} does not fit in memory")))
    }

    fn matrix(&mut self, rows: usize, cols: usize, what: &str) -> Result<Matrix> {
        let len = rows
            .checked_mul(cols)
            .and_then(|l| l.checked_mul(8))
            .ok_or_else(|| Error::Format(format!("{what} size overflows")))?;
        let raw = self.take(len, what)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Matrix::from_vec(rows, cols, data)
    }
}

pub fn deserialize(bytes: &[u8]) -> Result<TuckerModel> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(8, "magic")? != MAGIC {
        return Err(Error::Format("not a model file (bad magic)".into()));
    }
    let version = r.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!(
            "unsupported format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    let order = r.u32("order")? as usize;
    if order < 2 {
        return Err(Error::Format(format!("order {order} is below 2")));
    }
    let dims = (0..order).map(|_| r.u64("dimension")).collect::<Result<Vec<_>>>()?;
    let js = (0..order).map(|_| r.u64("rank")).collect::<Result<Vec<_>>>()?;
    let r_core = r.u64("core rank")?;
    let invalid = |e: Error| Error::Format(format!("invariant violated: {e}"));
    let shape = Shape::new(dims).map_err(invalid)?;
    let ranks = Ranks::new(js, r_core).map_err(invalid)?;
    let mut bs = Vec::with_capacity(order);
    for n in 0..order {
        bs.push(r.matrix(ranks.dim(n), r_core, "Kruskal matrix")?);
    }
    let mut factors: Vec<FactorMatrix> = Vec::with_capacity(order);
    for n in 0..order {
        factors.push(r.matrix(shape.dim(n), ranks.dim(n), "factor matrix")?);
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after model data",
            bytes.len() - r.pos
        )));
    }
    let core = KruskalCore::new(bs)?;
    TuckerModel::new(shape, ranks, factors, core).map_err(invalid)
}

pub fn write_model(model: &TuckerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, serialize(model)).map_err(|e| Error::io(path, e))
}

pub fn read_model(path: impl AsRef<Path>) -> Result<TuckerModel> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    deserialize(&bytes)
}
