//! Delimited text format: one observation per line, `N` 1-based integer
//! indices followed by one real value, separated by whitespace or commas.
//! Lines starting with `#` are comments.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{find_duplicate, CooTensor, Shape};
use crate::error::{Error, Result};

/// What to do with observations whose value is exactly zero.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ZeroPolicy {
    Reject,
    Replace(f64),
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub order: usize,
    pub has_header: bool,
    pub zero_policy: ZeroPolicy,
    /// Explicit dimensions; inferred from per-mode maxima when `None`.
    pub shape: Option<Vec<usize>>,
}

impl LoadOptions {
    pub fn new(order: usize) -> Self {
        LoadOptions {
            order,
            has_header: false,
            zero_policy: ZeroPolicy::Reject,
            shape: None,
        }
    }
}

pub fn load_delimited(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<CooTensor> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_delimited(BufReader::new(file), opts)
}

pub fn parse_delimited<R: BufRead>(reader: R, opts: &LoadOptions) -> Result<CooTensor> {
    let order = opts.order;
    if order < 2 {
        return Err(Error::domain(format!("order must be at least 2, got {order}")));
    }
    let mut coords: Vec<u32> = Vec::new();
    let mut values = Vec::new();
    let mut lines = Vec::new();
    let mut maxima = vec![0usize; order];
    let mut header_pending = opts.has_header;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        let fields: Vec<&str> = trimmed
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|f| !f.is_empty())
            .collect();
        if fields.len() != order + 1 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected {} fields, found {}", order + 1, fields.len()),
            });
        }
        for (n, f) in fields[..order].iter().enumerate() {
            let i: usize = f.parse().map_err(|_| Error::Parse {
                line: lineno,
                msg: format!("index {f:?} is not a non-negative integer"),
            })?;
            if i == 0 || i > u32::MAX as usize {
                return Err(Error::Parse {
                    line: lineno,
                    msg: format!("index {i} outside 1..={}", u32::MAX),
                });
            }
            maxima[n] = maxima[n].max(i);
            coords.push((i - 1) as u32);
        }
        let mut v: f64 = fields[order].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("value {:?} is not a number", fields[order]),
        })?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("value {v} is not finite"),
            });
        }
        if v == 0.0 {
            match opts.zero_policy {
                ZeroPolicy::Reject => {
                    return Err(Error::Parse {
                        line: lineno,
                        msg: "zero value rejected by zero policy".into(),
                    })
                }
                ZeroPolicy::Replace(r) => v = r,
            }
        }
        values.push(v);
        lines.push(lineno);
    }

    if values.is_empty() {
        return Err(Error::Data("tensor has no entries".into()));
    }
    let dims = match &opts.shape {
        Some(dims) => {
            if dims.len() != order {
                return Err(Error::domain(format!(
                    "shape override has {} modes, expected {order}",
                    dims.len()
                )));
            }
            for (n, (&d, &m)) in dims.iter().zip(&maxima).enumerate() {
                if m > d {
                    return Err(Error::Data(format!(
                        "index {m} in mode {} exceeds declared dimension {d}",
                        n + 1
                    )));
                }
            }
            dims.clone()
        }
        None => maxima,
    };
    if let Some((first, second)) = find_duplicate(&coords, order) {
        return Err(Error::Data(format!(
            "duplicate coordinate at line {} (first seen at line {})",
            lines[second], lines[first]
        )));
    }
    CooTensor::new(Shape::new(dims)?, coords, values)
}

/// Writes entries in storage order. Values use the shortest representation
/// that parses back to the identical `f64`.
pub fn write_delimited(tensor: &CooTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_entries(tensor, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_entries<W: Write>(tensor: &CooTensor, w: &mut W) -> std::io::Result<()> {
    for e in 0..tensor.nnz() {
        for &i in tensor.coord(e) {
            write!(w, "{} ", i as usize + 1)?;
        }
        writeln!(w, "{}", tensor.value(e))?;
    }
    Ok(())
}
