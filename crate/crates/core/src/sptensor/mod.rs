//! Sparse tensor storage.
//!
//! A [`CooTensor`] keeps exactly one coordinate-list copy of the observed
//! entries. Row-wise access for every mode goes through a [`ModeGroup`], an
//! integer permutation of entry indices bucketed by the mode's coordinate,
//! so no matricized copies of the data are ever built.
//!
//! Coordinates are stored 0-based. Files and the index formulas in
//! [`index`] use the 1-based convention.

pub mod index;
pub mod io;
pub mod ratings;
mod sample;

pub use index::{invert_vec_index, unfold_col_index, vec_index};
pub use io::{load_delimited, parse_delimited, write_delimited, LoadOptions, ZeroPolicy};
pub use sample::{sample_batch, train_test_split};

use crate::error::{Error, Result};

/// Dimensions `I_1 … I_N` of an order-N tensor.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    dims: Vec<usize>,
    total: u64,
}

impl Shape {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::domain(format!(
                "tensor order must be at least 2, got {}",
                dims.len()
            )));
        }
        if let Some(n) = dims.iter().position(|&d| d == 0) {
            return Err(Error::domain(format!("dimension of mode {} is zero", n + 1)));
        }
        let total = checked_product(&dims)
            .ok_or_else(|| Error::domain(format!("element count of shape {dims:?} overflows u64")))?;
        Ok(Shape { dims, total })
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Size of mode `n` (0-based mode index).
    pub fn dim(&self, n: usize) -> usize {
        self.dims[n]
    }

    /// Total element count `∏ I_n`.
    pub fn total(&self) -> u64 {
        self.total
    }
}

pub(crate) fn checked_product(dims: &[usize]) -> Option<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(d as u64))
}

/// Entry indices of one mode, bucketed by that mode's coordinate.
#[derive(Clone, Debug)]
pub struct ModeGroup {
    perm: Vec<usize>,
    offsets: Vec<usize>,
}

impl ModeGroup {
    fn build(coords: &[u32], order: usize, mode: usize, dim: usize) -> Self {
        let nnz = coords.len() / order;
        let mut offsets = vec![0usize; dim + 1];
        for e in 0..nnz {
            offsets[coords[e * order + mode] as usize + 1] += 1;
        }
        for i in 0..dim {
            offsets[i + 1] += offsets[i];
        }
        let mut cursor = offsets.clone();
        let mut perm = vec![0usize; nnz];
        for e in 0..nnz {
            let row = coords[e * order + mode] as usize;
            perm[cursor[row]] = e;
            cursor[row] += 1;
        }
        ModeGroup { perm, offsets }
    }

    /// Number of rows (the mode's dimension).
    pub fn rows(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Entry indices whose coordinate in this mode equals `row`, ascending.
    pub fn bucket(&self, row: usize) -> &[usize] {
        &self.perm[self.offsets[row]..self.offsets[row + 1]]
    }

    pub fn bucket_len(&self, row: usize) -> usize {
        self.offsets[row + 1] - self.offsets[row]
    }

    /// All entry indices, grouped by row.
    pub fn permutation(&self) -> &[usize] {
        &self.perm
    }

    /// `offsets[r]..offsets[r + 1]` is the range of row `r` in [`Self::permutation`].
    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }
}

/// Order-N sparse tensor in coordinate format.
///
/// Immutable after construction; share freely between worker threads.
#[derive(Clone, Debug)]
pub struct CooTensor {
    shape: Shape,
    coords: Vec<u32>,
    values: Vec<f64>,
    groups: Vec<ModeGroup>,
}

impl CooTensor {
    /// Builds a tensor from flat 0-based coordinates (`nnz × order`, entry-major)
    /// and values. Rejects out-of-range and duplicate coordinates.
    pub fn new(shape: Shape, coords: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        let order = shape.order();
        if coords.len() != values.len() * order {
            return Err(Error::Data(format!(
                "{} coordinates do not match {} values of order {}",
                coords.len(),
                values.len(),
                order
            )));
        }
        for (e, c) in coords.chunks_exact(order).enumerate() {
            for (n, &i) in c.iter().enumerate() {
                if i as usize >= shape.dim(n) {
                    return Err(Error::Data(format!(
                        "entry {e}: index {} exceeds dimension {} of mode {}",
                        i as usize + 1,
                        shape.dim(n),
                        n + 1
                    )));
                }
            }
        }
        if let Some((_, second)) = find_duplicate(&coords, order) {
            return Err(Error::Data(format!(
                "duplicate coordinate {:?}",
                one_based(&coords[second * order..(second + 1) * order])
            )));
        }
        let groups = (0..order)
            .map(|n| ModeGroup::build(&coords, order, n, shape.dim(n)))
            .collect();
        Ok(CooTensor {
            shape,
            coords,
            values,
            groups,
        })
    }

    /// Builds a tensor from 1-based coordinate tuples.
    pub fn from_entries<I>(shape: Shape, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Vec<usize>, f64)>,
    {
        let order = shape.order();
        let mut coords = Vec::new();
        let mut values = Vec::new();
        for (c, v) in entries {
            if c.len() != order {
                return Err(Error::Data(format!(
                    "coordinate {c:?} has {} indices, expected {order}",
                    c.len()
                )));
            }
            for (n, &i) in c.iter().enumerate() {
                if i == 0 || i > shape.dim(n) {
                    return Err(Error::Data(format!(
                        "index {i} out of range 1..={} in mode {}",
                        shape.dim(n),
                        n + 1
                    )));
                }
                coords.push((i - 1) as u32);
            }
            values.push(v);
        }
        CooTensor::new(shape, coords, values)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 0-based coordinate of entry `e`.
    pub fn coord(&self, e: usize) -> &[u32] {
        let n = self.order();
        &self.coords[e * n..(e + 1) * n]
    }

    pub fn value(&self, e: usize) -> f64 {
        self.values[e]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Flat 0-based coordinates, entry-major.
    pub fn coords(&self) -> &[u32] {
        &self.coords
    }

    pub fn mode_group(&self, n: usize) -> &ModeGroup {
        &self.groups[n]
    }

    /// New tensor with the same shape holding only the listed entries, in the given order.
    pub fn select(&self, entries: &[usize]) -> CooTensor {
        let order = self.order();
        let mut coords = Vec::with_capacity(entries.len() * order);
        let mut values = Vec::with_capacity(entries.len());
        for &e in entries {
            coords.extend_from_slice(self.coord(e));
            values.push(self.values[e]);
        }
        let groups = (0..order)
            .map(|n| ModeGroup::build(&coords, order, n, self.shape.dim(n)))
            .collect();
        CooTensor {
            shape: self.shape.clone(),
            coords,
            values,
            groups,
        }
    }

    /// Heap bytes held by the coordinate store and mode permutations.
    pub fn bytes(&self) -> usize {
        let groups: usize = self
            .groups
            .iter()
            .map(|g| (g.perm.capacity() + g.offsets.capacity()) * std::mem::size_of::<usize>())
            .sum();
        self.coords.capacity() * 4 + self.values.capacity() * 8 + groups
    }

    /// Iterates `(1-based coordinate, value)` pairs in storage order.
    pub fn entries(&self) -> impl Iterator<Item = (Vec<usize>, f64)> + '_ {
        (0..self.nnz()).map(move |e| (one_based(self.coord(e)), self.values[e]))
    }
}

fn one_based(c: &[u32]) -> Vec<usize> {
    c.iter().map(|&i| i as usize + 1).collect()
}

/// Returns `(first, second)` entry indices of some duplicated coordinate, if any.
pub(crate) fn find_duplicate(coords: &[u32], order: usize) -> Option<(usize, usize)> {
    let nnz = coords.len() / order;
    let key = |e: usize| &coords[e * order..(e + 1) * order];
    let mut idx: Vec<usize> = (0..nnz).collect();
    idx.sort_unstable_by(|&a, &b| key(a).cmp(key(b)).then(a.cmp(&b)));
    idx.windows(2)
        .find(|w| key(w[0]) == key(w[1]))
        .map(|w| (w[0], w[1]))
}
