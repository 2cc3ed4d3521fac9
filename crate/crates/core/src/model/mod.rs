//! Learned parameters of a sparse Tucker model.
//!
//! The core tensor is never a free parameter: it is the Kruskal product of
//! `N` small matrices `B(n)` (`J_n × R_core`). A dense copy of the core and
//! its `N` unfoldings are cached for the factor phase and must be refreshed
//! with [`TuckerModel::refresh_core_cache`] after the Kruskal matrices change.
//!
//! The intermediate matrices `H(n)`, `S(n)` and `E(n)` are only ever built one
//! observation at a time (see [`TuckerModel::kron_row_into`] and
//! [`TuckerModel::e_column_into`]).

mod persist;

pub use persist::{deserialize, read_model, serialize, write_model, FORMAT_VERSION, MAGIC};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::sptensor::index::unfold_strides;
use crate::sptensor::{checked_product, Shape};

/// Upper bound on `∏ J_n`; the dense core and its unfoldings are materialized.
pub const MAX_CORE_ELEMENTS: u64 = 100_000;

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

/// `A(n)`: one row per mode-`n` entity.
pub type FactorMatrix = Matrix;

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "{} values cannot fill a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn set_column(&mut self, j: usize, values: &[f64]) {
        for (i, &v) in values.iter().enumerate() {
            self.set(i, j, v);
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Tucker ranks `J_1 … J_N` and the Kruskal rank of the core.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ranks {
    dims: Vec<usize>,
    r_core: usize,
    core_total: usize,
}

impl Ranks {
    pub fn new(dims: Vec<usize>, r_core: usize) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(Error::domain(format!("ranks {dims:?} must all be positive")));
        }
        let min = *dims.iter().min().unwrap_or(&0);
        if r_core == 0 || r_core > min {
            return Err(Error::domain(format!(
                "core rank {r_core} must lie in 1..={min} (smallest Tucker rank)"
            )));
        }
        let total = checked_product(&dims)
            .filter(|&t| t <= MAX_CORE_ELEMENTS)
            .ok_or_else(|| {
                Error::domain(format!(
                    "core of ranks {dims:?} exceeds {MAX_CORE_ELEMENTS} elements"
                ))
            })?;
        Ok(Ranks {
            dims,
            r_core,
            core_total: total as usize,
        })
    }

    pub fn uniform(order: usize, j: usize, r_core: usize) -> Result<Self> {
        Ranks::new(vec![j; order], r_core)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dim(&self, n: usize) -> usize {
        self.dims[n]
    }

    pub fn order(&self) -> usize {
        self.dims.len()
    }

    pub fn r_core(&self) -> usize {
        self.r_core
    }

    /// `∏ J_n`.
    pub fn core_total(&self) -> usize {
        self.core_total
    }

    /// `∏_{k≠n} J_k`.
    pub fn core_cols(&self, n: usize) -> usize {
        self.core_total / self.dims[n]
    }
}

/// The matrices `B(n)` (`J_n × R_core`) whose Kruskal product is the core.
#[derive(Clone, Debug, PartialEq)]
pub struct KruskalCore {
    mats: Vec<Matrix>,
}

impl KruskalCore {
    pub fn new(mats: Vec<Matrix>) -> Result<Self> {
        let r = mats.first().map(Matrix::cols).unwrap_or(0);
        if mats.is_empty() || mats.iter().any(|m| m.cols() != r) {
            return Err(Error::domain("Kruskal matrices must share one column count"));
        }
        Ok(KruskalCore { mats })
    }

    pub fn order(&self) -> usize {
        self.mats.len()
    }

    pub fn r_core(&self) -> usize {
        self.mats[0].cols()
    }

    pub fn matrix(&self, n: usize) -> &Matrix {
        &self.mats[n]
    }

    pub fn matrix_mut(&mut self, n: usize) -> &mut Matrix {
        &mut self.mats[n]
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.mats
    }
}

/// Dense core tensor, mode 1 varying fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseCore {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl DenseCore {
    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Element at a 0-based multi-index.
    pub fn get(&self, idx: &[usize]) -> f64 {
        let mut flat = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            flat += i * stride;
            stride *= d;
        }
        self.data[flat]
    }
}

/// Advances a 0-based multi-index with the first position fastest.
/// Returns `false` after wrapping past the last index.
fn odometer(idx: &mut [usize], dims: &[usize]) -> bool {
    for (i, &d) in idx.iter_mut().zip(dims) {
        *i += 1;
        if *i < d {
            return true;
        }
        *i = 0;
    }
    false
}

/// `Ĝ = Σ_r b(1)_{:,r} ∘ … ∘ b(N)_{:,r}`.
pub fn reconstruct_core(core: &KruskalCore) -> DenseCore {
    let dims: Vec<usize> = core.mats.iter().map(Matrix::rows).collect();
    let total: usize = dims.iter().product();
    let r_core = core.r_core();
    let mut data = Vec::with_capacity(total);
    let mut idx = vec![0usize; dims.len()];
    loop {
        let mut g = 0.0;
        for r in 0..r_core {
            let mut p = 1.0;
            for (m, &j) in core.mats.iter().zip(&idx) {
                p *= m.get(j, r);
            }
            g += p;
        }
        data.push(g);
        if !odometer(&mut idx, &dims) {
            break;
        }
    }
    DenseCore { dims, data }
}

/// Mode-`n` unfolding (0-based `n`) of the dense core: `J_n × ∏_{k≠n} J_k`.
pub fn core_unfold(g: &DenseCore, n: usize) -> Matrix {
    let rows = g.dims[n];
    let cols = g.data.len() / rows;
    let strides = unfold_strides(&g.dims, n);
    let mut out = Matrix::zeros(rows, cols);
    let mut idx = vec![0usize; g.dims.len()];
    for &v in &g.data {
        let col: usize = idx.iter().zip(&strides).map(|(i, s)| i * s).sum();
        out.set(idx[n], col, v);
        odometer(&mut idx, &g.dims);
    }
    out
}

/// Factor matrices, Kruskal core and the cached dense core.
#[derive(Clone, Debug)]
pub struct TuckerModel {
    shape: Shape,
    ranks: Ranks,
    factors: Vec<FactorMatrix>,
    core: KruskalCore,
    dense: DenseCore,
    unfoldings: Vec<Matrix>,
    stale: bool,
}

impl TuckerModel {
    pub fn new(shape: Shape, ranks: Ranks, factors: Vec<FactorMatrix>, core: KruskalCore) -> Result<Self> {
        let order = shape.order();
        if ranks.order() != order || factors.len() != order || core.order() != order {
            return Err(Error::domain(format!(
                "order mismatch: shape {order}, ranks {}, factors {}, core {}",
                ranks.order(),
                factors.len(),
                core.order()
            )));
        }
        if core.r_core() != ranks.r_core() {
            return Err(Error::domain("Kruskal column count differs from the core rank"));
        }
        for n in 0..order {
            let (a, b) = (&factors[n], core.matrix(n));
            if a.rows() != shape.dim(n) || a.cols() != ranks.dim(n) {
                return Err(Error::domain(format!(
                    "factor {} is {}x{}, expected {}x{}",
                    n + 1,
                    a.rows(),
                    a.cols(),
                    shape.dim(n),
                    ranks.dim(n)
                )));
            }
            if b.rows() != ranks.dim(n) {
                return Err(Error::domain(format!(
                    "Kruskal matrix {} has {} rows, expected {}",
                    n + 1,
                    b.rows(),
                    ranks.dim(n)
                )));
            }
            if !a.is_finite() || !b.is_finite() {
                return Err(Error::Numeric(format!("non-finite parameters in mode {}", n + 1)));
            }
        }
        let dense = reconstruct_core(&core);
        let unfoldings = (0..order).map(|n| core_unfold(&dense, n)).collect();
        Ok(TuckerModel {
            shape,
            ranks,
            factors,
            core,
            dense,
            unfoldings,
            stale: false,
        })
    }

    /// All entries of every `A(n)` and `B(n)` drawn i.i.d. from `Normal(mean, stddev²)`.
    pub fn init_gaussian(shape: Shape, ranks: Ranks, mean: f64, stddev: f64, seed: u64) -> Result<Self> {
        if !(stddev > 0.0 && stddev.is_finite()) || !mean.is_finite() {
            return Err(Error::domain(format!(
                "initialization needs finite mean and stddev > 0, got N({mean}, {stddev}²)"
            )));
        }
        if ranks.order() != shape.order() {
            return Err(Error::domain("ranks and shape differ in order"));
        }
        let normal = Normal::new(mean, stddev).map_err(|e| Error::domain(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut draw = |rows: usize, cols: usize| {
            let data = (0..rows * cols).map(|_| normal.sample(&mut rng)).collect();
            Matrix { rows, cols, data }
        };
        let order = shape.order();
        let factors = (0..order).map(|n| draw(shape.dim(n), ranks.dim(n))).collect();
        let mats = (0..order).map(|n| draw(ranks.dim(n), ranks.r_core())).collect();
        TuckerModel::new(shape, ranks, factors, KruskalCore::new(mats)?)
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn ranks(&self) -> &Ranks {
        &self.ranks
    }

    pub fn order(&self) -> usize {
        self.shape.order()
    }

    pub fn factor(&self, n: usize) -> &FactorMatrix {
        &self.factors[n]
    }

    pub fn factor_mut(&mut self, n: usize) -> &mut FactorMatrix {
        &mut self.factors[n]
    }

    pub fn factors(&self) -> &[FactorMatrix] {
        &self.factors
    }

    pub fn core(&self) -> &KruskalCore {
        &self.core
    }

    /// Mutable Kruskal matrices. The dense-core cache is stale until
    /// [`Self::refresh_core_cache`] is called.
    pub fn core_mut(&mut self) -> &mut KruskalCore {
        self.stale = true;
        &mut self.core
    }

    pub fn refresh_core_cache(&mut self) {
        self.dense = reconstruct_core(&self.core);
        for (n, u) in self.unfoldings.iter_mut().enumerate() {
            *u = core_unfold(&self.dense, n);
        }
        self.stale = false;
    }

    pub fn is_cache_fresh(&self) -> bool {
        !self.stale
    }

    pub fn dense_core(&self) -> &DenseCore {
        &self.dense
    }

    /// Cached `Ĝ(n)`.
    pub fn core_unfolding(&self, n: usize) -> &Matrix {
        &self.unfoldings[n]
    }

    /// Writes the row of `S(n)` for observation `coord` (0-based):
    /// `s[col] = ∏_{k≠n} A(k)[i_k, j_k]`, with `col` the mode-`n` unfolding
    /// column of `(j_1 … j_N)` over the core shape. `s` must hold
    /// `∏_{k≠n} J_k` values.
    pub fn kron_row_into(&self, coord: &[u32], n: usize, s: &mut [f64]) {
        debug_assert_eq!(s.len(), self.ranks.core_cols(n));
        s[0] = 1.0;
        let mut len = 1;
        for (k, a) in self.factors.iter().enumerate() {
            if k == n {
                continue;
            }
            let row = a.row(coord[k] as usize);
            // expand in place from the back so the source block s[..len] is read last
            for j in (0..row.len()).rev() {
                let f = row[j];
                for idx in 0..len {
                    s[j * len + idx] = s[idx] * f;
                }
            }
            len *= row.len();
        }
    }

    pub fn kron_row_excluding(&self, coord: &[u32], n: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.ranks.core_cols(n)];
        self.kron_row_into(coord, n, &mut s);
        s
    }

    /// Column of `E(n) = Ĝ(n) S(n)ᵀ` for one observation, given its `S(n)` row.
    pub fn e_from_kron(&self, n: usize, s: &[f64], e: &mut [f64]) {
        debug_assert!(!self.stale, "dense core cache is stale");
        let g = &self.unfoldings[n];
        for (j, ej) in e.iter_mut().enumerate() {
            *ej = dot(g.row(j), s);
        }
    }

    /// Column of `E(n)` for observation `coord`; `s` is scratch of length `∏_{k≠n} J_k`.
    pub fn e_column_into(&self, coord: &[u32], n: usize, s: &mut [f64], e: &mut [f64]) {
        self.kron_row_into(coord, n, s);
        self.e_from_kron(n, s, e);
    }

    pub fn e_column(&self, coord: &[u32], n: usize) -> Vec<f64> {
        let mut s = vec![0.0; self.ranks.core_cols(n)];
        let mut e = vec![0.0; self.ranks.dim(n)];
        self.e_column_into(coord, n, &mut s, &mut e);
        e
    }

    /// Predicted value `x̂ = a(1)_{i_1,:} · e` with `e` the mode-1 column of `E(1)`.
    pub fn predict_entry(&self, coord: &[u32]) -> f64 {
        let mut scratch = PredictScratch::new(self);
        self.predict_with(coord, &mut scratch)
    }

    pub fn predict_with(&self, coord: &[u32], scratch: &mut PredictScratch) -> f64 {
        self.e_column_into(coord, 0, &mut scratch.s, &mut scratch.e);
        dot(self.factors[0].row(coord[0] as usize), &scratch.e)
    }

    /// Heap bytes of parameters plus the dense-core caches.
    pub fn bytes(&self) -> usize {
        let mats = |ms: &[Matrix]| ms.iter().map(|m| m.data.capacity() * 8).sum::<usize>();
        mats(&self.factors) + mats(&self.core.mats) + mats(&self.unfoldings) + self.dense.data.capacity() * 8
    }
}

/// Reusable buffers for repeated predictions.
#[derive(Clone, Debug)]
pub struct PredictScratch {
    s: Vec<f64>,
    e: Vec<f64>,
}

impl PredictScratch {
    pub fn new(model: &TuckerModel) -> Self {
        PredictScratch {
            s: vec![0.0; model.ranks.core_cols(0)],
            e: vec![0.0; model.ranks.dim(0)],
        }
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> Matrix {
        Matrix::from_vec(rows, cols, data.to_vec()).unwrap()
    }

    #[test]
    fn ranks_enforce_core_rank() {
        assert!(Ranks::new(vec![3, 2, 4], 3).is_err());
        assert!(Ranks::new(vec![3, 2, 4], 0).is_err());
        assert!(Ranks::new(vec![3, 0], 1).is_err());
        assert!(Ranks::new(vec![1000, 1000], 1).is_err());
        assert_eq!(Ranks::new(vec![3, 2, 4], 2).unwrap().core_cols(1), 12);
    }

    #[test]
    fn rank_one_outer_product() {
        let core = KruskalCore::new(vec![mat(2, 1, &[1.0, 2.0]), mat(2, 1, &[3.0, 4.0])]).unwrap();
        let g = reconstruct_core(&core);
        // mode-1 fastest: g[0,0], g[1,0], g[0,1], g[1,1]
        assert_eq!(g.data(), &[3.0, 6.0, 4.0, 8.0]);
        assert_eq!(g.get(&[1, 0]), 6.0);
        let g1 = core_unfold(&g, 0);
        assert_eq!(g1.data(), &[3.0, 4.0, 6.0, 8.0]);
        let g2 = core_unfold(&g, 1);
        assert_eq!(g2.data(), &[3.0, 6.0, 4.0, 8.0]);
    }

    #[test]
    fn zero_core() {
        let core = KruskalCore::new(vec![Matrix::zeros(2, 2), Matrix::zeros(3, 2), Matrix::zeros(2, 2)]).unwrap();
        assert!(reconstruct_core(&core).data().iter().all(|&v| v == 0.0));
        let shape = Shape::new(vec![3, 3, 3]).unwrap();
        let ranks = Ranks::new(vec![2, 3, 2], 2).unwrap();
        let mut m = TuckerModel::init_gaussian(shape, ranks, 0.5, 0.1, 1).unwrap();
        *m.core_mut() = core;
        m.refresh_core_cache();
        assert_eq!(m.predict_entry(&[1, 2, 0]), 0.0);
        assert!(m.e_column(&[0, 0, 0], 1).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn kron_row_single_factor_case() {
        let shape = Shape::new(vec![3, 4]).unwrap();
        let ranks = Ranks::new(vec![2, 3], 1).unwrap();
        let m = TuckerModel::init_gaussian(shape, ranks, 0.0, 1.0, 5).unwrap();
        assert_eq!(m.kron_row_excluding(&[1, 2], 0), m.factor(1).row(2));
        assert_eq!(m.kron_row_excluding(&[1, 2], 1), m.factor(0).row(1));
    }

    #[test]
    fn kron_row_ones() {
        let shape = Shape::new(vec![2, 2, 2]).unwrap();
        let ranks = Ranks::new(vec![2, 3, 2], 1).unwrap();
        let mut m = TuckerModel::init_gaussian(shape, ranks, 0.0, 1.0, 5).unwrap();
        for n in 0..3 {
            m.factor_mut(n).data_mut().fill(1.0);
        }
        for n in 0..3 {
            assert!(m.kron_row_excluding(&[1, 0, 1], n).iter().all(|&v| v == 1.0));
        }
    }

    #[test]
    fn identity_factors_pick_core_entries() {
        let shape = Shape::new(vec![2, 3, 2]).unwrap();
        let ranks = Ranks::new(vec![2, 3, 2], 2).unwrap();
        let mut m = TuckerModel::init_gaussian(shape, ranks, 0.0, 1.0, 9).unwrap();
        for n in 0..3 {
            let a = m.factor_mut(n);
            a.data_mut().fill(0.0);
            for i in 0..a.rows() {
                a.set(i, i, 1.0);
            }
        }
        for c in [[0u32, 0, 0], [1, 2, 1], [0, 1, 1]] {
            let idx: Vec<usize> = c.iter().map(|&i| i as usize).collect();
            let expect = m.dense_core().get(&idx);
            assert!((m.predict_entry(&c) - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn delta_core_e_column() {
        // Ĝ = δ (superdiagonal ones) with J = I = 2, R = 2
        let shape = Shape::new(vec![2, 2, 2]).unwrap();
        let ranks = Ranks::new(vec![2, 2, 2], 2).unwrap();
        let mut m = TuckerModel::init_gaussian(shape, ranks, 0.0, 1.0, 2).unwrap();
        let eye = mat(2, 2, &[1.0, 0.0, 0.0, 1.0]);
        *m.core_mut() = KruskalCore::new(vec![eye.clone(), eye.clone(), eye]).unwrap();
        m.refresh_core_cache();
        let c = [1u32, 0, 1];
        let e = m.e_column(&c, 0);
        for j in 0..2 {
            let want = m.factor(1).get(0, j) * m.factor(2).get(1, j);
            assert!((e[j] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn init_is_deterministic_and_validated() {
        let shape = Shape::new(vec![4, 5, 6]).unwrap();
        let ranks = Ranks::new(vec![2, 3, 2], 2).unwrap();
        let a = TuckerModel::init_gaussian(shape.clone(), ranks.clone(), 0.5, 0.1, 42).unwrap();
        let b = TuckerModel::init_gaussian(shape.clone(), ranks.clone(), 0.5, 0.1, 42).unwrap();
        assert_eq!(a.factors(), b.factors());
        assert_eq!(a.core(), b.core());
        assert!(TuckerModel::init_gaussian(shape.clone(), ranks.clone(), 0.5, 0.0, 1).is_err());
        assert!(TuckerModel::init_gaussian(shape.clone(), ranks.clone(), 0.5, -1.0, 1).is_err());
        let tiny = TuckerModel::init_gaussian(shape, ranks, 0.5, 1e-12, 1).unwrap();
        assert!(tiny.factor(0).data().iter().all(|&v| (v - 0.5).abs() < 1e-9));
    }

    #[test]
    fn init_moments() {
        let shape = Shape::new(vec![1000, 10]).unwrap();
        let ranks = Ranks::new(vec![10, 1], 1).unwrap();
        let m = TuckerModel::init_gaussian(shape, ranks, 0.5, 0.1, 3).unwrap();
        let a = m.factor(0).data();
        assert_eq!(a.len(), 10_000);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        assert!((0.49..=0.51).contains(&mean), "mean {mean}");
        let var = a.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / a.len() as f64;
        assert!((var.sqrt() - 0.1).abs() < 0.005, "sd {}", var.sqrt());
    }

    #[test]
    fn cache_tracks_core_updates() {
        let shape = Shape::new(vec![3, 3, 3]).unwrap();
        let ranks = Ranks::new(vec![2, 2, 2], 2).unwrap();
        let mut m = TuckerModel::init_gaussian(shape, ranks, 0.5, 0.1, 4).unwrap();
        m.core_mut().matrix_mut(1).set(0, 1, 3.0);
        assert!(!m.is_cache_fresh());
        m.refresh_core_cache();
        let fresh = reconstruct_core(m.core());
        assert_eq!(m.dense_core(), &fresh);
        for n in 0..3 {
            assert_eq!(m.core_unfolding(n), &core_unfold(&fresh, n));
        }
    }
}
