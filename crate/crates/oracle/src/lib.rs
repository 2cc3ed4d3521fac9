//! Brute-force reference constructions for tiny shapes.
//!
//! Everything here is built literally from the definitions: dense tensors,
//! mode-n products, unfoldings, Kronecker and Khatri-Rao products, and the
//! full intermediate matrices `S(n)`, `H(n)`, `E(n)` and `O(n)_r`. None of it
//! reuses the fast paths it is meant to check, and none of it is fast.
//!
//! All indices are 0-based. Dense tensors store mode 1 fastest.

pub mod fixtures;

use sptucker::{CooTensor, Matrix, TuckerModel};

/// Largest element count any dense construction will materialize.
pub const MAX_DENSE: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Refused(pub String);

impl std::fmt::Display for Refused {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "oracle refused: {}", self.0)
    }
}

impl std::error::Error for Refused {}

fn guard(count: usize, what: &str) -> Result<(), Refused> {
    if count > MAX_DENSE {
        Err(Refused(format!("{what} would hold {count} elements (limit {MAX_DENSE})")))
    } else {
        Ok(())
    }
}

fn size_of(dims: &[usize]) -> Result<usize, Refused> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Refused(format!("shape {dims:?} overflows")))
}

/// Dense tensor, mode 1 varying fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl DenseTensor {
    pub fn zeros(dims: &[usize]) -> Result<Self, Refused> {
        let total = size_of(dims)?;
        guard(total, "dense tensor")?;
        Ok(DenseTensor {
            dims: dims.to_vec(),
            data: vec![0.0; total],
        })
    }

    pub fn offset(&self, idx: &[usize]) -> usize {
        let mut off = 0;
        let mut stride = 1;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            assert!(i < d, "index {idx:?} outside {:?}", self.dims);
            off += i * stride;
            stride *= d;
        }
        off
    }

    pub fn get(&self, idx: &[usize]) -> f64 {
        self.data[self.offset(idx)]
    }

    pub fn set(&mut self, idx: &[usize], v: f64) {
        let off = self.offset(idx);
        self.data[off] = v;
    }

    /// Every multi-index, mode 1 fastest.
    pub fn indices(&self) -> Vec<Vec<usize>> {
        all_indices(&self.dims)
    }
}

/// Every multi-index of `dims`, first position fastest.
pub fn all_indices(dims: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &d in dims {
        out = (0..d)
            .flat_map(|i| {
                out.iter().map(move |prefix| {
                    let mut p = prefix.clone();
                    p.push(i);
                    p
                })
            })
            .collect();
    }
    // the construction above makes the last position fastest; reverse it
    out.sort_by(|a, b| a.iter().rev().cmp(b.iter().rev()));
    out
}

/// Column of `idx` in the mode-`n` unfolding:
/// `Σ_{k≠n} idx_k ∏_{m<k, m≠n} dims_m`.
pub fn unfold_column(dims: &[usize], idx: &[usize], n: usize) -> usize {
    let mut col = 0;
    for k in 0..dims.len() {
        if k == n {
            continue;
        }
        let stride: usize = (0..k).filter(|&m| m != n).map(|m| dims[m]).product();
        col += idx[k] * stride;
    }
    col
}

/// Position in the mode-`n` vectorization: `col · dims_n + idx_n`.
pub fn vec_position(dims: &[usize], idx: &[usize], n: usize) -> usize {
    unfold_column(dims, idx, n) * dims[n] + idx[n]
}

/// Mode-`n` unfolding `X(n)`.
pub fn unfold(t: &DenseTensor, n: usize) -> Matrix {
    let rows = t.dims[n];
    let cols = t.data.len() / rows;
    let mut m = Matrix::zeros(rows, cols);
    for idx in t.indices() {
        m.set(idx[n], unfold_column(&t.dims, &idx, n), t.get(&idx));
    }
    m
}

/// Mode-`n` vectorization `Vec_n(X)`.
pub fn vectorize(t: &DenseTensor, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; t.data.len()];
    for idx in t.indices() {
        v[vec_position(&t.dims, &idx, n)] = t.get(&idx);
    }
    v
}

/// `X ×_n U`: `Y[… i …] = Σ_j X[… j …] U[i, j]`.
pub fn mode_n_product(t: &DenseTensor, u: &Matrix, n: usize) -> Result<DenseTensor, Refused> {
    assert_eq!(u.cols(), t.dims[n], "mode-{n} product dimension mismatch");
    let mut dims = t.dims.clone();
    dims[n] = u.rows();
    let mut out = DenseTensor::zeros(&dims)?;
    for idx in out.indices() {
        let mut src = idx.clone();
        let mut s = 0.0;
        for j in 0..t.dims[n] {
            src[n] = j;
            s += t.get(&src) * u.get(idx[n], j);
        }
        out.set(&idx, s);
    }
    Ok(out)
}

/// Dense core from the Kruskal matrices by summing `R_core` outer products.
pub fn dense_core(model: &TuckerModel) -> Result<DenseTensor, Refused> {
    let core = model.core();
    let dims: Vec<usize> = core.matrices().iter().map(Matrix::rows).collect();
    let mut g = DenseTensor::zeros(&dims)?;
    for r in 0..core.r_core() {
        for idx in g.indices() {
            let mut p = 1.0;
            for (n, &j) in idx.iter().enumerate() {
                p *= core.matrix(n).get(j, r);
            }
            let v = g.get(&idx) + p;
            g.set(&idx, v);
        }
    }
    Ok(g)
}

/// `Ĝ ×_1 A(1) ⋯ ×_N A(N)`.
pub fn dense_reconstruct(model: &TuckerModel) -> Result<DenseTensor, Refused> {
    size_of(model.shape().dims()).and_then(|t| guard(t, "reconstruction"))?;
    let mut t = dense_core(model)?;
    for n in 0..model.order() {
        t = mode_n_product(&t, model.factor(n), n)?;
    }
    Ok(t)
}

/// Kronecker product `A ⊗ B`; the index of `B` varies fastest.
pub fn kron(a: &Matrix, b: &Matrix) -> Result<Matrix, Refused> {
    let (rows, cols) = (a.rows() * b.rows(), a.cols() * b.cols());
    guard(rows * cols, "Kronecker product")?;
    let mut out = Matrix::zeros(rows, cols);
    for ia in 0..a.rows() {
        for ja in 0..a.cols() {
            for ib in 0..b.rows() {
                for jb in 0..b.cols() {
                    out.set(ia * b.rows() + ib, ja * b.cols() + jb, a.get(ia, ja) * b.get(ib, jb));
                }
            }
        }
    }
    Ok(out)
}

/// Column-wise Kronecker product `A ⊙ B`.
pub fn khatri_rao(a: &Matrix, b: &Matrix) -> Matrix {
    assert_eq!(a.cols(), b.cols(), "Khatri-Rao column mismatch");
    let mut out = Matrix::zeros(a.rows() * b.rows(), a.cols());
    for r in 0..a.cols() {
        for ia in 0..a.rows() {
            for ib in 0..b.rows() {
                out.set(ia * b.rows() + ib, r, a.get(ia, r) * b.get(ib, r));
            }
        }
    }
    out
}

fn one() -> Matrix {
    Matrix::from_vec(1, 1, vec![1.0]).expect("1x1")
}

/// `S(n) = A(N) ⊗ ⋯ ⊗ A(1)` with `A(n)` skipped.
pub fn dense_s(model: &TuckerModel, n: usize) -> Result<Matrix, Refused> {
    let mut s = one();
    for k in (0..model.order()).rev() {
        if k != n {
            s = kron(&s, model.factor(k))?;
        }
    }
    Ok(s)
}

/// `H(n) = S(n) ⊗ A(n)`, rows in mode-`n` vectorization order of the data
/// tensor and columns in mode-`n` vectorization order of the core.
pub fn dense_h(model: &TuckerModel, n: usize) -> Result<Matrix, Refused> {
    kron(&dense_s(model, n)?, model.factor(n))
}

/// `Q(n) = B(N) ⊙ ⋯ ⊙ B(1)` with `B(n)` skipped.
pub fn kruskal_q(model: &TuckerModel, n: usize) -> Matrix {
    let r = model.core().r_core();
    let mut q = Matrix::from_vec(1, r, vec![1.0; r]).expect("ones row");
    for k in (0..model.order()).rev() {
        if k != n {
            q = khatri_rao(&q, model.core().matrix(k));
        }
    }
    q
}

/// `O(n)_r`: `∏_{k≠n} J_k` blocks of `q_{m,r} I_{J_n}` stacked vertically.
pub fn dense_o_r(model: &TuckerModel, n: usize, r: usize) -> Result<Matrix, Refused> {
    let q = kruskal_q(model, n);
    let jn = model.ranks().dim(n);
    guard(q.rows() * jn * jn, "O_r")?;
    let mut o = Matrix::zeros(q.rows() * jn, jn);
    for m in 0..q.rows() {
        for j in 0..jn {
            o.set(m * jn + j, j, q.get(m, r));
        }
    }
    Ok(o)
}

/// `E(n) = Ĝ(n) S(n)ᵀ`.
pub fn dense_e(model: &TuckerModel, n: usize) -> Result<Matrix, Refused> {
    let g = unfold(&dense_core(model)?, n);
    let s = dense_s(model, n)?;
    matmul(&g, &transpose(&s))
}

pub fn transpose(a: &Matrix) -> Matrix {
    let mut t = Matrix::zeros(a.cols(), a.rows());
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            t.set(j, i, a.get(i, j));
        }
    }
    t
}

pub fn matmul(a: &Matrix, b: &Matrix) -> Result<Matrix, Refused> {
    assert_eq!(a.cols(), b.rows(), "matmul dimension mismatch");
    guard(a.rows() * b.cols(), "matrix product")?;
    let mut out = Matrix::zeros(a.rows(), b.cols());
    for i in 0..a.rows() {
        for j in 0..b.cols() {
            let s: f64 = (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum();
            out.set(i, j, s);
        }
    }
    Ok(out)
}

pub fn matvec(a: &Matrix, x: &[f64]) -> Vec<f64> {
    assert_eq!(a.cols(), x.len(), "matvec dimension mismatch");
    (0..a.rows())
        .map(|i| (0..a.cols()).map(|k| a.get(i, k) * x[k]).sum())
        .collect()
}

/// Row of `H(n)` (equivalently of `Vec_n(X)`) holding data coordinate `coord`.
pub fn h_row_of(model: &TuckerModel, coord: &[u32], n: usize) -> usize {
    let idx: Vec<usize> = coord.iter().map(|&i| i as usize).collect();
    vec_position(model.shape().dims(), &idx, n)
}

/// Core objective for column `r` of `B(n)` over `batch`, with every
/// prediction read from `H(n) Σ_r O(n)_r b(n)_{:,r}`:
/// `1/(2M) Σ (x − x̂)² + λ/2 ‖b(n)_{:,r}‖²`.
pub fn core_objective(model: &TuckerModel, tensor: &CooTensor, batch: &[usize], n: usize, r: usize, lambda: f64) -> Result<f64, Refused> {
    let h = dense_h(model, n)?;
    let mut gvec = vec![0.0; h.cols()];
    for rr in 0..model.core().r_core() {
        let o = dense_o_r(model, n, rr)?;
        let term = matvec(&o, &model.core().matrix(n).column(rr));
        for (g, t) in gvec.iter_mut().zip(term) {
            *g += t;
        }
    }
    let pred = matvec(&h, &gvec);
    let sq: f64 = batch
        .iter()
        .map(|&e| {
            let d = tensor.value(e) - pred[h_row_of(model, tensor.coord(e), n)];
            d * d
        })
        .sum();
    let b = model.core().matrix(n).column(r);
    Ok(sq / (2.0 * batch.len() as f64) + 0.5 * lambda * b.iter().map(|v| v * v).sum::<f64>())
}

/// Row objective for row `row` of `A(n)`, predictions from the dense
/// reconstruction: `1/(2|batch|) Σ (x − x̂)² + λ/2 ‖a‖²`.
pub fn row_objective(model: &TuckerModel, tensor: &CooTensor, n: usize, row: usize, batch: &[usize], lambda: f64) -> Result<f64, Refused> {
    let full = dense_reconstruct(model)?;
    let sq: f64 = batch
        .iter()
        .map(|&e| {
            let idx: Vec<usize> = tensor.coord(e).iter().map(|&i| i as usize).collect();
            let d = tensor.value(e) - full.get(&idx);
            d * d
        })
        .sum();
    let a = model.factor(n).row(row);
    Ok(sq / (2.0 * batch.len() as f64) + 0.5 * lambda * a.iter().map(|v| v * v).sum::<f64>())
}

/// Central differences `(f(x + h e_i) − f(x − h e_i)) / 2h` per component.
pub fn fd_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], step: f64) -> Vec<f64> {
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut p = x.to_vec();
    (0..x.len())
        .map(|i| {
            p[i] = x[i] + step;
            let up = f(&p);
            p[i] = x[i] - step;
            let down = f(&p);
            p[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `|g − ĝ| / max(1, |g|)`.
pub fn rel_err(g: f64, g_hat: f64) -> f64 {
    (g - g_hat).abs() / g.abs().max(1.0)
}

/// Neumaier-compensated sum.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut c) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            c += (sum - t) + v;
        } else {
            c += (v - t) + sum;
        }
        sum = t;
    }
    sum + c
}
