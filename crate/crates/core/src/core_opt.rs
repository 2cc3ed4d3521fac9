//! Stochastic updates of the Kruskal core matrices `B(n)`.
//!
//! For a sampled batch `Ψ` and a column `r` of `B(n)`, the rows of
//! `W_r = H(n)_Ψ O(n)_r` factor as
//!
//! ```text
//! w_s(r) = c_s(r) · a(n)_{i_n,:},   c_s(r) = ∏_{k≠n} a(k)_{i_k,:} · b(k)_{:,r}
//! ```
//!
//! so neither `H(n)` nor `O(n)_r` is formed. Columns are updated cyclically,
//! modes ascending and `r` ascending, each with one averaged SGD step on
//!
//! ```text
//! f(b) = 1/(2M) ‖x̂ − W_r b‖² + λ_B/2 ‖b‖²,   x̂ = x − Σ_{r'≠r} W_{r'} b(n)_{:,r'}
//! ```

use crate::error::{Error, Result};
use crate::model::{dot, Matrix, TuckerModel};
use crate::scheduler::{partition_core_batch, reduce_into, ParallelPlan};
use crate::sgd::sgd_step;
use crate::sptensor::CooTensor;

/// Row of `H(n) O(n)_r` for one observation (0-based `coord`, `n`, `r`).
pub fn compute_w_row(model: &TuckerModel, coord: &[u32], n: usize, r: usize, out: &mut [f64]) {
    let mut c = 1.0;
    for k in 0..model.order() {
        if k == n {
            continue;
        }
        let a = model.factor(k).row(coord[k] as usize);
        c *= column_dot(model.core().matrix(k), r, a);
    }
    for (o, &a) in out.iter_mut().zip(model.factor(n).row(coord[n] as usize)) {
        *o = c * a;
    }
}

/// `a · b_{:,r}` for a row-major `b`.
#[inline]
fn column_dot(b: &Matrix, r: usize, a: &[f64]) -> f64 {
    let stride = b.cols();
    let data = b.data();
    a.iter().enumerate().map(|(j, &v)| v * data[j * stride + r]).sum()
}

/// Per-worker buffers for one slice of the core batch.
#[derive(Clone, Debug, Default)]
pub struct CoreBatchWorkspace {
    j: usize,
    r_core: usize,
    x: Vec<f64>,
    /// `W_r` for every `r`, laid out `[r][s][j]`.
    w: Vec<f64>,
    resid: Vec<f64>,
    /// `Σ_r W_r b_r`, kept only in incremental mode.
    pred: Vec<f64>,
    prods: Vec<f64>,
    c: Vec<f64>,
    u: Vec<f64>,
}

impl CoreBatchWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds `W_r` for all `r` and gathers the observed values of `entries`.
    pub fn load(&mut self, model: &TuckerModel, tensor: &CooTensor, entries: &[usize], n: usize) {
        let j = model.ranks().dim(n);
        let r_core = model.ranks().r_core();
        let m = entries.len();
        self.j = j;
        self.r_core = r_core;
        self.x.clear();
        self.x.extend(entries.iter().map(|&e| tensor.value(e)));
        self.w.resize(r_core * m * j, 0.0);
        self.resid.resize(m, 0.0);
        self.c.resize(j * j, 0.0);
        self.u.resize(j, 0.0);
        self.prods.resize(r_core, 0.0);
        for (s, &e) in entries.iter().enumerate() {
            let coord = tensor.coord(e);
            self.prods.fill(1.0);
            for k in 0..model.order() {
                if k == n {
                    continue;
                }
                let a = model.factor(k).row(coord[k] as usize);
                let b = model.core().matrix(k);
                for (r, p) in self.prods.iter_mut().enumerate() {
                    *p *= column_dot(b, r, a);
                }
            }
            let a_n = model.factor(n).row(coord[n] as usize);
            for r in 0..r_core {
                let base = (r * m + s) * j;
                let c = self.prods[r];
                for (w, &a) in self.w[base..base + j].iter_mut().zip(a_n) {
                    *w = c * a;
                }
            }
        }
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn w_row(&self, r: usize, s: usize) -> &[f64] {
        let base = (r * self.len() + s) * self.j;
        &self.w[base..base + self.j]
    }

    /// `x̂ = x − Σ_{r≠r_exclude} W_r b_{:,r}`, recomputed from scratch.
    pub fn residual_literal(&mut self, b: &Matrix, r_exclude: usize) {
        let m = self.len();
        for s in 0..m {
            let mut v = self.x[s];
            for r in 0..self.r_core {
                if r != r_exclude {
                    v -= column_dot(b, r, self.w_row(r, s));
                }
            }
            self.resid[s] = v;
        }
    }

    /// Starts incremental residual tracking: `pred = Σ_r W_r b_{:,r}`.
    pub fn init_prediction(&mut self, b: &Matrix) {
        let m = self.len();
        self.pred.resize(m, 0.0);
        for s in 0..m {
            self.pred[s] = (0..self.r_core).map(|r| column_dot(b, r, self.w_row(r, s))).sum();
        }
    }

    /// Same residual as [`Self::residual_literal`] from the tracked prediction.
    pub fn residual_incremental(&mut self, b: &Matrix, r_exclude: usize) {
        for s in 0..self.len() {
            self.resid[s] = self.x[s] - self.pred[s] + column_dot(b, r_exclude, self.w_row(r_exclude, s));
        }
    }

    /// `pred += W_r δ` after column `r` moved by `delta`.
    pub fn apply_delta(&mut self, r: usize, delta: &[f64]) {
        for s in 0..self.len() {
            self.pred[s] += dot(self.w_row(r, s), delta);
        }
    }

    /// `C = W_rᵀ W_r` and `u = W_rᵀ x̂` over this slice.
    pub fn accumulate(&mut self, r: usize) {
        let j = self.j;
        self.c.fill(0.0);
        self.u.fill(0.0);
        let m = self.len();
        let base = r * m * j;
        for s in 0..m {
            let w = &self.w[base + s * j..base + (s + 1) * j];
            let x = self.resid[s];
            for p in 0..j {
                self.u[p] += w[p] * x;
                let row = &mut self.c[p * j..(p + 1) * j];
                for q in 0..j {
                    row[q] += w[p] * w[q];
                }
            }
        }
    }

    pub fn residual(&self) -> &[f64] {
        &self.resid
    }

    pub fn gram(&self) -> &[f64] {
        &self.c
    }

    pub fn wtx(&self) -> &[f64] {
        &self.u
    }

    pub fn bytes(&self) -> usize {
        8 * (self.x.capacity()
            + self.w.capacity()
            + self.resid.capacity()
            + self.pred.capacity()
            + self.prods.capacity()
            + self.c.capacity()
            + self.u.capacity())
    }
}

/// `V = −u + C b`.
fn carrier(c: &[f64], u: &[f64], b: &[f64], v: &mut [f64]) {
    let j = b.len();
    for p in 0..j {
        v[p] = -u[p] + dot(&c[p * j..(p + 1) * j], b);
    }
}

/// Residual of column `r_exclude` of `B(n)` over `batch`, recomputed literally.
pub fn core_residual(model: &TuckerModel, tensor: &CooTensor, batch: &[usize], n: usize, r_exclude: usize) -> Vec<f64> {
    let mut ws = CoreBatchWorkspace::new();
    ws.load(model, tensor, batch, n);
    ws.residual_literal(model.core().matrix(n), r_exclude);
    ws.resid
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoreGradient {
    /// `V = −W_rᵀ x̂ + W_rᵀ W_r b`.
    pub v: Vec<f64>,
    /// `g = V/M + λ_B b`.
    pub g: Vec<f64>,
}

/// Gradient with respect to `b(n)_{:,r}` over `batch`.
pub fn grad_b(model: &TuckerModel, tensor: &CooTensor, batch: &[usize], n: usize, r: usize, lambda: f64) -> CoreGradient {
    let mut ws = CoreBatchWorkspace::new();
    ws.load(model, tensor, batch, n);
    ws.residual_literal(model.core().matrix(n), r);
    ws.accumulate(r);
    let b = model.core().matrix(n).column(r);
    let mut v = vec![0.0; b.len()];
    carrier(&ws.c, &ws.u, &b, &mut v);
    let m = batch.len() as f64;
    let g = v.iter().zip(&b).map(|(vi, bi)| vi / m + lambda * bi).collect();
    CoreGradient { v, g }
}

/// Learning rate, regularization and residual mode of the core phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoreStep {
    pub gamma: f64,
    pub lambda: f64,
    /// Track `Σ_r W_r b_r` and patch it after each column update instead of
    /// recomputing the residual from scratch.
    pub incremental: bool,
}

/// Buffers of the core phase, reused across epochs.
#[derive(Clone, Debug, Default)]
pub struct CorePhase {
    workers: Vec<CoreBatchWorkspace>,
    c: Vec<f64>,
    u: Vec<f64>,
    v: Vec<f64>,
    col: Vec<f64>,
    old: Vec<f64>,
}

impl CorePhase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> usize {
        self.workers.iter().map(CoreBatchWorkspace::bytes).sum::<usize>()
            + 8 * (self.c.capacity() + self.u.capacity() + self.v.capacity() + self.col.capacity() + self.old.capacity())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CoreStats {
    pub samples: usize,
    /// Largest number of batch slices used in any mode.
    pub workers: usize,
}

/// One cyclic sweep over every column of every `B(n)`, then a cache refresh.
///
/// `batches` holds either one batch shared by all modes or one per mode.
pub fn update_core_epoch(
    model: &mut TuckerModel,
    tensor: &CooTensor,
    batches: &[Vec<usize>],
    step: &CoreStep,
    plan: &ParallelPlan,
    phase: &mut CorePhase,
) -> Result<CoreStats> {
    let order = model.order();
    if batches.len() != 1 && batches.len() != order {
        return Err(Error::Internal(format!(
            "{} core batches for an order-{order} model",
            batches.len()
        )));
    }
    let mut stats = CoreStats::default();
    for n in 0..order {
        let batch = &batches[if batches.len() == 1 { 0 } else { n }];
        if batch.is_empty() {
            return Err(Error::Internal("empty core batch".into()));
        }
        let parts = partition_core_batch(batch.len(), plan.workers());
        stats.samples += batch.len();
        stats.workers = stats.workers.max(parts.len());
        if phase.workers.len() < parts.len() {
            phase.workers.resize_with(parts.len(), CoreBatchWorkspace::new);
        }
        let workers = &mut phase.workers[..parts.len()];
        let j = model.ranks().dim(n);
        {
            let m: &TuckerModel = model;
            plan.for_each_mut(workers, |l, ws| {
                ws.load(m, tensor, &batch[parts[l].clone()], n);
                if step.incremental {
                    ws.init_prediction(m.core().matrix(n));
                }
            });
        }
        phase.c.resize(j * j, 0.0);
        phase.u.resize(j, 0.0);
        phase.v.resize(j, 0.0);
        phase.col.resize(j, 0.0);
        phase.old.resize(j, 0.0);
        for r in 0..model.ranks().r_core() {
            {
                let b = model.core().matrix(n);
                plan.for_each_mut(workers, |_, ws| {
                    if step.incremental {
                        ws.residual_incremental(b, r);
                    } else {
                        ws.residual_literal(b, r);
                    }
                    ws.accumulate(r);
                });
            }
            phase.c.fill(0.0);
            phase.u.fill(0.0);
            for ws in workers.iter() {
                reduce_into(&mut phase.c, ws.gram())?;
                reduce_into(&mut phase.u, ws.wtx())?;
            }
            let b = model.core_mut().matrix_mut(n);
            for p in 0..j {
                phase.col[p] = b.get(p, r);
            }
            phase.old.copy_from_slice(&phase.col);
            carrier(&phase.c, &phase.u, &phase.col, &mut phase.v);
            sgd_step(batch.len(), step.lambda, step.gamma, &mut phase.col, &phase.v).map_err(|e| match e {
                Error::Numeric(msg) => Error::Numeric(format!("core matrix {} column {}: {msg}", n + 1, r + 1)),
                other => other,
            })?;
            b.set_column(r, &phase.col);
            if step.incremental {
                for p in 0..j {
                    phase.old[p] = phase.col[p] - phase.old[p];
                }
                let delta = &phase.old;
                plan.for_each_mut(workers, |_, ws| ws.apply_delta(r, delta));
            }
        }
    }
    model.refresh_core_cache();
    Ok(stats)
}
