//! Row-wise stochastic updates of the factor matrices `A(n)`.
//!
//! Row `i` of `A(n)` takes one averaged SGD step per epoch with the data part
//!
//! ```text
//! F = Σ_{j ∈ batch} ( −x_j e_j + (a · e_j) e_j ),   e_j = Ĝ(n) s_j
//! ```
//!
//! accumulated as `Fact1 = Σ −x_j e_j` and `Fact2 = Σ p_j e_j` with the
//! scalar `p_j = a · e_j`. It is the gradient of
//! `1/(2|batch|) Σ (x_j − a · e_j)² + λ_A/2 ‖a‖²`.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::{dot, TuckerModel};
use crate::scheduler::{assign_factor_rows, partition_core_batch, ParallelPlan, Strategy};
use crate::sgd::sgd_step;
use crate::sptensor::CooTensor;

/// Entries used for row `row` of mode `n`: the whole bucket when
/// `fraction ≥ 1`, otherwise `max(1, round(fraction · len))` entries drawn
/// without replacement, kept in bucket order.
pub fn row_batch<R: Rng + ?Sized>(tensor: &CooTensor, n: usize, row: usize, fraction: f64, rng: &mut R) -> Vec<usize> {
    let bucket = tensor.mode_group(n).bucket(row);
    let mut out = Vec::new();
    select_into(bucket, fraction, rng, &mut out);
    out
}

fn select_into<R: Rng + ?Sized>(bucket: &[usize], fraction: f64, rng: &mut R, out: &mut Vec<usize>) {
    out.clear();
    if bucket.is_empty() {
        return;
    }
    if fraction >= 1.0 {
        out.extend_from_slice(bucket);
        return;
    }
    let m = ((fraction * bucket.len() as f64).round() as usize).clamp(1, bucket.len());
    let mut picks = index::sample(rng, bucket.len(), m).into_vec();
    picks.sort_unstable();
    out.extend(picks.into_iter().map(|p| bucket[p]));
}

/// Deterministic per-row stream so sampled batches do not depend on the
/// worker count or schedule.
fn row_rng(seed: u64, epoch: u64, n: usize, row: usize) -> ChaCha8Rng {
    let mut h = seed;
    for v in [epoch, n as u64, row as u64] {
        h = splitmix(h ^ splitmix(v));
    }
    ChaCha8Rng::seed_from_u64(h)
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-worker caches of the factor phase.
#[derive(Debug, Default)]
pub struct RowBatchWorkspace {
    s: Vec<f64>,
    e: Vec<f64>,
    fact1: Vec<f64>,
    fact2: Vec<f64>,
    f: Vec<f64>,
    batch: Vec<usize>,
    /// Naive strategy: updated rows, `rows[k]` owns `values[k*J..(k+1)*J]`.
    rows: Vec<usize>,
    values: Vec<f64>,
    /// Improved strategy: per-row partial sums and entry counts.
    partial_rows: Vec<usize>,
    partial_counts: Vec<usize>,
    partial1: Vec<f64>,
    partial2: Vec<f64>,
    error: Option<Error>,
}

impl RowBatchWorkspace {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, model: &TuckerModel, n: usize) {
        let j = model.ranks().dim(n);
        self.s.resize(model.ranks().core_cols(n), 0.0);
        self.e.resize(j, 0.0);
        self.fact1.resize(j, 0.0);
        self.fact2.resize(j, 0.0);
        self.f.resize(j, 0.0);
        self.rows.clear();
        self.values.clear();
        self.partial_rows.clear();
        self.partial_counts.clear();
        self.partial1.clear();
        self.partial2.clear();
        self.error = None;
    }

    fn zero_facts(&mut self) {
        self.fact1.fill(0.0);
        self.fact2.fill(0.0);
    }

    /// Adds one entry's contribution to `Fact1` and `Fact2`.
    fn add_entry(&mut self, model: &TuckerModel, tensor: &CooTensor, n: usize, a: &[f64], e: usize) {
        model.e_column_into(tensor.coord(e), n, &mut self.s, &mut self.e);
        let x = tensor.value(e);
        let p = dot(a, &self.e);
        for ((f1, f2), &ej) in self.fact1.iter_mut().zip(self.fact2.iter_mut()).zip(&self.e) {
            *f1 -= x * ej;
            *f2 += p * ej;
        }
    }

    fn combine(&mut self) {
        for ((f, f1), f2) in self.f.iter_mut().zip(&self.fact1).zip(&self.fact2) {
            *f = f1 + f2;
        }
    }

    pub fn bytes(&self) -> usize {
        8 * (self.s.capacity()
            + self.e.capacity()
            + self.fact1.capacity()
            + self.fact2.capacity()
            + self.f.capacity()
            + self.batch.capacity()
            + self.rows.capacity()
            + self.values.capacity()
            + self.partial_rows.capacity()
            + self.partial_counts.capacity()
            + self.partial1.capacity()
            + self.partial2.capacity())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RowGradient {
    /// `F = Fact1 + Fact2`.
    pub f: Vec<f64>,
    /// `F/|batch| + λ_A a`.
    pub g: Vec<f64>,
}

/// Gradient with respect to row `row` of `A(n)` over `batch`.
pub fn grad_a_row(model: &TuckerModel, tensor: &CooTensor, n: usize, row: usize, batch: &[usize], lambda: f64) -> RowGradient {
    let mut ws = RowBatchWorkspace::new();
    ws.prepare(model, n);
    ws.zero_facts();
    let a = model.factor(n).row(row);
    for &e in batch {
        ws.add_entry(model, tensor, n, a, e);
    }
    ws.combine();
    let m = batch.len().max(1) as f64;
    let g = ws.f.iter().zip(a).map(|(f, ai)| f / m + lambda * ai).collect();
    RowGradient { f: ws.f, g }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorStep {
    pub gamma: f64,
    pub lambda: f64,
    /// Fraction of each row's observed entries used per epoch.
    pub fraction: f64,
    pub seed: u64,
    pub epoch: u64,
}

/// Buffers of the factor phase, reused across epochs.
#[derive(Debug, Default)]
pub struct FactorPhase {
    workers: Vec<RowBatchWorkspace>,
    selected: Vec<usize>,
    fact1: Vec<f64>,
    fact2: Vec<f64>,
    counts: Vec<usize>,
    f: Vec<f64>,
}

impl FactorPhase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bytes(&self) -> usize {
        self.workers.iter().map(RowBatchWorkspace::bytes).sum::<usize>()
            + 8 * (self.selected.capacity()
                + self.fact1.capacity()
                + self.fact2.capacity()
                + self.counts.capacity()
                + self.f.capacity())
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FactorStats {
    pub rows_updated: usize,
    /// Rows without observations; never modified.
    pub rows_skipped: usize,
    /// Largest `ε` (max load over ideal, minus one) across modes.
    pub max_imbalance: f64,
}

/// One SGD step on every observed row of every `A(n)`, modes ascending.
pub fn update_factor_epoch(
    model: &mut TuckerModel,
    tensor: &CooTensor,
    step: &FactorStep,
    plan: &ParallelPlan,
    phase: &mut FactorPhase,
) -> Result<FactorStats> {
    if !model.is_cache_fresh() {
        return Err(Error::Internal("factor phase started with a stale core cache".into()));
    }
    let mut stats = FactorStats::default();
    for n in 0..model.order() {
        match plan.strategy() {
            Strategy::Serial | Strategy::Naive => naive_mode(model, tensor, n, step, plan, phase, &mut stats)?,
            Strategy::Improved => improved_mode(model, tensor, n, step, plan, phase, &mut stats)?,
        }
    }
    Ok(stats)
}

fn ensure_workers(phase: &mut FactorPhase, l: usize) {
    if phase.workers.len() < l {
        phase.workers.resize_with(l, RowBatchWorkspace::new);
    }
}

/// Whole rows per worker; new rows are computed from the old `A(n)` and
/// written back afterwards, which matches a serial in-place sweep exactly.
fn naive_mode(
    model: &mut TuckerModel,
    tensor: &CooTensor,
    n: usize,
    step: &FactorStep,
    plan: &ParallelPlan,
    phase: &mut FactorPhase,
    stats: &mut FactorStats,
) -> Result<()> {
    let group = tensor.mode_group(n);
    let assignment = assign_factor_rows(group, plan.workers(), plan.balance());
    stats.max_imbalance = stats.max_imbalance.max(assignment.stats.imbalance());
    let l = assignment.rows.len();
    ensure_workers(phase, l);
    let workers = &mut phase.workers[..l];
    let j = model.ranks().dim(n);
    {
        let m: &TuckerModel = model;
        plan.for_each_mut(workers, |w, ws| {
            ws.prepare(m, n);
            for &row in &assignment.rows[w] {
                let bucket = group.bucket(row);
                if bucket.is_empty() {
                    continue;
                }
                let mut rng = row_rng(step.seed, step.epoch, n, row);
                let mut batch = std::mem::take(&mut ws.batch);
                select_into(bucket, step.fraction, &mut rng, &mut batch);
                let a = m.factor(n).row(row);
                ws.zero_facts();
                for &e in &batch {
                    ws.add_entry(m, tensor, n, a, e);
                }
                ws.combine();
                let start = ws.values.len();
                ws.values.extend_from_slice(a);
                let res = sgd_step(batch.len(), step.lambda, step.gamma, &mut ws.values[start..start + j], &ws.f);
                ws.batch = batch;
                if let Err(e) = res {
                    ws.error = Some(row_error(e, n, row));
                    return;
                }
                ws.rows.push(row);
            }
        });
    }
    let a = model.factor_mut(n);
    for ws in workers.iter_mut() {
        if let Some(e) = ws.error.take() {
            return Err(e);
        }
        for (k, &row) in ws.rows.iter().enumerate() {
            a.row_mut(row).copy_from_slice(&ws.values[k * j..(k + 1) * j]);
        }
        stats.rows_updated += ws.rows.len();
    }
    stats.rows_skipped += (0..group.rows()).filter(|&r| group.bucket_len(r) == 0).count();
    Ok(())
}

/// Entry slices per worker with per-row partial sums merged in rank order.
fn improved_mode(
    model: &mut TuckerModel,
    tensor: &CooTensor,
    n: usize,
    step: &FactorStep,
    plan: &ParallelPlan,
    phase: &mut FactorPhase,
    stats: &mut FactorStats,
) -> Result<()> {
    let group = tensor.mode_group(n);
    let rows = group.rows();
    let j = model.ranks().dim(n);
    let sampled = step.fraction < 1.0;
    ensure_workers(phase, plan.workers());
    if sampled {
        phase.selected.clear();
        let mut buf = Vec::new();
        for row in 0..rows {
            let mut rng = row_rng(step.seed, step.epoch, n, row);
            select_into(group.bucket(row), step.fraction, &mut rng, &mut buf);
            phase.selected.extend_from_slice(&buf);
        }
    }
    let entries: &[usize] = if sampled { &phase.selected } else { group.permutation() };
    let parts = partition_core_batch(entries.len(), plan.workers());
    if !parts.is_empty() {
        let loads: Vec<usize> = parts.iter().map(|p| p.len()).collect();
        let ideal = entries.len() as f64 / loads.len() as f64;
        let max = *loads.iter().max().unwrap_or(&0) as f64;
        stats.max_imbalance = stats.max_imbalance.max(max / ideal - 1.0);
    }
    let workers = &mut phase.workers[..parts.len()];
    {
        let m: &TuckerModel = model;
        plan.for_each_mut(workers, |w, ws| {
            ws.prepare(m, n);
            let slice = &entries[parts[w].clone()];
            let mut current = usize::MAX;
            let mut count = 0;
            for &e in slice {
                let row = tensor.coord(e)[n] as usize;
                if row != current {
                    if count > 0 {
                        flush_partial(ws, current, count);
                    }
                    current = row;
                    count = 0;
                    ws.zero_facts();
                }
                ws.add_entry(m, tensor, n, m.factor(n).row(row), e);
                count += 1;
            }
            if count > 0 {
                flush_partial(ws, current, count);
            }
        });
    }
    phase.fact1.clear();
    phase.fact1.resize(rows * j, 0.0);
    phase.fact2.clear();
    phase.fact2.resize(rows * j, 0.0);
    phase.counts.clear();
    phase.counts.resize(rows, 0);
    phase.f.resize(j, 0.0);
    for ws in workers.iter() {
        for (k, &row) in ws.partial_rows.iter().enumerate() {
            let dst = row * j..(row + 1) * j;
            for (d, s) in phase.fact1[dst.clone()].iter_mut().zip(&ws.partial1[k * j..(k + 1) * j]) {
                *d += s;
            }
            for (d, s) in phase.fact2[dst].iter_mut().zip(&ws.partial2[k * j..(k + 1) * j]) {
                *d += s;
            }
            phase.counts[row] += ws.partial_counts[k];
        }
    }
    let a = model.factor_mut(n);
    for row in 0..rows {
        let count = phase.counts[row];
        if count == 0 {
            if group.bucket_len(row) == 0 {
                stats.rows_skipped += 1;
            }
            continue;
        }
        for p in 0..j {
            phase.f[p] = phase.fact1[row * j + p] + phase.fact2[row * j + p];
        }
        sgd_step(count, step.lambda, step.gamma, a.row_mut(row), &phase.f).map_err(|e| row_error(e, n, row))?;
        stats.rows_updated += 1;
    }
    Ok(())
}

fn flush_partial(ws: &mut RowBatchWorkspace, row: usize, count: usize) {
    ws.partial_rows.push(row);
    ws.partial_counts.push(count);
    ws.partial1.extend_from_slice(&ws.fact1);
    ws.partial2.extend_from_slice(&ws.fact2);
}

fn row_error(e: Error, n: usize, row: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("factor {} row {}: {msg}", n + 1, row + 1)),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Ranks;
    use crate::scheduler::Balance;
    use crate::sptensor::Shape;

    /// 3×3×3 tensor whose mode-3 row 1 holds 4 entries, row 2 holds 2 and row 3 holds 1.
    fn toy() -> CooTensor {
        let shape = Shape::new(vec![3, 3, 3]).unwrap();
        let entries = [
            (vec![1, 1, 1], 2.0),
            (vec![2, 1, 1], 1.5),
            (vec![2, 2, 1], 3.0),
            (vec![3, 3, 1], 1.0),
            (vec![1, 2, 2], 2.5),
            (vec![3, 2, 2], 0.5),
            (vec![3, 2, 3], 1.0),
        ];
        CooTensor::from_entries(shape, entries).unwrap()
    }

    fn model(seed: u64) -> TuckerModel {
        let shape = Shape::new(vec![3, 3, 3]).unwrap();
        let ranks = Ranks::new(vec![2, 2, 2], 2).unwrap();
        TuckerModel::init_gaussian(shape, ranks, 0.5, 0.1, seed).unwrap()
    }

    fn step(gamma: f64) -> FactorStep {
        FactorStep {
            gamma,
            lambda: 0.01,
            fraction: 1.0,
            seed: 5,
            epoch: 0,
        }
    }

    #[test]
    fn row_batches() {
        let t = toy();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(row_batch(&t, 2, 0, 1.0, &mut rng).len(), 4);
        assert_eq!(row_batch(&t, 2, 0, 1.0, &mut rng), t.mode_group(2).bucket(0));
        assert_eq!(row_batch(&t, 2, 0, 0.5, &mut rng).len(), 2);
        assert_eq!(row_batch(&t, 2, 2, 0.1, &mut rng).len(), 1);
        let sparse = CooTensor::from_entries(Shape::new(vec![2, 2]).unwrap(), [(vec![1, 1], 1.0)]).unwrap();
        assert!(row_batch(&sparse, 0, 1, 1.0, &mut rng).is_empty());
    }

    #[test]
    fn perfect_fit_gradient_is_regularizer() {
        let m = model(1);
        let t = toy();
        let fitted: Vec<_> = t
            .entries()
            .map(|(c, _)| {
                let c0: Vec<u32> = c.iter().map(|&i| (i - 1) as u32).collect();
                (c, m.predict_entry(&c0))
            })
            .collect();
        let t = CooTensor::from_entries(t.shape().clone(), fitted).unwrap();
        for n in 0..3 {
            for row in 0..3 {
                let batch = t.mode_group(n).bucket(row).to_vec();
                if batch.is_empty() {
                    continue;
                }
                let g = grad_a_row(&m, &t, n, row, &batch, 0.2);
                assert!(g.f.iter().all(|f| f.abs() < 1e-12));
                for (gi, ai) in g.g.iter().zip(m.factor(n).row(row)) {
                    assert!((gi - 0.2 * ai).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zero_row_gradient() {
        let mut m = model(2);
        m.factor_mut(0).row_mut(1).fill(0.0);
        let t = toy();
        let batch = t.mode_group(0).bucket(1).to_vec();
        let g = grad_a_row(&m, &t, 0, 1, &batch, 0.0);
        let mut want = vec![0.0; 2];
        for &e in &batch {
            let ev = m.e_column(t.coord(e), 0);
            for p in 0..2 {
                want[p] -= t.value(e) * ev[p];
            }
        }
        for p in 0..2 {
            assert!((g.g[p] - want[p] / batch.len() as f64).abs() < 1e-14);
        }
    }

    #[test]
    fn decomposed_accumulation_matches_direct() {
        let m = model(3);
        let t = toy();
        let a = m.factor(1).row(1);
        for &e in t.mode_group(1).bucket(1) {
            let ev = m.e_column(t.coord(e), 1);
            let p = dot(a, &ev);
            for q in 0..2 {
                let direct: f64 = (0..2).map(|k| a[k] * ev[k] * ev[q]).sum();
                assert!((p * ev[q] - direct).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_rate_and_empty_rows_untouched() {
        let mut m = model(4);
        let before = m.clone();
        let t = toy();
        update_factor_epoch(&mut m, &t, &step(0.0), &ParallelPlan::serial(), &mut FactorPhase::new()).unwrap();
        assert_eq!(m.factors(), before.factors());

        let sparse = CooTensor::from_entries(
            Shape::new(vec![3, 3, 3]).unwrap(),
            [(vec![1, 1, 1], 1.0), (vec![3, 3, 3], 2.0)],
        )
        .unwrap();
        let stats = update_factor_epoch(&mut m, &sparse, &step(0.1), &ParallelPlan::serial(), &mut FactorPhase::new()).unwrap();
        assert_eq!(stats.rows_updated, 6);
        assert_eq!(stats.rows_skipped, 3);
        for n in 0..3 {
            assert_eq!(m.factor(n).row(1), before.factor(n).row(1));
            assert_ne!(m.factor(n).row(0), before.factor(n).row(0));
        }
    }

    fn run(plan: &ParallelPlan, fraction: f64) -> TuckerModel {
        let mut m = model(7);
        let t = toy();
        let s = FactorStep { fraction, ..step(0.05) };
        update_factor_epoch(&mut m, &t, &s, plan, &mut FactorPhase::new()).unwrap();
        m
    }

    #[test]
    fn naive_is_bit_identical_to_serial() {
        let serial = run(&ParallelPlan::serial(), 1.0);
        for l in 2..5 {
            for balance in [Balance::Static, Balance::Dynamic] {
                let plan = ParallelPlan::new(Strategy::Naive, l, balance).unwrap();
                assert_eq!(run(&plan, 1.0).factors(), serial.factors());
                assert_eq!(run(&plan, 0.5).factors(), run(&ParallelPlan::serial(), 0.5).factors());
            }
        }
    }

    #[test]
    fn improved_matches_serial() {
        let serial = run(&ParallelPlan::serial(), 1.0);
        let one = ParallelPlan::new(Strategy::Improved, 1, Balance::Static).unwrap();
        assert_eq!(run(&one, 1.0).factors(), serial.factors());
        for l in 2..5 {
            let plan = ParallelPlan::new(Strategy::Improved, l, Balance::Static).unwrap();
            let got = run(&plan, 1.0);
            for n in 0..3 {
                for (x, y) in got.factor(n).data().iter().zip(serial.factor(n).data()) {
                    assert!((x - y).abs() <= 1e-9 * y.abs().max(1.0));
                }
            }
            assert_eq!(run(&plan, 0.5).factors(), run(&plan, 0.5).factors());
        }
    }

    #[test]
    fn stale_cache_is_refused() {
        let mut m = model(8);
        m.core_mut();
        let err = update_factor_epoch(&mut m, &toy(), &step(0.1), &ParallelPlan::serial(), &mut FactorPhase::new());
        assert!(matches!(err, Err(Error::Internal(_))));
    }
}
