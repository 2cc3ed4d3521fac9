//! Epoch driver: core phase, then factor phase, then metrics.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::HyperParams;
use crate::core_opt::{update_core_epoch, CorePhase, CoreStep};
use crate::error::{Error, Result};
use crate::eval::{comm_cost_report, rmse_mae, EpochMetrics};
use crate::factor_opt::{update_factor_epoch, FactorPhase, FactorStep};
use crate::model::TuckerModel;
use crate::scheduler::ParallelPlan;
use crate::sptensor::{sample_batch, CooTensor, Shape};

/// Offset separating the batch-sampling stream from the initialization seed.
const BATCH_STREAM: u64 = 0x5EED_BA7C_0000_0001;

pub struct Trainer {
    hyper: HyperParams,
    plan: ParallelPlan,
    core: CorePhase,
    factor: FactorPhase,
    batches: Vec<Vec<usize>>,
    rng: ChaCha8Rng,
    epoch: usize,
    eval_train: bool,
    peak_bytes: usize,
}

impl Trainer {
    pub fn new(hyper: HyperParams) -> Result<Self> {
        hyper.validate()?;
        let plan = ParallelPlan::new(hyper.strategy, hyper.threads, hyper.balance)?;
        Ok(Self::with_plan(hyper, plan))
    }

    pub fn with_plan(hyper: HyperParams, plan: ParallelPlan) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ BATCH_STREAM);
        Trainer {
            hyper,
            plan,
            core: CorePhase::new(),
            factor: FactorPhase::new(),
            batches: Vec::new(),
            rng,
            epoch: 0,
            eval_train: true,
            peak_bytes: 0,
        }
    }

    pub fn hyper(&self) -> &HyperParams {
        &self.hyper
    }

    pub fn plan(&self) -> &ParallelPlan {
        &self.plan
    }

    /// Skip the training-set metrics (reported as NaN) to save time.
    pub fn set_eval_train(&mut self, on: bool) {
        self.eval_train = on;
    }

    /// Gaussian initialization with the configured ranks, moments and seed.
    pub fn init_model(&self, shape: &Shape) -> Result<TuckerModel> {
        let ranks = self.hyper.ranks_for(shape.order())?;
        TuckerModel::init_gaussian(shape.clone(), ranks, self.hyper.init_mean, self.hyper.init_std, self.hyper.seed)
    }

    /// Bytes of parameters, caches and workspaces; the training data is excluded.
    pub fn working_bytes(&self, model: &TuckerModel) -> usize {
        model.bytes()
            + self.core.bytes()
            + self.factor.bytes()
            + self.batches.iter().map(|b| b.capacity() * 8).sum::<usize>()
    }

    pub fn peak_bytes(&self) -> usize {
        self.peak_bytes
    }

    fn draw_batches(&mut self, nnz: usize, order: usize) -> Result<()> {
        let count = if self.hyper.resample_per_mode { order } else { 1 };
        self.batches.resize_with(count, Vec::new);
        for b in &mut self.batches {
            match self.hyper.batch_m {
                None => {
                    b.clear();
                    b.extend(0..nnz);
                }
                Some(m) => *b = sample_batch(nnz, m, &mut self.rng)?,
            }
        }
        Ok(())
    }

    pub fn run_epoch(&mut self, model: &mut TuckerModel, train: &CooTensor, test: Option<&CooTensor>) -> Result<EpochMetrics> {
        if train.shape() != model.shape() {
            return Err(Error::Data(format!(
                "training shape {:?} does not match model shape {:?}",
                train.shape().dims(),
                model.shape().dims()
            )));
        }
        let start = Instant::now();
        self.draw_batches(train.nnz(), train.order())?;
        let core_step = CoreStep {
            gamma: self.hyper.lr_b,
            lambda: self.hyper.reg_b,
            incremental: self.hyper.incremental_residual,
        };
        update_core_epoch(model, train, &self.batches, &core_step, &self.plan, &mut self.core)?;
        let core_s = start.elapsed().as_secs_f64();

        let factor_start = Instant::now();
        let factor_step = FactorStep {
            gamma: self.hyper.lr_a,
            lambda: self.hyper.reg_a,
            fraction: self.hyper.row_fraction,
            seed: self.hyper.seed,
            epoch: self.epoch as u64,
        };
        update_factor_epoch(model, train, &factor_step, &self.plan, &mut self.factor)?;
        let factor_s = factor_start.elapsed().as_secs_f64();
        let train_s = start.elapsed().as_secs_f64();

        self.peak_bytes = self.peak_bytes.max(self.working_bytes(model));
        let (train_rmse, train_mae) = if self.eval_train {
            rmse_mae(model, train)?
        } else {
            (f64::NAN, f64::NAN)
        };
        let (test_rmse, test_mae) = match test {
            Some(t) => rmse_mae(model, t)?,
            None => (f64::NAN, f64::NAN),
        };
        let comm = comm_cost_report(model.ranks());
        self.epoch += 1;
        Ok(EpochMetrics {
            epoch: self.epoch,
            core_s,
            factor_s,
            total_s: train_s,
            train_rmse,
            train_mae,
            test_rmse,
            test_mae,
            peak_bytes: self.peak_bytes as u64,
            comm_bytes: 8 * comm.kruskal_params * self.plan.workers() as u64,
        })
    }

    /// Runs the configured number of epochs, passing each record to `on_epoch`.
    pub fn fit<F>(&mut self, model: &mut TuckerModel, train: &CooTensor, test: Option<&CooTensor>, mut on_epoch: F) -> Result<Vec<EpochMetrics>>
    where
        F: FnMut(&EpochMetrics) -> Result<()>,
    {
        let mut all = Vec::with_capacity(self.hyper.epochs);
        for _ in 0..self.hyper.epochs {
            let m = self.run_epoch(model, train, test)?;
            on_epoch(&m)?;
            all.push(m);
        }
        Ok(all)
    }
}

/// `1/(2|Ω|) Σ (x − x̂)² + λ_A/2 Σ‖A(n)‖² + λ_B/2 Σ‖B(n)‖²`.
pub fn objective(model: &TuckerModel, tensor: &CooTensor, reg_a: f64, reg_b: f64) -> f64 {
    let mut scratch = crate::model::PredictScratch::new(model);
    let sq: f64 = (0..tensor.nnz())
        .map(|e| {
            let d = tensor.value(e) - model.predict_with(tensor.coord(e), &mut scratch);
            d * d
        })
        .sum();
    let norm = |ms: &[crate::model::Matrix]| ms.iter().flat_map(|m| m.data()).map(|v| v * v).sum::<f64>();
    sq / (2.0 * tensor.nnz() as f64) + 0.5 * reg_a * norm(model.factors()) + 0.5 * reg_b * norm(model.core().matrices())
}
