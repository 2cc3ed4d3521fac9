//! Accuracy metrics, epoch telemetry, the parameter-exchange cost model and
//! the scaling benchmarks.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::HyperParams;
use crate::error::{Error, Result};
use crate::model::{PredictScratch, Ranks, TuckerModel};
use crate::scheduler::Strategy;
use crate::sptensor::CooTensor;
use crate::train::Trainer;

pub const METRICS_HEADER: &str =
    "epoch,core_s,factor_s,total_s,train_rmse,train_mae,test_rmse,test_mae,peak_bytes,comm_bytes";

/// One row of the metrics CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub core_s: f64,
    pub factor_s: f64,
    pub total_s: f64,
    pub train_rmse: f64,
    pub train_mae: f64,
    pub test_rmse: f64,
    pub test_mae: f64,
    pub peak_bytes: u64,
    pub comm_bytes: u64,
}

/// RMSE and MAE of prediction errors.
pub fn rmse_mae_from_errors(errors: &[f64]) -> Result<(f64, f64)> {
    if errors.is_empty() {
        return Err(Error::domain("RMSE/MAE of an empty set"));
    }
    let n = errors.len() as f64;
    let sq: f64 = errors.iter().map(|e| e * e).sum();
    let abs: f64 = errors.iter().map(|e| e.abs()).sum();
    Ok(((sq / n).sqrt(), abs / n))
}

/// RMSE and MAE of `model` over every entry of `tensor`.
pub fn rmse_mae(model: &TuckerModel, tensor: &CooTensor) -> Result<(f64, f64)> {
    if tensor.is_empty() {
        return Err(Error::domain("RMSE/MAE of an empty set"));
    }
    let mut scratch = PredictScratch::new(model);
    let (mut sq, mut abs) = (0.0, 0.0);
    for e in 0..tensor.nnz() {
        let d = tensor.value(e) - model.predict_with(tensor.coord(e), &mut scratch);
        sq += d * d;
        abs += d.abs();
    }
    let n = tensor.nnz() as f64;
    Ok(((sq / n).sqrt(), abs / n))
}

/// RMSE and MAE of predicting the training mean everywhere.
pub fn global_mean_baseline(train: &CooTensor, test: &CooTensor) -> Result<(f64, f64)> {
    if train.is_empty() {
        return Err(Error::domain("mean of an empty training set"));
    }
    let mean = train.values().iter().sum::<f64>() / train.nnz() as f64;
    let errors: Vec<f64> = test.values().iter().map(|x| x - mean).collect();
    rmse_mae_from_errors(&errors)
}

/// Parameters exchanged per synchronization for a dense versus a Kruskal core.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommCost {
    /// `∏ J_n`.
    pub dense_core_params: u64,
    /// `Σ J_n · R_core`.
    pub kruskal_params: u64,
    pub ratio: f64,
}

pub fn comm_cost_report(ranks: &Ranks) -> CommCost {
    let dense: u64 = ranks.dims().iter().map(|&j| j as u64).product();
    let kruskal: u64 = ranks.dims().iter().map(|&j| (j * ranks.r_core()) as u64).sum();
    CommCost {
        dense_core_params: dense,
        kruskal_params: kruskal,
        ratio: dense as f64 / kruskal as f64,
    }
}

/// Streams metrics rows to a CSV file preceded by `# key = value` comments.
pub struct MetricsWriter {
    inner: csv::Writer<BufWriter<File>>,
}

impl MetricsWriter {
    pub fn create(path: impl AsRef<Path>, comments: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for (k, v) in comments {
            writeln!(out, "# {k} = {v}").map_err(io)?;
        }
        // header written up front so a run with no epochs still yields a valid file
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        inner.write_record(METRICS_HEADER.split(',')).map_err(csv_error)?;
        inner.flush().map_err(|e| Error::io(path, e))?;
        Ok(MetricsWriter { inner })
    }

    pub fn write(&mut self, m: &EpochMetrics) -> Result<()> {
        self.inner.serialize(m).map_err(csv_error)?;
        self.inner.flush().map_err(|e| Error::Internal(format!("metrics flush: {e}")))
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Format(format!("metrics CSV: {e}"))
}

pub fn write_metrics_csv(path: impl AsRef<Path>, comments: &[(String, String)], rows: &[EpochMetrics]) -> Result<()> {
    let mut w = MetricsWriter::create(path, comments)?;
    rows.iter().try_for_each(|m| w.write(m))
}

/// Reads a metrics CSV back: config comments and rows.
pub fn read_metrics_csv(path: impl AsRef<Path>) -> Result<(Vec<(String, String)>, Vec<EpochMetrics>)> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let comments = text
        .lines()
        .filter_map(|l| l.strip_prefix('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect();
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header = reader.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",");
    if header != METRICS_HEADER {
        return Err(Error::Format(format!("unexpected metrics header {header:?}")));
    }
    let rows = reader
        .deserialize()
        .collect::<std::result::Result<Vec<EpochMetrics>, _>>()
        .map_err(csv_error)?;
    Ok((comments, rows))
}

/// Least-squares line `y = slope · x + intercept` with its `R²`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Fails on fewer than two points or constant `x` (a degenerate fit).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<LinearFit> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::domain(format!("degenerate fit over {} points", xs.len().min(ys.len()))));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::domain("degenerate fit: all x values are equal"));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Which ranks a rank-scaling sweep varies.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RankSweep {
    /// Every mode takes the grid value.
    Uniform,
    /// Only mode `n` (0-based) takes the grid value; the others keep the base ranks.
    Mode(usize),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankRow {
    pub j: usize,
    pub seconds_per_epoch: f64,
    pub peak_bytes: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RankScaling {
    pub rows: Vec<RankRow>,
    /// Time against `J`; `None` for a single grid point.
    pub time_fit: Option<LinearFit>,
    pub memory_fit: Option<LinearFit>,
}

/// Mean seconds per epoch over `epochs` timed epochs after one warm-up epoch.
fn timed_epochs(hyper: HyperParams, train: &CooTensor, epochs: usize) -> Result<(f64, u64)> {
    let mut trainer = Trainer::new(hyper)?;
    trainer.set_eval_train(false);
    let mut model = trainer.init_model(train.shape())?;
    trainer.run_epoch(&mut model, train, None)?;
    let mut total = 0.0;
    for _ in 0..epochs {
        total += trainer.run_epoch(&mut model, train, None)?.total_s;
    }
    Ok((total / epochs as f64, trainer.peak_bytes() as u64))
}

pub fn bench_rank_scaling(train: &CooTensor, base: &HyperParams, sweep: RankSweep, j_grid: &[usize], epochs: usize) -> Result<RankScaling> {
    if epochs == 0 || j_grid.is_empty() {
        return Err(Error::domain("rank sweep needs at least one epoch and one grid point"));
    }
    let order = train.order();
    let mut rows = Vec::with_capacity(j_grid.len());
    for &j in j_grid {
        let mut hyper = base.clone();
        hyper.ranks = match sweep {
            RankSweep::Uniform => vec![j; order],
            RankSweep::Mode(n) => {
                let mut r = base.ranks_for(order)?.dims().to_vec();
                *r.get_mut(n).ok_or_else(|| Error::domain(format!("mode {n} out of range")))? = j;
                r
            }
        };
        let (seconds, peak) = timed_epochs(hyper, train, epochs)?;
        rows.push(RankRow {
            j,
            seconds_per_epoch: seconds,
            peak_bytes: peak,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.j as f64).collect();
    let ts: Vec<f64> = rows.iter().map(|r| r.seconds_per_epoch).collect();
    let ms: Vec<f64> = rows.iter().map(|r| r.peak_bytes as f64).collect();
    Ok(RankScaling {
        time_fit: linear_fit(&xs, &ts).ok(),
        memory_fit: linear_fit(&xs, &ms).ok(),
        rows,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedupRow {
    pub workers: usize,
    pub seconds: f64,
    pub speedup: f64,
    pub efficiency: f64,
}

/// `speedup(L) = T_1 / T_L`, `efficiency = speedup / L`. The one-worker run
/// uses the same strategy as the others.
pub fn bench_speedup(train: &CooTensor, base: &HyperParams, thread_grid: &[usize], epochs: usize) -> Result<Vec<SpeedupRow>> {
    if epochs == 0 || thread_grid.contains(&0) {
        return Err(Error::domain("speedup sweep needs epochs ≥ 1 and worker counts ≥ 1"));
    }
    let strategy = if base.strategy == Strategy::Serial { Strategy::Improved } else { base.strategy };
    let time = |l: usize| -> Result<f64> {
        let hyper = HyperParams {
            threads: l,
            strategy,
            ..base.clone()
        };
        Ok(timed_epochs(hyper, train, epochs)?.0)
    };
    let t1 = time(1)?;
    thread_grid
        .iter()
        .map(|&l| {
            let seconds = if l == 1 { t1 } else { time(l)? };
            let speedup = t1 / seconds;
            Ok(SpeedupRow {
                workers: l,
                seconds,
                speedup,
                efficiency: speedup / l as f64,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_metrics() {
        let (rmse, mae) = rmse_mae_from_errors(&[0.0, 2.0]).unwrap();
        assert!((rmse - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mae, 1.0);
        assert_eq!(rmse_mae_from_errors(&[0.0; 4]).unwrap(), (0.0, 0.0));
        assert!(rmse_mae_from_errors(&[]).is_err());
    }

    #[test]
    fn comm_examples() {
        let c = comm_cost_report(&Ranks::new(vec![5, 5, 5, 5], 5).unwrap());
        assert_eq!((c.dense_core_params, c.kruskal_params), (625, 100));
        assert_eq!(c.ratio, 6.25);
        let c = comm_cost_report(&Ranks::new(vec![10, 10, 10], 2).unwrap());
        assert_eq!((c.dense_core_params, c.kruskal_params), (1000, 60));
        let c = comm_cost_report(&Ranks::new(vec![1], 1).unwrap());
        assert_eq!(c.dense_core_params, c.kruskal_params);
    }

    #[test]
    fn fits() {
        let f = linear_fit(&[1.0, 2.0, 3.0], &[3.0, 5.0, 7.0]).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && (f.intercept - 1.0).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0], &[1.0]).is_err());
        assert!(linear_fit(&[2.0, 2.0], &[1.0, 3.0]).is_err());
    }

    #[test]
    fn metrics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![
            EpochMetrics {
                epoch: 1,
                core_s: 0.25,
                factor_s: 1.0 / 3.0,
                total_s: 0.6,
                train_rmse: 1.5,
                train_mae: 1.25,
                test_rmse: f64::NAN,
                test_mae: f64::NAN,
                peak_bytes: 1 << 40,
                comm_bytes: 800,
            },
            EpochMetrics {
                epoch: 2,
                core_s: 1e-9,
                factor_s: 2.0,
                total_s: 2.0,
                train_rmse: 0.1,
                train_mae: 0.05,
                test_rmse: 0.2,
                test_mae: 0.15,
                peak_bytes: 3,
                comm_bytes: 0,
            },
        ];
        let comments = vec![("seed".to_string(), "7".to_string())];
        write_metrics_csv(&path, &comments, &rows).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# seed = 7\nepoch,core_s,"));
        let (c, back) = read_metrics_csv(&path).unwrap();
        assert_eq!(c, comments);
        assert_eq!(back[1], rows[1]);
        assert_eq!(back[0].factor_s, rows[0].factor_s);
        assert!(back[0].test_rmse.is_nan());
    }
}
