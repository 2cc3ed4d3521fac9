use proptest::prelude::*;

use sptucker::eval::{comm_cost_report, global_mean_baseline, linear_fit, read_metrics_csv, rmse_mae, rmse_mae_from_errors, write_metrics_csv};
use sptucker::{EpochMetrics, Ranks};
use sptucker_oracle::compensated_sum;
use sptucker_oracle::fixtures::{exact_tensor, random_instance, Limits};

fn finite_or_nan() -> impl Strategy<Value = f64> {
    prop_oneof![9 => -1e9f64..1e9, 1 => Just(f64::NAN)]
}

fn row() -> impl Strategy<Value = EpochMetrics> {
    (
        1usize..10_000,
        (0.0f64..100.0, 0.0f64..100.0, 0.0f64..200.0),
        (finite_or_nan(), finite_or_nan(), finite_or_nan(), finite_or_nan()),
        (any::<u64>(), any::<u64>()),
    )
        .prop_map(|(epoch, (c, f, t), (a, b, x, y), (p, q))| EpochMetrics {
            epoch,
            core_s: c,
            factor_s: f,
            total_s: t,
            train_rmse: a,
            train_mae: b,
            test_rmse: x,
            test_mae: y,
            peak_bytes: p,
            comm_bytes: q,
        })
}

fn same(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_csv_round_trips(rows in prop::collection::vec(row(), 0..20), seed in any::<u32>()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let comments = vec![("seed".to_string(), seed.to_string()), ("ranks".to_string(), "5,5,5".to_string())];
        write_metrics_csv(&path, &comments, &rows).unwrap();
        let (c, back) = read_metrics_csv(&path).unwrap();
        prop_assert_eq!(c, comments);
        prop_assert_eq!(back.len(), rows.len());
        for (a, b) in rows.iter().zip(&back) {
            prop_assert_eq!((a.epoch, a.peak_bytes, a.comm_bytes), (b.epoch, b.peak_bytes, b.comm_bytes));
            for (x, y) in [(a.core_s, b.core_s), (a.factor_s, b.factor_s), (a.total_s, b.total_s), (a.train_rmse, b.train_rmse),
                           (a.train_mae, b.train_mae), (a.test_rmse, b.test_rmse), (a.test_mae, b.test_mae)] {
                prop_assert!(same(x, y), "{} vs {}", x, y);
            }
        }
    }

    #[test]
    fn error_metrics_are_order_free_and_ordered(mut errs in prop::collection::vec(-1e3f64..1e3, 1..500)) {
        let (rmse, mae) = rmse_mae_from_errors(&errs).unwrap();
        let n = errs.len() as f64;
        let rmse_ref = (compensated_sum(errs.iter().map(|e| e * e)) / n).sqrt();
        let mae_ref = compensated_sum(errs.iter().map(|e| e.abs())) / n;
        prop_assert!((rmse - rmse_ref).abs() <= 1e-12 * rmse_ref.max(1.0));
        prop_assert!((mae - mae_ref).abs() <= 1e-12 * mae_ref.max(1.0));
        prop_assert!(mae <= rmse * (1.0 + 1e-12));
        let mean = compensated_sum(errs.iter().copied()) / n;
        prop_assert!(rmse * rmse >= mean * mean * (1.0 - 1e-12));
        errs.reverse();
        let (r2, m2) = rmse_mae_from_errors(&errs).unwrap();
        prop_assert!((r2 - rmse).abs() <= 1e-12 * rmse.max(1.0));
        prop_assert!((m2 - mae).abs() <= 1e-12 * mae.max(1.0));
    }

    #[test]
    fn exchange_counts_follow_the_ranks(j in 1usize..20, order in 2usize..6) {
        prop_assume!((j as u64).pow(order as u32) <= 100_000);
        let c = comm_cost_report(&Ranks::uniform(order, j, j).unwrap());
        prop_assert_eq!(c.kruskal_params, (order * j * j) as u64);
        prop_assert_eq!(c.dense_core_params, (j as u64).pow(order as u32));
    }
}

#[test]
fn exact_predictions_score_zero() {
    let inst = random_instance(4, &Limits::default());
    let t = exact_tensor(&inst.model, &inst.tensor);
    let (rmse, mae) = rmse_mae(&inst.model, &t).unwrap();
    assert!(rmse < 1e-12 && mae < 1e-12);
}

#[test]
fn baseline_predicts_the_training_mean() {
    let inst = random_instance(6, &Limits::default());
    let (rmse, _) = global_mean_baseline(&inst.tensor, &inst.tensor).unwrap();
    let n = inst.tensor.nnz() as f64;
    let mean = inst.tensor.values().iter().sum::<f64>() / n;
    let var = inst.tensor.values().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!((rmse - var.sqrt()).abs() < 1e-12);
}

#[test]
fn linear_fit_recovers_a_line() {
    let xs: Vec<f64> = (1..=10).map(f64::from).collect();
    let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x - 2.0).collect();
    let f = linear_fit(&xs, &ys).unwrap();
    assert!((f.slope - 3.0).abs() < 1e-12 && (f.intercept + 2.0).abs() < 1e-12 && (f.r2 - 1.0).abs() < 1e-12);
    assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_err());
}
