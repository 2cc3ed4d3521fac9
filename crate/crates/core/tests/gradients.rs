use sptucker::core_opt::grad_b;
use sptucker::factor_opt::grad_a_row;
use sptucker::TuckerModel;
use sptucker_oracle::fixtures::{random_instance, Limits};
use sptucker_oracle::{core_objective, fd_gradient, rel_err, row_objective};

const STEP: f64 = 1e-6;
const TOL: f64 = 1e-6;

fn small() -> Limits {
    Limits {
        max_dim: 5,
        max_rank: 3,
        ..Limits::default()
    }
}

fn every_other(nnz: usize) -> Vec<usize> {
    (0..nnz).step_by(2).collect()
}

#[test]
fn core_gradient_matches_finite_differences() {
    for seed in 0..15 {
        let inst = random_instance(seed, &small());
        let batch = every_other(inst.tensor.nnz());
        let lambda = 0.03;
        for n in 0..inst.model.order() {
            for r in 0..inst.model.core().r_core() {
                let analytic = grad_b(&inst.model, &inst.tensor, &batch, n, r, lambda).g;
                let b0 = inst.model.core().matrix(n).column(r);
                let numeric = fd_gradient(
                    |b| {
                        let mut m: TuckerModel = inst.model.clone();
                        m.core_mut().matrix_mut(n).set_column(r, b);
                        m.refresh_core_cache();
                        core_objective(&m, &inst.tensor, &batch, n, r, lambda).unwrap()
                    },
                    &b0,
                    STEP,
                );
                for (g, h) in analytic.iter().zip(&numeric) {
                    assert!(rel_err(*g, *h) <= TOL, "seed {seed} n {n} r {r}: {g} vs {h}");
                }
            }
        }
    }
}

#[test]
fn factor_gradient_matches_finite_differences() {
    for seed in 100..115 {
        let inst = random_instance(seed, &small());
        let lambda = 0.02;
        for n in 0..inst.model.order() {
            let group = inst.tensor.mode_group(n);
            for row in 0..group.rows() {
                let batch = group.bucket(row).to_vec();
                if batch.is_empty() {
                    continue;
                }
                let analytic = grad_a_row(&inst.model, &inst.tensor, n, row, &batch, lambda).g;
                let a0 = inst.model.factor(n).row(row).to_vec();
                let numeric = fd_gradient(
                    |a| {
                        let mut m = inst.model.clone();
                        m.factor_mut(n).row_mut(row).copy_from_slice(a);
                        row_objective(&m, &inst.tensor, n, row, &batch, lambda).unwrap()
                    },
                    &a0,
                    STEP,
                );
                for (g, h) in analytic.iter().zip(&numeric) {
                    assert!(rel_err(*g, *h) <= TOL, "seed {seed} n {n} row {row}: {g} vs {h}");
                }
            }
        }
    }
}

#[test]
fn factor_gradient_on_a_subsample_of_the_row() {
    let inst = random_instance(7, &Limits { density: 0.8, ..small() });
    let n = 0;
    let bucket = inst.tensor.mode_group(n).bucket(0).to_vec();
    let batch: Vec<usize> = bucket.iter().copied().step_by(2).collect();
    let analytic = grad_a_row(&inst.model, &inst.tensor, n, 0, &batch, 0.0).g;
    let a0 = inst.model.factor(n).row(0).to_vec();
    let numeric = fd_gradient(
        |a| {
            let mut m = inst.model.clone();
            m.factor_mut(n).row_mut(0).copy_from_slice(a);
            row_objective(&m, &inst.tensor, n, 0, &batch, 0.0).unwrap()
        },
        &a0,
        STEP,
    );
    for (g, h) in analytic.iter().zip(&numeric) {
        assert!(rel_err(*g, *h) <= TOL, "{g} vs {h}");
    }
}
