use proptest::prelude::*;

use sptucker::core_opt::compute_w_row;
use sptucker::model::{core_unfold, reconstruct_core};
use sptucker::TuckerModel;
use sptucker_oracle::fixtures::{random_instance, Instance, Limits};
use sptucker_oracle::*;

fn idx(coord: &[u32]) -> Vec<usize> {
    coord.iter().map(|&i| i as usize).collect()
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn predictions_match_dense_reconstruction() {
    for seed in 0..30 {
        let Instance { model, tensor } = random_instance(seed, &Limits::default());
        let full = dense_reconstruct(&model).unwrap();
        for e in 0..tensor.nnz() {
            let c = tensor.coord(e);
            assert!(close(model.predict_entry(c), full.get(&idx(c)), 1e-12), "seed {seed}");
        }
    }
}

#[test]
fn kruskal_core_matches_outer_product_sum() {
    for seed in 0..20 {
        let model = random_instance(seed, &Limits::default()).model;
        let fast = reconstruct_core(model.core());
        let slow = dense_core(&model).unwrap();
        assert_eq!(fast.dims(), &slow.dims[..]);
        for (a, b) in fast.data().iter().zip(&slow.data) {
            assert!(close(*a, *b, 1e-12));
        }
        for n in 0..model.order() {
            let u = core_unfold(&fast, n);
            let v = unfold(&slow, n);
            for (a, b) in u.data().iter().zip(v.data()) {
                assert!(close(*a, *b, 1e-12));
            }
            assert_eq!(model.core_unfolding(n), &u);
        }
    }
}

#[test]
fn e_columns_match_dense_e() {
    for seed in 0..20 {
        let Instance { model, tensor } = random_instance(seed, &Limits::default());
        for n in 0..model.order() {
            let e_dense = dense_e(&model, n).unwrap();
            let s = dense_s(&model, n).unwrap();
            for e in 0..tensor.nnz() {
                let c = tensor.coord(e);
                // column of S(n)ᵀ for this entry is its unfolding column in the data shape
                let col = unfold_column(model.shape().dims(), &idx(c), n);
                let fast = model.e_column(c, n);
                for (j, v) in fast.iter().enumerate() {
                    assert!(close(*v, e_dense.get(j, col), 1e-12));
                }
                let row = model.kron_row_excluding(c, n);
                for (k, v) in row.iter().enumerate() {
                    assert!(close(*v, s.get(col, k), 1e-12));
                }
            }
        }
    }
}

#[test]
fn w_rows_match_h_times_o() {
    for seed in 0..20 {
        let Instance { model, tensor } = random_instance(seed, &Limits::default());
        for n in 0..model.order() {
            let h = dense_h(&model, n).unwrap();
            for r in 0..model.core().r_core() {
                let w = matmul(&h, &dense_o_r(&model, n, r).unwrap()).unwrap();
                let mut out = vec![0.0; model.ranks().dim(n)];
                for e in 0..tensor.nnz() {
                    let c = tensor.coord(e);
                    compute_w_row(&model, c, n, r, &mut out);
                    let row = h_row_of(&model, c, n);
                    for (j, v) in out.iter().enumerate() {
                        assert!(close(*v, w.get(row, j), 1e-12));
                    }
                }
            }
        }
    }
}

#[test]
fn vectorized_reconstruction_is_h_times_vec_core() {
    for seed in 0..15 {
        let model = random_instance(seed, &Limits::default()).model;
        let full = dense_reconstruct(&model).unwrap();
        let core = dense_core(&model).unwrap();
        for n in 0..model.order() {
            let lhs = vectorize(&full, n);
            let rhs = matvec(&dense_h(&model, n).unwrap(), &vectorize(&core, n));
            for (a, b) in lhs.iter().zip(&rhs) {
                assert!(close(*a, *b, 1e-12));
            }
            // Vec_n(Ĝ) = Σ_r O_r b_r
            let mut sum = vec![0.0; core.data.len()];
            for r in 0..model.core().r_core() {
                let t = matvec(&dense_o_r(&model, n, r).unwrap(), &model.core().matrix(n).column(r));
                for (s, v) in sum.iter_mut().zip(t) {
                    *s += v;
                }
            }
            for (a, b) in sum.iter().zip(vectorize(&core, n)) {
                assert!(close(*a, b, 1e-12));
            }
        }
    }
}

#[test]
fn cache_tracks_core_edits() {
    let Instance { mut model, tensor } = random_instance(3, &Limits::default());
    assert!(model.is_cache_fresh());
    model.core_mut().matrix_mut(0).set(0, 0, 3.5);
    assert!(!model.is_cache_fresh());
    model.refresh_core_cache();
    assert!(model.is_cache_fresh());
    let full = dense_reconstruct(&model).unwrap();
    for e in 0..tensor.nnz() {
        let c = tensor.coord(e);
        assert!(close(model.predict_entry(c), full.get(&idx(c)), 1e-12));
    }
}

fn model_strategy() -> impl Strategy<Value = TuckerModel> {
    any::<u64>().prop_map(|seed| random_instance(seed, &Limits::default()).model)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn prediction_is_the_same_through_every_mode(model in model_strategy(), pick in any::<u64>()) {
        let dims = model.shape().dims().to_vec();
        let mut p = pick;
        let coord: Vec<u32> = dims.iter().map(|&d| { let i = (p % d as u64) as u32; p /= d as u64; i }).collect();
        let x = model.predict_entry(&coord);
        for n in 0..model.order() {
            let e = model.e_column(&coord, n);
            let via_n: f64 = model.factor(n).row(coord[n] as usize).iter().zip(&e).map(|(a, b)| a * b).sum();
            prop_assert!(close(x, via_n, 1e-12), "mode {}: {} vs {}", n, x, via_n);
        }
    }

    #[test]
    fn serialization_round_trips(model in model_strategy()) {
        let bytes = sptucker::model::serialize(&model);
        let back = sptucker::model::deserialize(&bytes).unwrap();
        prop_assert_eq!(back.factors(), model.factors());
        prop_assert_eq!(back.core(), model.core());
        prop_assert_eq!(back.dense_core().data(), model.dense_core().data());
        prop_assert_eq!(sptucker::model::serialize(&back), bytes);
    }
}
