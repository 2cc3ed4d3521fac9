//! Seeded random models and tensors for tests.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sptucker::{CooTensor, Ranks, Shape, TuckerModel};

#[derive(Debug, Clone)]
pub struct Instance {
    pub model: TuckerModel,
    pub tensor: CooTensor,
}

/// Size limits for [`random_instance`].
#[derive(Debug, Clone, Copy)]
pub struct Limits {
    pub min_order: usize,
    pub max_order: usize,
    pub max_dim: usize,
    pub max_rank: usize,
    pub max_core_rank: usize,
    /// Fraction of cells observed (at least one).
    pub density: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            min_order: 3,
            max_order: 4,
            max_dim: 8,
            max_rank: 4,
            max_core_rank: 3,
            density: 0.3,
        }
    }
}

/// Random model with `N(0.5, 0.3²)` parameters and a random sparse tensor of
/// the same shape with values uniform on `[0.5, 2)`.
pub fn random_instance(seed: u64, limits: &Limits) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = rng.random_range(limits.min_order..=limits.max_order);
    let dims: Vec<usize> = (0..order).map(|_| rng.random_range(1..=limits.max_dim)).collect();
    let js: Vec<usize> = (0..order).map(|_| rng.random_range(1..=limits.max_rank)).collect();
    let min_j = *js.iter().min().expect("order ≥ 1");
    let r = rng.random_range(1..=limits.max_core_rank.min(min_j));
    let shape = Shape::new(dims.clone()).expect("valid shape");
    let ranks = Ranks::new(js, r).expect("valid ranks");
    let model = TuckerModel::init_gaussian(shape.clone(), ranks, 0.5, 0.3, rng.random()).expect("init");
    let total: usize = dims.iter().product();
    let nnz = ((limits.density * total as f64).round() as usize).clamp(1, total);
    let mut cells = index::sample(&mut rng, total, nnz).into_vec();
    cells.sort_unstable();
    let entries: Vec<(Vec<usize>, f64)> = cells
        .into_iter()
        .map(|mut c| {
            let coord = dims
                .iter()
                .map(|&d| {
                    let i = c % d + 1;
                    c /= d;
                    i
                })
                .collect();
            (coord, rng.random_range(0.5..2.0))
        })
        .collect();
    let tensor = CooTensor::from_entries(shape, entries).expect("distinct cells");
    Instance { model, tensor }
}

/// Tensor on the model's shape whose values are the model's own predictions.
pub fn exact_tensor(model: &TuckerModel, tensor: &CooTensor) -> CooTensor {
    let entries: Vec<(Vec<usize>, f64)> = (0..tensor.nnz())
        .map(|e| {
            let c = tensor.coord(e);
            (c.iter().map(|&i| i as usize + 1).collect(), model.predict_entry(c))
        })
        .collect();
    CooTensor::from_entries(tensor.shape().clone(), entries).expect("same cells")
}
