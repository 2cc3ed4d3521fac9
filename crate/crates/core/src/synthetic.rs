//! Synthetic sparse tensors drawn from a known Tucker model.
//!
//! Ground-truth factors and Kruskal matrices are uniform on `(0, 1)`; the
//! first factor is rescaled so the noiseless observed values average 1.
//! Observed positions are distinct and uniform; Gaussian noise is added.

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{KruskalCore, Matrix, PredictScratch, Ranks, TuckerModel};
use crate::sptensor::{CooTensor, Shape};

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub r_core: usize,
    pub nnz: usize,
    pub noise_std: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    /// `nnz = round(density · ∏ dims)`.
    pub fn with_density(dims: Vec<usize>, ranks: Vec<usize>, r_core: usize, density: f64, noise_std: f64, seed: u64) -> Self {
        let total: f64 = dims.iter().map(|&d| d as f64).product();
        SyntheticSpec {
            nnz: (density * total).round() as usize,
            dims,
            ranks,
            r_core,
            noise_std,
            seed,
        }
    }
}

/// Returns the observed tensor and the ground-truth model.
pub fn synthetic_tucker(spec: &SyntheticSpec) -> Result<(CooTensor, TuckerModel)> {
    let shape = Shape::new(spec.dims.clone())?;
    let ranks = Ranks::new(spec.ranks.clone(), spec.r_core)?;
    if ranks.order() != shape.order() {
        return Err(Error::domain("ranks and dims differ in order"));
    }
    if spec.nnz == 0 || spec.nnz as u64 > shape.total() {
        return Err(Error::domain(format!(
            "cannot place {} entries in {} cells",
            spec.nnz,
            shape.total()
        )));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::domain(format!("noise stddev {} must be finite and ≥ 0", spec.noise_std)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut uniform = |rows: usize, cols: usize| {
        let data = (0..rows * cols).map(|_| rng.random::<f64>()).collect();
        Matrix::from_vec(rows, cols, data)
    };
    let order = shape.order();
    let mut factors = (0..order)
        .map(|n| uniform(shape.dim(n), ranks.dim(n)))
        .collect::<Result<Vec<_>>>()?;
    let mats = (0..order)
        .map(|n| uniform(ranks.dim(n), ranks.r_core()))
        .collect::<Result<Vec<_>>>()?;

    let total = usize::try_from(shape.total()).map_err(|_| Error::domain("shape too large to sample"))?;
    let mut cells = index::sample(&mut rng, total, spec.nnz).into_vec();
    cells.sort_unstable();
    let mut coords = Vec::with_capacity(spec.nnz * order);
    for &c in &cells {
        let mut rest = c;
        for &d in shape.dims() {
            coords.push((rest % d) as u32);
            rest /= d;
        }
    }

    let probe = TuckerModel::new(shape.clone(), ranks.clone(), factors.clone(), KruskalCore::new(mats.clone())?)?;
    let mut scratch = PredictScratch::new(&probe);
    let mean = coords
        .chunks_exact(order)
        .map(|c| probe.predict_with(c, &mut scratch))
        .sum::<f64>()
        / spec.nnz as f64;
    for v in factors[0].data_mut() {
        *v /= mean;
    }
    let truth = TuckerModel::new(shape.clone(), ranks, factors, KruskalCore::new(mats)?)?;

    let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE)).map_err(|e| Error::domain(e.to_string()))?;
    let values = coords
        .chunks_exact(order)
        .map(|c| {
            let x = truth.predict_with(c, &mut scratch);
            if spec.noise_std > 0.0 {
                x + noise.sample(&mut rng)
            } else {
                x
            }
        })
        .collect();
    Ok((CooTensor::new(shape, coords, values)?, truth))
}
