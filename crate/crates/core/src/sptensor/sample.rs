use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::CooTensor;
use crate::error::{Error, Result};

/// Splits entries into disjoint train and test tensors of the same shape.
///
/// The test part holds `round(test_fraction · nnz)` entries chosen by a
/// seeded shuffle; both parts keep the original storage order.
pub fn train_test_split(
    t: &CooTensor,
    test_fraction: f64,
    seed: u64,
) -> Result<(CooTensor, CooTensor)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::domain(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    let nnz = t.nnz();
    let n_test = (test_fraction * nnz as f64).round() as usize;
    if n_test == 0 || n_test == nnz {
        return Err(Error::domain(format!(
            "fraction {test_fraction} of {nnz} entries leaves an empty partition"
        )));
    }
    let mut order: Vec<usize> = (0..nnz).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (test, train) = order.split_at_mut(n_test);
    test.sort_unstable();
    train.sort_unstable();
    Ok((t.select(train), t.select(test)))
}

/// Draws `m` distinct entry indices uniformly without replacement.
pub fn sample_batch<R: Rng + ?Sized>(nnz: usize, m: usize, rng: &mut R) -> Result<Vec<usize>> {
    if m == 0 || m > nnz {
        return Err(Error::domain(format!(
            "batch size {m} outside 1..={nnz}"
        )));
    }
    Ok(index::sample(rng, nnz, m).into_vec())
}
