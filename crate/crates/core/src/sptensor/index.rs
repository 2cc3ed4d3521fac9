//! Index algebra of tensor unfolding and vectorization.
//!
//! All public functions here take 1-based coordinates and a 1-based mode and
//! return 1-based positions:
//!
//! * unfolding column: `j = 1 + Σ_{k≠n} (i_k − 1) ∏_{m<k, m≠n} I_m`
//! * mode-n vectorization: `k = (j − 1) I_n + i_n`
//!
//! Mode 1 varies fastest among the non-`n` modes, which is also the column
//! order of the Kronecker chain `A(N) ⊗ … ⊗ A(1)` with mode `n` skipped.

use super::Shape;
use crate::error::{Error, Result};

fn check_mode(shape: &Shape, mode: usize) -> Result<()> {
    if mode == 0 || mode > shape.order() {
        return Err(Error::domain(format!(
            "mode {mode} out of range 1..={}",
            shape.order()
        )));
    }
    Ok(())
}

fn check_coord(shape: &Shape, coord: &[usize]) -> Result<()> {
    if coord.len() != shape.order() {
        return Err(Error::domain(format!(
            "coordinate has {} indices, tensor order is {}",
            coord.len(),
            shape.order()
        )));
    }
    for (k, (&i, &d)) in coord.iter().zip(shape.dims()).enumerate() {
        if i == 0 || i > d {
            return Err(Error::domain(format!(
                "index {i} of mode {} out of range 1..={d}",
                k + 1
            )));
        }
    }
    Ok(())
}

/// Column of `coord` in the mode-`mode` unfolding `X(n)`.
pub fn unfold_col_index(shape: &Shape, coord: &[usize], mode: usize) -> Result<u64> {
    check_mode(shape, mode)?;
    check_coord(shape, coord)?;
    let n = mode - 1;
    let mut j = 0u64;
    let mut stride = 1u64;
    for (k, (&i, &d)) in coord.iter().zip(shape.dims()).enumerate() {
        if k == n {
            continue;
        }
        j += (i as u64 - 1) * stride;
        stride *= d as u64;
    }
    Ok(j + 1)
}

/// Position of `coord` in the mode-`mode` vectorization `Vec_n(X)`.
pub fn vec_index(shape: &Shape, coord: &[usize], mode: usize) -> Result<u64> {
    let j = unfold_col_index(shape, coord, mode)?;
    let rows = shape.dim(mode - 1) as u64;
    Ok((j - 1) * rows + coord[mode - 1] as u64)
}

/// Coordinate at position `k` of the mode-`mode` vectorization.
pub fn invert_vec_index(shape: &Shape, k: u64, mode: usize) -> Result<Vec<usize>> {
    check_mode(shape, mode)?;
    if k == 0 || k > shape.total() {
        return Err(Error::domain(format!(
            "vectorization index {k} out of range 1..={}",
            shape.total()
        )));
    }
    let n = mode - 1;
    let rows = shape.dim(n) as u64;
    let k0 = k - 1;
    let mut coord = vec![0usize; shape.order()];
    coord[n] = (k0 % rows) as usize + 1;
    let mut rest = k0 / rows;
    for (m, &d) in shape.dims().iter().enumerate() {
        if m == n {
            continue;
        }
        coord[m] = (rest % d as u64) as usize + 1;
        rest /= d as u64;
    }
    Ok(coord)
}

/// 0-based strides of the non-`n` modes in the mode-`n` unfolding column index
/// (the entry for mode `n` itself is zero).
pub(crate) fn unfold_strides(dims: &[usize], n: usize) -> Vec<usize> {
    let mut strides = vec![0usize; dims.len()];
    let mut s = 1usize;
    for (k, &d) in dims.iter().enumerate() {
        if k != n {
            strides[k] = s;
            s *= d;
        }
    }
    strides
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s234() -> Shape {
        Shape::new(vec![2, 3, 4]).unwrap()
    }

    #[test]
    fn unfold_examples() {
        assert_eq!(unfold_col_index(&s234(), &[2, 3, 4], 1).unwrap(), 12);
        assert_eq!(unfold_col_index(&s234(), &[2, 3, 4], 2).unwrap(), 8);
        for n in 1..=3 {
            assert_eq!(unfold_col_index(&s234(), &[1, 1, 1], n).unwrap(), 1);
        }
    }

    #[test]
    fn vec_examples() {
        assert_eq!(vec_index(&s234(), &[2, 3, 4], 1).unwrap(), 24);
        assert_eq!(vec_index(&s234(), &[1, 1, 1], 3).unwrap(), 1);
        let s57 = Shape::new(vec![5, 7]).unwrap();
        assert_eq!(unfold_col_index(&s57, &[5, 7], 2).unwrap(), 5);
        assert_eq!(vec_index(&s57, &[5, 7], 2).unwrap(), 35);
    }

    #[test]
    fn invert_examples() {
        assert_eq!(invert_vec_index(&s234(), 24, 1).unwrap(), vec![2, 3, 4]);
        assert_eq!(invert_vec_index(&s234(), 1, 2).unwrap(), vec![1, 1, 1]);
    }

    #[test]
    fn domain_errors() {
        assert!(unfold_col_index(&s234(), &[3, 1, 1], 1).is_err());
        assert!(unfold_col_index(&s234(), &[0, 1, 1], 1).is_err());
        assert!(unfold_col_index(&s234(), &[1, 1], 1).is_err());
        assert!(vec_index(&s234(), &[1, 1, 1], 0).is_err());
        assert!(vec_index(&s234(), &[1, 1, 1], 4).is_err());
        assert!(invert_vec_index(&s234(), 0, 1).is_err());
        assert!(invert_vec_index(&s234(), 25, 1).is_err());
    }

    #[test]
    fn strides_skip_mode() {
        assert_eq!(unfold_strides(&[2, 3, 4], 0), vec![0, 1, 3]);
        assert_eq!(unfold_strides(&[2, 3, 4], 1), vec![1, 0, 2]);
        assert_eq!(unfold_strides(&[2, 3, 4], 2), vec![1, 2, 0]);
    }
}
