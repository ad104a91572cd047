//! Mixed-radix encoding of factor vectors.
//!
//! A factor vector `[x_0, .., x_{k-1}]` over dimensions `[d_0, .., d_{k-1}]`
//! maps to `((x_0 * d_1 + x_1) * d_2 + x_2) ...`, so the last factor varies
//! fastest. State factors precede action factors in a joint vector, which
//! makes the flat state-action index equal to `s * A + a`.

use crate::error::{Error, Result};

/// A full factor vector packed into a single mixed-radix integer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FlatIndex(pub usize);

impl From<FlatIndex> for usize {
    fn from(idx: FlatIndex) -> usize {
        idx.0
    }
}

/// Product of a list of dimensions (1 for the empty list).
pub fn cardinality(dims: &[usize]) -> usize {
    dims.iter().product()
}

pub fn encode_index(factors: &[usize], dims: &[usize]) -> Result<FlatIndex> {
    if factors.len() != dims.len() {
        return Err(Error::Length {
            expected: dims.len(),
            actual: factors.len(),
        });
    }
    let mut value = 0usize;
    for (position, (&x, &d)) in factors.iter().zip(dims).enumerate() {
        if x >= d {
            return Err(Error::Dimension {
                position,
                value: x,
                bound: d,
            });
        }
        value = value * d + x;
    }
    Ok(FlatIndex(value))
}

pub fn decode_index(idx: FlatIndex, dims: &[usize]) -> Result<Vec<usize>> {
    let total = cardinality(dims);
    if idx.0 >= total {
        return Err(Error::Dimension {
            position: 0,
            value: idx.0,
            bound: total,
        });
    }
    let mut out = vec![0; dims.len()];
    decode_into(idx.0, dims, &mut out);
    Ok(out)
}

/// Unchecked decode into a caller-provided buffer.
pub(crate) fn decode_into(mut value: usize, dims: &[usize], out: &mut [usize]) {
    for (slot, &d) in out.iter_mut().zip(dims).rev() {
        *slot = value % d;
        value /= d;
    }
}

/// Unchecked encode; callers guarantee every component is in range.
pub(crate) fn encode_unchecked<I>(factors: I, dims: &[usize]) -> usize
where
    I: IntoIterator<Item = usize>,
{
    factors
        .into_iter()
        .zip(dims)
        .fold(0, |acc, (x, &d)| acc * d + x)
}
