//! Moving block bootstrap over prefix sums.
//!
//! A resample of a length-`n` series concatenates `ceil(n / l)` blocks of `l`
//! consecutive observations whose starts are drawn uniformly from
//! `0..=n - l`; the last block is truncated so the resample has length `n`.
//! Only resample *means* are ever needed, so each block contributes one
//! prefix-sum difference and a resample costs `O(n / l)`.

use rand::Rng;

use crate::{Error, Result};

/// Smallest `l` with `l^3 >= n`, i.e. `ceil(n^(1/3))` without rounding noise.
pub fn default_block_length(n: usize) -> usize {
    let mut l = (n as f64).cbrt().floor().max(1.0) as usize;
    while l * l * l < n {
        l += 1;
    }
    while l > 1 && (l - 1) * (l - 1) * (l - 1) >= n {
        l -= 1;
    }
    l
}

/// `out[k] = x[0] + ... + x[k-1]`, with `out[0] = 0`.
pub fn prefix_sums(x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len() + 1);
    let mut acc = 0.0;
    out.push(acc);
    for v in x {
        acc += v;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MovingBlockBootstrap {
    len: usize,
    block_length: usize,
    blocks: usize,
}

impl MovingBlockBootstrap {
    pub fn new(len: usize, block_length: usize) -> Result<Self> {
        if len == 0 || block_length == 0 || block_length > len {
            return Err(Error::InvalidParameter(format!(
                "block length {block_length} for a series of length {len}"
            )));
        }
        Ok(Self {
            len,
            block_length,
            blocks: len.div_ceil(block_length),
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn block_length(&self) -> usize {
        self.block_length
    }

    /// Fills `starts` with the block starts of one resample.
    pub fn draw_starts<R: Rng + ?Sized>(&self, rng: &mut R, starts: &mut Vec<usize>) {
        let max_start = self.len - self.block_length;
        starts.clear();
        starts.extend((0..self.blocks).map(|_| rng.random_range(0..=max_start)));
    }

    /// Length of block `k` of a resample.
    #[inline]
    fn block_len(&self, k: usize) -> usize {
        if k + 1 == self.blocks {
            self.len - k * self.block_length
        } else {
            self.block_length
        }
    }

    /// Mean of the resample described by `starts`, given `prefix_sums` of the
    /// original series.
    pub fn resampled_mean(&self, prefix: &[f64], starts: &[usize]) -> f64 {
        debug_assert_eq!(prefix.len(), self.len + 1);
        let total: f64 = starts
            .iter()
            .enumerate()
            .map(|(k, &s)| prefix[s + self.block_len(k)] - prefix[s])
            .sum();
        total / self.len as f64
    }

    /// Materializes the index sequence of a resample (used by tests and for
    /// inspection; the fast path never builds it).
    pub fn indices(&self, starts: &[usize]) -> Vec<usize> {
        starts
            .iter()
            .enumerate()
            .flat_map(|(k, &s)| s..s + self.block_len(k))
            .collect()
    }
}
