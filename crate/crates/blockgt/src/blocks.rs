//! Coordinate-block partitioning, uniform block selection, and block-error
//! diagnostics.
//!
//! The decision space splits into `b` contiguous disjoint blocks. Restricting
//! a gradient to one uniformly chosen block and rescaling by `b` gives an
//! unbiased estimate of the full gradient; the gap between the two is the
//! block error, whose exact per-sample moments are checkable by enumerating
//! all `b` choices.

use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Contiguous near-equal split of `[0, n)` into `b` blocks: the first
/// `n mod b` blocks get `ceil(n/b)` coordinates, the rest `floor(n/b)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    dim: usize,
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl BlockPartition {
    pub fn new(n: usize, b: usize) -> Result<Self> {
        if n == 0 || b == 0 || b > n {
            return Err(Error::InvalidArgument(format!(
                "partition needs 1 <= b <= n, got n = {n}, b = {b}"
            )));
        }
        let base = n / b;
        let rem = n % b;
        let sizes: Vec<usize> = (0..b).map(|l| base + usize::from(l < rem)).collect();
        let mut offsets = Vec::with_capacity(b);
        let mut cursor = 0;
        for &s in &sizes {
            offsets.push(cursor);
            cursor += s;
        }
        debug_assert_eq!(cursor, n);
        Ok(Self {
            dim: n,
            sizes,
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_blocks(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, block: usize) -> usize {
        self.sizes[block]
    }

    /// Coordinate range `[offset, offset + size)` of one block.
    pub fn range(&self, block: usize) -> std::ops::Range<usize> {
        self.offsets[block]..self.offsets[block] + self.sizes[block]
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }
}

/// Alias for the constructor, matching the operation vocabulary used by the
/// harness.
pub fn make_partition(n: usize, b: usize) -> Result<BlockPartition> {
    BlockPartition::new(n, b)
}

/// Embed block values back into the full space: the result carries
/// `block_values` on block `l` and zeros elsewhere.
pub fn embed_block(
    partition: &BlockPartition,
    block: usize,
    block_values: &DVector<f64>,
) -> Result<DVector<f64>> {
    if block >= partition.num_blocks() {
        return Err(Error::InvalidArgument(format!(
            "block index {block} out of range (b = {})",
            partition.num_blocks()
        )));
    }
    if block_values.len() != partition.size(block) {
        return Err(Error::InvalidArgument(format!(
            "block {block} has size {}, got values of length {}",
            partition.size(block),
            block_values.len()
        )));
    }
    let mut out = DVector::zeros(partition.dim());
    out.rows_mut(partition.range(block).start, block_values.len())
        .copy_from(block_values);
    Ok(out)
}

/// Block error of a gradient under selection `l`:
/// `e = g - b * embed(l, g restricted to block l)`.
pub fn block_error(g: &DVector<f64>, partition: &BlockPartition, block: usize) -> Result<DVector<f64>> {
    if g.len() != partition.dim() {
        return Err(Error::InvalidArgument(format!(
            "gradient has length {}, partition covers {}",
            g.len(),
            partition.dim()
        )));
    }
    if block >= partition.num_blocks() {
        return Err(Error::InvalidArgument(format!(
            "block index {block} out of range (b = {})",
            partition.num_blocks()
        )));
    }
    let b = partition.num_blocks() as f64;
    let mut e = g.clone();
    for idx in partition.range(block) {
        e[idx] = g[idx] - b * g[idx];
    }
    Ok(e)
}

/// Exact first and second moments of the block error, by enumerating all `b`
/// block choices with equal weight. For any realized gradient the mean error
/// is zero and the mean squared norm equals `(b - 1) * |g|^2`.
pub fn enumerate_block_error_moments(
    g: &DVector<f64>,
    partition: &BlockPartition,
) -> Result<(DVector<f64>, f64)> {
    let b = partition.num_blocks();
    let mut mean = DVector::zeros(g.len());
    let mut mean_sq = 0.0;
    for l in 0..b {
        let e = block_error(g, partition, l)?;
        mean_sq += e.norm_squared();
        mean += e;
    }
    Ok((mean / b as f64, mean_sq / b as f64))
}

/// Uniform block selection over `[0, b)`. Draws pull from whichever stream
/// the caller owns, so selection stays independent of gradient sampling.
#[derive(Debug, Clone, Copy)]
pub struct BlockSelector {
    num_blocks: usize,
}

impl BlockSelector {
    pub fn new(num_blocks: usize) -> Result<Self> {
        if num_blocks == 0 {
            return Err(Error::InvalidArgument("selector needs b >= 1".into()));
        }
        Ok(Self { num_blocks })
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> usize {
        rng.gen_range(0..self.num_blocks)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{derive_stream, StreamPurpose};
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn near_equal_sizes() {
        assert_eq!(BlockPartition::new(10, 4).unwrap().sizes(), &[3, 3, 2, 2]);
        let p = BlockPartition::new(784, 14).unwrap();
        assert!(p.sizes().iter().all(|&s| s == 56));
        let singles = BlockPartition::new(5, 5).unwrap();
        assert!(singles.sizes().iter().all(|&s| s == 1));
    }

    #[test]
    fn bad_block_counts_rejected() {
        assert!(BlockPartition::new(4, 5).is_err());
        assert!(BlockPartition::new(4, 0).is_err());
    }

    #[test]
    fn embed_places_values() {
        let p = BlockPartition::new(4, 2).unwrap();
        let v = DVector::from_vec(vec![3.0, 4.0]);
        let out = embed_block(&p, 1, &v).unwrap();
        assert_eq!(out.as_slice(), &[0.0, 0.0, 3.0, 4.0]);
        assert_eq!(out.norm(), v.norm());
    }

    #[test]
    fn embed_length_mismatch_is_an_error() {
        let p = BlockPartition::new(4, 2).unwrap();
        assert!(embed_block(&p, 0, &DVector::from_vec(vec![1.0])).is_err());
    }

    #[test]
    fn block_error_single_block_vanishes() {
        let p = BlockPartition::new(4, 1).unwrap();
        let g = DVector::from_vec(vec![1.0, -2.0, 0.5, 9.0]);
        let e = block_error(&g, &p, 0).unwrap();
        assert_eq!(e.norm(), 0.0);
    }

    #[test]
    fn block_error_hand_example() {
        let p = BlockPartition::new(4, 2).unwrap();
        let g = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let e = block_error(&g, &p, 0).unwrap();
        assert_eq!(e.as_slice(), &[-1.0, -2.0, 3.0, 4.0]);
    }

    #[test]
    fn moments_hand_example() {
        let p = BlockPartition::new(4, 2).unwrap();
        let g = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0]);
        let (mean, mean_sq) = enumerate_block_error_moments(&g, &p).unwrap();
        assert!(mean.norm() < 1e-15);
        assert!((mean_sq - 30.0).abs() < 1e-12);
    }

    #[test]
    fn moments_single_block() {
        let p = BlockPartition::new(6, 1).unwrap();
        let g = DVector::from_fn(6, |i, _| i as f64 - 2.5);
        let (mean, mean_sq) = enumerate_block_error_moments(&g, &p).unwrap();
        assert_eq!(mean.norm(), 0.0);
        assert_eq!(mean_sq, 0.0);
    }

    #[test]
    fn moments_constant_vector_closed_form() {
        // Equal blocks of a constant vector: mean_sq = (b-1) * n * c^2.
        for (n, b, c) in [(12, 4, 2.5), (9, 3, -1.0)] {
            let p = BlockPartition::new(n, b).unwrap();
            let g = DVector::from_element(n, c);
            let (_, mean_sq) = enumerate_block_error_moments(&g, &p).unwrap();
            let expect = (b as f64 - 1.0) * n as f64 * c * c;
            assert!((mean_sq - expect).abs() < 1e-12 * expect.max(1.0));
        }
    }

    #[test]
    fn selector_draws_are_uniform() {
        let selector = BlockSelector::new(4).unwrap();
        let mut rng = derive_stream(7, 0, 0, StreamPurpose::BlockSelect);
        let mut counts = [0u64; 4];
        let draws = 1_000_000;
        for _ in 0..draws {
            counts[selector.draw(&mut rng)] += 1;
        }
        let p = 0.25;
        let sd = (p * (1.0 - p) * draws as f64).sqrt();
        for &c in &counts {
            assert!(
                (c as f64 - p * draws as f64).abs() <= 4.0 * sd,
                "counts {counts:?} outside 4 sigma"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn embedding_is_complete_and_norm_preserving(
            n in 1usize..40,
            b_raw in 1usize..40,
            seed in 0u64..1000,
        ) {
            let b = b_raw.min(n);
            let p = BlockPartition::new(n, b).unwrap();
            let mut rng = derive_stream(seed, 0, 0, StreamPurpose::Probe);
            let x = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
            let mut rebuilt = DVector::zeros(n);
            let mut sq = 0.0;
            for l in 0..b {
                let range = p.range(l);
                let vals = DVector::from_iterator(range.len(), range.clone().map(|i| x[i]));
                let em = embed_block(&p, l, &vals).unwrap();
                sq += em.norm_squared();
                rebuilt += em;
            }
            prop_assert!((sq - x.norm_squared()).abs() <= 1e-12 * x.norm_squared().max(1.0));
            prop_assert!((rebuilt - &x).norm() <= 1e-12);
        }

        #[test]
        fn block_error_moments_identities(
            n in 1usize..30,
            b_raw in 1usize..30,
            seed in 0u64..1000,
        ) {
            let b = b_raw.min(n);
            let p = BlockPartition::new(n, b).unwrap();
            let mut rng = derive_stream(seed, 1, 0, StreamPurpose::Probe);
            let g = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));
            let (mean, mean_sq) = enumerate_block_error_moments(&g, &p).unwrap();
            let expect = (b as f64 - 1.0) * g.norm_squared();
            prop_assert!(mean.norm() <= 1e-12);
            prop_assert!((mean_sq - expect).abs() <= 1e-12 * expect.max(1.0));
        }
    }
}
