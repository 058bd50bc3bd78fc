use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::divergence::SampleSet;
use crate::error::{Error, Result};

/// Row indices of one source batch and one target batch, `n_b` rows each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchIndices {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// Half-and-half batches for one epoch.
///
/// Each domain is shuffled once per epoch (deterministic in `seed` and
/// `epoch`) and read cyclically, `n_b` rows at a time. The epoch has
/// `ceil(max(n_s, n_t) / n_b)` batches, so the larger domain is covered once
/// before anything repeats and the smaller one recycles round-robin.
#[derive(Clone, Debug)]
pub struct HalfHalfSampler {
    source_order: Vec<usize>,
    target_order: Vec<usize>,
    batch_rows: usize,
    batches: usize,
    next: usize,
}

impl HalfHalfSampler {
    pub fn new(
        n_source: usize,
        n_target: usize,
        batch_rows: usize,
        seed: u64,
        epoch: usize,
    ) -> Result<Self> {
        if batch_rows == 0 {
            return Err(Error::InvalidArgument("n_b must be >= 1".into()));
        }
        if n_source == 0 || n_target == 0 {
            return Err(Error::InvalidArgument(
                "both domains need at least one sample".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Stream 0 is left to model initialization.
        rng.set_stream(epoch as u64 + 1);
        let mut source_order: Vec<usize> = (0..n_source).collect();
        let mut target_order: Vec<usize> = (0..n_target).collect();
        source_order.shuffle(&mut rng);
        target_order.shuffle(&mut rng);
        let batches = n_source.max(n_target).div_ceil(batch_rows);
        Ok(HalfHalfSampler {
            source_order,
            target_order,
            batch_rows,
            batches,
            next: 0,
        })
    }

    pub fn batches(&self) -> usize {
        self.batches
    }
}

fn cyclic(order: &[usize], start: usize, len: usize) -> Vec<usize> {
    (start..start + len).map(|k| order[k % order.len()]).collect()
}

impl Iterator for HalfHalfSampler {
    type Item = BatchIndices;

    fn next(&mut self) -> Option<BatchIndices> {
        if self.next >= self.batches {
            return None;
        }
        let start = self.next * self.batch_rows;
        self.next += 1;
        Some(BatchIndices {
            source: cyclic(&self.source_order, start, self.batch_rows),
            target: cyclic(&self.target_order, start, self.batch_rows),
        })
    }
}

/// Sampler over two sample sets.
pub fn half_half_sampler(
    source: &SampleSet,
    target: &SampleSet,
    batch_rows: usize,
    seed: u64,
    epoch: usize,
) -> Result<HalfHalfSampler> {
    HalfHalfSampler::new(source.len(), target.len(), batch_rows, seed, epoch)
}
