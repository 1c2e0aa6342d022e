use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::PAD_ID;
use crate::error::{Error, Result};

/// Ids padded to a common width, with a mask of real positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Padded {
    pub rows: usize,
    pub cols: usize,
    pub ids: Vec<usize>,
    pub mask: Vec<bool>,
}

impl Padded {
    pub fn new(seqs: &[Vec<usize>]) -> Self {
        let rows = seqs.len();
        let cols = seqs.iter().map(Vec::len).max().unwrap_or(0);
        let mut ids = vec![PAD_ID; rows * cols];
        let mut mask = vec![false; rows * cols];
        for (r, s) in seqs.iter().enumerate() {
            ids[r * cols..r * cols + s.len()].copy_from_slice(s);
            mask[r * cols..r * cols + s.len()]
                .iter_mut()
                .for_each(|m| *m = true);
        }
        Self {
            rows,
            cols,
            ids,
            mask,
        }
    }

    pub fn row_len(&self, r: usize) -> usize {
        self.mask[r * self.cols..(r + 1) * self.cols]
            .iter()
            .filter(|&&m| m)
            .count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Batch {
    pub sources: Vec<Vec<usize>>,
    pub targets: Vec<Vec<usize>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.sources.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sources.is_empty()
    }

    pub fn source_matrix(&self) -> Padded {
        Padded::new(&self.sources)
    }

    pub fn target_matrix(&self) -> Padded {
        Padded::new(&self.targets)
    }

    pub fn reversed_target_matrix(&self) -> Padded {
        let rev: Vec<Vec<usize>> = self
            .targets
            .iter()
            .map(|t| t.iter().rev().copied().collect())
            .collect();
        Padded::new(&rev)
    }
}

/// Drops pairs with either side longer than `max_len`, shuffles the rest
/// with `seed` and cuts them into batches of `batch_size` (the last may be
/// smaller).
pub fn make_batches(
    pairs: &[(Vec<usize>, Vec<usize>)],
    batch_size: usize,
    max_len: usize,
    seed: u64,
) -> Result<Vec<Batch>> {
    if batch_size == 0 {
        return Err(Error::Input("batch size must be positive".into()));
    }
    let mut kept: Vec<&(Vec<usize>, Vec<usize>)> = pairs
        .iter()
        .filter(|(s, t)| !s.is_empty() && !t.is_empty() && s.len() <= max_len && t.len() <= max_len)
        .collect();
    if kept.is_empty() {
        return Err(Error::Data(format!(
            "no training pairs left after the length filter (max {max_len} tokens)"
        )));
    }
    kept.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(kept
        .chunks(batch_size)
        .map(|c| Batch {
            sources: c.iter().map(|p| p.0.clone()).collect(),
            targets: c.iter().map(|p| p.1.clone()).collect(),
        })
        .collect())
}
