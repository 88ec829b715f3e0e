use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FoldAssignment {
    /// `folds[n]` is the fold of sample `n`.
    Assigned(Vec<usize>),
    /// A label value has fewer than `k` samples; cross-validation is skipped.
    Skipped,
}

/// Stratified k-fold assignment.
///
/// Each label group is shuffled with a seeded ChaCha8 stream, then positives
/// followed by negatives are dealt round-robin over the folds in one pass, so
/// fold sizes and per-fold positive counts each differ by at most one.
pub fn stratified_folds(labels: &[bool], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count {k} < 2")));
    }
    let mut pos: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut neg: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    if pos.len() < k || neg.len() < k {
        return Ok(FoldAssignment::Skipped);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pos.shuffle(&mut rng);
    neg.shuffle(&mut rng);
    let mut folds = vec![0; labels.len()];
    for (slot, &i) in pos.iter().chain(neg.iter()).enumerate() {
        folds[i] = slot % k;
    }
    Ok(FoldAssignment::Assigned(folds))
}
