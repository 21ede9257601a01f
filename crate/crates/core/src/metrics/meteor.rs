//! METEOR over token sequences: exact-match unigram alignment, harmonic
//! mean weighted towards recall, and a fragmentation penalty.

use std::collections::HashMap;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use super::MetricError;
use crate::pylang::code_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteorParams {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for MeteorParams {
    fn default() -> Self {
        Self {
            alpha: 0.9,
            beta: 3.0,
            gamma: 0.5,
        }
    }
}

impl MeteorParams {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self, MetricError> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(MetricError::InvalidParams(format!("alpha {alpha} outside (0, 1)")));
        }
        if !(beta > 0.0) {
            return Err(MetricError::InvalidParams(format!("beta {beta} must be positive")));
        }
        if !(0.0..=1.0).contains(&gamma) {
            return Err(MetricError::InvalidParams(format!("gamma {gamma} outside [0, 1]")));
        }
        Ok(Self { alpha, beta, gamma })
    }
}

/// Aligned (candidate index, reference index) pairs sorted by candidate index.
///
/// The number of pairs is the maximum possible. Chunks are reduced greedily
/// by repeatedly aligning the longest run of consecutive unaligned tokens
/// common to both sides.
pub fn align<T: Eq>(candidate: &[T], reference: &[T]) -> Vec<(usize, usize)> {
    let (n, m) = (candidate.len(), reference.len());
    let mut used_c = vec![false; n];
    let mut used_r = vec![false; m];
    let mut pairs = Vec::new();
    // run[i][j]: length of the common unaligned run ending at (i-1, j-1).
    let mut run = vec![0usize; (n + 1) * (m + 1)];
    loop {
        let mut best = (0usize, 0usize, 0usize);
        for i in 1..=n {
            for j in 1..=m {
                let idx = i * (m + 1) + j;
                run[idx] = if !used_c[i - 1] && !used_r[j - 1] && candidate[i - 1] == reference[j - 1] {
                    run[(i - 1) * (m + 1) + (j - 1)] + 1
                } else {
                    0
                };
                if run[idx] > best.0 {
                    best = (run[idx], i, j);
                }
            }
        }
        let (len, end_c, end_r) = best;
        if len == 0 {
            break;
        }
        for k in 0..len {
            let (ci, ri) = (end_c - len + k, end_r - len + k);
            used_c[ci] = true;
            used_r[ri] = true;
            pairs.push((ci, ri));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Number of maximal runs of consecutive pairs in an alignment.
pub fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// Score from match and chunk counts.
pub fn meteor_from_counts(matches: usize, chunks: usize, cand_len: usize, ref_len: usize, p: &MeteorParams) -> f64 {
    if matches == 0 {
        return 0.0;
    }
    let m = matches as f64;
    let precision = m / cand_len as f64;
    let recall = m / ref_len as f64;
    let fmean = precision * recall / (p.alpha * precision + (1.0 - p.alpha) * recall);
    let penalty = p.gamma * (chunks as f64 / m).powf(p.beta);
    fmean * (1.0 - penalty)
}

pub fn meteor<T: Eq + Hash>(candidate: &[T], reference: &[T], p: &MeteorParams) -> Result<f64, MetricError> {
    if candidate.is_empty() || reference.is_empty() {
        return Err(MetricError::EmptySequence);
    }
    let pairs = align(candidate, reference);
    debug_assert_eq!(pairs.len(), multiset_overlap(candidate, reference));
    Ok(meteor_from_counts(
        pairs.len(),
        count_chunks(&pairs),
        candidate.len(),
        reference.len(),
        p,
    ))
}

fn multiset_overlap<T: Eq + Hash>(a: &[T], b: &[T]) -> usize {
    let mut counts: HashMap<&T, usize> = HashMap::new();
    for t in b {
        *counts.entry(t).or_default() += 1;
    }
    a.iter()
        .filter(|t| match counts.get_mut(t) {
            Some(c) if *c > 0 => {
                *c -= 1;
                true
            }
            _ => false,
        })
        .count()
}

/// METEOR over the lexical tokens of two scripts.
pub fn meteor_code(candidate: &str, reference: &str, p: &MeteorParams) -> Result<f64, MetricError> {
    meteor(&code_tokens(candidate), &code_tokens(reference), p)
}
