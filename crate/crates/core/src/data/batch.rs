//! Class-rebalanced batch construction.
//!
//! Every batch holds exactly `batch_size / 3` samples of each class. The
//! largest class drives the epoch length and is consumed without
//! replacement, so each of its samples appears at most once per epoch;
//! smaller classes are oversampled uniformly with replacement to fill their
//! quotas.

use crate::data::ClassLabel;
use crate::error::{Error, Result};
use crate::rng::stream_rng;
use alloc::format;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::Rng;

/// Rounds a batch size down to the nearest multiple of the class count.
pub fn round_batch_size(batch_size: usize) -> usize {
    batch_size - batch_size % ClassLabel::COUNT
}

/// Builds one epoch of rebalanced batches over sample indices.
///
/// `batch_size` must be a positive multiple of three. Deterministic in
/// `seed`.
pub fn rebalanced_batches(
    labels: &[ClassLabel],
    batch_size: usize,
    seed: u64,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 || batch_size % ClassLabel::COUNT != 0 {
        return Err(Error::InvalidData(format!(
            "batch size {batch_size} is not a positive multiple of {}",
            ClassLabel::COUNT
        )));
    }
    let quota = batch_size / ClassLabel::COUNT;

    let mut per_class: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, label) in labels.iter().enumerate() {
        per_class[label.index()].push(i);
    }
    for (ci, members) in per_class.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::InvalidData(format!(
                "class {} has no samples",
                ClassLabel::from_index(ci).expect("index < 3")
            )));
        }
    }

    let largest = per_class.iter().map(Vec::len).max().expect("three classes");
    let n_batches = largest / quota;
    if n_batches == 0 {
        return Err(Error::InvalidData(format!(
            "per-class quota {quota} exceeds the largest class ({largest} samples)"
        )));
    }
    let draws = n_batches * quota;

    let mut rng = stream_rng(seed, "rebalance", 0);
    let mut streams: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (stream, members) in streams.iter_mut().zip(&per_class) {
        if members.len() >= draws {
            let mut shuffled = members.clone();
            shuffled.shuffle(&mut rng);
            shuffled.truncate(draws);
            *stream = shuffled;
        } else {
            *stream = (0..draws)
                .map(|_| members[rng.gen_range(0..members.len())])
                .collect();
        }
    }

    let mut batches = Vec::with_capacity(n_batches);
    for b in 0..n_batches {
        let mut batch = Vec::with_capacity(batch_size);
        for stream in &streams {
            batch.extend_from_slice(&stream[b * quota..(b + 1) * quota]);
        }
        batch.shuffle(&mut rng);
        batches.push(batch);
    }
    Ok(batches)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn labels(counts: [usize; 3]) -> Vec<ClassLabel> {
        let mut out = Vec::new();
        for (ci, n) in counts.iter().enumerate() {
            out.extend(core::iter::repeat_n(ClassLabel::from_index(ci).unwrap(), *n));
        }
        out
    }

    fn histogram(batch: &[usize], labels: &[ClassLabel]) -> [usize; 3] {
        let mut h = [0usize; 3];
        for &i in batch {
            h[labels[i].index()] += 1;
        }
        h
    }

    #[test]
    fn imbalanced_classes_get_exact_quotas() {
        // 64 rounds down to 63, quota 21.
        let ls = labels([300, 300, 30]);
        let batches = rebalanced_batches(&ls, round_batch_size(64), 42).unwrap();
        assert_eq!(batches.len(), 300 / 21);
        for batch in &batches {
            assert_eq!(batch.len(), 63);
            assert_eq!(histogram(batch, &ls), [21, 21, 21]);
        }
    }

    #[test]
    fn balanced_classes_use_every_sample_once() {
        let ls = labels([10, 10, 10]);
        let batches = rebalanced_batches(&ls, 6, 1).unwrap();
        assert_eq!(batches.len(), 5);
        let mut used = vec![0usize; 30];
        for batch in &batches {
            for &i in batch {
                used[i] += 1;
            }
        }
        assert!(used.iter().all(|&u| u == 1), "usage {used:?}");
    }

    #[test]
    fn minority_oversampling_is_roughly_uniform() {
        let ls = labels([300, 300, 30]);
        let epochs = 100;
        let mut used = vec![0usize; ls.len()];
        let mut draws_per_epoch = 0;
        for epoch in 0..epochs {
            let batches = rebalanced_batches(&ls, 63, 1000 + epoch).unwrap();
            draws_per_epoch = batches.len() * 21;
            for batch in &batches {
                for &i in batch {
                    if ls[i] == ClassLabel::Covid19 {
                        used[i] += 1;
                    }
                }
            }
        }
        let expected = draws_per_epoch as f64 / 30.0;
        for i in 600..630 {
            let mean = used[i] as f64 / epochs as f64;
            assert!(
                (mean - expected).abs() <= 0.1 * expected,
                "sample {i}: mean {mean} vs expected {expected}"
            );
        }
    }

    #[test]
    fn empty_class_rejected() {
        let ls = labels([5, 0, 5]);
        let err = rebalanced_batches(&ls, 3, 0).unwrap_err();
        assert!(matches!(err, Error::InvalidData(m) if m.contains("pneumonia")));
    }

    #[test]
    fn non_multiple_batch_size_rejected() {
        let ls = labels([5, 5, 5]);
        assert!(rebalanced_batches(&ls, 4, 0).is_err());
        assert!(rebalanced_batches(&ls, 0, 0).is_err());
    }

    #[test]
    fn deterministic_in_seed() {
        let ls = labels([40, 25, 13]);
        assert_eq!(
            rebalanced_batches(&ls, 9, 5).unwrap(),
            rebalanced_batches(&ls, 9, 5).unwrap()
        );
        assert_ne!(
            rebalanced_batches(&ls, 9, 5).unwrap(),
            rebalanced_batches(&ls, 9, 6).unwrap()
        );
    }

    #[test]
    fn round_batch_size_floors_to_multiple_of_three() {
        assert_eq!(round_batch_size(64), 63);
        assert_eq!(round_batch_size(63), 63);
        assert_eq!(round_batch_size(2), 0);
    }
}
