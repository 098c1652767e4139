use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng::{rng_from_seed, shuffle};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    pub fold_of: Vec<usize>,
    pub k: usize,
}

impl FoldAssignment {
    /// Positions of the members of fold `f`, ascending.
    pub fn members(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] == fold)
            .collect()
    }

    pub fn complement(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len())
            .filter(|&i| self.fold_of[i] != fold)
            .collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Stratified K-fold assignment of a dataset; see [`stratified_label_folds`].
pub fn stratified_folds(dataset: &Dataset, k: usize, seed: u64) -> Result<FoldAssignment> {
    stratified_label_folds(&dataset.labels, k, seed)
}

/// Shuffles each class with the seeded generator and deals its members
/// round-robin to the folds. The negative class is dealt first; the positive
/// class continues from the fold after the last negative, which keeps total
/// fold sizes within one of each other as well as per-class counts.
pub fn stratified_label_folds(labels: &[u8], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k == 0 {
        return Err(Error::Precondition("fold count must be positive".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut fold_of = vec![0usize; labels.len()];
    let mut next = 0usize;
    for class in [0u8, 1u8] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if members.len() < k {
            return Err(Error::Precondition(format!(
                "class {class} has {} members, fewer than {k} folds",
                members.len()
            )));
        }
        shuffle(&mut rng, &mut members);
        for i in members {
            fold_of[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldAssignment { fold_of, k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn per_class(assign: &FoldAssignment, labels: &[u8], class: u8) -> Vec<usize> {
        let mut counts = vec![0; assign.k];
        for (i, &f) in assign.fold_of.iter().enumerate() {
            if labels[i] == class {
                counts[f] += 1;
            }
        }
        counts
    }

    #[test]
    fn ilpd_shaped_counts() {
        // 416 negatives (majority), 167 positives (minority).
        let labels: Vec<u8> = (0..583).map(|i| u8::from(i < 167)).collect();
        let a = stratified_label_folds(&labels, 10, 1).unwrap();
        for s in a.sizes() {
            assert!(s == 58 || s == 59, "{s}");
        }
        for c in per_class(&a, &labels, 1) {
            assert!(c == 16 || c == 17);
        }
        for c in per_class(&a, &labels, 0) {
            assert!(c == 41 || c == 42);
        }
    }

    #[test]
    fn one_of_each_per_fold() {
        let labels: Vec<u8> = (0..20).map(|i| (i % 2) as u8).collect();
        let a = stratified_label_folds(&labels, 10, 5).unwrap();
        assert_eq!(per_class(&a, &labels, 0), vec![1; 10]);
        assert_eq!(per_class(&a, &labels, 1), vec![1; 10]);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 3 == 0)).collect();
        let a = stratified_label_folds(&labels, 10, 11).unwrap();
        let b = stratified_label_folds(&labels, 10, 11).unwrap();
        let c = stratified_label_folds(&labels, 10, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn class_smaller_than_k_is_an_error() {
        let labels = vec![0, 0, 0, 0, 1, 1];
        assert!(stratified_label_folds(&labels, 3, 0).is_err());
    }

    proptest! {
        #[test]
        fn fold_balance(n_pos in 10usize..200, n_neg in 10usize..200, k in 2usize..11, seed: u64) {
            let labels: Vec<u8> = (0..n_pos + n_neg).map(|i| u8::from(i < n_pos)).collect();
            let a = stratified_label_folds(&labels, k, seed).unwrap();
            let sizes = a.sizes();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            prop_assert!(sizes.iter().all(|&s| s > 0));
            for class in [0u8, 1] {
                let c = per_class(&a, &labels, class);
                prop_assert!(c.iter().max().unwrap() - c.iter().min().unwrap() <= 1);
            }
        }
    }
}
