use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::HarnessError;

/// Disjoint validation index sets covering `0..n`.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldPlan {
    pub folds: Vec<Vec<usize>>,
    pub seed: u64,
}

impl FoldPlan {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn n(&self) -> usize {
        self.folds.iter().map(Vec::len).sum()
    }

    /// Training indices for fold `i`: everything outside it, ascending.
    pub fn train_indices(&self, i: usize) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .folds
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        v.sort_unstable();
        v
    }
}

/// Stratified shuffled partition. Each class is shuffled, then all classes
/// are dealt round-robin into the folds with one running counter, so fold
/// sizes differ by at most one and so do each class's per-fold counts.
pub fn kfold_split(labels: &[usize], k: usize, seed: u64) -> Result<FoldPlan, HarnessError> {
    if k == 0 {
        return Err(HarnessError::InvalidConfig("k must be positive".into()));
    }
    if labels.len() < k {
        return Err(HarnessError::TooFewSamples {
            needed: k,
            got: labels.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for class in 0..n_classes {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        for i in idx {
            folds[next % k].push(i);
            next += 1;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(FoldPlan { folds, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn balanced(n: usize) -> Vec<usize> {
        (0..n).map(|i| i % 4).collect()
    }

    #[test]
    fn nine_fifty_into_tens() {
        let plan = kfold_split(&balanced(950), 10, 1).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 95));
    }

    #[test]
    fn singleton_folds() {
        let plan = kfold_split(&balanced(10), 10, 1).unwrap();
        assert!(plan.folds.iter().all(|f| f.len() == 1));
    }

    #[test]
    fn too_few() {
        assert!(matches!(
            kfold_split(&balanced(9), 10, 0),
            Err(HarnessError::TooFewSamples { needed: 10, got: 9 })
        ));
    }

    proptest! {
        #[test]
        fn partition_properties(labels in prop::collection::vec(0usize..4, 10..300), k in 2usize..11, seed: u64) {
            prop_assume!(labels.len() >= k);
            let plan = kfold_split(&labels, k, seed).unwrap();
            let mut all: Vec<usize> = plan.folds.iter().flatten().copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
            let sizes: Vec<usize> = plan.folds.iter().map(Vec::len).collect();
            prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
            for c in 0..4 {
                let per: Vec<usize> = plan.folds.iter().map(|f| f.iter().filter(|&&i| labels[i] == c).count()).collect();
                prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
            }
            for i in 0..k {
                let train = plan.train_indices(i);
                prop_assert_eq!(train.len() + plan.folds[i].len(), labels.len());
                prop_assert!(plan.folds[i].iter().all(|j| train.binary_search(j).is_err()));
            }
        }
    }
}
