use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, Label};
use crate::error::{Error, Result};

/// Stratified assignment of sample ids to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub k: usize,
    pub seed: u64,
    pub assignments: BTreeMap<String, usize>,
}

/// Shuffle each class with `seed`, then deal its members round-robin across
/// folds. Each class starts dealing where the previous class stopped so fold
/// sizes stay balanced too.
pub fn make_fold_splits(manifest: &DatasetManifest, k: usize, seed: u64) -> Result<FoldSplit> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("fold count must be >= 2, got {k}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    let mut next = 0;
    for label in [Label::Negative, Label::Positive] {
        let mut ids: Vec<&str> = manifest
            .entries
            .iter()
            .filter(|e| e.label == label)
            .map(|e| e.id.as_str())
            .collect();
        if ids.len() < k {
            return Err(Error::Stratification(format!(
                "class {label} has {} sample(s), fewer than k = {k}",
                ids.len()
            )));
        }
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        for id in ids {
            assignments.insert(id.to_string(), next % k);
            next += 1;
        }
    }
    Ok(FoldSplit { k, seed, assignments })
}

impl FoldSplit {
    pub fn fold_of(&self, id: &str) -> Option<usize> {
        self.assignments.get(id).copied()
    }

    pub fn fold_ids(&self, fold: usize) -> Vec<&str> {
        self.assignments
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// `(train ids, held-out ids)` for fold `fold`.
    pub fn train_test(&self, fold: usize) -> (Vec<&str>, Vec<&str>) {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (id, &f) in &self.assignments {
            if f == fold {
                test.push(id.as_str());
            } else {
                train.push(id.as_str());
            }
        }
        (train, test)
    }

    /// Check disjointness, coverage and stratification against `manifest`.
    pub fn validate(&self, manifest: &DatasetManifest) -> Result<()> {
        let ids: HashSet<&str> = manifest.entries.iter().map(|e| e.id.as_str()).collect();
        if self.assignments.len() != ids.len() || !self.assignments.keys().all(|id| ids.contains(id.as_str())) {
            return Err(Error::Stratification("folds do not cover exactly the manifest ids".into()));
        }
        if let Some((id, f)) = self.assignments.iter().find(|(_, &f)| f >= self.k) {
            return Err(Error::Stratification(format!("{id} assigned to fold {f} >= k = {}", self.k)));
        }
        for label in [Label::Negative, Label::Positive] {
            let total = manifest.class_counts.get(&label).copied().unwrap_or(0);
            let mut per_fold = vec![0usize; self.k];
            for e in manifest.entries.iter().filter(|e| e.label == label) {
                per_fold[self.assignments[&e.id]] += 1;
            }
            let lo = total / self.k;
            let hi = total.div_ceil(self.k);
            if per_fold.iter().any(|&c| c < lo || c > hi) {
                return Err(Error::Stratification(format!(
                    "class {label} fold counts {per_fold:?} deviate from stratified {lo}..={hi}"
                )));
            }
        }
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ManifestEntry, ViewTag};
    use proptest::prelude::*;

    fn manifest(pos: usize, neg: usize) -> DatasetManifest {
        let entries = (0..pos + neg)
            .map(|i| ManifestEntry {
                id: format!("v{i:03}"),
                path: format!("v{i:03}.avi").into(),
                label: if i < pos { Label::Positive } else { Label::Negative },
                view_tag: ViewTag::Synthetic,
            })
            .collect();
        DatasetManifest::new(entries, ".").unwrap()
    }

    fn class_counts(m: &DatasetManifest, split: &FoldSplit, fold: usize) -> (usize, usize) {
        let ids = split.fold_ids(fold);
        let pos = ids
            .iter()
            .filter(|id| m.get(id).unwrap().label == Label::Positive)
            .count();
        (pos, ids.len() - pos)
    }

    #[test]
    fn ten_samples_five_folds() {
        let m = manifest(5, 5);
        let split = make_fold_splits(&m, 5, 3).unwrap();
        for f in 0..5 {
            assert_eq!(class_counts(&m, &split, f), (1, 1));
        }
    }

    #[test]
    fn three_hundred_samples_five_folds() {
        let m = manifest(150, 150);
        let split = make_fold_splits(&m, 5, 11).unwrap();
        for f in 0..5 {
            assert_eq!(split.fold_ids(f).len(), 60);
            assert_eq!(class_counts(&m, &split, f), (30, 30));
        }
        split.validate(&m).unwrap();
    }

    #[test]
    fn deterministic_per_seed() {
        let m = manifest(13, 17);
        assert_eq!(make_fold_splits(&m, 4, 9).unwrap(), make_fold_splits(&m, 4, 9).unwrap());
        assert_ne!(make_fold_splits(&m, 4, 9).unwrap(), make_fold_splits(&m, 4, 10).unwrap());
    }

    #[test]
    fn too_few_per_class() {
        let err = make_fold_splits(&manifest(4, 10), 5, 0).unwrap_err();
        assert!(matches!(err, Error::Stratification(_)));
        assert!(make_fold_splits(&manifest(4, 4), 1, 0).is_err());
    }

    #[test]
    fn train_test_partition() {
        let m = manifest(6, 6);
        let split = make_fold_splits(&m, 3, 1).unwrap();
        let (train, test) = split.train_test(2);
        assert_eq!(train.len() + test.len(), 12);
        assert!(train.iter().all(|id| !test.contains(id)));
        assert_eq!(test, split.fold_ids(2));
    }

    proptest! {
        #[test]
        fn folds_disjoint_cover_and_stratified(k in 2usize..=10, extra_pos in 0usize..15, extra_neg in 0usize..15, seed in any::<u64>()) {
            let m = manifest(k + extra_pos, k + extra_neg);
            let split = make_fold_splits(&m, k, seed).unwrap();
            split.validate(&m).unwrap();
            let mut seen = HashSet::new();
            for f in 0..k {
                for id in split.fold_ids(f) {
                    prop_assert!(seen.insert(id.to_string()));
                }
            }
            prop_assert_eq!(seen.len(), m.len());
        }
    }
}
