use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FoldPlan {
    pub k: usize,
    /// Fold index of every graph.
    pub assignments: Vec<usize>,
}

/// Graph indices of one cross-validation round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl FoldPlan {
    pub fn fold(&self, f: usize) -> Vec<usize> {
        self.assignments
            .iter()
            .enumerate()
            .filter_map(|(i, &a)| (a == f).then_some(i))
            .collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }

    /// Round `f`: test on fold `f`, validate on fold `(f + 1) % k`, train
    /// on the rest. With `k = 2` there is no third fold, so every tenth
    /// graph of each class in the training fold is held out for
    /// validation instead.
    pub fn split(&self, f: usize, labels: &[usize]) -> Result<Split> {
        if f >= self.k {
            return Err(Error::Folds(format!("fold {f} of {}", self.k)));
        }
        let test = self.fold(f);
        let next = (f + 1) % self.k;
        let (train, valid) = if self.k > 2 {
            let train = self
                .assignments
                .iter()
                .enumerate()
                .filter_map(|(i, &a)| (a != f && a != next).then_some(i))
                .collect();
            (train, self.fold(next))
        } else {
            let rest = self.fold(next);
            let mut seen = std::collections::HashMap::new();
            let (mut train, mut valid) = (Vec::new(), Vec::new());
            for i in rest {
                let c = seen.entry(labels[i]).or_insert(0usize);
                if *c % 10 == 0 {
                    valid.push(i);
                } else {
                    train.push(i);
                }
                *c += 1;
            }
            (train, valid)
        };
        Ok(Split { train, valid, test })
    }
}

/// Stratified assignment: each class is shuffled with `seed` and dealt
/// round-robin, continuing the deal position across classes so fold sizes
/// also stay within one of each other.
pub fn stratified_folds(d: &Dataset, k: usize, seed: u64) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::Folds(format!("need k >= 2, got {k}")));
    }
    let counts = d.class_counts();
    if let Some((c, &n)) = counts.iter().enumerate().find(|(_, &n)| n > 0 && n < k) {
        return Err(Error::Folds(format!(
            "class {c} has {n} members, fewer than {k} folds"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = vec![0; d.len()];
    let mut deal = 0;
    for class in 0..d.num_classes {
        let mut members: Vec<usize> = (0..d.len())
            .filter(|&i| d.graphs[i].label() == class)
            .collect();
        members.shuffle(&mut rng);
        for i in members {
            assignments[i] = deal % k;
            deal += 1;
        }
    }
    let plan = FoldPlan { k, assignments };
    if plan.fold_sizes().contains(&0) {
        return Err(Error::Folds("empty fold".into()));
    }
    Ok(plan)
}
