use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Prng;

/// Assignment of every group to one of `k` folds.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSpec {
    pub k: usize,
    pub assignment: BTreeMap<String, usize>,
}

/// Sample indices of one train/test partition.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fold {
    pub index: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub test_groups: Vec<String>,
}

impl FoldSpec {
    /// Shuffles the distinct groups with `seed` and deals them round-robin,
    /// so fold sizes (in groups) differ by at most one.
    pub fn new(groups: &[&str], k: usize, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::config("folds", "at least two folds required"));
        }
        let mut distinct: Vec<&str> = groups.to_vec();
        distinct.sort_unstable();
        distinct.dedup();
        if distinct.len() < k {
            return Err(Error::data(format!(
                "{k}-fold split needs at least {k} groups, found {}",
                distinct.len()
            )));
        }
        Prng::new(seed).shuffle(&mut distinct);
        let assignment = distinct
            .iter()
            .enumerate()
            .map(|(i, g)| (g.to_string(), i % k))
            .collect();
        Ok(FoldSpec { k, assignment })
    }

    pub fn folds(&self, groups: &[&str]) -> Result<Vec<Fold>> {
        let mut folds: Vec<Fold> = (0..self.k)
            .map(|index| Fold {
                index,
                train: Vec::new(),
                test: Vec::new(),
                test_groups: Vec::new(),
            })
            .collect();
        for (g, &f) in &self.assignment {
            folds[f].test_groups.push(g.clone());
        }
        for (i, g) in groups.iter().enumerate() {
            let f = *self
                .assignment
                .get(*g)
                .ok_or_else(|| Error::data(format!("group `{g}` has no fold")))?;
            for (j, fold) in folds.iter_mut().enumerate() {
                if j == f {
                    fold.test.push(i);
                } else {
                    fold.train.push(i);
                }
            }
        }
        Ok(folds)
    }
}

/// Group-level `k`-fold partition of samples whose group keys are `groups`.
pub fn kfold(groups: &[&str], k: usize, seed: u64) -> Result<Vec<Fold>> {
    FoldSpec::new(groups, k, seed)?.folds(groups)
}

/// Mean, minimum and maximum of a set of scores.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        Some(Summary {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}
