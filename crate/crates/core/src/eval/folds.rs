use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Assignment of every sample to one of `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldPlan {
    pub k: usize,
    pub assignment: Vec<usize>,
}

impl FoldPlan {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn folds(&self) -> Vec<Vec<usize>> {
        (0..self.k).map(|f| self.test_indices(f)).collect()
    }
}

fn check_k(labels: &[Label], k: usize) -> Result<()> {
    if k < 2 {
        return Err(Error::Config(format!("cross-validation needs at least 2 folds, got {k}")));
    }
    for label in [Label::Vta, Label::Control] {
        let n = labels.iter().filter(|&&l| l == label).count();
        if n < k {
            return Err(Error::Eval(format!(
                "class {label} has {n} records, fewer than {k} folds"
            )));
        }
    }
    Ok(())
}

/// Stratified folds: each class is shuffled and dealt round-robin, the deal
/// continuing where the previous class stopped so fold sizes stay balanced.
pub fn make_folds(labels: &[Label], k: usize, rng: &mut Rng) -> Result<FoldPlan> {
    check_k(labels, k)?;
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for label in [Label::Vta, Label::Control] {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == label).collect();
        members.shuffle(rng);
        for i in members {
            assignment[i] = next;
            next = (next + 1) % k;
        }
    }
    Ok(FoldPlan { k, assignment })
}

/// Folds that keep all records of a group (patient) together, balancing
/// class counts greedily.
pub fn make_grouped_folds(labels: &[Label], groups: &[String], k: usize, rng: &mut Rng) -> Result<FoldPlan> {
    check_k(labels, k)?;
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        by_group.entry(g.as_str()).or_default().push(i);
    }
    if by_group.len() < k {
        return Err(Error::Eval(format!(
            "{} patients cannot fill {k} patient-grouped folds",
            by_group.len()
        )));
    }
    let mut group_list: Vec<Vec<usize>> = by_group.into_values().collect();
    group_list.shuffle(rng);
    group_list.sort_by_key(|g| std::cmp::Reverse(g.len()));

    let mut pos = vec![0usize; k];
    let mut neg = vec![0usize; k];
    let mut assignment = vec![0; labels.len()];
    for members in group_list {
        let p = members.iter().filter(|&&i| labels[i].is_positive()).count();
        let n = members.len() - p;
        let fold = (0..k)
            .min_by_key(|&f| {
                let load = if p >= n { pos[f] } else { neg[f] };
                (load, pos[f] + neg[f], f)
            })
            .expect("k >= 2");
        pos[fold] += p;
        neg[fold] += n;
        for i in members {
            assignment[i] = fold;
        }
    }
    Ok(FoldPlan { k, assignment })
}
