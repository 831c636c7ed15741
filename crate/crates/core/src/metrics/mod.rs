//! Class-wise accuracy statistics and the fairness measures built on them.
//!
//! Accuracy vectors hold `None` for classes without samples; summary
//! statistics are taken over the present entries only.

mod coverage;
mod margins;
mod pca;

pub use coverage::{bin_centers, classwise_coverage, feature_space_coverage, Coverage};
pub use margins::{ovo_ova_min_weights, uniform_spacing, OvaEntry, WeightAnalysis};
pub use pca::{pca_project, Pca};

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// `correct_c / count_c` per class; `None` where `count_c = 0`.
pub fn classwise_accuracy(predictions: &[usize], labels: &[usize], num_classes: usize) -> Result<Vec<Option<f64>>> {
    if predictions.len() != labels.len() {
        return Err(Error::usage(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut correct = vec![0usize; num_classes];
    let mut count = vec![0usize; num_classes];
    for (i, (&p, &y)) in predictions.iter().zip(labels).enumerate() {
        if y >= num_classes {
            return Err(Error::usage(format!("label {y} at row {i} exceeds {num_classes} classes")));
        }
        count[y] += 1;
        correct[y] += (p == y) as usize;
    }
    Ok(correct
        .iter()
        .zip(&count)
        .map(|(&k, &n)| (n > 0).then(|| k as f64 / n as f64))
        .collect())
}

pub fn present(acc: &[Option<f64>]) -> Vec<f64> {
    acc.iter().flatten().copied().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorstAvg {
    pub worst: f64,
    pub avg: f64,
}

pub fn worst_avg(acc: &[f64]) -> Result<WorstAvg> {
    if acc.is_empty() {
        return Err(Error::usage("worst/avg of an empty accuracy vector"));
    }
    Ok(WorstAvg {
        worst: acc.iter().copied().fold(f64::INFINITY, f64::min),
        avg: acc.iter().sum::<f64>() / acc.len() as f64,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FairnessScore {
    pub rho: f64,
    pub worst_ratio_delta: f64,
    pub avg_ratio_delta: f64,
}

/// `ρ = (v.worst/b.worst − 1) − (v.avg/b.avg − 1)`.
pub fn rho_fairness(baseline: WorstAvg, variant: WorstAvg) -> Result<FairnessScore> {
    if baseline.worst == 0.0 || baseline.avg == 0.0 {
        return Err(Error::Division(format!(
            "baseline worst = {} and avg = {} must both be nonzero",
            baseline.worst, baseline.avg
        )));
    }
    let worst_ratio_delta = variant.worst / baseline.worst - 1.0;
    let avg_ratio_delta = variant.avg / baseline.avg - 1.0;
    Ok(FairnessScore { rho: worst_ratio_delta - avg_ratio_delta, worst_ratio_delta, avg_ratio_delta })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Disparity {
    pub std_dev: f64,
    pub min_max: f64,
    pub variance: f64,
    pub avg: f64,
    pub min: f64,
}

/// Population statistics of a class-accuracy vector.
pub fn disparity(acc: &[f64]) -> Result<Disparity> {
    if acc.len() < 2 {
        return Err(Error::usage("disparity needs at least two classes"));
    }
    let WorstAvg { worst: min, avg } = worst_avg(acc)?;
    let max = acc.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let std_dev = (acc.iter().map(|a| (a - avg).powi(2)).sum::<f64>() / acc.len() as f64).sqrt();
    Ok(Disparity { std_dev, min_max: max - min, variance: std_dev * std_dev, avg, min })
}

/// Untargeted attack success rate: the share of each class misclassified
/// under attack, regardless of the clean prediction.
pub fn attack_success_rate(adv_preds: &[usize], labels: &[usize], num_classes: usize) -> Result<Vec<Option<f64>>> {
    Ok(classwise_accuracy(adv_preds, labels, num_classes)?
        .into_iter()
        .map(|a| a.map(|a| 1.0 - a))
        .collect())
}

/// Targeted-mean success rate. `preds_by_target[t]` holds every sample's
/// prediction under the attack targeting class `t`; for class `c` the rate
/// is the mean over `t ≠ c` of the share of class-`c` samples predicted `t`.
pub fn targeted_attack_success_rate(
    preds_by_target: &[Vec<usize>],
    labels: &[usize],
    num_classes: usize,
) -> Result<Vec<Option<f64>>> {
    if preds_by_target.len() != num_classes || preds_by_target.iter().any(|p| p.len() != labels.len()) {
        return Err(Error::usage("need one prediction vector per target class, aligned with labels"));
    }
    let mut count = vec![0usize; num_classes];
    let mut hits = vec![0usize; num_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= num_classes {
            return Err(Error::usage(format!("label {y} at row {i} exceeds {num_classes} classes")));
        }
        count[y] += 1;
        hits[y] += (0..num_classes).filter(|&t| t != y && preds_by_target[t][i] == t).count();
    }
    let others = (num_classes.max(2) - 1) as f64;
    Ok(hits
        .iter()
        .zip(&count)
        .map(|(&h, &n)| (n > 0).then(|| h as f64 / (n as f64 * others)))
        .collect())
}

/// `clean_c − robust_c`.
pub fn nonrobust_drop(clean: &[Option<f64>], robust: &[Option<f64>]) -> Result<Vec<Option<f64>>> {
    if clean.len() != robust.len() {
        return Err(Error::usage(format!("{} clean classes vs {} robust classes", clean.len(), robust.len())));
    }
    Ok(clean.iter().zip(robust).map(|(c, r)| Some((*c)? - (*r)?)).collect())
}
