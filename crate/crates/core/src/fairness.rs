//! Class-similarity statistics and the quantities derived from them: the
//! adaptive class weights, the targeted/untargeted attack policy, and
//! per-sample radius scaling.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{Tensor, TensorError};
use serde::{Deserialize, Serialize};

/// Row `c` is the average predicted distribution over samples labelled `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassMeanPredictions<T> {
    pub matrix: Tensor<T>,
    pub counts: Vec<usize>,
}

impl<T: Scalar> ClassMeanPredictions<T> {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }
}

/// Streams probability rows into per-class sums. Classes that never appear
/// finish as the uniform distribution.
#[derive(Clone, Debug)]
pub struct ClassMeanAccumulator<T> {
    num_classes: usize,
    sums: Vec<T>,
    counts: Vec<usize>,
}

impl<T: Scalar> ClassMeanAccumulator<T> {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            sums: vec![T::zero(); num_classes * num_classes],
            counts: vec![0; num_classes],
        }
    }

    pub fn add(&mut self, probs: &Tensor<T>, labels: &[usize]) -> Result<()> {
        let (rows, cols) = probs.dims2("class_mean_predictions")?;
        let c = self.num_classes;
        if cols != c || rows != labels.len() {
            return Err(TensorError::ShapeMismatch {
                op: "class_mean_predictions",
                left: probs.shape().to_vec(),
                right: vec![labels.len(), c],
            }
            .into());
        }
        for (i, &y) in labels.iter().enumerate() {
            if y >= c {
                return Err(TensorError::LabelOutOfRange { row: i, label: y, classes: c }.into());
            }
            self.counts[y] += 1;
            for (s, &p) in self.sums[y * c..(y + 1) * c].iter_mut().zip(probs.row(i)) {
                *s = *s + p;
            }
        }
        Ok(())
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn finish(&self) -> ClassMeanPredictions<T> {
        let c = self.num_classes;
        let uniform = T::one() / T::from_usize_lossy(c);
        let mut data = vec![uniform; c * c];
        for k in 0..c {
            if self.counts[k] > 0 {
                let n = T::from_usize_lossy(self.counts[k]);
                for j in 0..c {
                    data[k * c + j] = self.sums[k * c + j] / n;
                }
            }
        }
        ClassMeanPredictions {
            matrix: Tensor::matrix(c, c, data).expect("square matrix"),
            counts: self.counts.clone(),
        }
    }
}

pub fn class_mean_predictions<T: Scalar>(
    probs: &Tensor<T>,
    labels: &[usize],
    num_classes: usize,
) -> Result<ClassMeanPredictions<T>> {
    if num_classes == 0 {
        return Err(Error::config("num_classes must be positive"));
    }
    let mut acc = ClassMeanAccumulator::new(num_classes);
    acc.add(probs, labels)?;
    Ok(acc.finish())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix<T> {
    pub s: Tensor<T>,
    pub mu: T,
}

impl<T: Scalar> SimilarityMatrix<T> {
    pub fn num_classes(&self) -> usize {
        self.s.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.s.get(i, j)
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.num_classes())
            .map(|i| self.s.row(i).iter().map(|v| v.to_f64_lossy()).collect())
            .collect()
    }
}

/// `S = P̄ + μI`.
pub fn build_similarity<T: Scalar>(pbar: &ClassMeanPredictions<T>, mu: T) -> Result<SimilarityMatrix<T>> {
    if !(mu >= T::zero()) {
        return Err(Error::config(format!("mu must be nonnegative, got {mu}")));
    }
    let mut s = pbar.matrix.clone();
    for c in 0..s.rows() {
        s.row_mut(c)[c] = s.get(c, c) + mu;
    }
    Ok(SimilarityMatrix { s, mu })
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassWeights<T> {
    pub w: Vec<T>,
    pub lambda: T,
}

impl<T: Scalar> ClassWeights<T> {
    pub fn uniform(num_classes: usize) -> Self {
        Self { w: vec![T::one(); num_classes], lambda: T::zero() }
    }

    pub fn num_classes(&self) -> usize {
        self.w.len()
    }

    pub fn per_sample(&self, labels: &[usize]) -> Vec<T> {
        labels.iter().map(|&y| self.w[y]).collect()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.w.iter().map(|v| v.to_f64_lossy()).collect()
    }
}

/// The raw weight formula. A class whose diagonal is below class `j`'s gains
/// `S[c][j]·S[j][j]`; otherwise (ties included) it loses `S[j][c]·S[c][c]`.
pub fn weight_vector<T: Scalar>(s: &SimilarityMatrix<T>, lambda: T) -> Vec<T> {
    let c = s.num_classes();
    (0..c)
        .map(|k| {
            let mut acc = T::zero();
            for j in 0..c {
                if j == k {
                    continue;
                }
                let term = if s.get(k, k) < s.get(j, j) {
                    s.get(k, j) * s.get(j, j)
                } else {
                    -(s.get(j, k) * s.get(k, k))
                };
                acc = acc + term;
            }
            T::one() + lambda * acc
        })
        .collect()
}

/// [`weight_vector`] with the positivity check; any `w_c ≤ 0` aborts.
pub fn compute_weights<T: Scalar>(s: &SimilarityMatrix<T>, lambda: T) -> Result<ClassWeights<T>> {
    let w = weight_vector(s, lambda);
    if let Some((class, &weight)) = w.iter().enumerate().find(|(_, v)| !(**v > T::zero())) {
        return Err(Error::NonPositiveWeight { class, weight: weight.to_f64_lossy() });
    }
    Ok(ClassWeights { w, lambda })
}

/// Reference value that weights are compared against when choosing the
/// attack type.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyAverage {
    /// Mean of `w[y_j]` over the samples in the batch.
    #[default]
    Batch,
    /// Mean of the `C` class weights.
    Classes,
}

/// `true` marks a sample for a targeted adversary: `w[y_i] ≤ avg`.
pub fn attack_policy<T: Scalar>(w: &ClassWeights<T>, labels: &[usize], average: PolicyAverage) -> Result<Vec<bool>> {
    if labels.is_empty() {
        return Err(Error::usage("attack policy needs a nonempty batch"));
    }
    let c = w.num_classes();
    if let Some((row, &label)) = labels.iter().enumerate().find(|(_, y)| **y >= c) {
        return Err(TensorError::LabelOutOfRange { row, label, classes: c }.into());
    }
    let (pool, avg): (Vec<T>, T) = match average {
        PolicyAverage::Batch => {
            let v: Vec<T> = labels.iter().map(|&y| w.w[y]).collect();
            let avg = v.iter().copied().sum::<T>() / T::from_usize_lossy(v.len());
            (v, avg)
        }
        PolicyAverage::Classes => (w.w.clone(), w.w.iter().copied().sum::<T>() / T::from_usize_lossy(c)),
    };
    // Rounding can push the mean of near-equal weights outside their range.
    let lo = pool.iter().copied().fold(T::infinity(), T::min);
    let hi = pool.iter().copied().fold(T::neg_infinity(), T::max);
    let avg = avg.max(lo).min(hi);
    Ok(labels.iter().map(|&y| w.w[y] <= avg).collect())
}

/// `clamp(ε·w[y_i], ε/2, 3ε/2)` when active, otherwise `ε` for every sample.
pub fn scale_epsilon<T: Scalar>(eps_base: T, w: &ClassWeights<T>, labels: &[usize], active: bool) -> Vec<T> {
    if !active {
        return vec![eps_base; labels.len()];
    }
    let lo = eps_base * T::lit(0.5);
    let hi = eps_base * T::lit(1.5);
    labels.iter().map(|&y| (eps_base * w.w[y]).max(lo).min(hi)).collect()
}
