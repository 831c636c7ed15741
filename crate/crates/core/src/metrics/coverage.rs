//! Feature-space coverage: the share of randomly placed directional bins
//! that at least one feature vector falls into.

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::scalar::Scalar;
use crate::tensor::Tensor;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub fraction: f64,
    pub occupied: usize,
    pub num_bins: usize,
    pub used: usize,
    /// Zero vectors, which have no direction and are skipped.
    pub zero_excluded: usize,
}

/// `num_bins × dim` unit vectors drawn from an isotropic Gaussian.
pub fn bin_centers(num_bins: usize, dim: usize, seed: u64) -> Tensor<f64> {
    let mut rng = rng::stream(&[seed, tag::BINS]);
    let mut data = Vec::with_capacity(num_bins * dim);
    for _ in 0..num_bins {
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let len = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= len);
        data.extend(v);
    }
    Tensor::matrix(num_bins, dim, data).expect("positive bin count and dimension")
}

/// Assigns each unit-normalized feature to its maximum-cosine bin (first
/// bin on ties) and reports the occupied share.
pub fn feature_space_coverage<T: Scalar>(features: &Tensor<T>, num_bins: usize, seed: u64) -> Result<Coverage> {
    let (_, dim) = features.dims2("feature_space_coverage")?;
    if dim < 2 || num_bins == 0 {
        return Err(Error::usage(format!("coverage needs dim >= 2 and bins >= 1; got dim={dim}, bins={num_bins}")));
    }
    let mut unit = Vec::new();
    let mut zero_excluded = 0;
    for i in 0..features.rows() {
        let row: Vec<f64> = features.row(i).iter().map(|v| v.to_f64_lossy()).collect();
        let len = row.iter().map(|a| a * a).sum::<f64>().sqrt();
        if len == 0.0 {
            zero_excluded += 1;
        } else {
            unit.extend(row.iter().map(|a| a / len));
        }
    }
    if unit.is_empty() {
        return Err(Error::Degenerate(format!("all {zero_excluded} feature vectors are zero")));
    }
    let used = unit.len() / dim;
    let centers = bin_centers(num_bins, dim, seed);
    let sims = Tensor::matrix(used, dim, unit)?.matmul_transposed(&centers)?;
    let mut hit = vec![false; num_bins];
    for i in 0..used {
        let row = sims.row(i);
        let best = (1..num_bins).fold(0, |b, m| if row[m] > row[b] { m } else { b });
        hit[best] = true;
    }
    let occupied = hit.iter().filter(|&&h| h).count();
    Ok(Coverage { fraction: occupied as f64 / num_bins as f64, occupied, num_bins, used, zero_excluded })
}

/// Coverage of each class's features, sharing one set of bins.
pub fn classwise_coverage<T: Scalar>(
    features: &Tensor<T>,
    labels: &[usize],
    num_classes: usize,
    num_bins: usize,
    seed: u64,
) -> Result<Vec<Option<Coverage>>> {
    if labels.len() != features.rows() {
        return Err(Error::usage(format!("{} labels for {} feature rows", labels.len(), features.rows())));
    }
    (0..num_classes)
        .map(|c| {
            let idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
            if idx.is_empty() {
                return Ok(None);
            }
            feature_space_coverage(&features.select_rows(&idx)?, num_bins, seed).map(Some)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_feature_occupies_one_bin() {
        let x = Tensor::from_rows(&[[0.3, 0.4]]).unwrap();
        assert_eq!(feature_space_coverage(&x, 100, 1).unwrap().fraction, 0.01);
        let x = Tensor::from_rows(&[[0.3, 0.4]; 7]).unwrap();
        assert_eq!(feature_space_coverage(&x, 7, 1).unwrap().occupied, 1);
    }

    #[test]
    fn zero_features() {
        let x = Tensor::from_rows(&[[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert_eq!(feature_space_coverage(&x, 10, 0).unwrap().zero_excluded, 1);
        let z = Tensor::from_rows(&[[0.0, 0.0]]).unwrap();
        assert!(matches!(feature_space_coverage(&z, 10, 0), Err(Error::Degenerate(_))));
    }
}
