//! Principal components by power iteration with deflation.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct Pca {
    /// `N × k` projected coordinates.
    pub coords: Tensor<f64>,
    /// Nonincreasing covariance eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// `k × F` orthonormal components.
    pub components: Tensor<f64>,
    pub mean: Vec<f64>,
    /// Number of eigenvalues above `1e-10 · trace`; below `k` the data
    /// cannot fill the requested components.
    pub rank: usize,
}

impl Pca {
    pub fn rank_warning(&self) -> Option<String> {
        (self.rank < self.eigenvalues.len()).then(|| {
            format!("covariance rank {} is below the {} requested components", self.rank, self.eigenvalues.len())
        })
    }
}

/// Projects centred rows onto the top `k` eigenvectors of their population
/// covariance. Each component's largest-magnitude coordinate is positive.
pub fn pca_project<T: Scalar>(features: &Tensor<T>, k: usize) -> Result<Pca> {
    let (n, f) = features.dims2("pca_project")?;
    if k == 0 || f < k {
        return Err(Error::usage(format!("pca needs 1 <= k <= F; got k={k}, F={f}")));
    }
    let x: Vec<f64> = features.data().iter().map(|v| v.to_f64_lossy()).collect();
    let mean: Vec<f64> = (0..f).map(|j| (0..n).map(|i| x[i * f + j]).sum::<f64>() / n as f64).collect();
    let centred: Vec<f64> = x.iter().enumerate().map(|(idx, v)| v - mean[idx % f]).collect();

    let mut cov = vec![0.0; f * f];
    for i in 0..n {
        let row = &centred[i * f..(i + 1) * f];
        for a in 0..f {
            for b in a..f {
                cov[a * f + b] += row[a] * row[b];
            }
        }
    }
    for a in 0..f {
        for b in a..f {
            cov[a * f + b] /= n as f64;
            cov[b * f + a] = cov[a * f + b];
        }
    }
    let trace: f64 = (0..f).map(|a| cov[a * f + a]).sum();

    let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    for c in 0..k {
        let mut v: Vec<f64> = (0..f).map(|j| 1.0 + 0.1 * ((j * 7 + c * 13) % 11) as f64).collect();
        orthonormalize(&mut v, &components);
        for _ in 0..MAX_ITERATIONS {
            let mut next = mat_vec(&cov, &v);
            orthonormalize(&mut next, &components);
            if norm(&next) == 0.0 {
                break;
            }
            fix_sign(&mut next);
            let change = next.iter().zip(&v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            v = next;
            if change < TOLERANCE {
                break;
            }
        }
        fix_sign(&mut v);
        let av = mat_vec(&cov, &v);
        let lambda = dot(&v, &av).max(0.0);
        for a in 0..f {
            for b in 0..f {
                cov[a * f + b] -= lambda * v[a] * v[b];
            }
        }
        eigenvalues.push(lambda);
        components.push(v);
    }

    let rank = eigenvalues.iter().filter(|&&l| trace > 0.0 && l > TOLERANCE * trace).count();
    let mut coords = Vec::with_capacity(n * k);
    for i in 0..n {
        let row = &centred[i * f..(i + 1) * f];
        coords.extend(components.iter().map(|v| dot(row, v)));
    }
    Ok(Pca {
        coords: Tensor::matrix(n, k, coords)?,
        eigenvalues,
        components: Tensor::matrix(k, f, components.concat())?,
        mean,
        rank,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn mat_vec(m: &[f64], v: &[f64]) -> Vec<f64> {
    m.chunks(v.len()).map(|row| dot(row, v)).collect()
}

/// Gram-Schmidt against earlier components (twice, for stability), then
/// normalizes. Leaves a zero vector when nothing independent remains.
fn orthonormalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for u in basis {
            let p = dot(v, u);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
    }
    let len = norm(v);
    if len > 1e-300 {
        v.iter_mut().for_each(|a| *a /= len);
    } else {
        v.iter_mut().for_each(|a| *a = 0.0);
    }
}

fn fix_sign(v: &mut [f64]) {
    let lead = v.iter().copied().fold(0.0f64, |m, a| if a.abs() > m.abs() { a } else { m });
    if lead < 0.0 {
        v.iter_mut().for_each(|a| *a = -*a);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicated_point_has_zero_rank() {
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0], [1.0, 2.0, 3.0], [1.0, 2.0, 3.0]]).unwrap();
        let p = pca_project(&x, 3).unwrap();
        assert_eq!(p.rank, 0);
        assert!(p.eigenvalues.iter().all(|&l| l == 0.0));
        assert!(p.rank_warning().is_some());
    }

    #[test]
    fn two_points_report_rank_one() {
        let x = Tensor::from_rows(&[[1.0, 2.0, 3.0], [0.0, 2.0, 3.0]]).unwrap();
        let p = pca_project(&x, 3).unwrap();
        assert_eq!(p.rank, 1);
        assert!((p.eigenvalues[0] - 0.25).abs() < 1e-12);
        assert!(pca_project(&x, 4).is_err());
    }
}
