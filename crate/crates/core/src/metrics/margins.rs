//! Minimal weight magnitudes for linear one-vs-one and one-vs-all
//! separation of classes placed at scalar feature values `h_i`, requiring a
//! margin of `R` on every side.
//!
//! OvO separates each pair with `w_ij (h_i − h_j) ≥ 2R`, so the minimum is
//! `2R / |h_i − h_j|`. OvA needs one `w_i` with `w_i (h_i − h_j) ≥ R` for
//! every `j ≠ i`, which is only solvable when all differences share a sign,
//! i.e. when `h_i` is the smallest or largest value.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OvaEntry {
    pub feasible: bool,
    pub min_weight: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeightAnalysis {
    /// `ovo[i][j]`, `None` on the diagonal.
    pub ovo: Vec<Vec<Option<f64>>>,
    pub ova: Vec<OvaEntry>,
}

/// `h_i = i · spacing` for `i < k`.
pub fn uniform_spacing(k: usize, spacing: f64) -> Vec<f64> {
    (0..k).map(|i| i as f64 * spacing).collect()
}

pub fn ovo_ova_min_weights(h: &[f64], r: f64) -> Result<WeightAnalysis> {
    if h.len() < 2 {
        return Err(Error::config(format!("need at least 2 classes, got {}", h.len())));
    }
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::config(format!("margin R must be positive, got {r}")));
    }
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::config("class positions must be finite"));
    }
    for i in 0..h.len() {
        if let Some(j) = (i + 1..h.len()).find(|&j| h[j] == h[i]) {
            return Err(Error::config(format!("classes {i} and {j} share position {}", h[i])));
        }
    }
    let ovo = (0..h.len())
        .map(|i| {
            (0..h.len())
                .map(|j| (i != j).then(|| 2.0 * r / (h[i] - h[j]).abs()))
                .collect()
        })
        .collect();
    let ova = (0..h.len())
        .map(|i| {
            let diffs: Vec<f64> = (0..h.len()).filter(|&j| j != i).map(|j| h[i] - h[j]).collect();
            let one_sign = diffs.iter().all(|&d| d > 0.0) || diffs.iter().all(|&d| d < 0.0);
            if one_sign {
                let closest = diffs.iter().map(|d| d.abs()).fold(f64::INFINITY, f64::min);
                OvaEntry { feasible: true, min_weight: Some(r / closest) }
            } else {
                OvaEntry { feasible: false, min_weight: None }
            }
        })
        .collect();
    Ok(WeightAnalysis { ovo, ova })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_classes() {
        let a = ovo_ova_min_weights(&[0.0, 1.0], 1.0).unwrap();
        assert_eq!(a.ovo[0][1], Some(2.0));
        assert_eq!(a.ovo[0][0], None);
        assert!(a.ova.iter().all(|e| e.feasible && e.min_weight == Some(1.0)));
    }

    #[test]
    fn interior_classes_infeasible() {
        let a = ovo_ova_min_weights(&uniform_spacing(4, 1.0), 1.0).unwrap();
        let flags: Vec<bool> = a.ova.iter().map(|e| e.feasible).collect();
        assert_eq!(flags, vec![true, false, false, true]);
    }

    #[test]
    fn duplicate_positions_rejected() {
        assert!(matches!(ovo_ova_min_weights(&[0.0, 1.0, 0.0], 1.0), Err(Error::Config(_))));
    }
}
