//! Exact perturbation radii.
//!
//! Radii are written as rationals (`8/255`, `1/10`) in configs and on the
//! command line and kept exact until they meet floating-point arithmetic.
//! A bare integer `n` means `n/255`, the usual image-pixel unit.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::fmt;
use std::str::FromStr;

pub const PIXEL_DENOMINATOR: u32 = 255;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Epsilon(Ratio<u32>);

impl Epsilon {
    /// `numerator / denominator`, kept unreduced so `10/255` prints as written.
    pub fn new(numerator: u32, denominator: u32) -> Result<Self> {
        if denominator == 0 {
            return Err(Error::config("epsilon denominator must be nonzero"));
        }
        Ok(Self(Ratio::new_raw(numerator, denominator)))
    }

    pub fn over_255(numerator: u32) -> Self {
        Self(Ratio::new_raw(numerator, PIXEL_DENOMINATOR))
    }

    pub fn zero() -> Self {
        Self::over_255(0)
    }

    pub fn numerator(&self) -> u32 {
        *self.0.numer()
    }

    pub fn denominator(&self) -> u32 {
        *self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.numerator() == 0
    }

    /// Exact `self · (num/den)`, e.g. the default PGD step `ε/4`.
    pub fn scaled(&self, num: u32, den: u32) -> Self {
        Self(Ratio::new_raw(self.numerator() * num, self.denominator() * den))
    }

    pub fn value<T: Scalar>(&self) -> T {
        T::from_u32(self.numerator()).unwrap() / T::from_u32(self.denominator()).unwrap()
    }
}

impl fmt::Display for Epsilon {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numerator(), self.denominator())
    }
}

impl FromStr for Epsilon {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::config(format!("invalid epsilon {s:?}: expected `n/d` or integer `n` (meaning n/255)"));
        match s.split_once('/') {
            Some((n, d)) => Self::new(n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
            None => Ok(Self::over_255(s.parse().map_err(|_| bad())?)),
        }
    }
}

impl Serialize for Epsilon {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Epsilon {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Text(String),
            Numerator(u32),
        }
        match Raw::deserialize(deserializer)? {
            Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Raw::Numerator(n) => Ok(Self::over_255(n)),
        }
    }
}

/// Parses `start:end:step` numerators over 255, inclusive of `end`.
pub fn parse_sweep(text: &str) -> Result<Vec<Epsilon>> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || Error::config(format!("invalid sweep {text:?}: expected start:end:step"));
    if parts.len() != 3 {
        return Err(bad());
    }
    let nums: Vec<u32> = parts
        .iter()
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let (start, end, step) = (nums[0], nums[1], nums[2]);
    if step == 0 || start > end {
        return Err(bad());
    }
    Ok((start..=end).step_by(step as usize).map(Epsilon::over_255).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_display() {
        let e: Epsilon = "8/255".parse().unwrap();
        assert_eq!(e, Epsilon::over_255(8));
        assert_eq!(e.to_string(), "8/255");
        assert_eq!("8".parse::<Epsilon>().unwrap(), e);
        assert_eq!("1/10".parse::<Epsilon>().unwrap().value::<f64>(), 0.1);
        assert!("x/2".parse::<Epsilon>().is_err());
        assert!("1/0".parse::<Epsilon>().is_err());
    }

    #[test]
    fn scaled_is_exact() {
        let e = Epsilon::over_255(8).scaled(1, 4);
        assert_eq!(e, Epsilon::over_255(2));
        assert_eq!(e.to_string(), "8/1020");
    }

    #[test]
    fn serde_accepts_string_or_numerator() {
        let a: Epsilon = serde_json::from_str("\"4/255\"").unwrap();
        let b: Epsilon = serde_json::from_str("4").unwrap();
        assert_eq!(a, b);
        assert_eq!(serde_json::to_string(&a).unwrap(), "\"4/255\"");
    }

    #[test]
    fn sweep() {
        let s = parse_sweep("0:16:1").unwrap();
        assert_eq!(s.len(), 17);
        assert_eq!(s[16], Epsilon::over_255(16));
        assert_eq!(parse_sweep("0:8:4").unwrap().len(), 3);
        assert!(parse_sweep("0:8").is_err());
    }
}
