use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Default seed for the train/validation/test split.
pub const DEFAULT_SPLIT_SEED: u64 = 2024;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self { train: 0.70, validation: 0.15, test: 0.15 }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.validation, self.test];
        if parts.iter().any(|&r| !(r > 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "split ratios must be positive and sum to 1, got {}/{}/{}",
                self.train, self.validation, self.test
            )));
        }
        Ok(())
    }

    /// Parses `a/b/c` or `a,b,c`; percentages are accepted when they sum to 100.
    pub fn parse(text: &str) -> Result<Self> {
        let nums: Vec<f64> = text
            .split(['/', ','])
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::InvalidArgument(format!("split {text:?} is not three numbers")))?;
        if nums.len() != 3 {
            return Err(Error::InvalidArgument(format!("split {text:?} is not three numbers")));
        }
        let total: f64 = nums.iter().sum();
        let scale = if (total - 100.0).abs() < 1e-6 { 100.0 } else { 1.0 };
        let r = Self { train: nums[0] / scale, validation: nums[1] / scale, test: nums[2] / scale };
        r.validate()?;
        Ok(r)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
    pub seed: u64,
}

fn cut(n: usize, fraction: f64) -> usize {
    // The small slack keeps 0.7 × 10 at 7 despite 0.7 not being exact.
    ((n as f64 * fraction + 1e-9).floor() as usize).min(n)
}

/// Shuffles `ids` with `rng` and cuts at `⌊r_train·n⌋` and
/// `⌊(r_train + r_val)·n⌋`.
pub fn split_random(ids: &[String], ratios: SplitRatios, rng: &mut Rng) -> Result<SplitIndices> {
    ratios.validate()?;
    if ids.len() < 3 {
        return Err(Error::Split(format!("cannot split {} ids three ways", ids.len())));
    }
    let seed = rng.seed();
    let mut order = ids.to_vec();
    rng.shuffle(&mut order);
    let n = order.len();
    let a = cut(n, ratios.train);
    let b = cut(n, ratios.train + ratios.validation).max(a);
    let test = order.split_off(b);
    let validation = order.split_off(a);
    Ok(SplitIndices { train: order, validation, test, seed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Rng;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("id{i}")).collect()
    }

    #[test]
    fn sizes_for_twenty() {
        let s = split_random(&ids(20), SplitRatios::default(), &mut Rng::new(1)).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (14, 3, 3));
        let s = split_random(&ids(10), SplitRatios::default(), &mut Rng::new(1)).unwrap();
        assert_eq!(s.train.len(), 7);
    }

    #[test]
    fn seeded() {
        let a = split_random(&ids(50), SplitRatios::default(), &mut Rng::new(5)).unwrap();
        let b = split_random(&ids(50), SplitRatios::default(), &mut Rng::new(5)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.seed, 5);
    }

    #[test]
    fn errors() {
        assert!(split_random(&ids(2), SplitRatios::default(), &mut Rng::new(1)).is_err());
        let bad = SplitRatios { train: 0.5, validation: 0.5, test: 0.0 };
        assert!(split_random(&ids(10), bad, &mut Rng::new(1)).is_err());
    }

    #[test]
    fn parse_ratios() {
        assert_eq!(SplitRatios::parse("70/15/15").unwrap(), SplitRatios::default());
        assert_eq!(SplitRatios::parse("0.7,0.15,0.15").unwrap(), SplitRatios::default());
        assert!(SplitRatios::parse("70/30").is_err());
        assert!(SplitRatios::parse("50/30/30").is_err());
    }

    proptest! {
        #[test]
        fn partition(n in 3usize..400, seed in any::<u64>()) {
            let all = ids(n);
            let s = split_random(&all, SplitRatios::default(), &mut Rng::new(seed)).unwrap();
            let union: BTreeSet<_> = s.train.iter().chain(&s.validation).chain(&s.test).collect();
            prop_assert_eq!(union.len(), n);
            prop_assert_eq!(s.train.len() + s.validation.len() + s.test.len(), n);
            prop_assert_eq!(s.train.len(), (n as f64 * 0.7 + 1e-9).floor() as usize);
            prop_assert_eq!(union, all.iter().collect::<BTreeSet<_>>());
        }
    }
}
