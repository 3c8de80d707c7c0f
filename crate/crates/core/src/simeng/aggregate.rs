use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::similarity::SimError;

/// Operator that reduces one entity's reference similarities to a single
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Aggregator {
    Max,
    /// Linear-interpolation quantile with inclusive endpoints, q in (0, 1].
    Quantile(f64),
}

impl Aggregator {
    pub fn quantile(q: f64) -> Result<Self, SimError> {
        if q > 0.0 && q <= 1.0 {
            Ok(Aggregator::Quantile(q))
        } else {
            Err(SimError::InvalidQuantile(q))
        }
    }

    pub fn validate(self) -> Result<Self, SimError> {
        match self {
            Aggregator::Max => Ok(self),
            Aggregator::Quantile(q) => Aggregator::quantile(q),
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Aggregator::Max => f.write_str("max"),
            Aggregator::Quantile(q) => write!(f, "q{}", q * 100.0),
        }
    }
}

impl FromStr for Aggregator {
    type Err = SimError;

    /// Accepts `max`, `q90` (percent) or `quantile:0.9`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        if s == "max" {
            return Ok(Aggregator::Max);
        }
        let q = if let Some(rest) = s.strip_prefix("quantile:") {
            rest.parse::<f64>().ok()
        } else if let Some(rest) = s.strip_prefix('q') {
            rest.parse::<f64>().ok().map(|p| p / 100.0)
        } else {
            None
        };
        match q {
            Some(q) => Aggregator::quantile(q),
            None => Err(SimError::InvalidQuantile(f64::NAN)),
        }
    }
}

impl TryFrom<String> for Aggregator {
    type Error = SimError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Aggregator> for String {
    fn from(a: Aggregator) -> String {
        match a {
            Aggregator::Max => "max".into(),
            Aggregator::Quantile(q) => format!("quantile:{q}"),
        }
    }
}

pub fn aggregate(similarities: &[f64], agg: Aggregator) -> Result<f64, SimError> {
    if similarities.is_empty() {
        return Err(SimError::EmptyInput);
    }
    match agg.validate()? {
        Aggregator::Max => Ok(similarities.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        Aggregator::Quantile(q) => {
            let mut sorted = similarities.to_vec();
            sorted.sort_by(f64::total_cmp);
            let pos = q * (sorted.len() - 1) as f64;
            let lo = pos.floor() as usize;
            let hi = pos.ceil() as usize;
            if lo == hi {
                return Ok(sorted[lo]);
            }
            let frac = pos - lo as f64;
            Ok((sorted[lo] + frac * (sorted[hi] - sorted[lo])).min(sorted[hi]))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn max_and_full_quantile() {
        assert_eq!(aggregate(&[0.1, 0.9], Aggregator::Max).unwrap(), 0.9);
        assert_eq!(aggregate(&[0.1, 0.9], Aggregator::Quantile(1.0)).unwrap(), 0.9);
        assert_eq!(aggregate(&[], Aggregator::Max), Err(SimError::EmptyInput));
        assert!(aggregate(&[1.0], Aggregator::Quantile(0.0)).is_err());
    }

    #[test]
    fn interpolated_q90() {
        // sorted 0.1..1.0, position 0.9 * 9 = 8.1 -> 0.9 + 0.1 * (1.0 - 0.9)
        let v: Vec<f64> = (1..=10).map(|i| i as f64 * 0.1).collect();
        let got = aggregate(&v, Aggregator::Quantile(0.9)).unwrap();
        assert!((got - 0.91).abs() < 1e-12, "{got}");
    }

    #[test]
    fn median_of_even_count() {
        assert_eq!(
            aggregate(&[4.0, 1.0, 3.0, 2.0], Aggregator::Quantile(0.5)).unwrap(),
            2.5
        );
    }

    #[test]
    fn parse_forms() {
        assert_eq!("max".parse::<Aggregator>().unwrap(), Aggregator::Max);
        assert_eq!("q90".parse::<Aggregator>().unwrap(), Aggregator::Quantile(0.9));
        assert_eq!(
            "quantile:0.75".parse::<Aggregator>().unwrap(),
            Aggregator::Quantile(0.75)
        );
        assert!("q0".parse::<Aggregator>().is_err());
        assert!("mean".parse::<Aggregator>().is_err());
        let json = serde_json::to_string(&Aggregator::Quantile(0.95)).unwrap();
        assert_eq!(serde_json::from_str::<Aggregator>(&json).unwrap(), Aggregator::Quantile(0.95));
    }

    proptest! {
        #[test]
        fn quantile_bounded_by_max(
            v in proptest::collection::vec(-1.0f64..1.0, 1..40),
            q in 0.001f64..=1.0,
        ) {
            let max = aggregate(&v, Aggregator::Max).unwrap();
            prop_assert_eq!(aggregate(&v, Aggregator::Quantile(1.0)).unwrap(), max);
            prop_assert!(aggregate(&v, Aggregator::Quantile(q)).unwrap() <= max);
        }
    }
}
