//! Quantile thresholds shared by identification, pruning and visibility.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::scalar::Real;

/// How `keep_q` is interpreted when turning scores into a threshold.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuantileMode {
    /// About `keep_q` of the entries end up strictly above the threshold.
    #[default]
    ByCount,
    /// Entries strictly above the threshold carry at least `keep_q` of the total mass.
    ByMass,
}

/// Threshold `tau` such that roughly a fraction `keep_q` of `values` satisfy
/// `v > tau`.
///
/// In [`QuantileMode::ByCount`] this is the `(1 - keep_q)` quantile with
/// linear interpolation between order statistics. In
/// [`QuantileMode::ByMass`] it is the largest value whose cumulative
/// ascending mass stays within `(1 - keep_q)` of the total, or negative
/// infinity when even the smallest value exceeds that budget.
pub fn quantile_threshold<T: Real>(values: &[T], keep_q: f64, mode: QuantileMode) -> Result<T> {
    if values.is_empty() {
        return Err(SplatError::EmptyQuantile);
    }
    if !(keep_q > 0.0 && keep_q < 1.0) {
        return Err(SplatError::InvalidArgument(format!(
            "keep_q must lie in (0, 1), got {keep_q}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    match mode {
        QuantileMode::ByCount => {
            let h = (sorted.len() - 1) as f64 * (1.0 - keep_q);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(sorted.len() - 1);
            let frac = T::lit(h - lo as f64);
            Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
        }
        QuantileMode::ByMass => {
            let total: T = sorted.iter().copied().sum();
            let budget = total * T::lit(1.0 - keep_q);
            let mut acc = T::zero();
            let mut tau = T::neg_infinity();
            for &v in &sorted {
                acc += v;
                if acc > budget {
                    break;
                }
                tau = v;
            }
            Ok(tau)
        }
    }
}

/// Mask of entries strictly above `tau`. When nothing exceeds it (a
/// degenerate distribution) every entry is kept.
pub fn keep_above<T: Real>(values: &[T], tau: T) -> Vec<bool> {
    let keep: Vec<bool> = values.iter().map(|&v| v > tau).collect();
    if keep.iter().any(|&k| k) {
        keep
    } else {
        vec![true; values.len()]
    }
}

/// [`quantile_threshold`] followed by [`keep_above`].
pub fn keep_top_quantile<T: Real>(
    values: &[T],
    keep_q: f64,
    mode: QuantileMode,
) -> Result<Vec<bool>> {
    let tau = quantile_threshold(values, keep_q, mode)?;
    Ok(keep_above(values, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_to_hundred() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let tau = quantile_threshold(&v, 0.99, QuantileMode::ByCount).unwrap();
        assert!((tau - 1.99).abs() < 1e-9);
        assert_eq!(v.iter().filter(|&&x| x > tau).count(), 99);
        let tau = quantile_threshold(&v, 0.9, QuantileMode::ByCount).unwrap();
        assert_eq!(v.iter().filter(|&&x| x > tau).count(), 90);
    }

    #[test]
    fn median_of_four() {
        let tau = quantile_threshold(&[4.0f64, 1.0, 3.0, 2.0], 0.5, QuantileMode::ByCount).unwrap();
        assert!((tau - 2.5).abs() < 1e-12);
    }

    #[test]
    fn constant_values_keep_all() {
        let v = [0.7f64; 9];
        let tau = quantile_threshold(&v, 0.99, QuantileMode::ByCount).unwrap();
        assert_eq!(tau, 0.7);
        assert!(keep_above(&v, tau).iter().all(|&k| k));
    }

    #[test]
    fn errors() {
        assert!(quantile_threshold::<f64>(&[], 0.5, QuantileMode::ByCount).is_err());
        assert!(quantile_threshold(&[1.0f64], 1.0, QuantileMode::ByCount).is_err());
    }

    #[test]
    fn by_mass() {
        // Mass 1+2+3+4 = 10; dropping up to 15% of it drops only the 1.
        let v = [1.0f64, 2.0, 3.0, 4.0];
        let tau = quantile_threshold(&v, 0.85, QuantileMode::ByMass).unwrap();
        assert_eq!(tau, 1.0);
        let tau = quantile_threshold(&[5.0f64, 5.0], 0.99, QuantileMode::ByMass).unwrap();
        assert_eq!(tau, f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn kept_fraction_tracks_keep_q(mut v in proptest::collection::vec(0.0f64..1.0, 2..300), q in 0.05f64..0.95) {
            v.dedup();
            let tau = quantile_threshold(&v, q, QuantileMode::ByCount).unwrap();
            let kept = v.iter().filter(|&&x| x > tau).count() as f64;
            let n = v.len() as f64;
            // Distinct values: the count above tau is within one of q (n - 1).
            prop_assert!((kept - q * (n - 1.0)).abs() <= 1.0 + 1e-9);
        }

        #[test]
        fn by_mass_keeps_required_mass(v in proptest::collection::vec(0.0f64..1.0, 1..200), q in 0.05f64..0.95) {
            let tau = quantile_threshold(&v, q, QuantileMode::ByMass).unwrap();
            let total: f64 = v.iter().sum();
            let kept: f64 = v.iter().filter(|&&x| x > tau).sum();
            prop_assert!(kept >= q * total - 1e-9);
        }
    }
}
