//! Selection of critical Gaussians for the aggressive clone.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::quantile::{keep_above, quantile_threshold, QuantileMode};
use crate::error::{Result, SplatError};
use crate::scalar::Real;
use crate::scene::GaussianSet;
use crate::simplify::GlobalImportance;

/// Scoring rule for critical-Gaussian selection.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdentCriterion {
    Random,
    Opacity,
    AccumWeight,
    #[default]
    MaxWeight,
}

impl std::str::FromStr for IdentCriterion {
    type Err = SplatError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "random" => Ok(Self::Random),
            "opacity" => Ok(Self::Opacity),
            "accum_weight" => Ok(Self::AccumWeight),
            "max_weight" => Ok(Self::MaxWeight),
            _ => Err(SplatError::InvalidArgument(format!(
                "unknown identification criterion '{s}'"
            ))),
        }
    }
}

/// Critical set under the max-weight rule: Gaussians that are the top
/// contributor of at least one pixel and whose largest blending weight lies
/// above the `keep_q` quantile of those candidates.
fn max_weight_selection<T: Real>(
    stats: &GlobalImportance<T>,
    keep_q: f64,
    mode: QuantileMode,
) -> Result<Vec<bool>> {
    let n = stats.len();
    let candidates: Vec<usize> = (0..n).filter(|&i| stats.intersections[i] > 0).collect();
    let mut critical = vec![false; n];
    if candidates.is_empty() {
        return Ok(critical);
    }
    let scores: Vec<T> = candidates.iter().map(|&i| stats.max_weight[i]).collect();
    let tau = quantile_threshold(&scores, keep_q, mode)?;
    for (&i, keep) in candidates.iter().zip(keep_above(&scores, tau)) {
        critical[i] = keep;
    }
    Ok(critical)
}

/// Indices of the `count` largest scores; ties go to the lower index.
fn top_k<T: Real>(scores: &[T], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order.truncate(count);
    order
}

/// Marks critical Gaussians. Every criterion other than
/// [`IdentCriterion::MaxWeight`] selects as many Gaussians as the max-weight
/// rule would, ranked by its own score.
pub fn identify_critical<T: Real, R: Rng + ?Sized>(
    set: &GaussianSet<T>,
    stats: &GlobalImportance<T>,
    criterion: IdentCriterion,
    keep_q: f64,
    mode: QuantileMode,
    rng: &mut R,
) -> Result<Vec<bool>> {
    let n = set.len();
    if stats.len() != n {
        return Err(SplatError::ShapeMismatch {
            what: "importance statistics",
            expected: n,
            got: stats.len(),
        });
    }
    let reference = max_weight_selection(stats, keep_q, mode)?;
    let count = reference.iter().filter(|&&c| c).count();
    let chosen: Vec<usize> = match criterion {
        IdentCriterion::MaxWeight => return Ok(reference),
        IdentCriterion::Random => index::sample(rng, n, count).into_vec(),
        IdentCriterion::Opacity => {
            let alphas: Vec<T> = (0..n).map(|i| set.opacity(i)).collect();
            top_k(&alphas, count)
        }
        IdentCriterion::AccumWeight => top_k(&stats.blend_weight, count),
    };
    let mut critical = vec![false; n];
    chosen.into_iter().for_each(|i| critical[i] = true);
    Ok(critical)
}
