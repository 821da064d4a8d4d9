//! Importance-driven reduction of the Gaussian count.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::densify::{keep_above, quantile_threshold, QuantileMode};
use crate::error::{Result, SplatError};
use crate::raster::{accumulate_importance, BlendParams, ImportanceReport};
use crate::scalar::Real;
use crate::scene::{Camera, GaussianSet};

/// Which per-Gaussian statistic ranks Gaussians for simplification.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImportanceMetric {
    /// Blending weight summed over pixels and views.
    #[default]
    BlendWeight,
    /// Number of pixels, over all views, where the Gaussian is the maximum contributor.
    IntersectionCount,
}

/// Per-Gaussian statistics aggregated over a set of views.
#[derive(Clone, Debug, PartialEq)]
pub struct GlobalImportance<T> {
    pub blend_weight: Vec<T>,
    /// Largest single-pixel weight over all views.
    pub max_weight: Vec<T>,
    pub intersections: Vec<u64>,
}

impl<T: Real> GlobalImportance<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            blend_weight: vec![T::zero(); n],
            max_weight: vec![T::zero(); n],
            intersections: vec![0; n],
        }
    }

    pub fn from_reports(n: usize, reports: &[ImportanceReport<T>]) -> Result<Self> {
        let mut g = Self::zeros(n);
        for r in reports {
            if r.len() != n {
                return Err(SplatError::ShapeMismatch {
                    what: "importance report",
                    expected: n,
                    got: r.len(),
                });
            }
            for i in 0..n {
                g.blend_weight[i] += r.importance[i];
                g.max_weight[i] = g.max_weight[i].max(r.max_weight[i]);
                g.intersections[i] += u64::from(r.max_contributor_pixels[i]);
            }
        }
        Ok(g)
    }

    /// Renders every view once and aggregates the statistics.
    pub fn from_views(
        set: &GaussianSet<T>,
        cameras: &[Camera<T>],
        params: &BlendParams<T>,
    ) -> Self {
        let reports = gather_reports(set, cameras, params);
        Self::from_reports(set.len(), &reports).expect("reports sized from the same set")
    }

    pub fn len(&self) -> usize {
        self.blend_weight.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blend_weight.is_empty()
    }

    pub fn scores(&self, metric: ImportanceMetric) -> Vec<T> {
        match metric {
            ImportanceMetric::BlendWeight => self.blend_weight.clone(),
            ImportanceMetric::IntersectionCount => self
                .intersections
                .iter()
                .map(|&c| T::lit(c as f64))
                .collect(),
        }
    }
}

/// Unmasked importance report for every view.
pub fn gather_reports<T: Real>(
    set: &GaussianSet<T>,
    cameras: &[Camera<T>],
    params: &BlendParams<T>,
) -> Vec<ImportanceReport<T>> {
    cameras
        .iter()
        .map(|cam| accumulate_importance(set, cam, None, params))
        .collect()
}

/// Draws `target_count` Gaussians without replacement with probability
/// proportional to `importance`. Gaussians with zero importance are only
/// drawn, uniformly, once every positive one has been taken. Returns the
/// reduced set and the keep mask over the input rows.
pub fn importance_sample<T: Real>(
    set: &GaussianSet<T>,
    importance: &[T],
    target_count: usize,
    seed: u64,
) -> Result<(GaussianSet<T>, Vec<bool>)> {
    let n = set.len();
    if importance.len() != n {
        return Err(SplatError::ShapeMismatch {
            what: "importance",
            expected: n,
            got: importance.len(),
        });
    }
    if target_count == 0 || target_count > n {
        return Err(SplatError::InvalidArgument(format!(
            "target count {target_count} must lie in 1..={n}"
        )));
    }
    if let Some(bad) = importance
        .iter()
        .find(|v| !v.is_finite() || **v < T::zero())
    {
        return Err(SplatError::InvalidArgument(format!(
            "importance must be finite and non-negative, got {bad}"
        )));
    }
    let mut keep = vec![false; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positive: Vec<usize> = (0..n).filter(|&i| importance[i] > T::zero()).collect();
    if positive.len() <= target_count {
        positive.iter().for_each(|&i| keep[i] = true);
        let zero: Vec<usize> = (0..n).filter(|&i| !keep[i]).collect();
        for j in index::sample(&mut rng, zero.len(), target_count - positive.len()) {
            keep[zero[j]] = true;
        }
    } else {
        let picked = index::sample_weighted(
            &mut rng,
            positive.len(),
            |j| importance[positive[j]].to_f64_lossy(),
            target_count,
        )
        .map_err(|e| SplatError::InvalidArgument(format!("weighted sampling failed: {e}")))?;
        for j in picked {
            keep[positive[j]] = true;
        }
    }
    Ok((set.retain_mask(&keep)?, keep))
}

/// Keeps Gaussians whose importance lies strictly above the `keep_q`
/// quantile threshold, or all of them when none does.
pub fn importance_prune<T: Real>(
    set: &GaussianSet<T>,
    importance: &[T],
    keep_q: f64,
    mode: QuantileMode,
) -> Result<(GaussianSet<T>, Vec<bool>)> {
    if importance.len() != set.len() {
        return Err(SplatError::ShapeMismatch {
            what: "importance",
            expected: set.len(),
            got: importance.len(),
        });
    }
    if set.is_empty() {
        return Ok((set.clone(), Vec::new()));
    }
    let tau = quantile_threshold(importance, keep_q, mode)?;
    let keep = keep_above(importance, tau);
    Ok((set.retain_mask(&keep)?, keep))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use crate::scene::Gaussian;

    fn line_set(n: usize) -> GaussianSet<f64> {
        let mut set = GaussianSet::new(0);
        for i in 0..n {
            set.push(Gaussian {
                center: Vec3::new(i as f64, 0.0, 0.0),
                log_scale: Vec3::new(-1.0, -2.0, -3.0),
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: i as f64 * 0.1,
                sh: vec![[0.1 * i as f64, 0.0, 0.0]],
            });
        }
        set
    }

    #[test]
    fn full_target_is_identity() {
        let set = line_set(7);
        let imp = vec![1.0, 0.0, 2.0, 3.0, 0.0, 0.5, 4.0];
        let (out, keep) = importance_sample(&set, &imp, 7, 1).unwrap();
        assert_eq!(out, set);
        assert!(keep.iter().all(|&k| k));
    }

    #[test]
    fn degenerate_distribution() {
        let set = line_set(5);
        for seed in 0..50 {
            let (_, keep) = importance_sample(&set, &[1.0, 0.0, 0.0, 0.0, 0.0], 1, seed).unwrap();
            assert_eq!(keep, vec![true, false, false, false, false]);
        }
    }

    #[test]
    fn zero_importance_falls_back_to_uniform() {
        let set = line_set(4);
        let mut counts = [0usize; 4];
        for seed in 0..4000 {
            let (_, keep) = importance_sample(&set, &[0.0; 4], 1, seed).unwrap();
            counts[keep.iter().position(|&k| k).unwrap()] += 1;
        }
        assert!(
            counts.iter().all(|&c| (800..1200).contains(&c)),
            "{counts:?}"
        );
    }

    #[test]
    fn sampling_preserves_rows_and_is_seeded() {
        let set = line_set(30);
        let imp: Vec<f64> = (0..30).map(|i| (i % 7) as f64).collect();
        let (a, ka) = importance_sample(&set, &imp, 12, 99).unwrap();
        let (b, kb) = importance_sample(&set, &imp, 12, 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(ka, kb);
        assert_eq!(a.len(), 12);
        let kept: Vec<usize> = (0..30).filter(|&i| ka[i]).collect();
        for (row, &i) in kept.iter().enumerate() {
            assert_eq!(a.get(row), set.get(i));
        }
    }

    #[test]
    fn two_to_one_frequency() {
        let set = line_set(2);
        let hits = (0..20_000u64)
            .filter(|&s| importance_sample(&set, &[3.0, 1.0], 1, s).unwrap().1[0])
            .count();
        let f = hits as f64 / 20_000.0;
        assert!((f - 0.75).abs() < 0.015, "{f}");
    }

    #[test]
    fn invalid_targets() {
        let set = line_set(3);
        assert!(importance_sample(&set, &[1.0; 3], 0, 0).is_err());
        assert!(importance_sample(&set, &[1.0; 3], 4, 0).is_err());
        assert!(importance_sample(&set, &[1.0, -1.0, 0.0], 1, 0).is_err());
    }

    #[test]
    fn prune_by_order_statistics() {
        let set = line_set(100);
        let imp: Vec<f64> = (1..=100).map(f64::from).collect();
        let (out, _) = importance_prune(&set, &imp, 0.9, QuantileMode::ByCount).unwrap();
        assert_eq!(out.len(), 90);
        assert_eq!(out.get(0), set.get(10));
        let (out, _) = importance_prune(&set, &imp, 0.9999, QuantileMode::ByCount).unwrap();
        assert_eq!(out.len(), 99);
        let (out, _) = importance_prune(&set, &[2.0; 100], 0.5, QuantileMode::ByCount).unwrap();
        assert_eq!(out.len(), 100);
    }

    #[test]
    fn aggregation() {
        let mut a = ImportanceReport::<f64>::zeros(2);
        a.importance = vec![1.0, 2.0];
        a.max_weight = vec![0.5, 0.1];
        a.max_contributor_pixels = vec![3, 0];
        let mut b = a.clone();
        b.max_weight = vec![0.2, 0.7];
        let g = GlobalImportance::from_reports(2, &[a, b]).unwrap();
        assert_eq!(g.blend_weight, vec![2.0, 4.0]);
        assert_eq!(g.max_weight, vec![0.5, 0.7]);
        assert_eq!(g.intersections, vec![6, 0]);
        assert_eq!(
            g.scores(ImportanceMetric::IntersectionCount),
            vec![6.0, 0.0]
        );
        assert!(GlobalImportance::from_reports(3, &[ImportanceReport::<f64>::zeros(2)]).is_err());
    }
}
