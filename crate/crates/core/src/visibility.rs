//! Per-view visibility masks used to skip Gaussians during training renders.

use serde::{Deserialize, Serialize};

use crate::densify::{quantile_threshold, QuantileMode};
use crate::error::Result;
use crate::optim::RowOrigin;
use crate::raster::{BlendParams, ImportanceReport};
use crate::scalar::Real;
use crate::scene::{Camera, GaussianSet};
use crate::simplify::gather_reports;

/// How the importance threshold of the masks is computed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdScope {
    /// One threshold per view over that view's positive importances.
    #[default]
    PerView,
    /// One threshold over the positive importances of all views.
    Global,
}

/// One boolean mask per training view plus the iteration it was built at.
#[derive(Clone, Debug, PartialEq)]
pub struct VisibilityTable {
    pub masks: Vec<Vec<bool>>,
    pub epoch: usize,
}

impl VisibilityTable {
    /// True when every mask covers exactly `n` Gaussians.
    pub fn is_fresh(&self, n: usize) -> bool {
        self.masks.iter().all(|m| m.len() == n)
    }

    pub fn mask(&self, view: usize) -> Option<&[bool]> {
        self.masks.get(view).map(Vec::as_slice)
    }

    /// Carries the masks across a structural edit. Fresh rows are visible in
    /// every view until the next rebuild.
    pub fn remap(&mut self, rows: &[RowOrigin]) {
        for mask in self.masks.iter_mut() {
            *mask = rows
                .iter()
                .map(|o| match *o {
                    RowOrigin::Old(i) => mask[i],
                    RowOrigin::Fresh => true,
                })
                .collect();
        }
    }

    /// Fraction of (view, Gaussian) pairs that are masked out.
    pub fn culled_fraction(&self) -> f64 {
        let total: usize = self.masks.iter().map(Vec::len).sum();
        if total == 0 {
            return 0.0;
        }
        let hidden: usize = self
            .masks
            .iter()
            .map(|m| m.iter().filter(|&&v| !v).count())
            .sum();
        hidden as f64 / total as f64
    }
}

/// Masks `I > tau` with `tau` the `keep_q` quantile of the positive
/// importances. Gaussians with zero importance are always hidden; when no
/// positive importance exceeds `tau` all positive ones are kept.
pub fn masks_from_reports<T: Real>(
    reports: &[ImportanceReport<T>],
    keep_q: f64,
    mode: QuantileMode,
    scope: ThresholdScope,
    epoch: usize,
) -> Result<VisibilityTable> {
    let positives = |r: &ImportanceReport<T>| -> Vec<T> {
        r.importance
            .iter()
            .copied()
            .filter(|&v| v > T::zero())
            .collect()
    };
    let global_tau = match scope {
        ThresholdScope::Global => {
            let all: Vec<T> = reports.iter().flat_map(positives).collect();
            if all.is_empty() {
                None
            } else {
                Some(quantile_threshold(&all, keep_q, mode)?)
            }
        }
        ThresholdScope::PerView => None,
    };
    let mut masks = Vec::with_capacity(reports.len());
    for r in reports {
        let pos = positives(r);
        if pos.is_empty() {
            masks.push(vec![false; r.len()]);
            continue;
        }
        let tau = match global_tau {
            Some(t) => t,
            None => quantile_threshold(&pos, keep_q, mode)?,
        };
        let mut mask: Vec<bool> = r.importance.iter().map(|&v| v > tau).collect();
        if !mask.iter().any(|&m| m) {
            mask = r.importance.iter().map(|&v| v > T::zero()).collect();
        }
        masks.push(mask);
    }
    Ok(VisibilityTable { masks, epoch })
}

/// Renders every view unmasked and derives its visibility mask.
pub fn build_masks<T: Real>(
    set: &GaussianSet<T>,
    cameras: &[Camera<T>],
    keep_q: f64,
    mode: QuantileMode,
    scope: ThresholdScope,
    params: &BlendParams<T>,
    epoch: usize,
) -> Result<VisibilityTable> {
    masks_from_reports(
        &gather_reports(set, cameras, params),
        keep_q,
        mode,
        scope,
        epoch,
    )
}

/// Whether culling applies at `iter`: inside `[begin, end)` with a table that
/// matches the current Gaussian count. A stale table disables culling with a
/// warning.
pub fn culling_active(
    iter: usize,
    begin: usize,
    end: usize,
    table: Option<&VisibilityTable>,
    n: usize,
) -> bool {
    if iter < begin || iter >= end {
        return false;
    }
    match table {
        None => false,
        Some(t) if t.is_fresh(n) => true,
        Some(t) => {
            log::warn!(
                "visibility table from iteration {} does not match {} Gaussians; culling skipped",
                t.epoch,
                n
            );
            false
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{Mat3, Vec3};
    use crate::raster::render;
    use crate::scalar::logit;
    use crate::scene::Gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cam() -> Camera<f64> {
        Camera::new(
            32,
            32,
            40.0,
            40.0,
            16.0,
            16.0,
            Mat3::identity(),
            Vec3::zero(),
            0.01,
            100.0,
        )
        .unwrap()
    }

    fn g(p: Vec3<f64>, sigma: f64, alpha: f64) -> Gaussian<f64> {
        Gaussian {
            center: p,
            log_scale: Vec3([sigma.ln(); 3]),
            rotation: [1.0, 0.0, 0.0, 0.0],
            opacity_logit: logit(alpha),
            sh: vec![[0.3, 0.1, -0.2]],
        }
    }

    fn params() -> BlendParams<f64> {
        BlendParams::default()
    }

    #[test]
    fn single_visible_and_outside() {
        let mut set = GaussianSet::new(0);
        set.push(g(Vec3::new(0.0, 0.0, 4.0), 0.2, 0.5));
        set.push(g(Vec3::new(0.0, 0.0, -4.0), 0.2, 0.5));
        let t = build_masks(
            &set,
            &[cam()],
            0.99,
            QuantileMode::ByCount,
            ThresholdScope::PerView,
            &params(),
            0,
        )
        .unwrap();
        assert_eq!(t.masks, vec![vec![true, false]]);
    }

    #[test]
    fn masked_render_is_close() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut set = GaussianSet::new(0);
        for _ in 0..20 {
            set.push(g(
                Vec3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(3.0..6.0),
                ),
                rng.random_range(0.05..0.3),
                rng.random_range(0.2..0.9),
            ));
        }
        let c = cam();
        let t = build_masks(
            &set,
            std::slice::from_ref(&c),
            0.99,
            QuantileMode::ByCount,
            ThresholdScope::PerView,
            &params(),
            0,
        )
        .unwrap();
        let full = render(&set, &c, None, [0.0; 3], &params());
        let masked = render(&set, &c, t.mask(0), [0.0; 3], &params());
        assert!(full.color.mean_abs_diff(&masked.color) < 1.0 / 255.0);
        let again = build_masks(
            &set,
            &[c],
            0.99,
            QuantileMode::ByCount,
            ThresholdScope::PerView,
            &params(),
            0,
        )
        .unwrap();
        assert_eq!(t, again);
    }

    #[test]
    fn global_scope() {
        let mut a = ImportanceReport::<f64>::zeros(3);
        a.importance = vec![1.0, 2.0, 0.0];
        let mut b = ImportanceReport::<f64>::zeros(3);
        b.importance = vec![10.0, 20.0, 30.0];
        let t = masks_from_reports(
            &[a.clone(), b.clone()],
            0.5,
            QuantileMode::ByCount,
            ThresholdScope::Global,
            3,
        )
        .unwrap();
        // Pooled positives {1, 2, 10, 20, 30}: tau = 10, view a keeps all positives.
        assert_eq!(
            t.masks,
            vec![vec![true, true, false], vec![false, true, true]]
        );
        let t = masks_from_reports(
            &[a, b],
            0.5,
            QuantileMode::ByCount,
            ThresholdScope::PerView,
            3,
        )
        .unwrap();
        assert_eq!(
            t.masks,
            vec![vec![false, true, false], vec![false, false, true]]
        );
        assert_eq!(t.epoch, 3);
    }

    #[test]
    fn window_and_staleness() {
        let t = VisibilityTable {
            masks: vec![vec![true; 4]],
            epoch: 0,
        };
        assert!(!culling_active(499, 500, 13000, Some(&t), 4));
        assert!(!culling_active(13000, 500, 13000, Some(&t), 4));
        assert!(culling_active(5000, 500, 13000, Some(&t), 4));
        assert!(!culling_active(5000, 500, 13000, Some(&t), 5));
        assert!(!culling_active(5000, 500, 13000, None, 4));
        let mut t = VisibilityTable {
            masks: vec![vec![true, false, true], vec![false, false, true]],
            epoch: 0,
        };
        t.remap(&[RowOrigin::Old(2), RowOrigin::Old(1), RowOrigin::Fresh]);
        assert_eq!(
            t.masks,
            vec![vec![true, false, true], vec![true, false, true]]
        );
    }
}
