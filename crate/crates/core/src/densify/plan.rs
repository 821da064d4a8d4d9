//! Structural edits to a Gaussian set and the clone/split/prune rules that
//! produce them.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::grad::ParamGrads;
use crate::linalg::{quat_to_rotation, Vec3};
use crate::optim::RowOrigin;
use crate::scalar::{logit, Real};
use crate::scene::{Camera, Gaussian, GaussianSet};

/// Largest opacity accepted by the aggressive clone before the square root.
pub const MAX_CLONE_OPACITY: f64 = 1.0 - 1e-7;
/// Divisor applied to the scale of split children.
pub const SPLIT_SCALE_DIVISOR: f64 = 1.6;
pub const DEFAULT_GRAD_THRESHOLD: f64 = 2e-4;
pub const DEFAULT_SCALE_THRESHOLD: f64 = 0.01;
pub const DEFAULT_MIN_OPACITY: f64 = 0.005;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlanKind {
    Progressive,
    AggressiveClone,
    Prune,
}

/// A pending structural edit: rows flagged in `remove` are dropped, the
/// survivors keep their order and `new_gaussians` are appended.
#[derive(Clone, Debug, PartialEq)]
pub struct DensifyPlan<T> {
    pub kind: PlanKind,
    /// Gaussians duplicated by the plan.
    pub clone_indices: Vec<usize>,
    /// Gaussians replaced by sampled children.
    pub split_indices: Vec<usize>,
    pub remove: Vec<bool>,
    pub new_gaussians: Vec<Gaussian<T>>,
}

impl<T: Real> DensifyPlan<T> {
    pub fn empty(kind: PlanKind, n: usize) -> Self {
        Self {
            kind,
            clone_indices: Vec::new(),
            split_indices: Vec::new(),
            remove: vec![false; n],
            new_gaussians: Vec::new(),
        }
    }

    /// True when applying the plan would leave the set unchanged.
    pub fn is_noop(&self) -> bool {
        self.new_gaussians.is_empty() && !self.remove.iter().any(|&r| r)
    }

    /// Count after application.
    pub fn output_len(&self) -> usize {
        self.remove.iter().filter(|&&r| !r).count() + self.new_gaussians.len()
    }

    /// Produces the edited set together with the row mapping needed to carry
    /// optimizer state across.
    pub fn apply(&self, set: &GaussianSet<T>) -> Result<(GaussianSet<T>, Vec<RowOrigin>)> {
        if self.remove.len() != set.len() {
            return Err(SplatError::ShapeMismatch {
                what: "densify plan",
                expected: set.len(),
                got: self.remove.len(),
            });
        }
        let mut out = GaussianSet::with_capacity(set.sh_degree(), self.output_len());
        out.set_active_sh_degree(set.active_sh_degree());
        let mut rows = Vec::with_capacity(self.output_len());
        for i in 0..set.len() {
            if !self.remove[i] {
                out.push_row_from(set, i);
                rows.push(RowOrigin::Old(i));
            }
        }
        for g in &self.new_gaussians {
            out.push(g.clone());
            rows.push(RowOrigin::Fresh);
        }
        Ok((out, rows))
    }
}

/// Opacity and covariance multiplier for one of the two copies produced by
/// the aggressive clone, or `None` when the source is fully transparent.
///
/// The copies satisfy `1 - (1 - a_new)^2 = a_old`, and the covariance scales
/// by `k = a_old^2 / (2 a_new - a_new^2 / sqrt 2)^2`.
pub fn aggressive_clone_params<T: Real>(alpha_old: T) -> Option<(T, T)> {
    let a = alpha_old.min(T::lit(MAX_CLONE_OPACITY));
    if a <= T::zero() {
        return None;
    }
    let a_new = T::one() - (T::one() - a).sqrt();
    let denom = T::lit(2.0) * a_new - a_new * a_new / T::SQRT_2();
    if a_new <= T::zero() || denom <= T::zero() {
        return None;
    }
    Some((a_new, a * a / (denom * denom)))
}

/// How the two copies of a critical Gaussian are parameterized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CloneVariant {
    /// Plain duplicates of the source.
    Vanilla,
    /// Corrected opacity, unchanged covariance.
    AlphaReplace,
    /// Corrected opacity and covariance.
    #[default]
    AlphaSigma,
}

impl std::str::FromStr for CloneVariant {
    type Err = SplatError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Self::Vanilla),
            "alpha_replace" => Ok(Self::AlphaReplace),
            "alpha_sigma" => Ok(Self::AlphaSigma),
            _ => Err(SplatError::InvalidArgument(format!(
                "unknown clone variant '{s}'"
            ))),
        }
    }
}

/// Replaces every critical Gaussian by two copies at the same center with
/// the corrected opacity and covariance.
pub fn aggressive_clone<T: Real>(
    set: &GaussianSet<T>,
    critical: &[bool],
) -> Result<DensifyPlan<T>> {
    aggressive_clone_with(set, critical, CloneVariant::AlphaSigma)
}

pub fn aggressive_clone_with<T: Real>(
    set: &GaussianSet<T>,
    critical: &[bool],
    variant: CloneVariant,
) -> Result<DensifyPlan<T>> {
    if critical.len() != set.len() {
        return Err(SplatError::ShapeMismatch {
            what: "critical mask",
            expected: set.len(),
            got: critical.len(),
        });
    }
    let mut plan = DensifyPlan::empty(PlanKind::AggressiveClone, set.len());
    let half = T::lit(0.5);
    for i in (0..set.len()).filter(|&i| critical[i]) {
        let Some((a_new, k)) = aggressive_clone_params(set.opacity(i)) else {
            continue;
        };
        let mut g = set.get(i);
        if variant != CloneVariant::Vanilla {
            g.opacity_logit = logit(a_new);
        }
        if variant == CloneVariant::AlphaSigma {
            let shift = half * k.ln();
            g.log_scale = g.log_scale.map(|s| s + shift);
        }
        plan.clone_indices.push(i);
        plan.remove[i] = true;
        plan.new_gaussians.push(g.clone());
        plan.new_gaussians.push(g);
    }
    Ok(plan)
}

/// Gradient-driven clone and split.
///
/// Gaussians whose mean screen-space gradient exceeds `grad_threshold` are
/// cloned when small (largest scale at most `scale_threshold * scene_extent`)
/// and otherwise split into two children sampled from the parent, with
/// scales divided by 1.6. Split parents are removed.
pub fn vanilla_clone_split<T: Real, R: Rng + ?Sized>(
    set: &GaussianSet<T>,
    grads: &ParamGrads<T>,
    grad_threshold: T,
    scale_threshold: T,
    scene_extent: T,
    rng: &mut R,
) -> Result<DensifyPlan<T>> {
    grads.check_matches(set)?;
    let mut plan = DensifyPlan::empty(PlanKind::Progressive, set.len());
    let mean = grads.mean_grad2d();
    let limit = scale_threshold * scene_extent;
    let shrink = T::lit(SPLIT_SCALE_DIVISOR).ln();
    for i in 0..set.len() {
        if grads.grad2d_count[i] == 0 || mean[i] <= grad_threshold {
            continue;
        }
        let scale = set.scale(i);
        let max_scale = scale.x().max(scale.y()).max(scale.z());
        if max_scale <= limit {
            plan.clone_indices.push(i);
            plan.new_gaussians.push(set.get(i));
        } else {
            plan.split_indices.push(i);
            plan.remove[i] = true;
            let parent = set.get(i);
            let rot = quat_to_rotation(parent.rotation);
            for _ in 0..2 {
                let z = Vec3::new(
                    T::lit(StandardNormal.sample(rng)),
                    T::lit(StandardNormal.sample(rng)),
                    T::lit(StandardNormal.sample(rng)),
                );
                let offset = rot.mul_vec(&Vec3::new(
                    z.x() * scale.x(),
                    z.y() * scale.y(),
                    z.z() * scale.z(),
                ));
                let mut child = parent.clone();
                child.center = parent.center + offset;
                child.log_scale = parent.log_scale.map(|s| s - shrink);
                plan.new_gaussians.push(child);
            }
        }
    }
    Ok(plan)
}

/// Removes Gaussians with opacity below `min_opacity`. Refuses to empty the
/// set entirely.
pub fn prune_low_opacity<T: Real>(set: &GaussianSet<T>, min_opacity: T) -> DensifyPlan<T> {
    let mut plan = DensifyPlan::empty(PlanKind::Prune, set.len());
    for i in 0..set.len() {
        plan.remove[i] = set.opacity(i) < min_opacity;
    }
    if !set.is_empty() && plan.remove.iter().all(|&r| r) {
        log::warn!(
            "opacity pruning would remove all {} Gaussians; skipped",
            set.len()
        );
        plan.remove.iter_mut().for_each(|r| *r = false);
    }
    plan
}

/// Caps every opacity at `max_opacity`. Returns the rows that changed.
pub fn reset_opacity<T: Real>(set: &mut GaussianSet<T>, max_opacity: T) -> Vec<usize> {
    let cap = logit(max_opacity);
    let mut changed = Vec::new();
    for (i, o) in set.opacity_logits.iter_mut().enumerate() {
        if *o > cap {
            *o = cap;
            changed.push(i);
        }
    }
    changed
}

/// Radius of the camera rig: 1.1 times the largest distance from a camera
/// center to the mean center.
pub fn scene_extent<T: Real>(cameras: &[Camera<T>]) -> T {
    if cameras.is_empty() {
        return T::one();
    }
    let centers: Vec<Vec3<T>> = cameras.iter().map(Camera::center).collect();
    let n = T::lit(centers.len() as f64);
    let mean = centers.iter().fold(Vec3::zero(), |acc, c| acc + *c) * (T::one() / n);
    let radius = centers
        .iter()
        .map(|c| (*c - mean).norm())
        .fold(T::zero(), T::max);
    if radius > T::zero() {
        radius * T::lit(1.1)
    } else {
        T::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::{AdamParams, LearningRates, OptimState};
    use crate::scalar::sigmoid;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn set_with(alphas: &[f64], log_scale: f64) -> GaussianSet<f64> {
        let mut set = GaussianSet::new(1);
        for (i, &a) in alphas.iter().enumerate() {
            set.push(Gaussian {
                center: Vec3::new(i as f64, 0.5, -0.25),
                log_scale: Vec3::new(log_scale, log_scale + 0.1, log_scale - 0.2),
                rotation: [0.9, 0.1, -0.3, 0.2],
                opacity_logit: logit(a),
                sh: vec![
                    [0.1, 0.2, 0.3],
                    [0.4, 0.5, 0.6],
                    [0.7, 0.8, 0.9],
                    [1.0, 1.1, 1.2],
                ],
            });
        }
        set.normalize_rotations();
        set
    }

    #[test]
    fn clone_formula_values() {
        let (a, k) = aggressive_clone_params(0.75f64).unwrap();
        assert!((a - 0.5).abs() < 1e-15);
        // k = 0.5625 / (1 - 0.25 / sqrt 2)^2 evaluated by hand.
        let want = 0.5625 / (1.0 - 0.25 / 2f64.sqrt()).powi(2);
        assert!((k - want).abs() < 1e-12);
        let (a, k) = aggressive_clone_params(0.5f64).unwrap();
        assert!((a - 0.292_893_218_813_452_5).abs() < 1e-12);
        assert!((k - 0.9066).abs() < 1e-4);
        assert!(aggressive_clone_params(0.0f64).is_none());
        let (a, k) = aggressive_clone_params(1.0f64).unwrap();
        assert!(a.is_finite() && k.is_finite() && a < 1.0);
    }

    #[test]
    fn pair_reproduces_opacity() {
        for alpha in [0.01f64, 0.2, 0.5, 0.75, 0.9, 0.999] {
            let (a, _) = aggressive_clone_params(alpha).unwrap();
            let back: f64 = 1.0 - (1.0 - a) * (1.0 - a);
            assert!((back - alpha).abs() < 1e-12);
        }
    }

    #[test]
    fn aggressive_clone_layout() {
        let set = set_with(&[0.75, 0.3, 0.6], -2.0);
        let plan = aggressive_clone(&set, &[true, false, true]).unwrap();
        assert_eq!(plan.clone_indices, vec![0, 2]);
        let (out, rows) = plan.apply(&set).unwrap();
        assert_eq!(out.len(), 5);
        assert_eq!(
            rows,
            vec![
                RowOrigin::Old(1),
                RowOrigin::Fresh,
                RowOrigin::Fresh,
                RowOrigin::Fresh,
                RowOrigin::Fresh
            ]
        );
        assert_eq!(out.get(0), set.get(1));
        let (_, k) = aggressive_clone_params(0.75f64).unwrap();
        let copy = out.get(1);
        assert_eq!(copy.center, set.centers[0]);
        assert_eq!(copy.rotation, set.rotations[0]);
        assert_eq!(copy.sh, set.sh_of(0));
        assert!((sigmoid(copy.opacity_logit) - 0.5).abs() < 1e-12);
        let cov_ratio = out.covariance(1).0[0][0] / set.covariance(0).0[0][0];
        assert!((cov_ratio - k).abs() < 1e-12);
        assert_eq!(out.get(1), out.get(2));
    }

    #[test]
    fn clone_variants_differ_only_where_documented() {
        let set = set_with(&[0.75], -2.0);
        let copy = |v| {
            aggressive_clone_with(&set, &[true], v)
                .unwrap()
                .new_gaussians[0]
                .clone()
        };
        let vanilla = copy(CloneVariant::Vanilla);
        assert_eq!(vanilla, set.get(0));
        let alpha = copy(CloneVariant::AlphaReplace);
        assert!((sigmoid(alpha.opacity_logit) - 0.5).abs() < 1e-12);
        assert_eq!(alpha.log_scale, set.log_scales[0]);
        let both = copy(CloneVariant::AlphaSigma);
        assert_eq!(both.opacity_logit, alpha.opacity_logit);
        let (_, k) = aggressive_clone_params(0.75f64).unwrap();
        assert!((both.log_scale.0[0] - alpha.log_scale.0[0] - 0.5 * k.ln()).abs() < 1e-12);
        assert_eq!(
            "alpha_sigma".parse::<CloneVariant>().unwrap(),
            CloneVariant::AlphaSigma
        );
        assert!("sigma".parse::<CloneVariant>().is_err());
    }

    #[test]
    fn transparent_gaussian_is_not_cloned() {
        let mut set = set_with(&[0.5], 0.0);
        set.opacity_logits[0] = -1e6;
        let plan = aggressive_clone(&set, &[true]).unwrap();
        assert!(plan.is_noop());
    }

    fn grads_with(set: &GaussianSet<f64>, mean: &[f64]) -> ParamGrads<f64> {
        let mut g = ParamGrads::zeros_like(set);
        for (i, &m) in mean.iter().enumerate() {
            g.grad2d_accum[i] = 2.0 * m;
            g.grad2d_count[i] = 2;
        }
        g
    }

    #[test]
    fn vanilla_below_threshold_is_empty() {
        let set = set_with(&[0.5, 0.5], -5.0);
        let g = grads_with(&set, &[1e-4, 2e-4]);
        let plan =
            vanilla_clone_split(&set, &g, 2e-4, 0.01, 1.0, &mut ChaCha8Rng::seed_from_u64(0))
                .unwrap();
        assert!(plan.is_noop());
    }

    #[test]
    fn vanilla_clone_and_split() {
        // Gaussian 0 is small (clone), gaussian 1 is large (split).
        let mut set = set_with(&[0.5, 0.6], -6.0);
        set.log_scales[1] = Vec3::new(0.0, -0.5, -1.0);
        let g = grads_with(&set, &[1e-3, 1e-3]);
        let plan =
            vanilla_clone_split(&set, &g, 2e-4, 0.01, 1.0, &mut ChaCha8Rng::seed_from_u64(3))
                .unwrap();
        assert_eq!(plan.clone_indices, vec![0]);
        assert_eq!(plan.split_indices, vec![1]);
        let (out, rows) = plan.apply(&set).unwrap();
        assert_eq!(out.len(), 4);
        assert_eq!(rows[0], RowOrigin::Old(0));
        assert_eq!(out.get(1), set.get(0));
        for c in 2..4 {
            let child = out.get(c);
            for a in 0..3 {
                assert!((child.log_scale[a] - (set.log_scales[1][a] - 1.6f64.ln())).abs() < 1e-15);
            }
            assert_eq!(child.opacity_logit, set.opacity_logits[1]);
            assert_ne!(child.center, set.centers[1]);
        }
    }

    #[test]
    fn prune_and_reset() {
        let mut set = set_with(&[0.001, 0.5, 0.004], 0.0);
        let plan = prune_low_opacity(&set, 0.005);
        assert_eq!(plan.remove, vec![true, false, true]);
        let all = prune_low_opacity(&set_with(&[0.001], 0.0), 0.005);
        assert!(all.is_noop());
        let changed = reset_opacity(&mut set, 0.01);
        assert_eq!(changed, vec![1]);
        assert!((set.opacity(1) - 0.01).abs() < 1e-9);
        assert!((set.opacity(0) - 0.001).abs() < 1e-9);
    }

    #[test]
    fn extent_of_ring() {
        let cams: Vec<Camera<f64>> = (0..8)
            .map(|k| {
                let t = k as f64 * std::f64::consts::TAU / 8.0;
                let eye = Vec3::new(3.0 * t.cos(), 0.0, 3.0 * t.sin());
                Camera::look_at(
                    eye,
                    Vec3::zero(),
                    Vec3::new(0.0, -1.0, 0.0),
                    8,
                    8,
                    10.0,
                    0.01,
                    100.0,
                )
                .unwrap()
            })
            .collect();
        assert!((scene_extent(&cams) - 3.3).abs() < 1e-9);
    }

    #[test]
    fn plans_keep_optimizer_consistent() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for _ in 0..200 {
            let n = rng.random_range(1..12);
            let alphas: Vec<f64> = (0..n).map(|_| rng.random_range(0.001..0.999)).collect();
            let mut set = set_with(&alphas, rng.random_range(-6.0..0.0));
            let mut opt = OptimState::new(&set, LearningRates::default(), AdamParams::default());
            let mut grads = ParamGrads::zeros_like(&set);
            for _ in 0..3 {
                let plan = match rng.random_range(0..3) {
                    0 => {
                        let crit: Vec<bool> = (0..set.len()).map(|_| rng.random()).collect();
                        aggressive_clone(&set, &crit).unwrap()
                    }
                    1 => {
                        let mean: Vec<f64> = (0..set.len())
                            .map(|_| rng.random_range(0.0..1e-3))
                            .collect();
                        grads = grads_with(&set, &mean);
                        vanilla_clone_split(&set, &grads, 2e-4, 0.01, 1.0, &mut rng).unwrap()
                    }
                    _ => prune_low_opacity(&set, 0.2),
                };
                let (next, rows) = plan.apply(&set).unwrap();
                assert_eq!(next.len(), plan.output_len());
                opt.resize(&rows).unwrap();
                grads.remap_rows(&rows, next.coeffs_per_gaussian());
                set = next;
                set.check_consistent().unwrap();
                assert_eq!(opt.rows(), set.len());
                grads.check_matches(&set).unwrap();
                grads.sh.iter_mut().for_each(|g| *g = [1e-3; 3]);
                opt.step(&mut set, &grads).unwrap();
            }
        }
    }
}
