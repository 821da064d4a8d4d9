//! Adam over per-attribute parameter groups, with row bookkeeping for
//! Gaussians that are inserted or removed between steps.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::grad::ParamGrads;
use crate::scalar::Real;
use crate::scene::GaussianSet;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamGroup {
    Centers,
    LogScales,
    Rotations,
    Opacity,
    ShDc,
    ShRest,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 6] = [
        ParamGroup::Centers,
        ParamGroup::LogScales,
        ParamGroup::Rotations,
        ParamGroup::Opacity,
        ParamGroup::ShDc,
        ParamGroup::ShRest,
    ];

    fn slot(self) -> usize {
        self as usize
    }

    fn stride(self, coeffs: usize) -> usize {
        match self {
            ParamGroup::Centers | ParamGroup::LogScales | ParamGroup::ShDc => 3,
            ParamGroup::Rotations => 4,
            ParamGroup::Opacity => 1,
            ParamGroup::ShRest => 3 * (coeffs - 1),
        }
    }
}

/// Learning rates per group. Position rates are multiplied by `spatial_scale`
/// and decay log-linearly from `position_init` to `position_final`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearningRates {
    pub position_init: f64,
    pub position_final: f64,
    pub position_max_steps: usize,
    pub spatial_scale: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
    pub opacity: f64,
    pub scale: f64,
    pub rotation: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            position_init: 1.6e-4,
            position_final: 1.6e-6,
            position_max_steps: 30_000,
            spatial_scale: 1.0,
            sh_dc: 2.5e-3,
            sh_rest: 2.5e-3 / 20.0,
            opacity: 5e-2,
            scale: 5e-3,
            rotation: 1e-3,
        }
    }
}

impl LearningRates {
    /// Position learning rate after `step` completed steps (before spatial scaling).
    pub fn position_lr(&self, step: u64) -> f64 {
        if self.position_max_steps == 0 {
            return self.position_final;
        }
        let t = (step as f64 / self.position_max_steps as f64).clamp(0.0, 1.0);
        (self.position_init.ln() * (1.0 - t) + self.position_final.ln() * t).exp()
    }

    pub fn group_lr(&self, group: ParamGroup, step: u64) -> f64 {
        match group {
            ParamGroup::Centers => self.position_lr(step) * self.spatial_scale,
            ParamGroup::LogScales => self.scale,
            ParamGroup::Rotations => self.rotation,
            ParamGroup::Opacity => self.opacity,
            ParamGroup::ShDc => self.sh_dc,
            ParamGroup::ShRest => self.sh_rest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

/// Where each row of the resized state comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowOrigin {
    /// Keeps the moments of this old row.
    Old(usize),
    /// New Gaussian with zeroed moments.
    Fresh,
}

/// Turns a keep mask into a resize plan.
pub fn keep_plan(keep: &[bool]) -> Vec<RowOrigin> {
    keep.iter()
        .enumerate()
        .filter(|(_, &k)| k)
        .map(|(i, _)| RowOrigin::Old(i))
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
struct Moments<T> {
    m: Vec<T>,
    v: Vec<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimState<T> {
    pub lrs: LearningRates,
    pub adam: AdamParams,
    moments: [Moments<T>; 6],
    coeffs: usize,
    rows: usize,
    step: u64,
}

impl<T: Real> OptimState<T> {
    pub fn new(set: &GaussianSet<T>, lrs: LearningRates, adam: AdamParams) -> Self {
        let coeffs = set.coeffs_per_gaussian();
        let n = set.len();
        let moments = ParamGroup::ALL.map(|g| {
            let len = n * g.stride(coeffs);
            Moments {
                m: vec![T::zero(); len],
                v: vec![T::zero(); len],
            }
        });
        Self {
            lrs,
            adam,
            moments,
            coeffs,
            rows: n,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// First and second moments of one group, row-major.
    pub fn moments(&self, group: ParamGroup) -> (&[T], &[T]) {
        let m = &self.moments[group.slot()];
        (&m.m, &m.v)
    }

    /// One Adam update of every parameter group, then quaternion renormalization.
    pub fn step(&mut self, set: &mut GaussianSet<T>, grads: &ParamGrads<T>) -> Result<()> {
        set.check_consistent()?;
        grads.check_matches(set)?;
        if set.len() != self.rows || set.coeffs_per_gaussian() != self.coeffs {
            return Err(SplatError::ShapeMismatch {
                what: "optimizer rows",
                expected: self.rows,
                got: set.len(),
            });
        }
        let lr_step = self.step;
        self.step += 1;
        let t = self.step as i32;
        let b1 = self.adam.beta1;
        let b2 = self.adam.beta2;
        let bias1 = T::lit(1.0 - b1.powi(t));
        let bias2_sqrt = T::lit((1.0 - b2.powi(t)).sqrt());
        let (b1, b2, eps) = (T::lit(b1), T::lit(b2), T::lit(self.adam.eps));
        let k = self.coeffs;
        for group in ParamGroup::ALL {
            let lr = T::lit(self.lrs.group_lr(group, lr_step));
            let mom = &mut self.moments[group.slot()];
            let mut update = |idx: usize, p: &mut T, g: T| {
                let m = &mut mom.m[idx];
                let v = &mut mom.v[idx];
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let denom = v.sqrt() / bias2_sqrt + eps;
                *p -= lr * (*m / bias1) / denom;
            };
            match group {
                ParamGroup::Centers => {
                    for (i, (p, g)) in set.centers.iter_mut().zip(&grads.centers).enumerate() {
                        for a in 0..3 {
                            update(i * 3 + a, &mut p[a], g[a]);
                        }
                    }
                }
                ParamGroup::LogScales => {
                    for (i, (p, g)) in set.log_scales.iter_mut().zip(&grads.log_scales).enumerate()
                    {
                        for a in 0..3 {
                            update(i * 3 + a, &mut p[a], g[a]);
                        }
                    }
                }
                ParamGroup::Rotations => {
                    for (i, (p, g)) in set.rotations.iter_mut().zip(&grads.rotations).enumerate() {
                        for a in 0..4 {
                            update(i * 4 + a, &mut p[a], g[a]);
                        }
                    }
                }
                ParamGroup::Opacity => {
                    for (i, (p, g)) in set
                        .opacity_logits
                        .iter_mut()
                        .zip(&grads.opacity_logits)
                        .enumerate()
                    {
                        update(i, p, *g);
                    }
                }
                ParamGroup::ShDc => {
                    for i in 0..self.rows {
                        let row = i * k;
                        for c in 0..3 {
                            update(i * 3 + c, &mut set.sh[row][c], grads.sh[row][c]);
                        }
                    }
                }
                ParamGroup::ShRest => {
                    let stride = 3 * (k - 1);
                    for i in 0..self.rows {
                        for kk in 1..k {
                            let row = i * k + kk;
                            for c in 0..3 {
                                update(
                                    i * stride + (kk - 1) * 3 + c,
                                    &mut set.sh[row][c],
                                    grads.sh[row][c],
                                );
                            }
                        }
                    }
                }
            }
        }
        set.normalize_rotations();
        Ok(())
    }

    /// Rebuilds the moment arrays for a new row layout.
    pub fn resize(&mut self, plan: &[RowOrigin]) -> Result<()> {
        for origin in plan {
            if let RowOrigin::Old(i) = origin {
                if *i >= self.rows {
                    return Err(SplatError::InvalidArgument(format!(
                        "resize plan references row {i} of {}",
                        self.rows
                    )));
                }
            }
        }
        let coeffs = self.coeffs;
        for group in ParamGroup::ALL {
            let stride = group.stride(coeffs);
            let old = &self.moments[group.slot()];
            let mut m = Vec::with_capacity(plan.len() * stride);
            let mut v = Vec::with_capacity(plan.len() * stride);
            for origin in plan {
                match origin {
                    RowOrigin::Old(i) => {
                        m.extend_from_slice(&old.m[i * stride..(i + 1) * stride]);
                        v.extend_from_slice(&old.v[i * stride..(i + 1) * stride]);
                    }
                    RowOrigin::Fresh => {
                        m.extend(std::iter::repeat_n(T::zero(), stride));
                        v.extend(std::iter::repeat_n(T::zero(), stride));
                    }
                }
            }
            self.moments[group.slot()] = Moments { m, v };
        }
        self.rows = plan.len();
        Ok(())
    }

    /// Zeroes the moments of one group for the given rows.
    pub fn reset_rows(&mut self, group: ParamGroup, rows: impl IntoIterator<Item = usize>) {
        let stride = group.stride(self.coeffs);
        let mom = &mut self.moments[group.slot()];
        for i in rows {
            mom.m[i * stride..(i + 1) * stride]
                .iter_mut()
                .for_each(|x| *x = T::zero());
            mom.v[i * stride..(i + 1) * stride]
                .iter_mut()
                .for_each(|x| *x = T::zero());
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Vec3;
    use crate::scene::Gaussian;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set_of(n: usize, degree: usize) -> GaussianSet<f64> {
        let mut set = GaussianSet::new(degree);
        for i in 0..n {
            set.push(Gaussian {
                center: Vec3::new(i as f64, 0.0, 0.0),
                log_scale: Vec3::zero(),
                rotation: [1.0, 0.0, 0.0, 0.0],
                opacity_logit: 0.0,
                sh: vec![[0.1; 3]; 16],
            });
        }
        set
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut set = set_of(3, 2);
        let before = set.clone();
        let mut opt = OptimState::new(&set, LearningRates::default(), AdamParams::default());
        let g = ParamGrads::zeros_like(&set);
        opt.step(&mut set, &g).unwrap();
        assert_eq!(set, before);
        assert_eq!(opt.step_count(), 1);
    }

    /// Scalar Adam with bias correction written out directly.
    fn reference_adam(g: f64, lr: f64, steps: usize) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-15);
        let (mut m, mut v, mut x) = (0.0, 0.0, 0.0);
        let mut out = Vec::new();
        for t in 1..=steps {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            x -= lr * mh / (vh.sqrt() + eps);
            out.push(x);
        }
        out
    }

    #[test]
    fn constant_gradient_trajectory() {
        let mut set = set_of(1, 0);
        set.opacity_logits[0] = 0.0;
        let lrs = LearningRates::default();
        let mut opt = OptimState::new(&set, lrs.clone(), AdamParams::default());
        let mut g = ParamGrads::zeros_like(&set);
        g.opacity_logits[0] = 0.37;
        let want = reference_adam(0.37, lrs.opacity, 25);
        for w in want {
            opt.step(&mut set, &g).unwrap();
            assert!((set.opacity_logits[0] - w).abs() < 1e-12);
        }
    }

    #[test]
    fn position_schedule_endpoints() {
        let lrs = LearningRates {
            position_max_steps: 1000,
            ..Default::default()
        };
        assert!((lrs.position_lr(0) - 1.6e-4).abs() < 1e-18);
        assert!((lrs.position_lr(1000) - 1.6e-6).abs() < 1e-18);
        assert!((lrs.position_lr(5000) - 1.6e-6).abs() < 1e-18);
        let mid = lrs.position_lr(500);
        assert!((mid - (1.6e-4f64 * 1.6e-6).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rotations_are_renormalized() {
        let mut set = set_of(2, 0);
        let mut opt = OptimState::new(&set, LearningRates::default(), AdamParams::default());
        let mut g = ParamGrads::zeros_like(&set);
        g.rotations[1] = [0.3, -0.2, 0.5, 0.1];
        opt.step(&mut set, &g).unwrap();
        for q in &set.rotations {
            let n: f64 = q.iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut set = set_of(3, 0);
        let mut opt = OptimState::new(&set, LearningRates::default(), AdamParams::default());
        let g = ParamGrads::zeros_like(&set);
        set.push(set.get(0));
        assert!(opt.step(&mut set, &g).is_err());
        let g = ParamGrads::zeros_like(&set);
        assert!(opt.step(&mut set, &g).is_err());
    }

    fn stepped(n: usize) -> (GaussianSet<f64>, OptimState<f64>) {
        let mut set = set_of(n, 1);
        let mut opt = OptimState::new(&set, LearningRates::default(), AdamParams::default());
        let mut g = ParamGrads::zeros_like(&set);
        for i in 0..n {
            g.opacity_logits[i] = (i + 1) as f64;
            g.centers[i] = Vec3::new(i as f64, 1.0, -1.0);
        }
        opt.step(&mut set, &g).unwrap();
        (set, opt)
    }

    #[test]
    fn all_true_keep_is_identity() {
        let (_, mut opt) = stepped(5);
        let before = opt.clone();
        opt.resize(&keep_plan(&[true; 5])).unwrap();
        assert_eq!(opt, before);
    }

    #[test]
    fn removing_a_row_preserves_order() {
        let (_, mut opt) = stepped(5);
        let (m_before, _) = opt.moments(ParamGroup::Opacity);
        let m_before = m_before.to_vec();
        opt.resize(&keep_plan(&[true, true, true, false, true]))
            .unwrap();
        let (m, v) = opt.moments(ParamGroup::Opacity);
        assert_eq!(m.len(), 4);
        assert_eq!(v.len(), 4);
        assert_eq!(m, &[m_before[0], m_before[1], m_before[2], m_before[4]]);
    }

    #[test]
    fn cloned_rows_get_zero_moments() {
        let (_, mut opt) = stepped(5);
        let plan = [
            RowOrigin::Old(0),
            RowOrigin::Old(1),
            RowOrigin::Old(3),
            RowOrigin::Old(4),
            RowOrigin::Fresh,
            RowOrigin::Fresh,
        ];
        opt.resize(&plan).unwrap();
        for group in ParamGroup::ALL {
            let (m, v) = opt.moments(group);
            let stride = m.len() / 6;
            assert!(m[4 * stride..].iter().all(|x| *x == 0.0));
            assert!(v[4 * stride..].iter().all(|x| *x == 0.0));
        }
        assert!(opt.resize(&[RowOrigin::Old(17)]).is_err());
    }

    #[test]
    fn random_resize_plans_never_go_out_of_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (mut set, mut opt) = stepped(6);
        for _ in 0..1000 {
            let n = set.len();
            let mut plan = Vec::new();
            let mut next = GaussianSet::new(set.sh_degree());
            for i in 0..n {
                match rng.random_range(0..4) {
                    0 => {}
                    1 => {
                        plan.push(RowOrigin::Fresh);
                        plan.push(RowOrigin::Fresh);
                        next.push_row_from(&set, i);
                        next.push_row_from(&set, i);
                    }
                    _ => {
                        plan.push(RowOrigin::Old(i));
                        next.push_row_from(&set, i);
                    }
                }
            }
            if plan.is_empty() || plan.len() > 64 {
                plan = vec![RowOrigin::Old(0)];
                next = set.gather(&[0]);
            }
            opt.resize(&plan).unwrap();
            set = next;
            let mut g = ParamGrads::zeros_like(&set);
            g.opacity_logits.iter_mut().for_each(|v| *v = 0.5);
            opt.step(&mut set, &g).unwrap();
        }
    }

    #[test]
    fn step_is_deterministic() {
        let (mut a, mut oa) = stepped(4);
        let (mut b, mut ob) = (a.clone(), oa.clone());
        let mut g = ParamGrads::zeros_like(&a);
        g.log_scales[2] = Vec3::new(0.1, 0.2, 0.3);
        oa.step(&mut a, &g).unwrap();
        ob.step(&mut b, &g).unwrap();
        assert_eq!(a, b);
        assert_eq!(oa, ob);
    }
}
