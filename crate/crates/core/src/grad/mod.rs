//! Analytic gradients of an image loss with respect to every Gaussian
//! parameter, plus the accumulated screen-space gradient statistic used by
//! gradient-driven densification.

mod backward;
pub mod finite_diff;

pub use backward::{backward, backward_into};
pub use finite_diff::{
    compare_with_finite_differences, finite_diff_check, BlockErrors, LossFn, ParamBlock,
};

use crate::error::{Result, SplatError};
use crate::linalg::Vec3;
use crate::optim::RowOrigin;
use crate::scalar::Real;
use crate::scene::GaussianSet;

/// Parameter gradients laid out like [`GaussianSet`], plus densification
/// statistics that accumulate across calls.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrads<T> {
    pub centers: Vec<Vec3<T>>,
    pub log_scales: Vec<Vec3<T>>,
    pub rotations: Vec<[T; 4]>,
    pub opacity_logits: Vec<T>,
    pub sh: Vec<[T; 3]>,
    /// Sum over backward passes of the NDC-space norm of dLoss/dmean2d.
    pub grad2d_accum: Vec<T>,
    /// Number of backward passes in which the Gaussian was on screen.
    pub grad2d_count: Vec<u32>,
}

impl<T: Real> ParamGrads<T> {
    pub fn zeros_like(set: &GaussianSet<T>) -> Self {
        let n = set.len();
        Self {
            centers: vec![Vec3::zero(); n],
            log_scales: vec![Vec3::zero(); n],
            rotations: vec![[T::zero(); 4]; n],
            opacity_logits: vec![T::zero(); n],
            sh: vec![[T::zero(); 3]; n * set.coeffs_per_gaussian()],
            grad2d_accum: vec![T::zero(); n],
            grad2d_count: vec![0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Zeroes the parameter gradients, keeping the densification statistics.
    pub fn clear_params(&mut self) {
        self.centers.iter_mut().for_each(|v| *v = Vec3::zero());
        self.log_scales.iter_mut().for_each(|v| *v = Vec3::zero());
        self.rotations.iter_mut().for_each(|v| *v = [T::zero(); 4]);
        self.opacity_logits.iter_mut().for_each(|v| *v = T::zero());
        self.sh.iter_mut().for_each(|v| *v = [T::zero(); 3]);
    }

    pub fn reset_stats(&mut self) {
        self.grad2d_accum.iter_mut().for_each(|v| *v = T::zero());
        self.grad2d_count.iter_mut().for_each(|v| *v = 0);
    }

    /// Rebuilds the buffers for a new row layout. Statistics of surviving rows
    /// are carried over; fresh rows start at zero. Parameter gradients are
    /// zeroed.
    pub fn remap_rows(&mut self, plan: &[RowOrigin], coeffs_per_gaussian: usize) {
        let n = plan.len();
        let (accum, count): (Vec<T>, Vec<u32>) = plan
            .iter()
            .map(|o| match *o {
                RowOrigin::Old(i) => (self.grad2d_accum[i], self.grad2d_count[i]),
                RowOrigin::Fresh => (T::zero(), 0),
            })
            .unzip();
        *self = Self {
            centers: vec![Vec3::zero(); n],
            log_scales: vec![Vec3::zero(); n],
            rotations: vec![[T::zero(); 4]; n],
            opacity_logits: vec![T::zero(); n],
            sh: vec![[T::zero(); 3]; n * coeffs_per_gaussian],
            grad2d_accum: accum,
            grad2d_count: count,
        };
    }

    /// Mean screen-space gradient per Gaussian (0 where never seen).
    pub fn mean_grad2d(&self) -> Vec<T> {
        self.grad2d_accum
            .iter()
            .zip(&self.grad2d_count)
            .map(|(&a, &c)| {
                if c > 0 {
                    a / T::lit(c as f64)
                } else {
                    T::zero()
                }
            })
            .collect()
    }

    /// SH gradient rows of Gaussian `i`.
    pub fn sh_of(&self, set: &GaussianSet<T>, i: usize) -> &[[T; 3]] {
        let k = set.coeffs_per_gaussian();
        &self.sh[i * k..(i + 1) * k]
    }

    pub fn check_matches(&self, set: &GaussianSet<T>) -> Result<()> {
        let n = set.len();
        let checks = [
            ("center grads", self.centers.len(), n),
            ("scale grads", self.log_scales.len(), n),
            ("rotation grads", self.rotations.len(), n),
            ("opacity grads", self.opacity_logits.len(), n),
            ("sh grads", self.sh.len(), n * set.coeffs_per_gaussian()),
            ("grad2d stats", self.grad2d_accum.len(), n),
        ];
        for (what, got, expected) in checks {
            if got != expected {
                return Err(SplatError::ShapeMismatch {
                    what,
                    expected,
                    got,
                });
            }
        }
        Ok(())
    }
}
