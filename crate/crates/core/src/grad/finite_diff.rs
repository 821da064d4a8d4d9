//! Central finite-difference verification of the analytic backward pass.

use std::fmt;

use crate::image::Image;
use crate::raster::{render, BlendParams};
use crate::scalar::Real;
use crate::scene::{Camera, GaussianSet};

use super::{backward, ParamGrads};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamBlock {
    Centers,
    LogScales,
    Rotations,
    Opacity,
    ShDc,
    ShRest,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 6] = [
        ParamBlock::Centers,
        ParamBlock::LogScales,
        ParamBlock::Rotations,
        ParamBlock::Opacity,
        ParamBlock::ShDc,
        ParamBlock::ShRest,
    ];
}

impl fmt::Display for ParamBlock {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            ParamBlock::Centers => "centers",
            ParamBlock::LogScales => "log_scales",
            ParamBlock::Rotations => "rotations",
            ParamBlock::Opacity => "opacity",
            ParamBlock::ShDc => "sh_dc",
            ParamBlock::ShRest => "sh_rest",
        };
        f.write_str(name)
    }
}

/// Relative error per parameter block: `max|analytic - numeric| / max|numeric|`.
#[derive(Clone, Debug, Default)]
pub struct BlockErrors {
    pub errors: Vec<(ParamBlock, f64)>,
}

impl BlockErrors {
    pub fn get(&self, block: ParamBlock) -> Option<f64> {
        self.errors
            .iter()
            .find(|(b, _)| *b == block)
            .map(|(_, e)| *e)
    }

    /// Block with the largest error.
    pub fn worst(&self) -> Option<(ParamBlock, f64)> {
        self.errors
            .iter()
            .copied()
            .fold(None, |acc: Option<(ParamBlock, f64)>, (b, e)| match acc {
                Some((_, best)) if best >= e => acc,
                _ => Some((b, e)),
            })
    }
}

/// Image loss: value and gradient with respect to the rendered colors.
pub type LossFn<'a, T> = dyn Fn(&Image<T>) -> (T, Image<T>) + 'a;

/// Visits every scalar parameter of `set` as `(block, getter/setter slot)`.
fn for_each_param<T: Real>(
    set: &mut GaussianSet<T>,
    mut f: impl FnMut(ParamBlock, usize, &mut GaussianSet<T>),
) {
    let n = set.len();
    let k = set.coeffs_per_gaussian();
    for i in 0..n {
        for a in 0..3 {
            f(ParamBlock::Centers, i * 3 + a, set);
        }
        for a in 0..3 {
            f(ParamBlock::LogScales, i * 3 + a, set);
        }
        for a in 0..4 {
            f(ParamBlock::Rotations, i * 4 + a, set);
        }
        f(ParamBlock::Opacity, i, set);
        for c in 0..3 {
            f(ParamBlock::ShDc, i * k * 3 + c, set);
        }
        for kk in 1..k {
            for c in 0..3 {
                f(ParamBlock::ShRest, (i * k + kk) * 3 + c, set);
            }
        }
    }
}

fn param_mut<T: Real>(set: &mut GaussianSet<T>, block: ParamBlock, flat: usize) -> &mut T {
    match block {
        ParamBlock::Centers => &mut set.centers[flat / 3][flat % 3],
        ParamBlock::LogScales => &mut set.log_scales[flat / 3][flat % 3],
        ParamBlock::Rotations => &mut set.rotations[flat / 4][flat % 4],
        ParamBlock::Opacity => &mut set.opacity_logits[flat],
        ParamBlock::ShDc | ParamBlock::ShRest => &mut set.sh[flat / 3][flat % 3],
    }
}

fn grad_value<T: Real>(g: &ParamGrads<T>, block: ParamBlock, flat: usize) -> T {
    match block {
        ParamBlock::Centers => g.centers[flat / 3][flat % 3],
        ParamBlock::LogScales => g.log_scales[flat / 3][flat % 3],
        ParamBlock::Rotations => g.rotations[flat / 4][flat % 4],
        ParamBlock::Opacity => g.opacity_logits[flat],
        ParamBlock::ShDc | ParamBlock::ShRest => g.sh[flat / 3][flat % 3],
    }
}

/// Compares `analytic` with central differences of `loss_fn(render(set))`.
pub fn compare_with_finite_differences<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    background: [T; 3],
    params: &BlendParams<T>,
    loss_fn: &LossFn<'_, T>,
    epsilon: T,
    analytic: &ParamGrads<T>,
) -> BlockErrors {
    let mut work = set.clone();
    let mut max_diff = [0.0f64; 6];
    let mut max_ref = [0.0f64; 6];
    let mut seen = [false; 6];
    let eval = |s: &GaussianSet<T>| loss_fn(&render(s, cam, None, background, params).color).0;
    for_each_param(&mut work, |block, flat, s| {
        let orig = *param_mut(s, block, flat);
        *param_mut(s, block, flat) = orig + epsilon;
        let plus = eval(s);
        *param_mut(s, block, flat) = orig - epsilon;
        let minus = eval(s);
        *param_mut(s, block, flat) = orig;
        let numeric = ((plus - minus) / (epsilon + epsilon)).to_f64_lossy();
        let a = grad_value(analytic, block, flat).to_f64_lossy();
        let b = ParamBlock::ALL
            .iter()
            .position(|x| *x == block)
            .unwrap_or(0);
        seen[b] = true;
        max_diff[b] = max_diff[b].max((a - numeric).abs());
        max_ref[b] = max_ref[b].max(numeric.abs());
    });
    let errors = ParamBlock::ALL
        .iter()
        .enumerate()
        .filter(|(b, _)| seen[*b])
        .map(|(b, block)| {
            let err = if max_ref[b] > 0.0 {
                max_diff[b] / max_ref[b]
            } else if max_diff[b] == 0.0 {
                0.0
            } else {
                f64::INFINITY
            };
            (*block, err)
        })
        .collect();
    BlockErrors { errors }
}

/// Runs the analytic backward pass and checks it against central finite
/// differences with step `epsilon`. Intended for small scenes.
pub fn finite_diff_check<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    background: [T; 3],
    params: &BlendParams<T>,
    loss_fn: &LossFn<'_, T>,
    epsilon: T,
) -> BlockErrors {
    let out = render(set, cam, None, background, params);
    let (_, dl) = loss_fn(&out.color);
    let analytic =
        backward(set, cam, None, background, params, &dl).expect("shapes are consistent");
    compare_with_finite_differences(set, cam, background, params, loss_fn, epsilon, &analytic)
}
