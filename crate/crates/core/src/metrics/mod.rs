//! Image and geometry quality metrics.

pub mod spatial;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::image::Image;
use crate::linalg::Vec3;
use crate::scalar::Real;

use self::spatial::KdTree;

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 99.0;

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Below this many points per side Chamfer distances are brute-forced.
const CHAMFER_BRUTE_FORCE_MAX: usize = 2000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub psnr: f64,
    pub ssim: f64,
    /// Symmetric mean nearest-neighbor distance, when reference points exist.
    pub chamfer: Option<f64>,
}

/// Peak signal-to-noise ratio for unit-range images, capped at 99 dB.
pub fn psnr<T: Real>(a: &Image<T>, b: &Image<T>) -> f64 {
    assert!(a.same_shape(b), "psnr needs equally sized images");
    let n = a.data.len().max(1) as f64;
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| {
            let d = x.to_f64_lossy() - y.to_f64_lossy();
            d * d
        })
        .sum::<f64>()
        / n;
    if mse <= 0.0 {
        return PSNR_CAP_DB;
    }
    (10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB)
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as f64 - c;
        *v = (-(d * d) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable Gaussian blur with zero padding and same-size output.
fn blur<T: Real>(plane: &[T], w: usize, h: usize, kernel: &[T; SSIM_WINDOW]) -> Vec<T> {
    let r = SSIM_WINDOW / 2;
    let mut tmp = vec![T::zero(); w * h];
    for y in 0..h {
        let row = &plane[y * w..(y + 1) * w];
        for x in 0..w {
            let mut acc = T::zero();
            let lo = x.saturating_sub(r);
            let hi = (x + r).min(w - 1);
            for xx in lo..=hi {
                acc += kernel[xx + r - x] * row[xx];
            }
            tmp[y * w + x] = acc;
        }
    }
    let mut out = vec![T::zero(); w * h];
    for y in 0..h {
        let lo = y.saturating_sub(r);
        let hi = (y + r).min(h - 1);
        for x in 0..w {
            let mut acc = T::zero();
            for yy in lo..=hi {
                acc += kernel[yy + r - y] * tmp[yy * w + x];
            }
            out[y * w + x] = acc;
        }
    }
    out
}

fn channel_plane<T: Real>(img: &Image<T>, c: usize) -> Vec<T> {
    img.data.iter().skip(c).step_by(3).copied().collect()
}

/// Mean SSIM over pixels and channels (11x11 Gaussian window, sigma 1.5,
/// zero padding) and, optionally, its gradient with respect to `a`.
fn ssim_impl<T: Real>(a: &Image<T>, b: &Image<T>, want_grad: bool) -> (T, Option<Image<T>>) {
    assert!(a.same_shape(b), "ssim needs equally sized images");
    let (w, h) = (a.width, a.height);
    let kernel = gaussian_kernel().map(T::lit);
    let c1 = T::lit(SSIM_K1 * SSIM_K1);
    let c2 = T::lit(SSIM_K2 * SSIM_K2);
    let two = T::lit(2.0);
    let n_total = T::lit((w * h * 3) as f64);
    let mut total = T::zero();
    let mut grad = want_grad.then(|| Image::new(w, h));
    for c in 0..3 {
        let x = channel_plane(a, c);
        let y = channel_plane(b, c);
        let mu_x = blur(&x, w, h, &kernel);
        let mu_y = blur(&y, w, h, &kernel);
        let xx: Vec<T> = x.iter().map(|v| *v * *v).collect();
        let yy: Vec<T> = y.iter().map(|v| *v * *v).collect();
        let xy: Vec<T> = x.iter().zip(&y).map(|(p, q)| *p * *q).collect();
        let e_xx = blur(&xx, w, h, &kernel);
        let e_yy = blur(&yy, w, h, &kernel);
        let e_xy = blur(&xy, w, h, &kernel);
        let mut g_mu = vec![T::zero(); w * h];
        let mut g_xx = vec![T::zero(); w * h];
        let mut g_xy = vec![T::zero(); w * h];
        for p in 0..w * h {
            let (mx, my) = (mu_x[p], mu_y[p]);
            let sxx = e_xx[p] - mx * mx;
            let syy = e_yy[p] - my * my;
            let sxy = e_xy[p] - mx * my;
            let a1 = two * mx * my + c1;
            let a2 = two * sxy + c2;
            let b1 = mx * mx + my * my + c1;
            let b2 = sxx + syy + c2;
            let s = a1 * a2 / (b1 * b2);
            total += s;
            if want_grad {
                let d_mx = two * my * a2 / (b1 * b2) - s * two * mx / b1;
                let d_sxx = -s / b2;
                let d_sxy = two * a1 / (b1 * b2);
                g_mu[p] = d_mx - two * mx * d_sxx - my * d_sxy;
                g_xx[p] = d_sxx;
                g_xy[p] = d_sxy;
            }
        }
        if let Some(g) = grad.as_mut() {
            let b_mu = blur(&g_mu, w, h, &kernel);
            let b_xx = blur(&g_xx, w, h, &kernel);
            let b_xy = blur(&g_xy, w, h, &kernel);
            for p in 0..w * h {
                g.data[p * 3 + c] = (b_mu[p] + two * x[p] * b_xx[p] + y[p] * b_xy[p]) / n_total;
            }
        }
    }
    (total / n_total, grad)
}

pub fn ssim<T: Real>(a: &Image<T>, b: &Image<T>) -> T {
    ssim_impl(a, b, false).0
}

/// SSIM and its gradient with respect to the first image.
pub fn ssim_with_grad<T: Real>(a: &Image<T>, b: &Image<T>) -> (T, Image<T>) {
    let (v, g) = ssim_impl(a, b, true);
    (v, g.expect("gradient requested"))
}

fn nearest_distances<T: Real>(from: &[Vec3<T>], to: &[Vec3<T>]) -> Vec<T> {
    if from.len() <= CHAMFER_BRUTE_FORCE_MAX && to.len() <= CHAMFER_BRUTE_FORCE_MAX {
        from.iter()
            .map(|p| {
                to.iter()
                    .map(|q| (*p - *q).norm_squared())
                    .fold(T::infinity(), T::min)
                    .sqrt()
            })
            .collect()
    } else {
        let tree = KdTree::build(to);
        from.iter()
            .map(|p| {
                tree.nearest(p)
                    .map(|(_, d)| d.sqrt())
                    .unwrap_or(T::infinity())
            })
            .collect()
    }
}

/// Symmetric Chamfer distance `(mean_p min_q |p-q| + mean_q min_p |q-p|) / 2`.
pub fn chamfer<T: Real>(p: &[Vec3<T>], q: &[Vec3<T>]) -> Result<T> {
    if p.is_empty() || q.is_empty() {
        return Err(SplatError::EmptyPointSet);
    }
    let mean = |v: Vec<T>| {
        let n = T::lit(v.len() as f64);
        v.into_iter().sum::<T>() / n
    };
    let forward = mean(nearest_distances(p, q));
    let backward = mean(nearest_distances(q, p));
    Ok((forward + backward) * T::lit(0.5))
}
