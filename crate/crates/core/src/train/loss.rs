//! Photometric training loss `(1 - lambda) L1 + lambda (1 - SSIM)`.

use crate::image::Image;
use crate::metrics::ssim_with_grad;
use crate::scalar::Real;

/// Loss value and its gradient with respect to `render`.
pub fn compute_loss<T: Real>(
    render: &Image<T>,
    target: &Image<T>,
    lambda_dssim: T,
) -> (T, Image<T>) {
    assert!(render.same_shape(target), "loss needs equally sized images");
    let n = T::lit(render.data.len() as f64);
    let w_l1 = T::one() - lambda_dssim;
    let mut grad = Image::new(render.width, render.height);
    let mut l1 = T::zero();
    for ((g, &r), &t) in grad.data.iter_mut().zip(&render.data).zip(&target.data) {
        let d = r - t;
        l1 += d.abs();
        let sign = if d > T::zero() {
            T::one()
        } else if d < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        *g = w_l1 * sign / n;
    }
    let mut loss = w_l1 * l1 / n;
    if lambda_dssim > T::zero() {
        let (s, ds) = ssim_with_grad(render, target);
        loss += lambda_dssim * (T::one() - s);
        for (g, d) in grad.data.iter_mut().zip(&ds.data) {
            *g -= lambda_dssim * *d;
        }
    }
    (loss, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identical_images() {
        let a = Image::<f64>::filled(12, 12, [0.3, 0.6, 0.9]);
        let (l, g) = compute_loss(&a, &a, 0.2);
        assert!(l.abs() < 1e-12);
        assert!(g.data.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn constant_offset_l1() {
        let a = Image::<f64>::filled(5, 4, [0.5; 3]);
        let b = Image::<f64>::filled(5, 4, [0.45; 3]);
        let (l, g) = compute_loss(&a, &b, 0.0);
        assert!((l - 0.05).abs() < 1e-12);
        assert!(g.data.iter().all(|&v| v == 1.0 / 60.0));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let a = Image::<f64>::from_fn(13, 11, |_, _| [rng.random(), rng.random(), rng.random()]);
        let b = Image::<f64>::from_fn(13, 11, |_, _| [rng.random(), rng.random(), rng.random()]);
        let (_, g) = compute_loss(&a, &b, 0.2);
        let h = 1e-7;
        for i in (0..a.data.len()).step_by(5) {
            let mut p = a.clone();
            p.data[i] += h;
            let mut m = a.clone();
            m.data[i] -= h;
            let fd = (compute_loss(&p, &b, 0.2).0 - compute_loss(&m, &b, 0.2).0) / (2.0 * h);
            assert!(
                (fd - g.data[i]).abs() < 1e-4 * g.data[i].abs().max(1e-3),
                "{i}: {fd} {}",
                g.data[i]
            );
        }
    }
}
