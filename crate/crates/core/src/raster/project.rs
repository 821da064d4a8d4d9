use crate::linalg::{Mat3, Vec3};
use crate::scalar::{sigmoid, Real};
use crate::scene::sh::sh_to_color_unclamped;
use crate::scene::{covariance_from_params, Camera, GaussianSet};

use super::BlendParams;

/// Factor applied to the half field of view when clamping the projection
/// Jacobian, as in the reference splatting rasterizer.
pub(crate) const JACOBIAN_CLAMP: f64 = 1.3;

/// Screen-space footprint of one Gaussian.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectedGaussian<T> {
    pub gaussian_index: usize,
    /// Projected center in pixels.
    pub mean2d: [T; 2],
    /// Upper triangle `(xx, xy, yy)` of the regularized 2D covariance.
    pub cov2d: [T; 3],
    /// Upper triangle of the inverse of `cov2d`.
    pub conic: [T; 3],
    /// Camera-space z of the center.
    pub depth_mean: T,
    /// Pixel extent of the splat.
    pub radius: usize,
    pub color: [T; 3],
    pub opacity: T,
    /// Inclusive pixel rectangle `[x0, x1] x [y0, y1]` clipped to the image.
    pub(crate) rect: [usize; 4],
}

/// Intermediate projection quantities shared with the backward pass.
pub(crate) struct ProjectionTerms<T> {
    pub p_cam: Vec3<T>,
    pub cov_cam: Mat3<T>,
    /// Rows of the 2x3 perspective Jacobian.
    pub jac: [[T; 3]; 2],
    /// Clamped image-plane slopes `x/z`, `y/z` used inside the Jacobian.
    pub slopes: [T; 2],
    pub slope_clamped: [bool; 2],
    pub cov2d: [T; 3],
}

pub(crate) fn projection_terms<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    i: usize,
    low_pass: T,
) -> ProjectionTerms<T> {
    let p_cam = cam.world_to_camera(&set.centers[i]);
    let cov = covariance_from_params(&set.log_scales[i], set.rotations[i]);
    let w = cam.rotation;
    let cov_cam = w * cov * w.transpose();
    let z = p_cam.z();
    let clamp = T::lit(JACOBIAN_CLAMP);
    let width = T::lit(cam.width as f64);
    let height = T::lit(cam.height as f64);
    let lim_x = [-clamp * cam.cx / cam.fx, clamp * (width - cam.cx) / cam.fx];
    let lim_y = [-clamp * cam.cy / cam.fy, clamp * (height - cam.cy) / cam.fy];
    let sx = p_cam.x() / z;
    let sy = p_cam.y() / z;
    let slopes = [
        sx.max(lim_x[0]).min(lim_x[1]),
        sy.max(lim_y[0]).min(lim_y[1]),
    ];
    let slope_clamped = [slopes[0] != sx, slopes[1] != sy];
    let zero = T::zero();
    let jac = [
        [cam.fx / z, zero, -cam.fx * slopes[0] / z],
        [zero, cam.fy / z, -cam.fy * slopes[1] / z],
    ];
    // J * cov_cam * J^T, symmetric by construction.
    let mut jc = [[zero; 3]; 2];
    for r in 0..2 {
        for c in 0..3 {
            jc[r][c] = jac[r][0] * cov_cam.0[0][c]
                + jac[r][1] * cov_cam.0[1][c]
                + jac[r][2] * cov_cam.0[2][c];
        }
    }
    let dot = |a: &[T; 3], b: &[T; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let cov2d = [
        dot(&jc[0], &jac[0]) + low_pass,
        dot(&jc[0], &jac[1]),
        dot(&jc[1], &jac[1]) + low_pass,
    ];
    ProjectionTerms {
        p_cam,
        cov_cam,
        jac,
        slopes,
        slope_clamped,
        cov2d,
    }
}

/// Projects Gaussian `i`; `None` when it is clipped or touches no pixel.
pub fn project_one<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    i: usize,
    params: &BlendParams<T>,
) -> Option<ProjectedGaussian<T>> {
    let p_cam = cam.world_to_camera(&set.centers[i]);
    let z = p_cam.z();
    if !(z > cam.znear && z < cam.zfar) {
        return None;
    }
    let terms = projection_terms(set, cam, i, params.low_pass);
    let [a, b, c] = terms.cov2d;
    let det = a * c - b * b;
    if !(det > T::zero()) || !det.is_finite() {
        return None;
    }
    let inv = T::one() / det;
    let conic = [c * inv, -b * inv, a * inv];
    let half = T::lit(0.5);
    let mid = half * (a + c);
    let lambda_max = mid + (mid * mid - det).max(T::lit(0.1)).sqrt();
    let radius_f = (params.extent_sigmas * lambda_max.sqrt()).ceil();
    let radius = radius_f.to_usize().unwrap_or(0).max(1);
    let mean2d = [
        cam.fx * p_cam.x() / z + cam.cx,
        cam.fy * p_cam.y() / z + cam.cy,
    ];
    let rect = pixel_rect(mean2d, T::lit(radius as f64), cam.width, cam.height)?;
    let dir = (set.centers[i] - cam.center()).normalized();
    let color =
        sh_to_color_unclamped(set.sh_of(i), &dir, set.active_sh_degree()).map(|v| v.max(T::zero()));
    Some(ProjectedGaussian {
        gaussian_index: i,
        mean2d,
        cov2d: terms.cov2d,
        conic,
        depth_mean: z,
        radius,
        color,
        opacity: sigmoid(set.opacity_logits[i]),
        rect,
    })
}

/// Pixels whose centers lie within `radius` of `mean` along each axis.
fn pixel_rect<T: Real>(mean: [T; 2], radius: T, width: usize, height: usize) -> Option<[usize; 4]> {
    let half = T::lit(0.5);
    let lo_x = (mean[0] - radius - half).ceil();
    let hi_x = (mean[0] + radius - half).floor();
    let lo_y = (mean[1] - radius - half).ceil();
    let hi_y = (mean[1] + radius - half).floor();
    let w = T::lit(width as f64);
    let h = T::lit(height as f64);
    if hi_x < T::zero()
        || hi_y < T::zero()
        || lo_x >= w
        || lo_y >= h
        || !(lo_x <= hi_x && lo_y <= hi_y)
    {
        return None;
    }
    let clip = |v: T, max: usize| v.max(T::zero()).to_usize().unwrap_or(0).min(max - 1);
    Some([
        clip(lo_x, width),
        clip(hi_x, width),
        clip(lo_y, height),
        clip(hi_y, height),
    ])
}

/// Projects every Gaussian allowed by `visibility`, dropping those behind
/// the near plane or outside the image, sorted front to back by camera-space
/// depth (ties broken by index).
pub fn project<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    visibility: Option<&[bool]>,
    params: &BlendParams<T>,
) -> Vec<ProjectedGaussian<T>> {
    let mut out: Vec<ProjectedGaussian<T>> = (0..set.len())
        .filter(|&i| visibility.is_none_or(|m| m[i]))
        .filter_map(|i| project_one(set, cam, i, params))
        .collect();
    out.sort_by(|a, b| {
        a.depth_mean
            .partial_cmp(&b.depth_mean)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.gaussian_index.cmp(&b.gaussian_index))
    });
    out
}
