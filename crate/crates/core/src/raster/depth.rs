use crate::linalg::{quat_to_rotation, Mat3, Vec3};
use crate::scalar::Real;

/// Condition number above which the covariance is treated as degenerate.
pub const MAX_CONDITION: f64 = 1e12;

/// Inverse covariance `R diag(exp(-2s)) R^T` and its condition number.
pub fn precision_matrix<T: Real>(log_scale: &Vec3<T>, rotation: [T; 4]) -> (Mat3<T>, T) {
    let r = quat_to_rotation(rotation);
    let inv_var = log_scale.map(|s| (-(s + s)).exp());
    let mut p = Mat3::zero();
    for i in 0..3 {
        for j in i..3 {
            let mut v = T::zero();
            for k in 0..3 {
                v += r.0[i][k] * inv_var[k] * r.0[j][k];
            }
            p.0[i][j] = v;
            p.0[j][i] = v;
        }
    }
    let smax = log_scale.0.iter().copied().fold(T::neg_infinity(), T::max);
    let smin = log_scale.0.iter().copied().fold(T::infinity(), T::min);
    let cond = ((smax - smin) * T::lit(2.0)).exp();
    (p, cond)
}

/// Distance along the unit ray `origin + t * dir` at which the Gaussian
/// density peaks. This is the midpoint of the ray's entry and exit through
/// any ellipsoidal level set of the Gaussian.
pub fn depth_mid_of<T: Real>(
    center: &Vec3<T>,
    log_scale: &Vec3<T>,
    rotation: [T; 4],
    origin: &Vec3<T>,
    dir: &Vec3<T>,
) -> T {
    let (precision, cond) = precision_matrix(log_scale, rotation);
    depth_mid_with_precision(center, &precision, cond, origin, dir)
}

pub fn depth_mid_with_precision<T: Real>(
    center: &Vec3<T>,
    precision: &Mat3<T>,
    condition: T,
    origin: &Vec3<T>,
    dir: &Vec3<T>,
) -> T {
    let offset = *center - *origin;
    if !(condition <= T::lit(MAX_CONDITION)) {
        return offset.dot(dir);
    }
    let pd = precision.mul_vec(dir);
    let denom = dir.dot(&pd);
    if !(denom > T::zero()) {
        return offset.dot(dir);
    }
    offset.dot(&pd) / denom
}
