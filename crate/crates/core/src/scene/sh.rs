//! Real spherical harmonics up to degree 3 in the convention used by the
//! 3D Gaussian splatting ecosystem (sign pattern and normalization below).

use crate::linalg::Vec3;
use crate::scalar::Real;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
pub const SH_C1: f64 = 0.488_602_511_902_919_9;
pub const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
pub const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub const MAX_SH_DEGREE: usize = 3;

/// Offset added to the SH expansion so that zero coefficients render mid-grey.
pub const SH_OFFSET: f64 = 0.5;

/// Number of coefficients per channel for a given degree.
pub const fn coeff_count(degree: usize) -> usize {
    (degree + 1) * (degree + 1)
}

/// Basis values for every coefficient up to `degree`, evaluated at unit `dir`.
pub fn basis<T: Real>(dir: &Vec3<T>, degree: usize) -> [T; 16] {
    let mut out = [T::zero(); 16];
    out[0] = T::lit(SH_C0);
    if degree == 0 {
        return out;
    }
    let [x, y, z] = dir.0;
    let c1 = T::lit(SH_C1);
    out[1] = -c1 * y;
    out[2] = c1 * z;
    out[3] = -c1 * x;
    if degree == 1 {
        return out;
    }
    let c2 = SH_C2.map(T::lit);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    let (xy, yz, xz) = (x * y, y * z, x * z);
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    out[4] = c2[0] * xy;
    out[5] = c2[1] * yz;
    out[6] = c2[2] * (two * zz - xx - yy);
    out[7] = c2[3] * xz;
    out[8] = c2[4] * (xx - yy);
    if degree == 2 {
        return out;
    }
    let c3 = SH_C3.map(T::lit);
    out[9] = c3[0] * y * (three * xx - yy);
    out[10] = c3[1] * xy * z;
    out[11] = c3[2] * y * (four * zz - xx - yy);
    out[12] = c3[3] * z * (two * zz - three * xx - three * yy);
    out[13] = c3[4] * x * (four * zz - xx - yy);
    out[14] = c3[5] * z * (xx - yy);
    out[15] = c3[6] * x * (xx - three * yy);
    out
}

/// Gradients of each basis polynomial with respect to the (unnormalized)
/// components of `dir`.
pub fn basis_gradient<T: Real>(dir: &Vec3<T>, degree: usize) -> [Vec3<T>; 16] {
    let z0 = Vec3::zero();
    let mut out = [z0; 16];
    if degree == 0 {
        return out;
    }
    let [x, y, z] = dir.0;
    let c1 = T::lit(SH_C1);
    out[1] = Vec3::new(T::zero(), -c1, T::zero());
    out[2] = Vec3::new(T::zero(), T::zero(), c1);
    out[3] = Vec3::new(-c1, T::zero(), T::zero());
    if degree == 1 {
        return out;
    }
    let c2 = SH_C2.map(T::lit);
    let two = T::lit(2.0);
    let three = T::lit(3.0);
    let four = T::lit(4.0);
    let six = T::lit(6.0);
    let eight = T::lit(8.0);
    let zero = T::zero();
    out[4] = Vec3::new(y, x, zero) * c2[0];
    out[5] = Vec3::new(zero, z, y) * c2[1];
    out[6] = Vec3::new(-two * x, -two * y, four * z) * c2[2];
    out[7] = Vec3::new(z, zero, x) * c2[3];
    out[8] = Vec3::new(two * x, -two * y, zero) * c2[4];
    if degree == 2 {
        return out;
    }
    let c3 = SH_C3.map(T::lit);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    out[9] = Vec3::new(six * x * y, three * xx - three * yy, zero) * c3[0];
    out[10] = Vec3::new(y * z, x * z, x * y) * c3[1];
    out[11] = Vec3::new(-two * x * y, four * zz - xx - three * yy, eight * y * z) * c3[2];
    out[12] = Vec3::new(
        -six * x * z,
        -six * y * z,
        six * zz - three * xx - three * yy,
    ) * c3[3];
    out[13] = Vec3::new(four * zz - three * xx - yy, -two * x * y, eight * x * z) * c3[4];
    out[14] = Vec3::new(two * x * z, -two * y * z, xx - yy) * c3[5];
    out[15] = Vec3::new(three * xx - three * yy, -six * x * y, zero) * c3[6];
    out
}

/// Evaluates view-dependent color before clamping: the SH expansion over the
/// active bands plus the 0.5 offset.
///
/// `coeffs` holds at least `coeff_count(active_degree)` RGB triples.
pub fn sh_to_color_unclamped<T: Real>(
    coeffs: &[[T; 3]],
    dir: &Vec3<T>,
    active_degree: usize,
) -> [T; 3] {
    let b = basis(dir, active_degree);
    let mut rgb = [T::lit(SH_OFFSET); 3];
    for (k, c) in coeffs.iter().take(coeff_count(active_degree)).enumerate() {
        for ch in 0..3 {
            rgb[ch] += b[k] * c[ch];
        }
    }
    rgb
}

/// View-dependent color clamped to be non-negative, as used by the rasterizer.
pub fn sh_to_color<T: Real>(coeffs: &[[T; 3]], dir: &Vec3<T>, active_degree: usize) -> [T; 3] {
    sh_to_color_unclamped(coeffs, dir, active_degree).map(|v| v.max(T::zero()))
}

/// DC coefficient that reproduces `rgb` for a degree-0 expansion.
pub fn rgb_to_dc<T: Real>(rgb: [T; 3]) -> [T; 3] {
    rgb.map(|c| (c - T::lit(SH_OFFSET)) / T::lit(SH_C0))
}

pub fn dc_to_rgb<T: Real>(dc: [T; 3]) -> [T; 3] {
    dc.map(|c| c * T::lit(SH_C0) + T::lit(SH_OFFSET))
}
