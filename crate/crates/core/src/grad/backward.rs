use crate::error::{Result, SplatError};
use crate::image::Image;
use crate::linalg::{quat_to_rotation, Mat3, Vec3};
use crate::raster::{project, BlendParams};
use crate::raster::{projection_terms, splat_alpha, TileBins};
use crate::scalar::Real;
use crate::scene::sh::{basis, basis_gradient, coeff_count, sh_to_color_unclamped};
use crate::scene::{Camera, GaussianSet};

use super::ParamGrads;

/// Gradients of a loss with respect to all parameters, given the loss
/// gradient `dl_dcolor` of the rendered image.
pub fn backward<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    visibility: Option<&[bool]>,
    background: [T; 3],
    params: &BlendParams<T>,
    dl_dcolor: &Image<T>,
) -> Result<ParamGrads<T>> {
    let mut grads = ParamGrads::zeros_like(set);
    backward_into(
        set, cam, visibility, background, params, dl_dcolor, &mut grads,
    )?;
    Ok(grads)
}

/// Like [`backward`] but writes into `grads`: parameter gradients are
/// overwritten, the screen-space gradient statistics accumulate.
pub fn backward_into<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    visibility: Option<&[bool]>,
    background: [T; 3],
    params: &BlendParams<T>,
    dl_dcolor: &Image<T>,
    grads: &mut ParamGrads<T>,
) -> Result<()> {
    if dl_dcolor.width != cam.width || dl_dcolor.height != cam.height {
        return Err(SplatError::ShapeMismatch {
            what: "loss gradient image",
            expected: cam.pixel_count(),
            got: dl_dcolor.width * dl_dcolor.height,
        });
    }
    if let Some(m) = visibility {
        if m.len() != set.len() {
            return Err(SplatError::ShapeMismatch {
                what: "visibility mask",
                expected: set.len(),
                got: m.len(),
            });
        }
    }
    grads.check_matches(set)?;
    grads.clear_params();

    let proj = project(set, cam, visibility, params);
    let bins = TileBins::build(&proj, cam.width, cam.height, params.tile_size);
    let m = proj.len();
    let mut d_mean = vec![[T::zero(); 2]; m];
    let mut d_conic = vec![[T::zero(); 3]; m];
    let mut d_color = vec![[T::zero(); 3]; m];
    let mut d_opacity = vec![T::zero(); m];

    // (projected index, alpha, gaussian falloff, transmittance before blending)
    let mut chain: Vec<(usize, T, T, T)> = Vec::with_capacity(64);
    let half = T::lit(0.5);
    bins.for_each_pixel(cam.width, cam.height, |list, x, y| {
        chain.clear();
        let mut trans = T::one();
        for &pi in list {
            let g = &proj[pi as usize];
            let Some((alpha, gauss)) = splat_alpha(g, x, y) else {
                continue;
            };
            if alpha < params.min_alpha {
                continue;
            }
            chain.push((pi as usize, alpha, gauss, trans));
            trans *= T::one() - alpha;
            if trans < params.min_transmittance {
                break;
            }
        }
        if chain.is_empty() {
            return;
        }
        let dl = dl_dcolor.get(x, y);
        // Color seen behind the current splat, normalized to unit transmittance.
        let mut rest = background;
        let px = T::lit(x as f64) + half;
        let py = T::lit(y as f64) + half;
        for &(pi, alpha, gauss, t) in chain.iter().rev() {
            let g = &proj[pi];
            let w = alpha * t;
            let mut d_alpha = T::zero();
            for c in 0..3 {
                d_color[pi][c] += w * dl[c];
                d_alpha += (g.color[c] - rest[c]) * dl[c];
                rest[c] = alpha * g.color[c] + (T::one() - alpha) * rest[c];
            }
            d_alpha *= t;
            d_opacity[pi] += d_alpha * gauss;
            let d_power = d_alpha * g.opacity * gauss;
            let dx = g.mean2d[0] - px;
            let dy = g.mean2d[1] - py;
            let [a, b, c] = g.conic;
            d_mean[pi][0] -= d_power * (a * dx + b * dy);
            d_mean[pi][1] -= d_power * (c * dy + b * dx);
            d_conic[pi][0] -= d_power * half * dx * dx;
            d_conic[pi][1] -= d_power * dx * dy;
            d_conic[pi][2] -= d_power * half * dy * dy;
        }
    });

    let cam_center = cam.center();
    let w = cam.rotation;
    let ndc_scale = [
        T::lit(cam.width as f64) * half,
        T::lit(cam.height as f64) * half,
    ];
    let k = set.coeffs_per_gaussian();
    for (pi, g) in proj.iter().enumerate() {
        let i = g.gaussian_index;
        let op = g.opacity;
        grads.opacity_logits[i] = d_opacity[pi] * op * (T::one() - op);

        let mut d_center = Vec3::zero();

        // Color through SH evaluation and the non-negativity clamp.
        let view = set.centers[i] - cam_center;
        let view_len = view.norm();
        let dir = view * (T::one() / view_len);
        let degree = set.active_sh_degree();
        let coeffs = set.sh_of(i);
        let raw = sh_to_color_unclamped(coeffs, &dir, degree);
        let mut d_raw = d_color[pi];
        for c in 0..3 {
            if raw[c] < T::zero() {
                d_raw[c] = T::zero();
            }
        }
        let b = basis(&dir, degree);
        for kk in 0..coeff_count(degree) {
            grads.sh[i * k + kk] = d_raw.map(|v| v * b[kk]);
        }
        if degree > 0 {
            let bg = basis_gradient(&dir, degree);
            let mut d_dir = Vec3::zero();
            for kk in 1..coeff_count(degree) {
                let s =
                    coeffs[kk][0] * d_raw[0] + coeffs[kk][1] * d_raw[1] + coeffs[kk][2] * d_raw[2];
                d_dir += bg[kk] * s;
            }
            d_center += (d_dir - dir * dir.dot(&d_dir)) * (T::one() / view_len);
        }

        // Conic -> 2D covariance.
        let [qa, qb, qc] = g.conic;
        let [ga_q, gb_q, gc_q] = d_conic[pi];
        let r = gb_q * half;
        let ga = -(qa * qa * ga_q + T::lit(2.0) * qa * qb * r + qb * qb * gc_q);
        let gc = -(qb * qb * ga_q + T::lit(2.0) * qb * qc * r + qc * qc * gc_q);
        let gb_half = -(qa * qb * ga_q + (qb * qb + qa * qc) * r + qb * qc * gc_q);
        let g2 = [[ga, gb_half], [gb_half, gc]];

        let terms = projection_terms(set, cam, i, params.low_pass);
        let jac = terms.jac;
        let cov_cam = terms.cov_cam;

        // 2D covariance -> camera-space covariance and Jacobian.
        let mut g2j = [[T::zero(); 3]; 2];
        for r_ in 0..2 {
            for c_ in 0..3 {
                g2j[r_][c_] = g2[r_][0] * jac[0][c_] + g2[r_][1] * jac[1][c_];
            }
        }
        let mut d_cov_cam = Mat3::zero();
        for r_ in 0..3 {
            for c_ in 0..3 {
                d_cov_cam.0[r_][c_] = jac[0][r_] * g2j[0][c_] + jac[1][r_] * g2j[1][c_];
            }
        }
        let mut d_jac = [[T::zero(); 3]; 2];
        for r_ in 0..2 {
            for c_ in 0..3 {
                let mut v = T::zero();
                for kk in 0..3 {
                    v += g2j[r_][kk] * cov_cam.0[kk][c_];
                }
                d_jac[r_][c_] = T::lit(2.0) * v;
            }
        }

        // Jacobian and projected mean -> camera-space position.
        let p = terms.p_cam;
        let z = p.z();
        let inv_z = T::one() / z;
        let inv_z2 = inv_z * inv_z;
        let [sx, sy] = terms.slopes;
        let mut d_p = Vec3::zero();
        d_p[2] += d_jac[0][0] * (-cam.fx * inv_z2) + d_jac[1][1] * (-cam.fy * inv_z2);
        d_p[2] += d_jac[0][2] * cam.fx * sx * inv_z2 + d_jac[1][2] * cam.fy * sy * inv_z2;
        let d_sx = d_jac[0][2] * (-cam.fx * inv_z);
        let d_sy = d_jac[1][2] * (-cam.fy * inv_z);
        if !terms.slope_clamped[0] {
            d_p[0] += d_sx * inv_z;
            d_p[2] -= d_sx * sx * inv_z;
        }
        if !terms.slope_clamped[1] {
            d_p[1] += d_sy * inv_z;
            d_p[2] -= d_sy * sy * inv_z;
        }
        let [dmx, dmy] = d_mean[pi];
        d_p[0] += dmx * cam.fx * inv_z;
        d_p[1] += dmy * cam.fy * inv_z;
        d_p[2] -= (dmx * cam.fx * p.x() + dmy * cam.fy * p.y()) * inv_z2;
        d_center += w.transpose().mul_vec(&d_p);
        grads.centers[i] = d_center;

        // Camera-space covariance -> world covariance -> scale and rotation.
        let d_cov = w.transpose() * d_cov_cam * w;
        let q = set.rotations[i];
        let qn = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
        let qh = q.map(|v| v / qn);
        let rot = quat_to_rotation(qh);
        let s = set.log_scales[i].map(|v| v.exp());
        let mut mm = rot;
        for row in mm.0.iter_mut() {
            for j in 0..3 {
                row[j] *= s[j];
            }
        }
        let d_sym = d_cov + d_cov.transpose();
        let d_m = d_sym * mm;
        let mut d_log_scale = Vec3::zero();
        let mut d_rot = Mat3::zero();
        for j in 0..3 {
            let mut acc = T::zero();
            for r_ in 0..3 {
                acc += rot.0[r_][j] * d_m.0[r_][j];
                d_rot.0[r_][j] = d_m.0[r_][j] * s[j];
            }
            d_log_scale[j] = acc * s[j];
        }
        grads.log_scales[i] = d_log_scale;
        grads.rotations[i] = quaternion_grad(qh, qn, &d_rot);

        let ndc = [dmx * ndc_scale[0], dmy * ndc_scale[1]];
        grads.grad2d_accum[i] += (ndc[0] * ndc[0] + ndc[1] * ndc[1]).sqrt();
        grads.grad2d_count[i] += 1;
    }
    Ok(())
}

/// Pulls a rotation-matrix gradient back to the raw quaternion `q = qn * qh`.
fn quaternion_grad<T: Real>(qh: [T; 4], qn: T, d_r: &Mat3<T>) -> [T; 4] {
    let [w, x, y, z] = qh;
    let two = T::lit(2.0);
    let four = T::lit(4.0);
    let zero = T::zero();
    let dr_dw = [
        [zero, -two * z, two * y],
        [two * z, zero, -two * x],
        [-two * y, two * x, zero],
    ];
    let dr_dx = [
        [zero, two * y, two * z],
        [two * y, -four * x, -two * w],
        [two * z, two * w, -four * x],
    ];
    let dr_dy = [
        [-four * y, two * x, two * w],
        [two * x, zero, two * z],
        [-two * w, two * z, -four * y],
    ];
    let dr_dz = [
        [-four * z, -two * w, two * x],
        [two * w, -four * z, two * y],
        [two * x, two * y, zero],
    ];
    let contract = |m: [[T; 3]; 3]| {
        let mut acc = T::zero();
        for r in 0..3 {
            for c in 0..3 {
                acc += m[r][c] * d_r.0[r][c];
            }
        }
        acc
    };
    let g = [
        contract(dr_dw),
        contract(dr_dx),
        contract(dr_dy),
        contract(dr_dz),
    ];
    let radial = g[0] * w + g[1] * x + g[2] * y + g[3] * z;
    [
        (g[0] - w * radial) / qn,
        (g[1] - x * radial) / qn,
        (g[2] - y * radial) / qn,
        (g[3] - z * radial) / qn,
    ]
}
