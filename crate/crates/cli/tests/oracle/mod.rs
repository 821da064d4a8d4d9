//! Independent reference computations for the acceptance suite. Nothing here
//! calls into the renderer; each quantity is rebuilt from first principles.

use splatkit::{Camera, GaussianSet, Vec3};

const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const LOW_PASS: f64 = 0.3;

type M3 = [[f64; 3]; 3];

fn mat_mul(a: &M3, b: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = (0..3).map(|k| a[r][k] * b[k][c]).sum();
        }
    }
    out
}

fn transpose(a: &M3) -> M3 {
    let mut out = [[0.0; 3]; 3];
    for r in 0..3 {
        for c in 0..3 {
            out[r][c] = a[c][r];
        }
    }
    out
}

fn apply(a: &M3, v: [f64; 3]) -> [f64; 3] {
    [0, 1, 2].map(|r| a[r][0] * v[0] + a[r][1] * v[1] + a[r][2] * v[2])
}

/// Rotation of a (not necessarily unit) quaternion `w, x, y, z`.
pub fn rotation(q: [f64; 4]) -> M3 {
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    let [w, x, y, z] = q.map(|v| v / n);
    [
        [
            w * w + x * x - y * y - z * z,
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
        ],
        [
            2.0 * (x * y + w * z),
            w * w - x * x + y * y - z * z,
            2.0 * (y * z - w * x),
        ],
        [
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            w * w - x * x - y * y + z * z,
        ],
    ]
}

/// `R diag(s^p) R^T` for scales `exp(log_scale)`.
fn scaled_form(log_scale: [f64; 3], q: [f64; 4], power: f64) -> M3 {
    let r = rotation(q);
    let mut rs = r;
    for row in rs.iter_mut() {
        for (c, v) in row.iter_mut().enumerate() {
            *v *= (power * log_scale[c]).exp();
        }
    }
    mat_mul(&rs, &transpose(&r))
}

pub fn covariance(log_scale: [f64; 3], q: [f64; 4]) -> M3 {
    scaled_form(log_scale, q, 2.0)
}

pub fn precision(log_scale: [f64; 3], q: [f64; 4]) -> M3 {
    scaled_form(log_scale, q, -2.0)
}

pub struct PixelResult {
    pub color: [f64; 3],
    pub max_contributor: i64,
    /// Blending weight of `max_contributor`.
    pub max_weight: f64,
}

/// Per-pixel front-to-back alpha blending over every Gaussian, with no
/// tiling, no extent cut and no early termination.
pub fn render_pixel(
    set: &GaussianSet<f64>,
    cam: &Camera<f64>,
    px: usize,
    py: usize,
    bg: [f64; 3],
) -> PixelResult {
    let r = cam.rotation.0;
    let t = cam.translation.0;
    let eye = apply(&transpose(&r), t.map(|v| -v));
    let mut order: Vec<(f64, usize)> = Vec::new();
    for i in 0..set.len() {
        let p = apply(&r, set.centers[i].0);
        let z = p[2] + t[2];
        if z > cam.znear && z < cam.zfar {
            order.push((z, i));
        }
    }
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
    let (u, v) = (px as f64 + 0.5, py as f64 + 0.5);
    let mut trans = 1.0;
    let mut color = [0.0; 3];
    let (mut best_w, mut best_i) = (0.0, -1i64);
    for (_, i) in order {
        let c = set.centers[i].0;
        let pc = apply(&r, c);
        let (x, y, z) = (pc[0] + t[0], pc[1] + t[1], pc[2] + t[2]);
        let j = [
            [cam.fx / z, 0.0, -cam.fx * x / (z * z)],
            [0.0, cam.fy / z, -cam.fy * y / (z * z)],
        ];
        let cov_cam = mat_mul(
            &mat_mul(&r, &covariance(set.log_scales[i].0, set.rotations[i])),
            &transpose(&r),
        );
        let mut s = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] = (0..3)
                    .map(|k| {
                        (0..3)
                            .map(|l| j[a][k] * cov_cam[k][l] * j[b][l])
                            .sum::<f64>()
                    })
                    .sum();
            }
        }
        s[0][0] += LOW_PASS;
        s[1][1] += LOW_PASS;
        let det = s[0][0] * s[1][1] - s[0][1] * s[1][0];
        let (mx, my) = (cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
        let (dx, dy) = (u - mx, v - my);
        let power = -0.5 * (s[1][1] * dx * dx - 2.0 * s[0][1] * dx * dy + s[0][0] * dy * dy) / det;
        let alpha =
            (set.opacity_logits[i]).exp() / (1.0 + set.opacity_logits[i].exp()) * power.exp();
        let dir = {
            let d = [c[0] - eye[0], c[1] - eye[1], c[2] - eye[2]];
            let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            d.map(|v| v / n)
        };
        let sh = set.sh_of(i);
        let mut rgb = [0.0; 3];
        for (ch, out) in rgb.iter_mut().enumerate() {
            let mut val = 0.5 + SH_C0 * sh[0][ch];
            if set.active_sh_degree() >= 1 {
                val += SH_C1 * (-dir[1] * sh[1][ch] + dir[2] * sh[2][ch] - dir[0] * sh[3][ch]);
            }
            *out = val.max(0.0);
        }
        let w = trans * alpha;
        if w > best_w {
            best_w = w;
            best_i = i as i64;
        }
        for ch in 0..3 {
            color[ch] += w * rgb[ch];
        }
        trans *= 1.0 - alpha;
    }
    for ch in 0..3 {
        color[ch] += trans * bg[ch];
    }
    PixelResult {
        color,
        max_contributor: best_i,
        max_weight: best_w,
    }
}

/// Log-density of a Gaussian at `p`, up to a constant.
pub fn log_density(center: [f64; 3], prec: &M3, p: [f64; 3]) -> f64 {
    let d = [p[0] - center[0], p[1] - center[1], p[2] - center[2]];
    let pd = apply(prec, d);
    -0.5 * (d[0] * pd[0] + d[1] * pd[1] + d[2] * pd[2])
}

/// Maximizer of a unimodal `f` on `[lo, hi]` by golden-section search.
pub fn golden_section_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - inv_phi * (hi - lo);
    let mut b = lo + inv_phi * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    while hi - lo > tol {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + inv_phi * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - inv_phi * (hi - lo);
            fa = f(a);
        }
    }
    0.5 * (lo + hi)
}

pub fn point_on_ray(o: Vec3<f64>, d: Vec3<f64>, t: f64) -> [f64; 3] {
    [
        o.0[0] + t * d.0[0],
        o.0[1] + t * d.0[1],
        o.0[2] + t * d.0[2],
    ]
}

/// Relative L1 between the footprint of one isotropic Gaussian with opacity
/// `alpha` and that of two coincident clones built by the opacity and
/// covariance replacement formulas, integrated radially in closed form over
/// the image plane (no low-pass, no extent cut).
pub fn clone_footprint_l1(alpha: f64) -> f64 {
    let a = 1.0 - (1.0 - alpha).sqrt();
    let k = alpha * alpha / (2.0 * a - a * a / 2f64.sqrt()).powi(2);
    let n = 200_000;
    let r_max = 12.0;
    let h = r_max / n as f64;
    let (mut diff, mut base) = (0.0, 0.0);
    for i in 0..=n {
        let r = i as f64 * h;
        let w = if i == 0 || i == n { 0.5 } else { 1.0 } * r * h;
        let f = alpha * (-0.5 * r * r).exp();
        let g = 1.0 - (1.0 - a * (-0.5 * r * r / k).exp()).powi(2);
        diff += (f - g).abs() * w;
        base += f * w;
    }
    diff / base
}
