use crate::image::Image;
use crate::linalg::Mat3;
use crate::scalar::Real;
use crate::scene::{Camera, GaussianSet};

use super::depth::{depth_mid_with_precision, precision_matrix};
use super::project::{project, ProjectedGaussian};
use super::BlendParams;

/// Per-pixel rendering result for one view.
#[derive(Clone, Debug)]
pub struct RenderOutput<T> {
    pub color: Image<T>,
    /// Accumulated opacity `1 - T_final`.
    pub alpha: Vec<T>,
    /// Distance along the pixel ray to the density peak of the maximum-weight
    /// contributor; 0 where nothing contributed.
    pub depth: Vec<T>,
    /// Gaussian index with the largest blending weight, or -1.
    pub max_contributor: Vec<i64>,
    pub final_transmittance: Vec<T>,
}

impl<T: Real> RenderOutput<T> {
    pub fn width(&self) -> usize {
        self.color.width
    }

    pub fn height(&self) -> usize {
        self.color.height
    }
}

/// Per-Gaussian blending-weight statistics for one view.
#[derive(Clone, Debug, PartialEq)]
pub struct ImportanceReport<T> {
    /// Sum of blending weights over all pixels.
    pub importance: Vec<T>,
    /// Largest single-pixel blending weight.
    pub max_weight: Vec<T>,
    /// Number of pixels for which the Gaussian was the maximum-weight contributor.
    pub max_contributor_pixels: Vec<u32>,
}

impl<T: Real> ImportanceReport<T> {
    pub fn zeros(n: usize) -> Self {
        Self {
            importance: vec![T::zero(); n],
            max_weight: vec![T::zero(); n],
            max_contributor_pixels: vec![0; n],
        }
    }

    /// True if the Gaussian was the maximum-weight contributor of some pixel.
    pub fn is_max_contributor(&self, i: usize) -> bool {
        self.max_contributor_pixels[i] > 0
    }

    pub fn len(&self) -> usize {
        self.importance.len()
    }

    pub fn is_empty(&self) -> bool {
        self.importance.is_empty()
    }
}

/// Gaussians overlapping each tile, in front-to-back order.
pub(crate) struct TileBins {
    pub tile_size: usize,
    pub tiles_x: usize,
    pub bins: Vec<Vec<u32>>,
}

impl TileBins {
    pub fn build<T: Real>(
        proj: &[ProjectedGaussian<T>],
        width: usize,
        height: usize,
        tile_size: usize,
    ) -> Self {
        let ts = tile_size.max(1);
        let tiles_x = width.div_ceil(ts);
        let tiles_y = height.div_ceil(ts);
        let mut bins = vec![Vec::new(); tiles_x * tiles_y];
        for (pi, g) in proj.iter().enumerate() {
            let [x0, x1, y0, y1] = g.rect;
            for ty in y0 / ts..=y1 / ts {
                for tx in x0 / ts..=x1 / ts {
                    bins[ty * tiles_x + tx].push(pi as u32);
                }
            }
        }
        Self {
            tile_size: ts,
            tiles_x,
            bins,
        }
    }

    /// Calls `f(tile_list, x, y)` for every pixel, tile by tile.
    pub fn for_each_pixel(
        &self,
        width: usize,
        height: usize,
        mut f: impl FnMut(&[u32], usize, usize),
    ) {
        let ts = self.tile_size;
        for (t, list) in self.bins.iter().enumerate() {
            let tx = t % self.tiles_x;
            let ty = t / self.tiles_x;
            for y in ty * ts..((ty + 1) * ts).min(height) {
                for x in tx * ts..((tx + 1) * ts).min(width) {
                    f(list, x, y);
                }
            }
        }
    }
}

/// Opacity-weighted footprint `alpha * G(x)` of a splat at pixel `(x, y)`,
/// or `None` when the pixel lies outside the splat's extent.
#[inline(always)]
pub(crate) fn splat_alpha<T: Real>(g: &ProjectedGaussian<T>, x: usize, y: usize) -> Option<(T, T)> {
    let [x0, x1, y0, y1] = g.rect;
    if x < x0 || x > x1 || y < y0 || y > y1 {
        return None;
    }
    let half = T::lit(0.5);
    let dx = g.mean2d[0] - (T::lit(x as f64) + half);
    let dy = g.mean2d[1] - (T::lit(y as f64) + half);
    let [a, b, c] = g.conic;
    let power = -half * (a * dx * dx + c * dy * dy) - b * dx * dy;
    if power > T::zero() {
        return None;
    }
    let gauss = power.exp();
    Some((g.opacity * gauss, gauss))
}

/// Renders one view and gathers the per-Gaussian weight statistics in a
/// single traversal.
pub fn rasterize<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    visibility: Option<&[bool]>,
    background: [T; 3],
    params: &BlendParams<T>,
) -> (RenderOutput<T>, ImportanceReport<T>) {
    if let Some(m) = visibility {
        assert_eq!(
            m.len(),
            set.len(),
            "visibility mask length must match the Gaussian count"
        );
    }
    let (w, h) = (cam.width, cam.height);
    let proj = project(set, cam, visibility, params);
    let bins = TileBins::build(&proj, w, h, params.tile_size);
    let n_px = w * h;
    let mut out = RenderOutput {
        color: Image::new(w, h),
        alpha: vec![T::zero(); n_px],
        depth: vec![T::zero(); n_px],
        max_contributor: vec![-1; n_px],
        final_transmittance: vec![T::one(); n_px],
    };
    let mut report = ImportanceReport::zeros(set.len());
    let mut precision_cache: Vec<Option<(Mat3<T>, T)>> = vec![None; proj.len()];

    bins.for_each_pixel(w, h, |list, x, y| {
        let mut trans = T::one();
        let mut rgb = [T::zero(); 3];
        let mut best: Option<(usize, T)> = None;
        for &pi in list {
            let g = &proj[pi as usize];
            let Some((alpha, _)) = splat_alpha(g, x, y) else {
                continue;
            };
            if alpha < params.min_alpha {
                continue;
            }
            let weight = alpha * trans;
            for c in 0..3 {
                rgb[c] += weight * g.color[c];
            }
            let gi = g.gaussian_index;
            report.importance[gi] += weight;
            if weight > report.max_weight[gi] {
                report.max_weight[gi] = weight;
            }
            if best.is_none_or(|(_, bw)| weight > bw) {
                best = Some((pi as usize, weight));
            }
            trans *= T::one() - alpha;
            if trans < params.min_transmittance {
                break;
            }
        }
        let p = y * w + x;
        for c in 0..3 {
            rgb[c] += trans * background[c];
        }
        out.color.set(x, y, rgb);
        out.alpha[p] = T::one() - trans;
        out.final_transmittance[p] = trans;
        if let Some((pi, _)) = best {
            let g = &proj[pi];
            let gi = g.gaussian_index;
            report.max_contributor_pixels[gi] += 1;
            out.max_contributor[p] = gi as i64;
            let (precision, cond) = *precision_cache[pi]
                .get_or_insert_with(|| precision_matrix(&set.log_scales[gi], set.rotations[gi]));
            let (origin, dir) = cam.pixel_ray(x, y);
            out.depth[p] =
                depth_mid_with_precision(&set.centers[gi], &precision, cond, &origin, &dir);
        }
    });
    (out, report)
}

/// Alpha-blended image, depth and max-contributor maps for one view.
pub fn render<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    visibility: Option<&[bool]>,
    background: [T; 3],
    params: &BlendParams<T>,
) -> RenderOutput<T> {
    rasterize(set, cam, visibility, background, params).0
}

/// Blending-weight statistics, using exactly the traversal of [`render`].
pub fn accumulate_importance<T: Real>(
    set: &GaussianSet<T>,
    cam: &Camera<T>,
    visibility: Option<&[bool]>,
    params: &BlendParams<T>,
) -> ImportanceReport<T> {
    rasterize(set, cam, visibility, [T::zero(); 3], params).1
}
