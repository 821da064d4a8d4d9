//! Point extraction from rendered depth and Gaussian re-seeding.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::image::Image;
use crate::linalg::Vec3;
use crate::metrics::spatial::KdTree;
use crate::raster::{render, BlendParams, RenderOutput};
use crate::scalar::{logit, Real};
use crate::scene::sh::rgb_to_dc;
use crate::scene::{Camera, Gaussian, GaussianSet};

/// Colored world-space points.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud<T> {
    pub positions: Vec<Vec3<T>>,
    pub colors: Vec<[T; 3]>,
}

impl<T: Real> PointCloud<T> {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn extend(&mut self, other: PointCloud<T>) {
        self.positions.extend(other.positions);
        self.colors.extend(other.colors);
    }

    pub fn gather(&self, indices: &[usize]) -> Self {
        Self {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            colors: indices.iter().map(|&i| self.colors[i]).collect(),
        }
    }
}

/// Parameters for seeding Gaussians from points.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedParams {
    pub opacity: f64,
    /// Neighbors used for the initial isotropic scale.
    pub neighbors: usize,
    /// Lower bound on the initial scale, in world units.
    pub min_scale: f64,
    /// Scale used when a point has no neighbors at all.
    pub fallback_scale: f64,
}

impl Default for SeedParams {
    fn default() -> Self {
        Self {
            opacity: 0.1,
            neighbors: 3,
            min_scale: 1e-7,
            fallback_scale: 0.01,
        }
    }
}

/// Lifts every pixel with a max-weight contributor to the world point at its
/// rendered depth. Colors come from `target` when given, else from the render.
pub fn reproject_depth<T: Real>(
    out: &RenderOutput<T>,
    cam: &Camera<T>,
    target: Option<&Image<T>>,
) -> Result<PointCloud<T>> {
    if out.width() != cam.width || out.height() != cam.height {
        return Err(SplatError::ShapeMismatch {
            what: "render width",
            expected: cam.width,
            got: out.width(),
        });
    }
    if let Some(img) = target {
        if img.width != cam.width || img.height != cam.height {
            return Err(SplatError::ShapeMismatch {
                what: "target image width",
                expected: cam.width,
                got: img.width,
            });
        }
    }
    let source = target.unwrap_or(&out.color);
    let mut cloud = PointCloud::default();
    for y in 0..cam.height {
        for x in 0..cam.width {
            let p = y * cam.width + x;
            if out.max_contributor[p] < 0 {
                continue;
            }
            let (origin, dir) = cam.pixel_ray(x, y);
            cloud.positions.push(origin + dir * out.depth[p]);
            cloud.colors.push(source.get(x, y));
        }
    }
    Ok(cloud)
}

/// Renders every view and pools the reprojected depth points.
pub fn extract_points<T: Real>(
    set: &GaussianSet<T>,
    cameras: &[Camera<T>],
    targets: Option<&[Image<T>]>,
    params: &BlendParams<T>,
) -> Result<PointCloud<T>> {
    if let Some(t) = targets {
        if t.len() != cameras.len() {
            return Err(SplatError::ShapeMismatch {
                what: "target images",
                expected: cameras.len(),
                got: t.len(),
            });
        }
    }
    let mut pool = PointCloud::default();
    for (k, cam) in cameras.iter().enumerate() {
        let out = render(set, cam, None, [T::zero(); 3], params);
        pool.extend(reproject_depth(&out, cam, targets.map(|t| &t[k]))?);
    }
    Ok(pool)
}

/// Isotropic Gaussians at the given points: DC color from the point color,
/// identity rotation, fixed opacity, and scale equal to the root mean
/// squared distance to the nearest neighbors.
pub fn gaussians_from_points<T: Real>(
    cloud: &PointCloud<T>,
    sh_degree: usize,
    params: &SeedParams,
) -> Result<GaussianSet<T>> {
    if cloud.is_empty() {
        return Err(SplatError::EmptyPointSet);
    }
    if cloud.colors.len() != cloud.positions.len() {
        return Err(SplatError::ShapeMismatch {
            what: "point colors",
            expected: cloud.positions.len(),
            got: cloud.colors.len(),
        });
    }
    let tree = KdTree::build(&cloud.positions);
    let mut set = GaussianSet::with_capacity(sh_degree, cloud.len());
    let opacity = logit(T::lit(params.opacity));
    for (i, p) in cloud.positions.iter().enumerate() {
        let nn = tree.k_nearest_filtered(p, params.neighbors, |j| j == i);
        let scale = if nn.is_empty() {
            T::lit(params.fallback_scale)
        } else {
            let mean_sq = nn.iter().map(|&(_, d2)| d2).sum::<T>() / T::lit(nn.len() as f64);
            mean_sq.sqrt().max(T::lit(params.min_scale))
        };
        set.push(Gaussian {
            center: *p,
            log_scale: Vec3([scale.ln(); 3]),
            rotation: [T::one(), T::zero(), T::zero(), T::zero()],
            opacity_logit: opacity,
            sh: vec![rgb_to_dc(cloud.colors[i])],
        });
    }
    Ok(set)
}

/// Replaces the model by Gaussians seeded at `sample_count` depth points
/// drawn uniformly without replacement from all views. Colors come from the
/// target images. When fewer valid points exist, all of them are used.
pub fn depth_reinitialize<T: Real, R: Rng + ?Sized>(
    set: &GaussianSet<T>,
    cameras: &[Camera<T>],
    targets: &[Image<T>],
    sample_count: usize,
    blend: &BlendParams<T>,
    seed_params: &SeedParams,
    rng: &mut R,
) -> Result<GaussianSet<T>> {
    if sample_count == 0 {
        return Err(SplatError::InvalidArgument(
            "sample count must be at least 1".into(),
        ));
    }
    if cameras.is_empty() {
        return Err(SplatError::InvalidArgument(
            "depth reinitialization needs a camera".into(),
        ));
    }
    let pool = extract_points(set, cameras, Some(targets), blend)?;
    if pool.is_empty() {
        return Err(SplatError::NoDepthPoints);
    }
    let count = sample_count.min(pool.len());
    if count < sample_count {
        log::warn!(
            "only {} depth points for {} requested samples",
            pool.len(),
            sample_count
        );
    }
    let mut picked = index::sample(rng, pool.len(), count).into_vec();
    picked.sort_unstable();
    let mut out = gaussians_from_points(&pool.gather(&picked), set.sh_degree(), seed_params)?;
    out.set_active_sh_degree(set.active_sh_degree());
    Ok(out)
}
