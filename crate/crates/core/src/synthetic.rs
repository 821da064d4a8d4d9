//! Procedural benchmark scenes rendered by this crate's own rasterizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::densify::PointCloud;
use crate::error::{Result, SplatError};
use crate::image::Image;
use crate::linalg::Vec3;
use crate::raster::{render, BlendParams};
use crate::scalar::{logit, Real};
use crate::scene::sh::{dc_to_rgb, rgb_to_dc};
use crate::scene::{Camera, Gaussian, GaussianSet};
use crate::train::TrainScene;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticParams {
    pub seed: u64,
    pub n_gaussians: usize,
    pub n_views: usize,
    /// Square image side in pixels.
    pub resolution: usize,
    pub camera_radius: f64,
    /// Focal length as a multiple of the image width.
    pub focal_factor: f64,
    /// Fraction of ground-truth centers used as initial points.
    pub init_fraction: f64,
    pub init_noise: f64,
    /// Range of per-axis ground-truth scales.
    pub scale_range: (f64, f64),
    /// Multiplier on the third scale axis; values below 1 give flat,
    /// surface-like Gaussians.
    pub flatness: f64,
    pub opacity_range: (f64, f64),
}

impl Default for SyntheticParams {
    fn default() -> Self {
        Self {
            seed: 7,
            n_gaussians: 32,
            n_views: 24,
            resolution: 128,
            camera_radius: 3.0,
            focal_factor: 1.2,
            init_fraction: 0.25,
            init_noise: 0.05,
            scale_range: (0.015, 0.05),
            flatness: 1.0,
            opacity_range: (0.5, 0.95),
        }
    }
}

/// Benchmark scene plus the Gaussians that produced its images.
#[derive(Clone, Debug)]
pub struct SyntheticScene<T> {
    pub scene: TrainScene<T>,
    pub ground_truth: GaussianSet<T>,
}

impl SyntheticScene<f64> {
    pub fn cast<U: Real>(&self) -> SyntheticScene<U> {
        let s = &self.scene;
        SyntheticScene {
            scene: TrainScene {
                cameras: s.cameras.iter().map(Camera::cast).collect(),
                images: s.images.iter().map(Image::cast).collect(),
                init_points: PointCloud {
                    positions: s.init_points.positions.iter().map(Vec3::cast).collect(),
                    colors: s.init_points.colors.iter().map(|c| c.map(U::lit)).collect(),
                },
                reference_points: s
                    .reference_points
                    .as_ref()
                    .map(|r| r.iter().map(Vec3::cast).collect()),
            },
            ground_truth: self.ground_truth.cast(),
        }
    }
}

/// `n` nearly uniform directions on the unit sphere (Fibonacci lattice
/// around the y axis).
fn sphere_directions(n: usize) -> Vec<Vec3<f64>> {
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    (0..n)
        .map(|i| {
            let y = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let phi = golden * i as f64;
            Vec3::new(r * phi.cos(), y, r * phi.sin())
        })
        .collect()
}

fn random_unit_quaternion(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(rng));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-6 {
            return q.map(|v| v / n);
        }
    }
}

/// Random Gaussians in the unit box `[-0.5, 0.5]^3`, viewed by cameras on a
/// sphere around the origin. Targets use a black background.
pub fn generate_synthetic(params: &SyntheticParams) -> Result<SyntheticScene<f64>> {
    if params.n_gaussians == 0 {
        return Err(SplatError::InvalidArgument(
            "synthetic scene needs at least one Gaussian".into(),
        ));
    }
    if params.n_views < 2 {
        return Err(SplatError::InvalidArgument(
            "synthetic scene needs at least two views".into(),
        ));
    }
    if !(params.flatness > 0.0) {
        return Err(SplatError::InvalidArgument(
            "flatness must be positive".into(),
        ));
    }
    if params.resolution == 0 {
        return Err(SplatError::InvalidArgument(
            "resolution must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let (smin, smax) = params.scale_range;
    let (amin, amax) = params.opacity_range;
    let mut gt = GaussianSet::new(0);
    for _ in 0..params.n_gaussians {
        let center = Vec3::new(
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
            rng.random_range(-0.5..0.5),
        );
        let mut log_scale = Vec3(std::array::from_fn(|_| {
            rng.random_range(smin.ln()..=smax.ln())
        }));
        log_scale.0[2] += params.flatness.ln();
        let rotation = random_unit_quaternion(&mut rng);
        let opacity_logit = logit(rng.random_range(amin..=amax));
        let rgb: [f64; 3] = std::array::from_fn(|_| rng.random_range(0.1..0.9));
        gt.push(Gaussian {
            center,
            log_scale,
            rotation,
            opacity_logit,
            sh: vec![rgb_to_dc(rgb)],
        });
    }

    let res = params.resolution;
    let focal = params.focal_factor * res as f64;
    let mut cameras = Vec::with_capacity(params.n_views);
    for d in sphere_directions(params.n_views) {
        let up = if d.y().abs() > 0.99 {
            Vec3::new(0.0, 0.0, 1.0)
        } else {
            Vec3::new(0.0, 1.0, 0.0)
        };
        cameras.push(Camera::look_at(
            d * params.camera_radius,
            Vec3::zero(),
            up,
            res,
            res,
            focal,
            0.01,
            100.0,
        )?);
    }
    let blend = BlendParams::default();
    let images: Vec<Image<f64>> = cameras
        .iter()
        .map(|c| render(&gt, c, None, [0.0; 3], &blend).color)
        .collect();

    let n_init = ((params.n_gaussians as f64 * params.init_fraction).round() as usize)
        .clamp(1, params.n_gaussians);
    let mut picked = rand::seq::index::sample(&mut rng, params.n_gaussians, n_init).into_vec();
    picked.sort_unstable();
    let noise = Normal::new(0.0, params.init_noise)
        .map_err(|e| SplatError::InvalidArgument(format!("init noise: {e}")))?;
    let mut init = PointCloud::default();
    for i in picked {
        let jitter = Vec3(std::array::from_fn(|_| noise.sample(&mut rng)));
        init.positions.push(gt.centers[i] + jitter);
        init.colors.push(dc_to_rgb(gt.sh_of(i)[0]));
    }

    Ok(SyntheticScene {
        scene: TrainScene {
            cameras,
            images,
            init_points: init,
            reference_points: Some(gt.centers.clone()),
        },
        ground_truth: gt,
    })
}

/// FNV-1a digest of a scene: camera parameters and initial points as `f32`
/// bits, images quantized to 16 bits per channel.
pub fn scene_checksum<T: Real>(scene: &TrainScene<T>) -> u64 {
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= u64::from(b);
            h = h.wrapping_mul(PRIME);
        }
    };
    let f = |v: T| (v.to_f64_lossy() as f32).to_le_bytes();
    for c in &scene.cameras {
        eat(&(c.width as u32).to_le_bytes());
        eat(&(c.height as u32).to_le_bytes());
        for v in [c.fx, c.fy, c.cx, c.cy] {
            eat(&f(v));
        }
        for row in c.rotation.0 {
            row.iter().for_each(|&v| eat(&f(v)));
        }
        c.translation.0.iter().for_each(|&v| eat(&f(v)));
    }
    for img in &scene.images {
        for &v in &img.data {
            let q = (v.to_f64_lossy().clamp(0.0, 1.0) * 65535.0).round() as u16;
            eat(&q.to_le_bytes());
        }
    }
    for (p, c) in scene
        .init_points
        .positions
        .iter()
        .zip(&scene.init_points.colors)
    {
        p.0.iter().for_each(|&v| eat(&f(v)));
        c.iter().for_each(|&v| eat(&f(v)));
    }
    h
}
