//! Scene directories: a `scene.json` manifest next to the target images and
//! point clouds it names.
//!
//! ```json
//! {
//!   "cameras": [
//!     { "id": 0, "image": "images/view_000.ppm", "width": 128, "height": 128,
//!       "fx": 153.6, "fy": 153.6, "cx": 64.0, "cy": 64.0,
//!       "rotation": [1.0, 0.0, 0.0, 0.0], "translation": [0.0, 0.0, 3.0],
//!       "znear": 0.01, "zfar": 100.0 }
//!   ],
//!   "points": "points.ply",
//!   "reference_points": "reference.ply"
//! }
//! ```
//!
//! `rotation` is the world-to-camera quaternion `(w, x, y, z)` and must have
//! unit norm; `translation` completes the world-to-camera pose.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use splatkit::densify::PointCloud;
use splatkit::linalg::{quat_to_rotation, rotation_to_quat};
use splatkit::train::TrainScene;
use splatkit::{Camera, Real, Vec3};

use crate::error::{IoError, Result};
use crate::images::{read_image, write_ppm16};
use crate::ply::{read_points_ply, write_points_ply};

pub const MANIFEST_NAME: &str = "scene.json";
/// Largest accepted deviation of a manifest quaternion from unit norm.
pub const QUAT_NORM_TOLERANCE: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraEntry {
    pub id: u32,
    pub image: String,
    pub width: usize,
    pub height: usize,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [f64; 4],
    pub translation: [f64; 3],
    #[serde(default = "default_znear")]
    pub znear: f64,
    #[serde(default = "default_zfar")]
    pub zfar: f64,
}

fn default_znear() -> f64 {
    0.01
}

fn default_zfar() -> f64 {
    100.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub cameras: Vec<CameraEntry>,
    pub points: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_points: Option<String>,
}

/// A loaded scene plus the manifest it came from.
#[derive(Clone, Debug)]
pub struct SceneBundle<T> {
    pub manifest: Manifest,
    pub scene: TrainScene<T>,
}

impl<T: Real> SceneBundle<T> {
    pub fn into_train_scene(self) -> TrainScene<T> {
        self.scene
    }
}

impl CameraEntry {
    pub fn from_camera<T: Real>(id: u32, image: String, cam: &Camera<T>) -> Self {
        let f = |v: T| v.to_f64_lossy();
        Self {
            id,
            image,
            width: cam.width,
            height: cam.height,
            fx: f(cam.fx),
            fy: f(cam.fy),
            cx: f(cam.cx),
            cy: f(cam.cy),
            rotation: rotation_to_quat(&cam.rotation.cast::<f64>()),
            translation: cam.translation.cast::<f64>().0,
            znear: f(cam.znear),
            zfar: f(cam.zfar),
        }
    }

    pub fn to_camera<T: Real>(&self) -> Result<Camera<T>> {
        let cam_err = |message: String| IoError::Camera {
            id: self.id,
            message,
        };
        let norm = self.rotation.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !((norm - 1.0).abs() <= QUAT_NORM_TOLERANCE) {
            return Err(cam_err(format!(
                "rotation quaternion has norm {norm}, expected 1"
            )));
        }
        let q = self.rotation.map(|v| T::lit(v / norm));
        let [tx, ty, tz] = self.translation.map(T::lit);
        Camera::new(
            self.width,
            self.height,
            T::lit(self.fx),
            T::lit(self.fy),
            T::lit(self.cx),
            T::lit(self.cy),
            quat_to_rotation(q),
            Vec3::new(tx, ty, tz),
            T::lit(self.znear),
            T::lit(self.zfar),
        )
        .map_err(|e| cam_err(e.to_string()))
    }
}

/// Loads a scene directory. Every camera's image must exist and match the
/// camera resolution.
pub fn load_scene<T: Real>(dir: &Path) -> Result<SceneBundle<T>> {
    let manifest_path = dir.join(MANIFEST_NAME);
    let text = crate::read_file(&manifest_path)?;
    let manifest: Manifest = serde_json::from_slice(&text).map_err(|e| IoError::Manifest {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let mut cameras = Vec::with_capacity(manifest.cameras.len());
    let mut images = Vec::with_capacity(manifest.cameras.len());
    for entry in &manifest.cameras {
        let cam: Camera<T> = entry.to_camera()?;
        let path = dir.join(&entry.image);
        if !path.is_file() {
            return Err(IoError::Camera {
                id: entry.id,
                message: format!("image {} not found", path.display()),
            });
        }
        let img = read_image::<T>(&path)?;
        if (img.width, img.height) != (cam.width, cam.height) {
            return Err(IoError::Camera {
                id: entry.id,
                message: format!(
                    "image {} is {}x{}, camera expects {}x{}",
                    path.display(),
                    img.width,
                    img.height,
                    cam.width,
                    cam.height
                ),
            });
        }
        cameras.push(cam);
        images.push(img);
    }
    let init_points = read_points_ply(&crate::read_file(&dir.join(&manifest.points))?)?;
    let reference_points = match &manifest.reference_points {
        Some(name) => Some(read_points_ply::<T>(&crate::read_file(&dir.join(name))?)?.positions),
        None => None,
    };
    let scene = TrainScene {
        cameras,
        images,
        init_points,
        reference_points,
    };
    scene.validate()?;
    Ok(SceneBundle { manifest, scene })
}

/// Writes `scene` as a scene directory with 16-bit PPM targets and returns
/// the manifest.
pub fn save_scene<T: Real>(dir: &Path, scene: &TrainScene<T>) -> Result<Manifest> {
    let mut cameras = Vec::with_capacity(scene.cameras.len());
    for (i, (cam, img)) in scene.cameras.iter().zip(&scene.images).enumerate() {
        let name = format!("images/view_{i:03}.ppm");
        write_ppm16(&dir.join(&name), img)?;
        cameras.push(CameraEntry::from_camera(i as u32, name, cam));
    }
    crate::write_file(
        &dir.join("points.ply"),
        &write_points_ply(&scene.init_points),
    )?;
    let reference_points = match &scene.reference_points {
        Some(points) => {
            let cloud = PointCloud {
                positions: points.clone(),
                colors: vec![[T::one(); 3]; points.len()],
            };
            crate::write_file(&dir.join("reference.ply"), &write_points_ply(&cloud))?;
            Some("reference.ply".to_string())
        }
        None => None,
    };
    let manifest = Manifest {
        cameras,
        points: "points.ply".into(),
        reference_points,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| IoError::Manifest {
        path: PathBuf::from(MANIFEST_NAME),
        message: e.to_string(),
    })?;
    crate::write_file(&dir.join(MANIFEST_NAME), json.as_bytes())?;
    Ok(manifest)
}
