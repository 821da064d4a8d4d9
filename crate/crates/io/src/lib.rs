//! Reading and writing splatkit data: Gaussian models and point clouds as
//! binary PLY, scene directories with a JSON manifest, and images.
//!
//! The core crate never touches the file system; everything here is the
//! boundary between it and disk.

mod error;
pub mod images;
pub mod ply;
pub mod scene_dir;

pub use error::{IoError, Result};
pub use images::{read_image, write_image, write_ppm16};
pub use ply::{read_ply, read_points_ply, write_ply, write_points_ply};
pub use scene_dir::{load_scene, save_scene, CameraEntry, Manifest, SceneBundle};

use std::path::Path;

/// Writes `bytes` to `path`, creating parent directories as needed.
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(error::file_err(dir))?;
    }
    std::fs::write(path, bytes).map_err(error::file_err(path))
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(error::file_err(path))
}
