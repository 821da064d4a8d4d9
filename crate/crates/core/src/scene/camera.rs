use serde::{Deserialize, Serialize};

use crate::error::{Result, SplatError};
use crate::linalg::{Mat3, Vec3};
use crate::scalar::Real;

/// Pinhole camera with a world-to-camera pose.
///
/// Camera space looks down `+z` with `+x` right and `+y` down. Pixel `(x, y)`
/// covers `[x, x+1) x [y, y+1)` in image coordinates, so its center sits at
/// `(x + 0.5, y + 0.5)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Camera<T> {
    pub width: usize,
    pub height: usize,
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    /// World-to-camera rotation.
    pub rotation: Mat3<T>,
    /// World-to-camera translation.
    pub translation: Vec3<T>,
    pub znear: T,
    pub zfar: T,
}

impl<T: Real> Camera<T> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        width: usize,
        height: usize,
        fx: T,
        fy: T,
        cx: T,
        cy: T,
        rotation: Mat3<T>,
        translation: Vec3<T>,
        znear: T,
        zfar: T,
    ) -> Result<Self> {
        let cam = Self {
            width,
            height,
            fx,
            fy,
            cx,
            cy,
            rotation,
            translation,
            znear,
            zfar,
        };
        cam.validate()?;
        Ok(cam)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(SplatError::InvalidCamera(format!(
                "resolution {}x{} must be at least 1x1",
                self.width, self.height
            )));
        }
        if !(self.znear > T::zero() && self.znear < self.zfar) {
            return Err(SplatError::InvalidCamera(format!(
                "clip planes must satisfy 0 < znear < zfar, got {} and {}",
                self.znear, self.zfar
            )));
        }
        if !(self.fx > T::zero() && self.fy > T::zero()) {
            return Err(SplatError::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        let err = self.rotation.orthonormality_error();
        if err > T::lit(1e-6) {
            return Err(SplatError::InvalidCamera(format!(
                "rotation is not orthonormal (deviation {err})"
            )));
        }
        Ok(())
    }

    /// Camera at `eye` looking at `target`; `up` is the world up hint.
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3<T>,
        target: Vec3<T>,
        up: Vec3<T>,
        width: usize,
        height: usize,
        focal: T,
        znear: T,
        zfar: T,
    ) -> Result<Self> {
        let forward = (target - eye).normalized();
        let mut right = forward.cross(&up);
        if right.norm() < T::lit(1e-9) {
            right = forward.cross(&Vec3::new(T::one(), T::zero(), T::zero()));
        }
        let right = right.normalized();
        // Image y runs downwards.
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows([right.0, down.0, forward.0]);
        let translation = -rotation.mul_vec(&eye);
        let half = T::lit(0.5);
        Self::new(
            width,
            height,
            focal,
            focal,
            T::lit(width as f64) * half,
            T::lit(height as f64) * half,
            rotation,
            translation,
            znear,
            zfar,
        )
    }

    #[inline]
    pub fn world_to_camera(&self, p: &Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3<T> {
        -self.rotation.transpose().mul_vec(&self.translation)
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    /// World-space ray through the center of pixel `(x, y)`: origin and unit
    /// direction.
    pub fn pixel_ray(&self, x: usize, y: usize) -> (Vec3<T>, Vec3<T>) {
        let half = T::lit(0.5);
        let u = T::lit(x as f64) + half;
        let v = T::lit(y as f64) + half;
        let dir_cam = Vec3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, T::one());
        let dir = self.rotation.transpose().mul_vec(&dir_cam).normalized();
        (self.center(), dir)
    }

    /// Same pose with intrinsics scaled by `factor` (e.g. 0.5 for half
    /// resolution). Resolution is rounded down and kept at least 1.
    pub fn scaled(&self, factor: T) -> Self {
        let w = (T::lit(self.width as f64) * factor)
            .floor()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        let h = (T::lit(self.height as f64) * factor)
            .floor()
            .to_usize()
            .unwrap_or(1)
            .max(1);
        Self {
            width: w,
            height: h,
            fx: self.fx * factor,
            fy: self.fy * factor,
            cx: self.cx * factor,
            cy: self.cy * factor,
            ..self.clone()
        }
    }

    pub fn cast<U: Real>(&self) -> Camera<U> {
        let c = |v: T| U::lit(v.to_f64_lossy());
        Camera {
            width: self.width,
            height: self.height,
            fx: c(self.fx),
            fy: c(self.fy),
            cx: c(self.cx),
            cy: c(self.cy),
            rotation: self.rotation.cast(),
            translation: self.translation.cast(),
            znear: c(self.znear),
            zfar: c(self.zfar),
        }
    }
}
