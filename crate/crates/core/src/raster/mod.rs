//! Software rasterizer: EWA projection, tile-binned front-to-back alpha
//! blending, max-weight depth and per-Gaussian blending-weight statistics.

mod blend;
mod depth;
mod project;

pub use blend::{accumulate_importance, rasterize, render, ImportanceReport, RenderOutput};
pub use depth::{depth_mid_of, depth_mid_with_precision, precision_matrix};
pub use project::{project, project_one, ProjectedGaussian};

pub(crate) use blend::{splat_alpha, TileBins};
pub(crate) use project::projection_terms;

use crate::scalar::Real;

/// Rasterization constants.
///
/// The defaults follow the 3D Gaussian splatting reference. [`BlendParams::exact`]
/// disables every early-out so results can be compared with a per-pixel
/// evaluation of the blending sum.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlendParams<T> {
    /// Contributions with `alpha * G < min_alpha` are skipped.
    pub min_alpha: T,
    /// Blending stops once transmittance falls below this value.
    pub min_transmittance: T,
    /// Pixel footprint of a splat, in standard deviations of its major axis.
    pub extent_sigmas: T,
    /// Isotropic variance added to every 2D covariance (pixels^2).
    pub low_pass: T,
    /// Edge length of the square binning tiles in pixels.
    pub tile_size: usize,
}

impl<T: Real> Default for BlendParams<T> {
    fn default() -> Self {
        Self {
            min_alpha: T::lit(1.0 / 255.0),
            min_transmittance: T::lit(1e-4),
            extent_sigmas: T::lit(3.0),
            low_pass: T::lit(0.3),
            tile_size: 16,
        }
    }
}

impl<T: Real> BlendParams<T> {
    pub fn exact() -> Self {
        Self {
            min_alpha: T::zero(),
            min_transmittance: T::zero(),
            extent_sigmas: T::lit(12.0),
            ..Self::default()
        }
    }

    pub fn with_tile_size(mut self, tile_size: usize) -> Self {
        self.tile_size = tile_size.max(1);
        self
    }
}
