//! CPU Gaussian splatting with aggressive densification.

pub mod densify;
pub mod error;
pub mod grad;
pub mod image;
pub mod linalg;
pub mod metrics;
pub mod optim;
pub mod raster;
pub mod scalar;
pub mod scene;
pub mod simplify;
pub mod synthetic;
pub mod train;
pub mod visibility;

pub use error::{Result, SplatError};
pub use image::Image;
pub use linalg::{Mat3, Vec3};
pub use scalar::Real;
pub use scene::{Camera, Gaussian, GaussianSet};
pub use train::{train, TrainConfig, TrainMode};

/// Single-precision aliases used by the trainer and file formats.
pub type Vec3f = Vec3<f32>;
pub type Mat3f = Mat3<f32>;
pub type Imagef = Image<f32>;
pub type Cameraf = Camera<f32>;
pub type Gaussianf = Gaussian<f32>;
pub type GaussianSetf = GaussianSet<f32>;

/// Double-precision aliases used by reference computations and tests.
pub type Vec3d = Vec3<f64>;
pub type Mat3d = Mat3<f64>;
pub type Imaged = Image<f64>;
pub type Camerad = Camera<f64>;
pub type Gaussiand = Gaussian<f64>;
pub type GaussianSetd = GaussianSet<f64>;
