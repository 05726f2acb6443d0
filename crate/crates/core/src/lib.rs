//! Confidence-scored Gaussian splatting.
//!
//! Every splat carries a Beta-distributed confidence whose mean modulates its
//! opacity during rendering. Confidences are learned jointly with a 2D splat
//! image (`train::fit_2d`) or on top of a frozen 3D scene
//! (`train::fit_confidence`), and afterwards act as a pruning knob: splats
//! whose confidence falls below a threshold are dropped.
//!
//! Module map:
//! - [`scene`]: splats, confidence fields, cameras and shared config types
//! - [`betaconf`]: Beta-distribution numerics and special functions
//! - [`raster`]: differentiable CPU rasterizer with confidence modulation
//! - [`losses`]: reconstruction, sparsity, entropy and ranking objectives
//! - [`train`]: Adam and the two optimization loops
//! - [`compress`]: threshold pruning, sweeps and quality/size metrics
//! - [`io`]: PLY, camera JSON, PNG, TOML config and reports

pub mod betaconf;
pub mod compress;
pub mod error;
pub mod image;
pub mod io;
pub mod losses;
pub mod raster;
pub mod scene;
pub mod train;

pub use error::{Error, Result};
pub use image::Image;
pub use scene::{
    Camera, ConfidenceField, LossWeights, Mode, SaliencyConfig, Splat, SplatSet, SweepRow, View,
};
