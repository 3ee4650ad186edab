//! Network-free differentiable point-based radiance fields.
//!
//! A scene is a point cloud with per-point spherical-harmonic radiance
//! coefficients, rendered by a differentiable splat rasterizer in a single
//! forward pass. Positions and coefficients are learned from posed,
//! masked multi-view images with Adam; the cloud is initialized by
//! visual-hull rejection sampling and restructured by a coarse-to-fine
//! voxel-reduce / outlier-removal / point-generation cycle. Video sequences
//! warm-start each frame from the previous solution via Chamfer alignment
//! and appearance transfer.

pub mod camera;
pub mod checkpoint;
pub mod dataset;
pub mod error;
pub mod gradcheck;
pub mod hull;
pub mod image_io;
pub mod knn;
pub mod loss;
pub mod metrics;
pub mod optim;
pub mod pipeline;
pub mod refine;
pub mod render;
pub mod rngutil;
pub mod scene;
pub mod sh;
pub mod synthetic;
pub mod train;
pub mod video;

pub use camera::Camera;
pub use error::{Error, Result};
pub use render::{RasterConfig, RenderBuffers};
pub use scene::{RadiancePointCloud, ViewSample};
