//! Range-view LiDAR scene editing.
//!
//! Point clouds are projected onto a spherical range image, an object
//! region is turned into a convex edit mask, and a small latent diffusion
//! model regenerates the masked pixels while every other pixel is kept.
//!
//! ```
//! use rangeforge::{project, invert, Point, PointCloud, ProjectionConfig};
//!
//! let cfg = ProjectionConfig::default();
//! let cloud = PointCloud::new(vec![Point::new(10.0, 0.0, -0.5, 0.3)]);
//! let img = project(&cloud, &cfg).image;
//! assert_eq!(img.return_count(), 1);
//! assert_eq!(invert(&img, &cfg).unwrap().len(), 1);
//! ```

pub mod dataset;
pub mod diffusion;
pub mod edit;
pub mod error;
pub mod image;
pub mod kv;
pub mod mask;
pub mod metrics;
pub mod projection;
pub mod tensor_file;
pub mod types;
pub mod window;

pub use error::{Error, Result};
pub use image::{Pixel, RangeImage, SemanticMask};
pub use projection::{invert, project, Projection, ProjectionConfig};
pub use types::{OrientedBox, Point, PointCloud};
