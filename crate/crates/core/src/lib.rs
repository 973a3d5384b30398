//! Pseudo-LiDAR toolkit: back-projects dense depth maps into point clouds,
//! paints foreground points with image color, sparsifies the result for
//! LiDAR detectors, and scores 3D detections with KITTI-style AP at 40
//! recall positions.
//!
//! The neural stages (depth estimation, box proposals, segmentation) are
//! outside this crate. Their outputs arrive as files: depth maps, instance
//! masks and 2D boxes.

pub mod calib;
pub mod config;
pub mod error;
pub mod metrics;
pub mod painting;
pub mod pcio;
pub mod pipeline;
pub mod projection;
pub mod sparsify;

pub use calib::{CameraExtrinsics, CameraIntrinsics, KittiCalibration};
pub use error::{Error, Result};
pub use painting::{Box2D, InstanceMaskSet, PaintedPoint, PaintedPointCloud, RgbImage};
pub use pcio::{Box3D, CloudLayout};
pub use projection::{DepthMap, PixelProvenance, PointCloud};
pub use sparsify::{SparseCloudReport, SparsifyConfig};
