//! Codecs for every file the pipeline touches: headerless `.bin` clouds,
//! KITTI label files, binary PLY export, and depth/mask/RGB rasters.
//!
//! Writers are deterministic and each reader inverts its writer exactly.

mod bin;
mod labels;
mod ply;
mod raster;

pub use bin::{read_cloud_bin, write_cloud_bin, Cloud, CloudLayout, IntensityCloud};
pub use labels::{parse_kitti_labels, serialize_kitti_labels, Box3D, LidarBox};
pub use ply::{export_ply, read_ply, PlyPoints};
pub use raster::{
    decode_depth_png, encode_depth_png, read_depth, read_mask, read_rgb, write_depth_png,
    write_depth_raw, write_mask_png, write_rgb_png, DEPTH_PNG_SCALE,
};
