//! Back-projection of dense depth maps into pseudo-LiDAR point clouds.
//!
//! Integer pixel coordinates address pixel centers (no half-pixel offset).
//! All arithmetic is `f64`; clouds store `f32` to match the `.bin` format.

use nalgebra::Vector3;

use crate::calib::{CameraExtrinsics, CameraIntrinsics};
use crate::error::{Error, Result};

/// Row-major metric depth. Values that are non-positive or non-finite mark
/// pixels without a depth return.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    values: Vec<f32>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, values: Vec<f32>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "depth map must be non-empty, got {width}x{height}"
            )));
        }
        if values.len() != width * height {
            return Err(Error::Shape(format!(
                "depth map {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        Ok(Self {
            width,
            height,
            values,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, u: usize, v: usize) -> f32 {
        self.values[v * self.width + u]
    }

    pub fn is_valid_at(&self, u: usize, v: usize) -> bool {
        is_valid_depth(self.get(u, v))
    }

    pub fn valid_count(&self) -> usize {
        self.values.iter().filter(|&&d| is_valid_depth(d)).count()
    }
}

#[inline]
pub fn is_valid_depth(d: f32) -> bool {
    d.is_finite() && d > 0.0
}

/// An unpainted cloud of `(x, y, z)` points in meters.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub points: Vec<[f32; 3]>,
}

impl PointCloud {
    pub fn new(points: Vec<[f32; 3]>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Builds a cloud from a flat `N x 3` buffer.
    pub fn from_flat(data: &[f32]) -> Result<Self> {
        if !data.len().is_multiple_of(3) {
            return Err(Error::Shape(format!(
                "flat xyz buffer length {} is not a multiple of 3",
                data.len()
            )));
        }
        Ok(Self {
            points: data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f32> {
        self.points.iter().flatten().copied().collect()
    }
}

/// Source pixel `(u, v)` of each point, index-aligned with its cloud.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PixelProvenance {
    pub pixels: Vec<(u32, u32)>,
}

impl PixelProvenance {
    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Pinhole back-projection of pixel `(u, v)` at depth `d` into the camera
/// frame.
pub fn pixel_to_camera(u: f64, v: f64, d: f64, k: &CameraIntrinsics) -> Result<Vector3<f64>> {
    if !(d.is_finite() && d > 0.0) {
        return Err(Error::InvalidDepth(d));
    }
    Ok(Vector3::new(
        (u - k.cx) * d / k.fx,
        (v - k.cy) * d / k.fy,
        d,
    ))
}

/// Maps a camera-frame point into the world frame with the inverse of `e`.
pub fn camera_to_world(p_cam: &Vector3<f64>, e: &CameraExtrinsics) -> Vector3<f64> {
    e.inverse().transform_point(p_cam)
}

pub fn world_to_camera(p_world: &Vector3<f64>, e: &CameraExtrinsics) -> Vector3<f64> {
    e.transform_point(p_world)
}

/// Projects a world point back to sub-pixel coordinates and depth.
pub fn reproject(
    p_world: &Vector3<f64>,
    k: &CameraIntrinsics,
    e: &CameraExtrinsics,
) -> Result<(f64, f64, f64)> {
    let p = world_to_camera(p_world, e);
    if p.z.is_nan() || p.z <= 0.0 {
        return Err(Error::BehindCamera(p.z));
    }
    Ok((k.fx * p.x / p.z + k.cx, k.fy * p.y / p.z + k.cy, p.z))
}

/// World-frame points of every valid pixel in row-major order, at full
/// `f64` precision.
pub fn project_valid_pixels<'a>(
    depth: &'a DepthMap,
    k: &'a CameraIntrinsics,
    e: &CameraExtrinsics,
) -> impl Iterator<Item = ((u32, u32), Vector3<f64>)> + 'a {
    let cam_to_world = e.inverse();
    let width = depth.width;
    depth
        .values
        .iter()
        .enumerate()
        .filter(|(_, &d)| is_valid_depth(d))
        .map(move |(i, &d)| {
            let (u, v) = (i % width, i / width);
            let p_cam = pixel_to_camera(u as f64, v as f64, d as f64, k)
                .expect("depth validity checked above");
            ((u as u32, v as u32), cam_to_world.transform_point(&p_cam))
        })
}

/// One point per valid-depth pixel, scanned row-major (`v` outer, `u`
/// inner), with the source pixel of each point.
pub fn depth_to_pseudolidar(
    depth: &DepthMap,
    k: &CameraIntrinsics,
    e: &CameraExtrinsics,
) -> (PointCloud, PixelProvenance) {
    let n = depth.valid_count();
    let mut points = Vec::with_capacity(n);
    let mut pixels = Vec::with_capacity(n);
    for (px, p) in project_valid_pixels(depth, k, e) {
        points.push([p.x as f32, p.y as f32, p.z as f32]);
        pixels.push(px);
    }
    (PointCloud { points }, PixelProvenance { pixels })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    fn k(fx: f64, fy: f64, cx: f64, cy: f64) -> CameraIntrinsics {
        CameraIntrinsics::new(fx, fy, cx, cy).unwrap()
    }

    #[test]
    fn principal_ray() {
        let kk = k(700.0, 700.0, 600.0, 180.0);
        assert_eq!(
            pixel_to_camera(600.0, 180.0, 10.0, &kk).unwrap(),
            Vector3::new(0.0, 0.0, 10.0)
        );
    }

    #[test]
    fn hand_evaluated_pixel() {
        let kk = k(700.0, 700.0, 600.0, 180.0);
        let p = pixel_to_camera(950.0, 180.0, 7.0, &kk).unwrap();
        assert_eq!(p, Vector3::new(3.5, 0.0, 7.0));
    }

    #[test]
    fn invalid_depths() {
        let kk = k(1.0, 1.0, 0.0, 0.0);
        for d in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(
                pixel_to_camera(0.0, 0.0, d, &kk),
                Err(Error::InvalidDepth(_))
            ));
        }
    }

    #[test]
    fn camera_to_world_cases() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(camera_to_world(&p, &CameraExtrinsics::identity()), p);
        let e = CameraExtrinsics::from_translation(Vector3::new(0.0, 0.0, 5.0));
        assert_eq!(
            camera_to_world(&Vector3::new(0.0, 0.0, 5.0), &e),
            Vector3::zeros()
        );
    }

    #[test]
    fn all_invalid_map_is_empty() {
        let d = DepthMap::new(2, 2, vec![0.0; 4]).unwrap();
        let (cloud, prov) =
            depth_to_pseudolidar(&d, &k(1.0, 1.0, 0.0, 0.0), &CameraExtrinsics::identity());
        assert!(cloud.is_empty());
        assert!(prov.is_empty());
    }

    #[test]
    fn single_pixel_frame() {
        let d = DepthMap::new(1, 1, vec![4.0]).unwrap();
        let (cloud, prov) =
            depth_to_pseudolidar(&d, &k(1.0, 1.0, 0.0, 0.0), &CameraExtrinsics::identity());
        assert_eq!(cloud.points, vec![[0.0, 0.0, 4.0]]);
        assert_eq!(prov.pixels, vec![(0, 0)]);
    }

    #[test]
    fn full_frame_count() {
        let d = DepthMap::new(1224, 370, vec![12.5; 1224 * 370]).unwrap();
        let (cloud, prov) = depth_to_pseudolidar(
            &d,
            &k(721.5, 721.5, 609.6, 172.9),
            &CameraExtrinsics::identity(),
        );
        assert_eq!(cloud.len(), 452_880);
        assert_eq!(prov.len(), 452_880);
    }

    #[test]
    fn skips_invalid_pixels_in_row_major_order() {
        let d = DepthMap::new(3, 2, vec![1.0, 0.0, 2.0, f32::NAN, -3.0, 5.0]).unwrap();
        let (cloud, prov) =
            depth_to_pseudolidar(&d, &k(1.0, 1.0, 0.0, 0.0), &CameraExtrinsics::identity());
        assert_eq!(prov.pixels, vec![(0, 0), (2, 0), (2, 1)]);
        assert_eq!(cloud.points[2], [10.0, 5.0, 5.0]);
    }

    #[test]
    fn reproject_errors_and_axis() {
        let kk = k(700.0, 710.0, 600.0, 180.0);
        let e = CameraExtrinsics::identity();
        assert!(matches!(
            reproject(&Vector3::zeros(), &kk, &e),
            Err(Error::BehindCamera(_))
        ));
        assert_eq!(
            reproject(&Vector3::new(0.0, 0.0, 9.0), &kk, &e).unwrap(),
            (600.0, 180.0, 9.0)
        );
    }

    #[test]
    fn shape_checks() {
        assert!(DepthMap::new(0, 3, vec![]).is_err());
        assert!(DepthMap::new(2, 2, vec![1.0; 3]).is_err());
        assert!(PointCloud::from_flat(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn f32_cloud_reprojects_near_pixel_centers() {
        let e = CameraExtrinsics::new(
            Rotation3::from_euler_angles(-1.57, 0.01, -1.56).into_inner(),
            Vector3::new(0.06, -0.08, -0.27),
        )
        .unwrap();
        let kk = k(721.5377, 721.5377, 609.5593, 172.854);
        let (w, h) = (40, 12);
        let values = (0..w * h).map(|i| 2.0 + (i % 37) as f32 * 1.7).collect();
        let d = DepthMap::new(w, h, values).unwrap();
        let (cloud, prov) = depth_to_pseudolidar(&d, &kk, &e);
        for (p, &(u, v)) in cloud.points.iter().zip(&prov.pixels) {
            let world = Vector3::new(p[0] as f64, p[1] as f64, p[2] as f64);
            let (ru, rv, _) = reproject(&world, &kk, &e).unwrap();
            // f32 storage limits the recovered position
            assert!((ru - u as f64).abs() < 1e-3 && (rv - v as f64).abs() < 1e-3);
        }
    }

    proptest! {
        #[test]
        fn depth_is_monotone_along_a_ray(u in 0.0f64..1224.0, v in 0.0f64..370.0,
                                         d1 in 0.1f64..80.0, dd in 1e-3f64..10.0) {
            let kk = k(721.5, 721.5, 609.6, 172.9);
            let a = pixel_to_camera(u, v, d1, &kk).unwrap();
            let b = pixel_to_camera(u, v, d1 + dd, &kk).unwrap();
            prop_assert!(a.z < b.z);
        }

        #[test]
        fn camera_world_round_trip(roll in -3.1f64..3.1, pitch in -1.5f64..1.5, yaw in -3.1f64..3.1,
                                   t in proptest::array::uniform3(-50.0f64..50.0),
                                   p in proptest::array::uniform3(-80.0f64..80.0)) {
            let e = CameraExtrinsics::new(
                Rotation3::from_euler_angles(roll, pitch, yaw).into_inner(),
                Vector3::from(t),
            ).unwrap();
            let p = Vector3::from(p);
            let back = world_to_camera(&camera_to_world(&p, &e), &e);
            prop_assert!((back - p).abs().max() < 1e-9);
        }
    }
}
