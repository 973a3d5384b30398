//! Painting pseudo-LiDAR points with the color of foreground pixels.
//!
//! A point whose source pixel lies inside the instance-mask union carries
//! that pixel's RGB (normalized to `[0, 1]`); every other point carries
//! `(0, 0, 0)`. A black foreground pixel is therefore indistinguishable from
//! background.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::projection::{is_valid_depth, DepthMap, PixelProvenance, PointCloud};

/// 8-bit RGB image, row-major, 3 bytes per pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "rgb image {width}x{height} needs {} bytes, got {}",
                width * height * 3,
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        Self {
            width,
            height,
            data: rgb.repeat(width * height),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn raw(&self, u: usize, v: usize) -> [u8; 3] {
        let i = (v * self.width + u) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_raw(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = (v * self.width + u) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Channels divided by 255.
    pub fn pixel(&self, u: usize, v: usize) -> [f32; 3] {
        self.raw(u, v).map(|c| c as f32 / 255.0)
    }
}

/// A 2D box prompt: center, size in pixels, class and confidence.
#[derive(Clone, Debug, PartialEq)]
pub struct Box2D {
    pub u_center: f64,
    pub v_center: f64,
    pub height: f64,
    pub width: f64,
    pub class: String,
    pub score: f64,
}

impl Box2D {
    /// `(u_min, v_min, u_max, v_max)` before clipping to an image.
    pub fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.u_center - self.width / 2.0,
            self.v_center - self.height / 2.0,
            self.u_center + self.width / 2.0,
            self.v_center + self.height / 2.0,
        )
    }

    fn validate(&self, image_width: usize, image_height: usize) -> Result<()> {
        if !(self.height > 0.0 && self.width > 0.0) {
            return Err(Error::InvalidInput(format!(
                "box size must be positive, got {}x{}",
                self.width, self.height
            )));
        }
        if !(0.0..=1.0).contains(&self.score) {
            return Err(Error::InvalidInput(format!(
                "box score {} outside [0, 1]",
                self.score
            )));
        }
        if self.class.is_empty() || self.class.contains(char::is_whitespace) {
            return Err(Error::InvalidInput(format!(
                "box class `{}` must be a single non-empty token",
                self.class
            )));
        }
        let (u0, v0, u1, v1) = self.corners();
        if u1 <= 0.0 || v1 <= 0.0 || u0 >= image_width as f64 || v0 >= image_height as f64 {
            return Err(Error::InvalidInput(format!(
                "box ({u0}, {v0})-({u1}, {v1}) lies outside the {image_width}x{image_height} image"
            )));
        }
        Ok(())
    }
}

/// Serializes box prompts for an external segmentation runner, one line
/// per box: `class u_min v_min u_max v_max score`.
///
/// Corners are widened to whole pixels (floor of the minimum, ceiling of the
/// maximum) and clipped to the image.
pub fn boxes_to_mask_request(
    boxes: &[Box2D],
    image_width: usize,
    image_height: usize,
) -> Result<String> {
    let mut out = String::new();
    for b in boxes {
        b.validate(image_width, image_height)?;
        let (u0, v0, u1, v1) = b.corners();
        let clip = |x: f64, max: usize| x.clamp(0.0, max as f64) as i64;
        let _ = writeln!(
            out,
            "{} {} {} {} {} {:.6}",
            b.class,
            clip(u0.floor(), image_width),
            clip(v0.floor(), image_height),
            clip(u1.ceil(), image_width),
            clip(v1.ceil(), image_height),
            b.score
        );
    }
    Ok(out)
}

/// Per-pixel instance ids (0 = background). The foreground map is the union
/// of all instances; ids are kept for diagnostics only.
#[derive(Clone, Debug, PartialEq)]
pub struct InstanceMaskSet {
    width: usize,
    height: usize,
    ids: Vec<u32>,
    pub boxes: Vec<Box2D>,
}

impl InstanceMaskSet {
    pub fn from_ids(width: usize, height: usize, ids: Vec<u32>) -> Result<Self> {
        if ids.len() != width * height {
            return Err(Error::Shape(format!(
                "mask {width}x{height} needs {} values, got {}",
                width * height,
                ids.len()
            )));
        }
        Ok(Self {
            width,
            height,
            ids,
            boxes: Vec::new(),
        })
    }

    pub fn from_bools(width: usize, height: usize, mask: &[bool]) -> Result<Self> {
        Self::from_ids(width, height, mask.iter().map(|&m| m as u32).collect())
    }

    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            ids: vec![0; width * height],
            boxes: Vec::new(),
        }
    }

    /// Union of overlapping instance masks; a pixel keeps the id of the
    /// first instance that covers it.
    pub fn from_instances(width: usize, height: usize, instances: &[Vec<bool>]) -> Result<Self> {
        let mut ids = vec![0u32; width * height];
        for (k, inst) in instances.iter().enumerate() {
            if inst.len() != ids.len() {
                return Err(Error::Shape(format!(
                    "instance {k} has {} pixels, expected {}",
                    inst.len(),
                    ids.len()
                )));
            }
            for (id, &fg) in ids.iter_mut().zip(inst) {
                if fg && *id == 0 {
                    *id = k as u32 + 1;
                }
            }
        }
        Self::from_ids(width, height, ids)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn ids(&self) -> &[u32] {
        &self.ids
    }

    pub fn instance_id(&self, u: usize, v: usize) -> u32 {
        self.ids[v * self.width + u]
    }

    pub fn is_foreground(&self, u: usize, v: usize) -> bool {
        self.instance_id(u, v) != 0
    }

    pub fn foreground_count(&self) -> usize {
        self.ids.iter().filter(|&&id| id != 0).count()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PaintedPoint {
    pub xyz: [f32; 3],
    pub rgb: [f32; 3],
}

/// Points with three paint channels in `[0, 1]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PaintedPointCloud {
    pub points: Vec<PaintedPoint>,
}

impl PaintedPointCloud {
    pub fn new(points: Vec<PaintedPoint>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Builds a cloud from a flat `N x 6` buffer (`x y z r g b`).
    pub fn from_flat(data: &[f32]) -> Result<Self> {
        if !data.len().is_multiple_of(6) {
            return Err(Error::Shape(format!(
                "flat xyzrgb buffer length {} is not a multiple of 6",
                data.len()
            )));
        }
        Ok(Self {
            points: data
                .chunks_exact(6)
                .map(|c| PaintedPoint {
                    xyz: [c[0], c[1], c[2]],
                    rgb: [c[3], c[4], c[5]],
                })
                .collect(),
        })
    }

    pub fn to_flat(&self) -> Vec<f32> {
        self.points
            .iter()
            .flat_map(|p| p.xyz.into_iter().chain(p.rgb))
            .collect()
    }

    pub fn xyz(&self) -> PointCloud {
        PointCloud::new(self.points.iter().map(|p| p.xyz).collect())
    }
}

fn check_dims(what: &str, w: usize, h: usize, expect_w: usize, expect_h: usize) -> Result<()> {
    if (w, h) != (expect_w, expect_h) {
        return Err(Error::Shape(format!(
            "{what} is {w}x{h}, expected {expect_w}x{expect_h}"
        )));
    }
    Ok(())
}

/// Depth restricted to the foreground: `D` where the mask is set, 0
/// elsewhere.
pub fn masked_depth(depth: &DepthMap, mask: &InstanceMaskSet) -> Result<DepthMap> {
    check_dims(
        "mask",
        mask.width,
        mask.height,
        depth.width(),
        depth.height(),
    )?;
    let values = depth
        .values()
        .iter()
        .zip(&mask.ids)
        .map(|(&d, &id)| if id != 0 { d } else { 0.0 })
        .collect();
    DepthMap::new(depth.width(), depth.height(), values)
}

/// Appends paint channels to every point: the image color of its source
/// pixel when that pixel is foreground, zeros otherwise.
pub fn paint_points(
    cloud: &PointCloud,
    provenance: &PixelProvenance,
    image: &RgbImage,
    mask: &InstanceMaskSet,
) -> Result<PaintedPointCloud> {
    if provenance.len() != cloud.len() {
        return Err(Error::Shape(format!(
            "provenance has {} entries for {} points",
            provenance.len(),
            cloud.len()
        )));
    }
    check_dims("mask", mask.width, mask.height, image.width, image.height)?;
    let points = cloud
        .points
        .iter()
        .zip(&provenance.pixels)
        .map(|(&xyz, &(u, v))| {
            let (u, v) = (u as usize, v as usize);
            if u >= image.width || v >= image.height {
                return Err(Error::Shape(format!(
                    "source pixel ({u}, {v}) outside the {}x{} image",
                    image.width, image.height
                )));
            }
            let rgb = if mask.is_foreground(u, v) {
                image.pixel(u, v)
            } else {
                [0.0; 3]
            };
            Ok(PaintedPoint { xyz, rgb })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PaintedPointCloud { points })
}

/// Painting with the depth map in hand: checks that depth, image and mask
/// agree in size and that each point's source pixel has valid depth.
pub fn paint_frame(
    depth: &DepthMap,
    cloud: &PointCloud,
    provenance: &PixelProvenance,
    image: &RgbImage,
    mask: &InstanceMaskSet,
) -> Result<PaintedPointCloud> {
    check_dims(
        "image",
        image.width,
        image.height,
        depth.width(),
        depth.height(),
    )?;
    check_dims(
        "mask",
        mask.width,
        mask.height,
        depth.width(),
        depth.height(),
    )?;
    let masked = masked_depth(depth, mask)?;
    let mut painted = paint_points(cloud, provenance, image, mask)?;
    for (p, &(u, v)) in painted.points.iter_mut().zip(&provenance.pixels) {
        if !is_valid_depth(masked.get(u as usize, v as usize)) {
            p.rgb = [0.0; 3];
        }
    }
    Ok(painted)
}
