use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::painting::{PaintedPoint, PaintedPointCloud};
use crate::projection::PointCloud;

/// Record layout of a `.bin` cloud: little-endian `f32`, point-major, no
/// header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CloudLayout {
    Xyz,
    Xyzi,
    Xyzrgb,
}

impl CloudLayout {
    pub fn floats_per_point(self) -> usize {
        match self {
            CloudLayout::Xyz => 3,
            CloudLayout::Xyzi => 4,
            CloudLayout::Xyzrgb => 6,
        }
    }

    pub fn stride(self) -> usize {
        self.floats_per_point() * 4
    }
}

impl FromStr for CloudLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "xyz" => Ok(CloudLayout::Xyz),
            "xyzi" => Ok(CloudLayout::Xyzi),
            "xyzrgb" => Ok(CloudLayout::Xyzrgb),
            other => Err(Error::Layout(format!("unknown layout `{other}`"))),
        }
    }
}

impl fmt::Display for CloudLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CloudLayout::Xyz => "xyz",
            CloudLayout::Xyzi => "xyzi",
            CloudLayout::Xyzrgb => "xyzrgb",
        })
    }
}

/// Points with a scalar intensity, the stock KITTI velodyne layout.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntensityCloud {
    pub points: Vec<[f32; 4]>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cloud {
    Xyz(PointCloud),
    Xyzi(IntensityCloud),
    Xyzrgb(PaintedPointCloud),
}

impl Cloud {
    pub fn len(&self) -> usize {
        match self {
            Cloud::Xyz(c) => c.len(),
            Cloud::Xyzi(c) => c.points.len(),
            Cloud::Xyzrgb(c) => c.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn native_layout(&self) -> CloudLayout {
        match self {
            Cloud::Xyz(_) => CloudLayout::Xyz,
            Cloud::Xyzi(_) => CloudLayout::Xyzi,
            Cloud::Xyzrgb(_) => CloudLayout::Xyzrgb,
        }
    }

    /// Paint channels are zero for clouds without paint; intensity is
    /// dropped.
    pub fn into_painted(self) -> Result<PaintedPointCloud> {
        match self {
            Cloud::Xyzrgb(c) => Ok(c),
            Cloud::Xyz(c) => Ok(PaintedPointCloud::new(
                c.points
                    .into_iter()
                    .map(|xyz| PaintedPoint { xyz, rgb: [0.0; 3] })
                    .collect(),
            )),
            Cloud::Xyzi(c) => Ok(PaintedPointCloud::new(
                c.points
                    .into_iter()
                    .map(|p| PaintedPoint {
                        xyz: [p[0], p[1], p[2]],
                        rgb: [0.0; 3],
                    })
                    .collect(),
            )),
        }
    }
}

impl From<PointCloud> for Cloud {
    fn from(c: PointCloud) -> Self {
        Cloud::Xyz(c)
    }
}

impl From<PaintedPointCloud> for Cloud {
    fn from(c: PaintedPointCloud) -> Self {
        Cloud::Xyzrgb(c)
    }
}

impl From<IntensityCloud> for Cloud {
    fn from(c: IntensityCloud) -> Self {
        Cloud::Xyzi(c)
    }
}

/// Encodes `cloud` with the given layout.
///
/// Unpainted clouds written as `xyzi` get intensity 0; painted clouds get
/// the mean of their three paint channels. Writing `xyzrgb` needs paint.
pub fn write_cloud_bin(cloud: &Cloud, layout: CloudLayout) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(cloud.len() * layout.stride());
    let mut put = |vals: &[f32]| {
        for v in vals {
            out.extend_from_slice(&v.to_le_bytes());
        }
    };
    match (cloud, layout) {
        (Cloud::Xyz(c), CloudLayout::Xyz) => c.points.iter().for_each(|p| put(p)),
        (Cloud::Xyz(c), CloudLayout::Xyzi) => {
            c.points.iter().for_each(|p| put(&[p[0], p[1], p[2], 0.0]))
        }
        (Cloud::Xyzi(c), CloudLayout::Xyz) => c.points.iter().for_each(|p| put(&p[..3])),
        (Cloud::Xyzi(c), CloudLayout::Xyzi) => c.points.iter().for_each(|p| put(p)),
        (Cloud::Xyzrgb(c), CloudLayout::Xyz) => c.points.iter().for_each(|p| put(&p.xyz)),
        (Cloud::Xyzrgb(c), CloudLayout::Xyzi) => c.points.iter().for_each(|p| {
            let grey = (p.rgb[0] + p.rgb[1] + p.rgb[2]) / 3.0;
            put(&[p.xyz[0], p.xyz[1], p.xyz[2], grey])
        }),
        (Cloud::Xyzrgb(c), CloudLayout::Xyzrgb) => c.points.iter().for_each(|p| {
            put(&p.xyz);
            put(&p.rgb)
        }),
        (other, CloudLayout::Xyzrgb) => {
            return Err(Error::Layout(format!(
                "cannot write a {} cloud as xyzrgb: it has no paint channels",
                other.native_layout()
            )))
        }
    }
    Ok(out)
}

pub fn read_cloud_bin(bytes: &[u8], layout: CloudLayout) -> Result<Cloud> {
    if !bytes.len().is_multiple_of(layout.stride()) {
        return Err(Error::CorruptFile(format!(
            "{} bytes is not a whole number of {}-byte {layout} records",
            bytes.len(),
            layout.stride()
        )));
    }
    let floats: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    Ok(match layout {
        CloudLayout::Xyz => Cloud::Xyz(PointCloud::from_flat(&floats)?),
        CloudLayout::Xyzi => Cloud::Xyzi(IntensityCloud {
            points: floats
                .chunks_exact(4)
                .map(|c| [c[0], c[1], c[2], c[3]])
                .collect(),
        }),
        CloudLayout::Xyzrgb => Cloud::Xyzrgb(PaintedPointCloud::from_flat(&floats)?),
    })
}
