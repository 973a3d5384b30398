//! KITTI object labels.
//!
//! One object per line, 15 whitespace-separated fields for ground truth and a
//! 16th `score` field for detections:
//!
//! ```text
//! type truncated occluded alpha left top right bottom h w l x y z rotation_y [score]
//! ```
//!
//! Locations are the bottom-center of the box in the rectified camera frame
//! (x right, y down, z forward); `rotation_y` is the yaw about the camera y
//! axis.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::calib::KittiCalibration;
use crate::error::{Error, Result};

pub const DONT_CARE: &str = "DontCare";

#[derive(Clone, Debug, PartialEq)]
pub struct Box3D {
    pub class: String,
    pub truncation: f64,
    pub occlusion: i32,
    pub alpha: f64,
    /// 2D box `left, top, right, bottom` in pixels.
    pub bbox: [f64; 4],
    /// `h, w, l` in meters.
    pub dimensions: [f64; 3],
    /// Bottom center `x, y, z` in the rectified camera frame, meters.
    pub location: [f64; 3],
    /// Yaw in `[-pi, pi]`.
    pub rotation_y: f64,
    /// Present for detections only.
    pub score: Option<f64>,
}

impl Box3D {
    /// A fully visible, untruncated box with an empty 2D bbox.
    pub fn new(class: &str, location: [f64; 3], dimensions: [f64; 3], rotation_y: f64) -> Self {
        Self {
            class: class.to_string(),
            truncation: 0.0,
            occlusion: 0,
            alpha: 0.0,
            bbox: [0.0; 4],
            dimensions,
            location,
            rotation_y,
            score: None,
        }
    }

    pub fn with_score(mut self, score: f64) -> Self {
        self.score = Some(score);
        self
    }

    pub fn with_bbox(mut self, bbox: [f64; 4]) -> Self {
        self.bbox = bbox;
        self
    }

    pub fn is_dont_care(&self) -> bool {
        self.class == DONT_CARE
    }

    pub fn height(&self) -> f64 {
        self.dimensions[0]
    }

    pub fn bbox_height(&self) -> f64 {
        self.bbox[3] - self.bbox[1]
    }

    pub fn validate(&self) -> Result<()> {
        if self.class.is_empty() || self.class.contains(char::is_whitespace) {
            return Err(Error::InvalidInput(format!("bad class `{}`", self.class)));
        }
        if let Some(s) = self.score {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::InvalidInput(format!("score {s} outside [0, 1]")));
            }
        }
        // DontCare regions carry placeholder geometry (-1 sizes, -1000
        // locations) and only their 2D box is meaningful.
        if self.is_dont_care() {
            return Ok(());
        }
        if self.dimensions.iter().any(|&d| !(d > 0.0 && d.is_finite())) {
            return Err(Error::InvalidInput(format!(
                "box dimensions must be positive, got {:?}",
                self.dimensions
            )));
        }
        if self.location.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("box location must be finite".into()));
        }
        if !(-PI..=PI).contains(&self.rotation_y) {
            return Err(Error::InvalidInput(format!(
                "rotation_y {} outside [-pi, pi]",
                self.rotation_y
            )));
        }
        Ok(())
    }

    /// Footprint corners in the camera `(x, z)` ground plane,
    /// counter-clockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let [_, w, l] = self.dimensions;
        let (s, c) = self.rotation_y.sin_cos();
        let [x, _, z] = self.location;
        let local = [
            [l / 2.0, w / 2.0],
            [-l / 2.0, w / 2.0],
            [-l / 2.0, -w / 2.0],
            [l / 2.0, -w / 2.0],
        ];
        // x' = c*lx + s*lz, z' = -s*lx + c*lz (rotation about camera y)
        let mut out = local.map(|[lx, lz]| [x + c * lx + s * lz, z - s * lx + c * lz]);
        if signed_area(&out) < 0.0 {
            out.reverse();
        }
        out
    }

    /// `(top, bottom)` along camera y; y points down so `top < bottom`.
    pub fn vertical_extent(&self) -> (f64, f64) {
        let y = self.location[1];
        (y - self.dimensions[0], y)
    }

    pub fn bev_area(&self) -> f64 {
        self.dimensions[1] * self.dimensions[2]
    }

    pub fn volume(&self) -> f64 {
        self.dimensions.iter().product()
    }

    /// The box in the velodyne frame: geometric center, `(l, w, h)` and
    /// heading about the up axis.
    pub fn to_lidar(&self, calib: &KittiCalibration) -> Result<LidarBox> {
        let rect_to_lidar = calib.reference_extrinsics()?.inverse();
        let [h, w, l] = self.dimensions;
        let [x, y, z] = self.location;
        let center = rect_to_lidar.transform_point(&Vector3::new(x, y - h / 2.0, z));
        Ok(LidarBox {
            center: [center.x, center.y, center.z],
            size: [l, w, h],
            heading: wrap_angle(-self.rotation_y - FRAC_PI_2),
        })
    }
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w < -PI {
        w + TAU
    } else {
        w
    }
}

/// A box in the LiDAR working frame (z up).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LidarBox {
    pub center: [f64; 3],
    /// `l, w, h`.
    pub size: [f64; 3],
    pub heading: f64,
}

pub fn parse_kitti_labels(text: &str) -> Result<Vec<Box3D>> {
    let mut boxes = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        let loc = || format!("line {lineno}");
        if fields.len() != 15 && fields.len() != 16 {
            return Err(Error::parse(
                loc(),
                format!("expected 15 or 16 fields, found {}", fields.len()),
            ));
        }
        let num = |k: usize| -> Result<f64> {
            fields[k].parse::<f64>().map_err(|_| {
                Error::parse(
                    loc(),
                    format!("field {} `{}` is not a number", k + 1, fields[k]),
                )
            })
        };
        let occlusion = fields[2]
            .parse::<f64>()
            .ok()
            .filter(|v| v.fract() == 0.0)
            .map(|v| v as i32)
            .ok_or_else(|| {
                Error::parse(
                    loc(),
                    format!("occlusion `{}` is not an integer", fields[2]),
                )
            })?;
        let b = Box3D {
            class: fields[0].to_string(),
            truncation: num(1)?,
            occlusion,
            alpha: num(3)?,
            bbox: [num(4)?, num(5)?, num(6)?, num(7)?],
            dimensions: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 {
                Some(num(15)?)
            } else {
                None
            },
        };
        b.validate()
            .map_err(|e| Error::parse(loc(), e.to_string()))?;
        boxes.push(b);
    }
    Ok(boxes)
}

/// KITTI label text with every real-valued field printed to 6 decimals.
pub fn serialize_kitti_labels(boxes: &[Box3D]) -> String {
    let mut out = String::new();
    for b in boxes {
        let _ = write!(
            out,
            "{} {:.6} {} {:.6}",
            b.class, b.truncation, b.occlusion, b.alpha
        );
        for v in b.bbox.iter().chain(&b.dimensions).chain(&b.location) {
            let _ = write!(out, " {v:.6}");
        }
        let _ = write!(out, " {:.6}", b.rotation_y);
        if let Some(s) = b.score {
            let _ = write!(out, " {s:.6}");
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const GT: &str =
        "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n\
Pedestrian 0.00 0 0.21 423.17 173.67 433.17 224.03 1.87 0.50 0.90 -5.48 1.87 23.35 -0.02\n\
DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10\n";

    #[test]
    fn ground_truth_fields() {
        let boxes = parse_kitti_labels(GT).unwrap();
        assert_eq!(boxes.len(), 3);
        let car = &boxes[0];
        assert_eq!(car.class, "Car");
        assert_eq!(car.score, None);
        assert_eq!(car.dimensions, [1.65, 1.67, 3.64]);
        assert_eq!(car.location, [-0.65, 1.71, 46.70]);
        assert_eq!(car.rotation_y, -1.59);
        assert!((car.bbox_height() - 26.79).abs() < 1e-9);
        assert!(boxes[2].is_dont_care());
    }

    #[test]
    fn prediction_score() {
        let line = "Car -1 -1 -1.5 587 173 614 200 1.6 1.7 3.6 -0.6 1.7 46.7 -1.6 0.91\n";
        assert_eq!(parse_kitti_labels(line).unwrap()[0].score, Some(0.91));
    }

    #[test]
    fn field_count_error_names_line() {
        let err = parse_kitti_labels("Car 0 0 0\n").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
        let text = format!("{GT}Car 0 0 0 1 2 3 4 -1.0 1 1 0 0 5 0\n");
        let err = parse_kitti_labels(&text).unwrap_err();
        assert!(err.to_string().contains("line 4"), "{err}");
    }

    #[test]
    fn text_round_trip_at_printed_precision() {
        let boxes = parse_kitti_labels(GT).unwrap();
        let text = serialize_kitti_labels(&boxes);
        assert_eq!(parse_kitti_labels(&text).unwrap(), boxes);
        assert_eq!(
            serialize_kitti_labels(&parse_kitti_labels(&text).unwrap()),
            text
        );
    }

    #[test]
    fn corners_are_ccw_and_match_area() {
        let b = Box3D::new("Car", [1.0, 1.5, 10.0], [1.5, 1.6, 3.9], 0.7);
        let c = b.bev_corners();
        assert!((signed_area(&c) - b.bev_area()).abs() < 1e-12);
    }

    #[test]
    fn lidar_conversion_with_axis_swap_calib() {
        // velodyne x forward, y left, z up; camera x right, y down, z forward
        let mut tr = nalgebra::Matrix3x4::zeros();
        tr[(0, 1)] = -1.0;
        tr[(1, 2)] = -1.0;
        tr[(2, 0)] = 1.0;
        let p2 = nalgebra::Matrix3x4::new(700., 0., 600., 0., 0., 700., 180., 0., 0., 0., 1., 0.);
        let calib = KittiCalibration::new(p2, Some(nalgebra::Matrix3::identity()), Some(tr));
        let b = Box3D::new("Car", [2.0, 1.0, 20.0], [1.6, 1.8, 4.0], 0.0);
        let lb = b.to_lidar(&calib).unwrap();
        let expect = [20.0, -2.0, -0.2];
        for (a, e) in lb.center.iter().zip(expect) {
            assert!((a - e).abs() < 1e-12);
        }
        assert_eq!(lb.size, [4.0, 1.8, 1.6]);
        assert!((lb.heading + FRAC_PI_2).abs() < 1e-12);
    }

    #[test]
    fn rejects_invalid_boxes() {
        assert!(parse_kitti_labels("Car 0 0 0 0 0 1 1 0 1 1 0 0 5 0\n").is_err());
        assert!(parse_kitti_labels("Car 0 0 0 0 0 1 1 1 1 1 0 0 5 4.0\n").is_err());
        assert!(parse_kitti_labels("Car 0 0 0 0 0 1 1 1 1 1 0 0 5 0 1.5\n").is_err());
        assert!(parse_kitti_labels("Car 0 0.5 0 0 0 1 1 1 1 1 0 0 5 0\n").is_err());
    }

    fn six(v: f64) -> f64 {
        format!("{v:.6}").parse().unwrap()
    }

    proptest! {
        #[test]
        fn boxes_round_trip_within_printed_precision(
            dims in proptest::array::uniform3(0.1f64..10.0),
            loc in proptest::array::uniform3(-80.0f64..80.0),
            ry in -PI..PI,
            score in proptest::option::of(0.0f64..1.0),
        ) {
            let mut b = Box3D::new("Cyclist", loc.map(six), dims.map(six), six(ry));
            b.score = score.map(six);
            let parsed = parse_kitti_labels(&serialize_kitti_labels(&[b.clone()])).unwrap();
            prop_assert_eq!(parsed, vec![b]);
        }
    }
}
