//! Pinhole camera model, rigid camera extrinsics and the KITTI calibration
//! text format.
//!
//! Extrinsics map world points into the camera frame
//! (`p_cam = R * p_world + t`). For KITTI frames the world frame is the
//! velodyne frame and the camera frame is that of the left color camera
//! (camera 2), see [`KittiCalibration::extrinsics`].

use std::fmt::Write as _;

use nalgebra::{Matrix3, Matrix3x4, Matrix4, Vector3};

use crate::error::{Error, Result};

/// Orthogonality tolerance for rotations built in code.
pub const ROTATION_TOLERANCE: f64 = 1e-6;
/// Orthogonality tolerance for rotations read from calibration files, which
/// are printed with truncated decimals.
pub const PARSED_ROTATION_TOLERANCE: f64 = 1e-4;

/// Pinhole intrinsics in pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        if !(fx > 0.0 && fx.is_finite() && fy > 0.0 && fy.is_finite()) {
            return Err(Error::InvalidCalibration(format!(
                "focal lengths must be positive and finite (fx = {fx}, fy = {fy})"
            )));
        }
        if !(cx.is_finite() && cy.is_finite()) {
            return Err(Error::InvalidCalibration(format!(
                "principal point must be finite (cx = {cx}, cy = {cy})"
            )));
        }
        Ok(Self { fx, fy, cx, cy })
    }
}

/// Rigid world-to-camera transform `[R t; 0 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CameraExtrinsics {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraExtrinsics {
    /// Validates that `rotation` is a proper rotation within
    /// [`ROTATION_TOLERANCE`].
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        check_rotation(&rotation, ROTATION_TOLERANCE)?;
        if translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCalibration(
                "translation must be finite".into(),
            ));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    /// The homogeneous 4x4 matrix. The last row is exactly `(0, 0, 0, 1)`.
    pub fn matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Closed-form inverse `(R^T, -R^T t)`.
    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self * other`: applies `other` first.
    pub fn compose(&self, other: &CameraExtrinsics) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }
}

pub fn invert_extrinsics(extrinsics: &CameraExtrinsics) -> CameraExtrinsics {
    extrinsics.inverse()
}

fn check_rotation(r: &Matrix3<f64>, tol: f64) -> Result<()> {
    if r.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCalibration("rotation must be finite".into()));
    }
    let err = (r * r.transpose() - Matrix3::identity()).abs().max();
    if err > tol {
        return Err(Error::InvalidCalibration(format!(
            "rotation is not orthogonal (max |R R^T - I| = {err:e}, tolerance {tol:e})"
        )));
    }
    let det = r.determinant();
    if (det - 1.0).abs() > tol {
        return Err(Error::InvalidCalibration(format!(
            "rotation determinant is {det}, expected +1"
        )));
    }
    Ok(())
}

/// Nearest proper rotation in the Frobenius sense.
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut out = u * v_t;
    if out.determinant() < 0.0 {
        let mut flip = Matrix3::identity();
        flip[(2, 2)] = -1.0;
        out = u * flip * v_t;
    }
    out
}

/// Matrices from a KITTI object-benchmark calibration file.
///
/// Only `P2` is mandatory. `R0_rect` and `Tr_velo_to_cam` are needed to
/// build extrinsics; everything else (`P0`, `P1`, `P3`, `Tr_imu_to_velo`, ...)
/// is kept verbatim in `other` so a file survives a parse/serialize cycle.
#[derive(Clone, Debug, PartialEq)]
pub struct KittiCalibration {
    pub p2: Matrix3x4<f64>,
    pub r0_rect: Option<Matrix3<f64>>,
    pub tr_velo_to_cam: Option<Matrix3x4<f64>>,
    pub other: Vec<(String, Vec<f64>)>,
}

const KEY_P2: &str = "P2";
const KEY_R0: &str = "R0_rect";
const KEY_TR: &str = "Tr_velo_to_cam";

impl KittiCalibration {
    pub fn new(
        p2: Matrix3x4<f64>,
        r0_rect: Option<Matrix3<f64>>,
        tr_velo_to_cam: Option<Matrix3x4<f64>>,
    ) -> Self {
        Self {
            p2,
            r0_rect,
            tr_velo_to_cam,
            other: Vec::new(),
        }
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        intrinsics_from_p2(self)
    }

    /// Horizontal offset of camera 2 from the rectified reference camera,
    /// in meters (`P2[0,3] / fx`).
    pub fn baseline_offset(&self) -> f64 {
        self.p2[(0, 3)] / self.p2[(0, 0)]
    }

    /// Velodyne-to-rectified-reference-camera transform
    /// `R0_rect * Tr_velo_to_cam`. Label boxes live in this frame.
    ///
    /// The rotation part is projected onto the nearest proper rotation after
    /// both input rotations pass the parsed-file tolerance.
    pub fn reference_extrinsics(&self) -> Result<CameraExtrinsics> {
        let r0 = self
            .r0_rect
            .ok_or_else(|| Error::MissingKey(KEY_R0.into()))?;
        let tr = self
            .tr_velo_to_cam
            .ok_or_else(|| Error::MissingKey(KEY_TR.into()))?;
        check_rotation(&r0, PARSED_ROTATION_TOLERANCE)
            .map_err(|e| Error::InvalidCalibration(format!("{KEY_R0}: {e}")))?;
        let tr_rot: Matrix3<f64> = tr.fixed_view::<3, 3>(0, 0).into_owned();
        check_rotation(&tr_rot, PARSED_ROTATION_TOLERANCE)
            .map_err(|e| Error::InvalidCalibration(format!("{KEY_TR}: {e}")))?;
        let tr_t: Vector3<f64> = tr.fixed_view::<3, 1>(0, 3).into_owned();
        CameraExtrinsics::new(orthonormalize(&(r0 * tr_rot)), r0 * tr_t)
    }

    /// Velodyne-to-camera-2 transform: the reference extrinsics followed by
    /// a shift of `P2[0,3] / fx` along x, so that back-projected camera-2
    /// pixels land where `P2` would project them from.
    pub fn extrinsics(&self) -> Result<CameraExtrinsics> {
        if self.p2[(0, 0)].is_nan() || self.p2[(0, 0)] <= 0.0 {
            return Err(Error::InvalidCalibration("P2[0,0] must be positive".into()));
        }
        let reference = self.reference_extrinsics()?;
        let baseline = Vector3::new(self.baseline_offset(), 0.0, 0.0);
        Ok(CameraExtrinsics::from_translation(baseline).compose(&reference))
    }

    /// Camera-2-to-velodyne transform.
    pub fn camera_to_lidar(&self) -> Result<CameraExtrinsics> {
        Ok(self.extrinsics()?.inverse())
    }

    /// KITTI text layout. Values use the shortest representation that
    /// parses back to the same `f64`.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        write_entry(&mut out, KEY_P2, self.p2.transpose().iter().copied());
        if let Some(r0) = &self.r0_rect {
            write_entry(&mut out, KEY_R0, r0.transpose().iter().copied());
        }
        if let Some(tr) = &self.tr_velo_to_cam {
            write_entry(&mut out, KEY_TR, tr.transpose().iter().copied());
        }
        for (key, values) in &self.other {
            write_entry(&mut out, key, values.iter().copied());
        }
        out
    }
}

fn write_entry(out: &mut String, key: &str, values: impl Iterator<Item = f64>) {
    out.push_str(key);
    out.push(':');
    for v in values {
        let _ = write!(out, " {v:e}");
    }
    out.push('\n');
}

/// Parses a KITTI calibration file (`KEY: v1 v2 ...` per line, row-major).
pub fn parse_kitti_calib(text: &str) -> Result<KittiCalibration> {
    let mut p2 = None;
    let mut r0_rect = None;
    let mut tr = None;
    let mut other = Vec::new();

    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (key, rest) = line.split_once(':').ok_or_else(|| {
            Error::parse(format!("line {}", lineno + 1), "expected `KEY: values`")
        })?;
        let key = key.trim();
        let values = rest
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(key, format!("invalid number `{tok}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::parse(key, "non-finite value"));
        }
        let expect = |n: usize| {
            if values.len() == n {
                Ok(())
            } else {
                Err(Error::parse(
                    key,
                    format!("expected {n} values, found {}", values.len()),
                ))
            }
        };
        match key {
            KEY_P2 => {
                expect(12)?;
                p2 = Some(Matrix3x4::from_row_slice(&values));
            }
            KEY_R0 | "R_rect" => {
                expect(9)?;
                r0_rect = Some(Matrix3::from_row_slice(&values));
            }
            KEY_TR | "Tr_velo_cam" => {
                expect(12)?;
                tr = Some(Matrix3x4::from_row_slice(&values));
            }
            _ => other.push((key.to_string(), values)),
        }
    }

    Ok(KittiCalibration {
        p2: p2.ok_or_else(|| Error::MissingKey(KEY_P2.into()))?,
        r0_rect,
        tr_velo_to_cam: tr,
        other,
    })
}

pub fn intrinsics_from_p2(calib: &KittiCalibration) -> Result<CameraIntrinsics> {
    let p = &calib.p2;
    CameraIntrinsics::new(p[(0, 0)], p[(1, 1)], p[(0, 2)], p[(1, 2)])
}
