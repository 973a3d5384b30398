//! Three-stage sparsification of painted pseudo-LiDAR:
//!
//! 1. spherical-voxel mean denoising around the sensor origin,
//! 2. axis-aligned range filtering,
//! 3. Cartesian voxel sampling capped at a fixed number of points per voxel.
//!
//! Every stage orders its output deterministically, so a fixed input, config
//! and seed always produce the same bytes.
//!
//! # Sampling
//!
//! A coarse voxel with more than `max_points_per_voxel` members keeps a
//! uniform random subset. The subset is drawn with ChaCha8 (`rand_chacha`),
//! seeded per voxel with [`voxel_seed`], by a partial Fisher-Yates shuffle
//! over the members sorted by input index. Each draw maps a `u64` into
//! `[0, m)` as `(x * m) >> 64`. The kept members are emitted in input order.

use std::fmt;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::painting::{PaintedPoint, PaintedPointCloud};

/// Point cloud range used by the KITTI detector configs, meters.
pub const KITTI_RANGE: [[f64; 2]; 3] = [[0.0, 70.4], [-40.0, 40.0], [-3.0, 1.0]];
/// Point cloud range used by the Waymo detector configs, meters.
pub const WAYMO_RANGE: [[f64; 2]; 3] = [[0.0, 75.2], [-75.2, 75.2], [-2.0, 4.0]];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SparsifyConfig {
    /// Spherical voxel size along azimuth, degrees.
    pub azimuth_step_deg: f64,
    /// Spherical voxel size along elevation, degrees.
    pub elevation_step_deg: f64,
    /// Spherical voxel size along the radius, meters.
    pub radius_step: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub z_range: [f64; 2],
    /// Cartesian voxel size for capped sampling, meters per axis.
    pub voxel_size: [f64; 3],
    pub max_points_per_voxel: usize,
    pub seed: u64,
}

impl Default for SparsifyConfig {
    fn default() -> Self {
        Self::kitti()
    }
}

impl SparsifyConfig {
    pub fn kitti() -> Self {
        Self {
            azimuth_step_deg: 0.2,
            elevation_step_deg: 0.2,
            radius_step: 0.05,
            x_range: KITTI_RANGE[0],
            y_range: KITTI_RANGE[1],
            z_range: KITTI_RANGE[2],
            voxel_size: [0.05, 0.05, 0.1],
            max_points_per_voxel: 5,
            seed: 0,
        }
    }

    pub fn waymo() -> Self {
        Self {
            x_range: WAYMO_RANGE[0],
            y_range: WAYMO_RANGE[1],
            z_range: WAYMO_RANGE[2],
            voxel_size: [0.1, 0.1, 0.15],
            ..Self::kitti()
        }
    }

    pub fn ranges(&self) -> [[f64; 2]; 3] {
        [self.x_range, self.y_range, self.z_range]
    }

    pub fn validate(&self) -> Result<()> {
        let steps = [
            ("azimuth_step_deg", self.azimuth_step_deg),
            ("elevation_step_deg", self.elevation_step_deg),
            ("radius_step", self.radius_step),
            ("voxel_size[0]", self.voxel_size[0]),
            ("voxel_size[1]", self.voxel_size[1]),
            ("voxel_size[2]", self.voxel_size[2]),
        ];
        for (name, v) in steps {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        for (axis, [lo, hi]) in ["x", "y", "z"].into_iter().zip(self.ranges()) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::InvalidInput(format!(
                    "{axis}_range [{lo}, {hi}) is empty"
                )));
            }
        }
        if self.max_points_per_voxel == 0 {
            return Err(Error::InvalidInput(
                "max_points_per_voxel must be >= 1".into(),
            ));
        }
        Ok(())
    }
}

/// Point counts after each stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SparseCloudReport {
    pub input: usize,
    pub denoised: usize,
    pub filtered: usize,
    pub output: usize,
}

impl SparseCloudReport {
    /// `output / input`, or 0 for an empty input.
    pub fn reduction_ratio(&self) -> f64 {
        if self.input == 0 {
            0.0
        } else {
            self.output as f64 / self.input as f64
        }
    }
}

impl fmt::Display for SparseCloudReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "input: {}", self.input)?;
        writeln!(f, "denoised: {}", self.denoised)?;
        writeln!(f, "filtered: {}", self.filtered)?;
        writeln!(f, "output: {}", self.output)?;
        writeln!(f, "ratio: {:.6}", self.reduction_ratio())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Spherical {
    pub radius: f64,
    /// `atan2(y, x)`, radians.
    pub azimuth: f64,
    /// `asin(z / r)`, radians.
    pub elevation: f64,
}

pub fn to_spherical(p: [f64; 3]) -> Result<Spherical> {
    let [x, y, z] = p;
    let radius = (x * x + y * y + z * z).sqrt();
    if radius == 0.0 {
        return Err(Error::UndefinedDirection);
    }
    Ok(Spherical {
        radius,
        azimuth: y.atan2(x),
        elevation: (z / radius).clamp(-1.0, 1.0).asin(),
    })
}

type CellIndex = (i64, i64, i64);

/// Spherical cell `(azimuth, elevation, radius)` of a point. Cells are
/// anchored at the origin; a point at the origin falls in `(0, 0, 0)`.
pub fn spherical_cell(p: [f32; 3], cfg: &SparsifyConfig) -> CellIndex {
    match to_spherical(p.map(f64::from)) {
        Ok(s) => (
            (s.azimuth.to_degrees() / cfg.azimuth_step_deg).floor() as i64,
            (s.elevation.to_degrees() / cfg.elevation_step_deg).floor() as i64,
            (s.radius / cfg.radius_step).floor() as i64,
        ),
        Err(_) => (0, 0, 0),
    }
}

/// Cartesian sampling cell, anchored at the range minimum.
pub fn coarse_cell(p: [f32; 3], cfg: &SparsifyConfig) -> CellIndex {
    let idx = |axis: usize, lo: f64| ((p[axis] as f64 - lo) / cfg.voxel_size[axis]).floor() as i64;
    (
        idx(0, cfg.x_range[0]),
        idx(1, cfg.y_range[0]),
        idx(2, cfg.z_range[0]),
    )
}

/// Input indices grouped by cell: groups in ascending cell order, members
/// in ascending input order.
fn group_by_cell(keys: &[CellIndex]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by_key(|&i| keys[i]);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut last = None;
    for i in order {
        if last == Some(keys[i]) {
            groups.last_mut().unwrap().push(i);
        } else {
            groups.push(vec![i]);
            last = Some(keys[i]);
        }
    }
    groups
}

/// Replaces the points of every occupied spherical cell by their mean. All
/// six channels are averaged; sums run in `f64` in input order.
pub fn spherical_denoise(cloud: &PaintedPointCloud, cfg: &SparsifyConfig) -> PaintedPointCloud {
    let keys: Vec<CellIndex> = cloud
        .points
        .iter()
        .map(|p| spherical_cell(p.xyz, cfg))
        .collect();
    let points = group_by_cell(&keys)
        .into_iter()
        .map(|members| {
            let mut sum = [0.0f64; 6];
            for &i in &members {
                let p = &cloud.points[i];
                for (s, v) in sum.iter_mut().zip(p.xyz.iter().chain(&p.rgb)) {
                    *s += *v as f64;
                }
            }
            let n = members.len() as f64;
            let m = sum.map(|s| (s / n) as f32);
            PaintedPoint {
                xyz: [m[0], m[1], m[2]],
                rgb: [m[3], m[4], m[5]],
            }
        })
        .collect();
    PaintedPointCloud { points }
}

pub fn in_range(p: [f32; 3], cfg: &SparsifyConfig) -> bool {
    p.iter()
        .zip(cfg.ranges())
        .all(|(&v, [lo, hi])| (v as f64) >= lo && (v as f64) < hi)
}

/// Keeps points inside the half-open box `[min, max)` on every axis, in
/// input order.
pub fn range_filter(cloud: &PaintedPointCloud, cfg: &SparsifyConfig) -> PaintedPointCloud {
    PaintedPointCloud {
        points: cloud
            .points
            .iter()
            .filter(|p| in_range(p.xyz, cfg))
            .copied()
            .collect(),
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Seed of the sampling generator for one coarse cell:
/// `h = splitmix64(seed)`, then `h = splitmix64(h ^ c)` for each cell
/// coordinate `c` (as two's-complement `u64`) in x, y, z order.
pub fn voxel_seed(seed: u64, cell: CellIndex) -> u64 {
    let mut h = splitmix64(seed);
    for c in [cell.0, cell.1, cell.2] {
        h = splitmix64(h ^ c as u64);
    }
    h
}

/// Positions (ascending) of `k` members kept out of `n`.
fn sample_positions(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pos: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let m = (n - i) as u128;
        let j = i + ((rng.next_u64() as u128 * m) >> 64) as usize;
        pos.swap(i, j);
    }
    pos.truncate(k);
    pos.sort_unstable();
    pos
}

/// Caps every Cartesian voxel at `max_points_per_voxel` points. Output is
/// ordered by voxel, then input order; points are copied unmodified.
pub fn voxel_downsample(cloud: &PaintedPointCloud, cfg: &SparsifyConfig) -> PaintedPointCloud {
    let cap = cfg.max_points_per_voxel.max(1);
    let keys: Vec<CellIndex> = cloud
        .points
        .iter()
        .map(|p| coarse_cell(p.xyz, cfg))
        .collect();
    let mut points = Vec::with_capacity(cloud.len());
    for members in group_by_cell(&keys) {
        if members.len() <= cap {
            points.extend(members.iter().map(|&i| cloud.points[i]));
        } else {
            let seed = voxel_seed(cfg.seed, keys[members[0]]);
            for pos in sample_positions(members.len(), cap, seed) {
                points.push(cloud.points[members[pos]]);
            }
        }
    }
    PaintedPointCloud { points }
}

/// Denoise, filter, then sample.
pub fn sparsify(
    cloud: &PaintedPointCloud,
    cfg: &SparsifyConfig,
) -> Result<(PaintedPointCloud, SparseCloudReport)> {
    cfg.validate()?;
    let denoised = spherical_denoise(cloud, cfg);
    let filtered = range_filter(&denoised, cfg);
    let output = voxel_downsample(&filtered, cfg);
    let report = SparseCloudReport {
        input: cloud.len(),
        denoised: denoised.len(),
        filtered: filtered.len(),
        output: output.len(),
    };
    Ok((output, report))
}
