//! Run configuration.
//!
//! Config files are flat TOML: one `key = value` per line, no tables.
//!
//! ```text
//! preset = "kitti"            # kitti | waymo | custom
//! depth_dir = "data/depth"
//! image_dir = "data/image_2"
//! mask_dir = "data/mask"
//! calib_dir = "data/calib"
//! output_dir = "out/velodyne"
//! layout = "xyzrgb"           # xyz | xyzi | xyzrgb
//! workers = 4
//! seed = 0
//! require_masks = false
//! azimuth_step_deg = 0.2
//! elevation_step_deg = 0.2
//! radius_step = 0.05
//! voxel_size = [0.05, 0.05, 0.1]
//! max_points_per_voxel = 5
//! x_range = [0.0, 70.4]       # custom preset only, likewise y_range, z_range
//! ```
//!
//! Command-line flags override file values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::pcio::CloudLayout;
use crate::sparsify::SparsifyConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Kitti,
    Waymo,
    Custom,
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kitti" => Ok(Preset::Kitti),
            "waymo" => Ok(Preset::Waymo),
            "custom" => Ok(Preset::Custom),
            other => Err(Error::InvalidInput(format!("unknown preset `{other}`"))),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Kitti => "kitti",
            Preset::Waymo => "waymo",
            Preset::Custom => "custom",
        })
    }
}

/// Partially specified settings, as read from a file or the command line.
#[derive(Clone, Debug, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigLayer {
    pub preset: Option<Preset>,
    pub depth_dir: Option<PathBuf>,
    pub image_dir: Option<PathBuf>,
    pub mask_dir: Option<PathBuf>,
    pub calib_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    pub layout: Option<CloudLayout>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub require_masks: Option<bool>,
    pub azimuth_step_deg: Option<f64>,
    pub elevation_step_deg: Option<f64>,
    pub radius_step: Option<f64>,
    pub x_range: Option<[f64; 2]>,
    pub y_range: Option<[f64; 2]>,
    pub z_range: Option<[f64; 2]>,
    pub voxel_size: Option<[f64; 3]>,
    pub max_points_per_voxel: Option<usize>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        ConfigLayer { $($f: $top.$f.or($base.$f)),* }
    };
}

impl ConfigLayer {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text)
            .map_err(|e| Error::parse(path.display().to_string(), e.message().to_string()))
    }

    /// Values set in `top` win.
    pub fn overlay(self, top: ConfigLayer) -> ConfigLayer {
        let base = self;
        overlay_fields!(
            base,
            top,
            preset,
            depth_dir,
            image_dir,
            mask_dir,
            calib_dir,
            output_dir,
            layout,
            workers,
            seed,
            require_masks,
            azimuth_step_deg,
            elevation_step_deg,
            radius_step,
            x_range,
            y_range,
            z_range,
            voxel_size,
            max_points_per_voxel
        )
    }

    /// Sparsification settings implied by the preset and any overrides.
    /// Named presets fix the point cloud range.
    pub fn sparsify_config(&self) -> Result<SparsifyConfig> {
        let preset = self.preset.unwrap_or_default();
        let mut cfg = match preset {
            Preset::Kitti | Preset::Custom => SparsifyConfig::kitti(),
            Preset::Waymo => SparsifyConfig::waymo(),
        };
        for (name, range, slot) in [
            ("x_range", self.x_range, &mut cfg.x_range),
            ("y_range", self.y_range, &mut cfg.y_range),
            ("z_range", self.z_range, &mut cfg.z_range),
        ] {
            if let Some(r) = range {
                if preset != Preset::Custom && r != *slot {
                    return Err(Error::InvalidInput(format!(
                        "{name} cannot be changed with preset {preset}; use preset = \"custom\""
                    )));
                }
                *slot = r;
            }
        }
        if let Some(v) = self.azimuth_step_deg {
            cfg.azimuth_step_deg = v;
        }
        if let Some(v) = self.elevation_step_deg {
            cfg.elevation_step_deg = v;
        }
        if let Some(v) = self.radius_step {
            cfg.radius_step = v;
        }
        if let Some(v) = self.voxel_size {
            cfg.voxel_size = v;
        }
        if let Some(v) = self.max_points_per_voxel {
            cfg.max_points_per_voxel = v;
        }
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let dir = |v: &Option<PathBuf>, key: &str| {
            v.clone().ok_or_else(|| Error::MissingKey(key.to_string()))
        };
        let workers = self.workers.unwrap_or(1);
        if workers == 0 {
            return Err(Error::InvalidInput("workers must be >= 1".into()));
        }
        Ok(PipelineConfig {
            preset: self.preset.unwrap_or_default(),
            depth_dir: dir(&self.depth_dir, "depth_dir")?,
            image_dir: dir(&self.image_dir, "image_dir")?,
            mask_dir: self.mask_dir.clone(),
            calib_dir: dir(&self.calib_dir, "calib_dir")?,
            output_dir: dir(&self.output_dir, "output_dir")?,
            sparsify: self.sparsify_config()?,
            layout: self.layout.unwrap_or(CloudLayout::Xyzrgb),
            workers,
            require_masks: self.require_masks.unwrap_or(false),
        })
    }
}

/// Everything a batch run needs.
#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub preset: Preset,
    pub depth_dir: PathBuf,
    pub image_dir: PathBuf,
    /// Without a mask directory every frame is painted as background.
    pub mask_dir: Option<PathBuf>,
    pub calib_dir: PathBuf,
    pub output_dir: PathBuf,
    /// Includes the sampling seed.
    pub sparsify: SparsifyConfig,
    pub layout: CloudLayout,
    pub workers: usize,
    pub require_masks: bool,
}

impl PipelineConfig {
    pub fn check_dirs(&self) -> Result<()> {
        let mut dirs = vec![&self.depth_dir, &self.image_dir, &self.calib_dir];
        dirs.extend(self.mask_dir.as_ref());
        for d in dirs {
            if !d.is_dir() {
                return Err(Error::InvalidInput(format!(
                    "{} is not a directory",
                    d.display()
                )));
            }
        }
        Ok(())
    }
}
