#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use plidar::config::{PipelineConfig, Preset};
use plidar::pcio::{write_depth_png, write_mask_png, write_rgb_png, CloudLayout};
use plidar::{DepthMap, InstanceMaskSet, RgbImage, SparsifyConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const KITTI_CALIB: &str = "\
P0: 7.215377e+02 0.000000e+00 6.095593e+02 0.000000e+00 0.000000e+00 7.215377e+02 1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P1: 7.215377e+02 0.000000e+00 6.095593e+02 -3.875744e+02 0.000000e+00 7.215377e+02 1.728540e+02 0.000000e+00 0.000000e+00 0.000000e+00 1.000000e+00 0.000000e+00
P2: 7.215377e+02 0.000000e+00 6.095593e+02 4.485728e+01 0.000000e+00 7.215377e+02 1.728540e+02 2.163791e-01 0.000000e+00 0.000000e+00 1.000000e+00 2.745884e-03
P3: 7.215377e+02 0.000000e+00 6.095593e+02 -3.395242e+02 0.000000e+00 7.215377e+02 1.728540e+02 2.199936e+00 0.000000e+00 0.000000e+00 1.000000e+00 2.729905e-03
R0_rect: 9.999239e-01 9.837760e-03 -7.445048e-03 -9.869795e-03 9.999421e-01 -4.278459e-03 7.402527e-03 4.351614e-03 9.999631e-01
Tr_velo_to_cam: 7.533745e-03 -9.999714e-01 -6.166020e-04 -4.069766e-03 1.480249e-02 7.280733e-04 -9.998902e-01 -7.631618e-02 9.998621e-01 7.523790e-03 1.480755e-02 -2.717806e-01
Tr_imu_to_velo: 9.999976e-01 7.553071e-04 -2.035826e-03 -8.086759e-01 -7.854027e-04 9.998898e-01 -1.482298e-02 3.195559e-01 2.024406e-03 1.482454e-02 9.998881e-01 -7.997231e-01
";

/// Road plane below the horizon, a far wall above it and a box-shaped
/// obstacle in the middle; every pixel has valid depth.
pub fn street_depth(width: usize, height: usize, fy: f64, cy: f64) -> DepthMap {
    let mut values = Vec::with_capacity(width * height);
    for v in 0..height {
        for u in 0..width {
            let d = if v as f64 > cy + 1.0 {
                (1.65 * fy / (v as f64 - cy)).min(80.0)
            } else {
                30.0 + 10.0 * (u as f64 / 50.0).sin()
            };
            let obstacle = (2 * width / 5..3 * width / 5).contains(&u)
                && (height / 2..4 * height / 5).contains(&v);
            values.push(if obstacle { 12.0 } else { d as f32 });
        }
    }
    DepthMap::new(width, height, values).unwrap()
}

pub fn noise_image(width: usize, height: usize, seed: u64) -> RgbImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..width * height * 3).map(|_| rng.random()).collect();
    RgbImage::new(width, height, data).unwrap()
}

/// Two rectangular instances.
pub fn block_mask(width: usize, height: usize) -> InstanceMaskSet {
    let mut ids = vec![0u32; width * height];
    for v in 0..height {
        for u in 0..width {
            if (2 * width / 5..3 * width / 5).contains(&u)
                && (height / 2..4 * height / 5).contains(&v)
            {
                ids[v * width + u] = 1;
            } else if (width / 10..width / 5).contains(&u) && (height / 3..height).contains(&v) {
                ids[v * width + u] = 2;
            }
        }
    }
    InstanceMaskSet::from_ids(width, height, ids).unwrap()
}

pub struct Split {
    pub root: PathBuf,
    pub ids: Vec<String>,
}

impl Split {
    pub fn dir(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn file(&self, dir: &str, id: &str, ext: &str) -> PathBuf {
        self.root.join(dir).join(format!("{id}.{ext}"))
    }

    pub fn config(&self, output: &str, workers: usize) -> PipelineConfig {
        PipelineConfig {
            preset: Preset::Kitti,
            depth_dir: self.dir("depth"),
            image_dir: self.dir("image"),
            mask_dir: Some(self.dir("mask")),
            calib_dir: self.dir("calib"),
            output_dir: self.root.join(output),
            sparsify: SparsifyConfig::kitti(),
            layout: CloudLayout::Xyzrgb,
            workers,
            require_masks: false,
        }
    }
}

/// Writes `n` frames of `width x height` into `root/{depth,image,mask,calib}`.
pub fn write_split(root: &Path, n: usize, width: usize, height: usize) -> Split {
    for d in ["depth", "image", "mask", "calib"] {
        fs::create_dir_all(root.join(d)).unwrap();
    }
    let ids: Vec<String> = (0..n).map(|i| format!("{:06}", i * 7 + 1)).collect();
    let split = Split {
        root: root.to_path_buf(),
        ids: ids.clone(),
    };
    for (i, id) in ids.iter().enumerate() {
        let depth = street_depth(width, height, 721.5377, 0.4 * height as f64 + i as f64);
        write_depth_png(&split.file("depth", id, "png"), &depth).unwrap();
        write_rgb_png(
            &split.file("image", id, "png"),
            &noise_image(width, height, i as u64),
        )
        .unwrap();
        write_mask_png(&split.file("mask", id, "png"), &block_mask(width, height)).unwrap();
        fs::write(split.file("calib", id, "txt"), KITTI_CALIB).unwrap();
    }
    split
}

/// Every regular file below `dir`, relative path and contents, sorted.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}
