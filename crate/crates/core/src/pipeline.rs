//! File-level frame processing and batch runs over a dataset split.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::calib::parse_kitti_calib;
use crate::config::PipelineConfig;
use crate::error::{Error, Result};
use crate::metrics::EvalFrame;
use crate::painting::{paint_frame, InstanceMaskSet, PaintedPointCloud};
use crate::pcio::{parse_kitti_labels, read_depth, read_mask, read_rgb, write_cloud_bin, Cloud};
use crate::projection::{depth_to_pseudolidar, DepthMap, PixelProvenance, PointCloud};
use crate::sparsify::{sparsify, SparseCloudReport, SparsifyConfig};

pub const MANIFEST_NAME: &str = "manifest.tsv";
const DEPTH_EXTENSIONS: [&str; 2] = ["png", "f32"];
const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

/// Writes via a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidInput(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".{}.tmp", std::process::id()));
    let tmp = dir.join(tmp_name);
    let result = fs::File::create(&tmp)
        .and_then(|mut f| f.write_all(bytes).and_then(|_| f.sync_all()))
        .and_then(|_| fs::rename(&tmp, path));
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Back-projects a depth file with the camera-2 model of a KITTI calib
/// file. Points are in the velodyne frame.
pub fn project_files(
    depth_path: &Path,
    calib_path: &Path,
) -> Result<(DepthMap, PointCloud, PixelProvenance)> {
    let calib = parse_kitti_calib(&read_text(calib_path)?)?;
    let depth = read_depth(depth_path)?;
    let (cloud, provenance) =
        depth_to_pseudolidar(&depth, &calib.intrinsics()?, &calib.extrinsics()?);
    Ok((depth, cloud, provenance))
}

/// Projects and paints one frame. Without a mask the frame is all
/// background.
pub fn paint_files(
    depth_path: &Path,
    calib_path: &Path,
    image_path: &Path,
    mask_path: Option<&Path>,
) -> Result<PaintedPointCloud> {
    let (depth, cloud, provenance) = project_files(depth_path, calib_path)?;
    let image = read_rgb(image_path)?;
    let mask = match mask_path {
        Some(p) => read_mask(p)?,
        None => InstanceMaskSet::empty(image.width(), image.height()),
    };
    paint_frame(&depth, &cloud, &provenance, &image, &mask)
}

fn find_with_extension(dir: &Path, id: &str, extensions: &[&str]) -> Option<PathBuf> {
    extensions
        .iter()
        .map(|ext| dir.join(format!("{id}.{ext}")))
        .find(|p| p.is_file())
}

fn is_frame_id(stem: &str) -> bool {
    stem.len() == 6 && stem.bytes().all(|b| b.is_ascii_digit())
}

/// Sorted 6-digit frame ids that have a file with one of `extensions` in
/// `dir`.
pub fn discover_frames(dir: &Path, extensions: &[&str]) -> Result<Vec<String>> {
    let mut ids = std::collections::BTreeSet::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let (Some(stem), Some(ext)) = (
            path.file_stem().and_then(|s| s.to_str()),
            path.extension().and_then(|s| s.to_str()),
        ) else {
            continue;
        };
        if !extensions.iter().any(|e| e.eq_ignore_ascii_case(ext)) {
            continue;
        }
        if is_frame_id(stem) {
            ids.insert(stem.to_string());
        } else {
            warn!("ignoring {}: not a 6-digit frame id", path.display());
        }
    }
    Ok(ids.into_iter().collect())
}

/// Input file paths of one frame.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameFiles {
    pub depth: PathBuf,
    pub calib: PathBuf,
    pub image: PathBuf,
    pub mask: Option<PathBuf>,
}

impl FrameFiles {
    pub fn resolve(cfg: &PipelineConfig, id: &str) -> Result<Self> {
        let missing = |what: &str, dir: &Path| {
            Error::InvalidInput(format!("frame {id}: no {what} in {}", dir.display()))
        };
        let depth = find_with_extension(&cfg.depth_dir, id, &DEPTH_EXTENSIONS)
            .ok_or_else(|| missing("depth map", &cfg.depth_dir))?;
        let calib = cfg.calib_dir.join(format!("{id}.txt"));
        if !calib.is_file() {
            return Err(missing("calib file", &cfg.calib_dir));
        }
        let image = find_with_extension(&cfg.image_dir, id, &IMAGE_EXTENSIONS)
            .ok_or_else(|| missing("image", &cfg.image_dir))?;
        let mask = match &cfg.mask_dir {
            Some(dir) => match find_with_extension(dir, id, &["png"]) {
                Some(p) => Some(p),
                None if cfg.require_masks => return Err(missing("mask", dir)),
                None => None,
            },
            None if cfg.require_masks => {
                return Err(Error::InvalidInput(
                    "masks required but no mask_dir given".into(),
                ))
            }
            None => None,
        };
        Ok(Self {
            depth,
            calib,
            image,
            mask,
        })
    }
}

/// Sparsifies and encodes a painted cloud.
pub fn sparsify_to_bytes(
    cloud: &PaintedPointCloud,
    cfg: &SparsifyConfig,
    layout: crate::pcio::CloudLayout,
) -> Result<(Vec<u8>, SparseCloudReport)> {
    let (sparse, report) = sparsify(cloud, cfg)?;
    Ok((write_cloud_bin(&Cloud::Xyzrgb(sparse), layout)?, report))
}

/// Full chain for one frame: returns the output bytes and stage counts.
pub fn process_frame(
    files: &FrameFiles,
    cfg: &PipelineConfig,
) -> Result<(Vec<u8>, SparseCloudReport)> {
    let painted = paint_files(
        &files.depth,
        &files.calib,
        &files.image,
        files.mask.as_deref(),
    )?;
    sparsify_to_bytes(&painted, &cfg.sparsify, cfg.layout)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunSummary {
    pub processed: Vec<String>,
    pub skipped: Vec<String>,
    pub failed: Vec<(String, String)>,
}

fn read_manifest(path: &Path) -> Result<BTreeMap<String, (usize, usize)>> {
    let mut entries = BTreeMap::new();
    if !path.is_file() {
        return Ok(entries);
    }
    for (i, line) in read_text(path)?.lines().enumerate().skip(1) {
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = match fields.as_slice() {
            [id, n, m] => n
                .parse()
                .ok()
                .zip(m.parse().ok())
                .map(|v| (id.to_string(), v)),
            _ => None,
        };
        let (id, counts) = parsed.ok_or_else(|| {
            Error::parse(
                format!("{} line {}", path.display(), i + 1),
                "expected `id<TAB>N<TAB>N_sparse`",
            )
        })?;
        entries.insert(id, counts);
    }
    Ok(entries)
}

fn render_manifest(entries: &BTreeMap<String, (usize, usize)>) -> String {
    let mut out = String::from("frame\tpoints\tsparse_points\n");
    for (id, (n, m)) in entries {
        out.push_str(&format!("{id}\t{n}\t{m}\n"));
    }
    out
}

/// Runs every frame found in the depth directory.
///
/// Frames whose output exists are skipped unless `force`. Per-frame
/// failures are logged and collected, not fatal. The manifest lists every
/// frame with an output, sorted by id.
pub fn run_pipeline(cfg: &PipelineConfig, force: bool) -> Result<RunSummary> {
    cfg.check_dirs()?;
    cfg.sparsify.validate()?;
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let manifest_path = cfg.output_dir.join(MANIFEST_NAME);
    let mut manifest = read_manifest(&manifest_path)?;

    let ids = discover_frames(&cfg.depth_dir, &DEPTH_EXTENSIONS)?;
    let out_path = |id: &str| cfg.output_dir.join(format!("{id}.bin"));
    let (todo, skipped): (Vec<String>, Vec<String>) = ids
        .into_iter()
        .partition(|id| force || !out_path(id).exists());
    for id in &skipped {
        info!("frame {id}: output exists, skipped");
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    let results: Vec<(String, Result<SparseCloudReport>)> = pool.install(|| {
        todo.par_iter()
            .map(|id| {
                let run = || {
                    let files = FrameFiles::resolve(cfg, id)?;
                    let (bytes, report) = process_frame(&files, cfg)?;
                    write_atomic(&out_path(id), &bytes)?;
                    Ok(report)
                };
                (id.clone(), run())
            })
            .collect()
    });

    let mut summary = RunSummary {
        skipped,
        ..Default::default()
    };
    for (id, result) in results {
        match result {
            Ok(report) => {
                info!("frame {id}: {} -> {} points", report.input, report.output);
                manifest.insert(id.clone(), (report.input, report.output));
                summary.processed.push(id);
            }
            Err(e) => {
                log::error!("frame {id}: {e}");
                summary.failed.push((id, e.to_string()));
            }
        }
    }
    write_atomic(&manifest_path, render_manifest(&manifest).as_bytes())?;
    Ok(summary)
}

/// Pairs `<id>.txt` label files by id. A ground-truth frame without a
/// prediction file has no detections; prediction files without ground
/// truth are an error.
pub fn load_eval_frames(gt_dir: &Path, pred_dir: &Path) -> Result<Vec<EvalFrame>> {
    for dir in [gt_dir, pred_dir] {
        if !dir.is_dir() {
            return Err(Error::InvalidInput(format!(
                "{} is not a directory",
                dir.display()
            )));
        }
    }
    let label_ids = |dir: &Path| -> Result<Vec<String>> {
        let mut ids = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().and_then(|e| e.to_str()) == Some("txt") {
                if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                    ids.push(stem.to_string());
                }
            }
        }
        ids.sort();
        Ok(ids)
    };
    let gt_ids = label_ids(gt_dir)?;
    if let Some(orphan) = label_ids(pred_dir)?
        .into_iter()
        .find(|id| gt_ids.binary_search(id).is_err())
    {
        return Err(Error::InvalidInput(format!(
            "prediction {orphan}.txt has no ground truth"
        )));
    }
    gt_ids
        .into_iter()
        .map(|id| {
            let gt_path = gt_dir.join(format!("{id}.txt"));
            let ground_truth = parse_kitti_labels(&read_text(&gt_path)?)
                .map_err(|e| Error::InvalidInput(format!("{}: {e}", gt_path.display())))?;
            let pred_path = pred_dir.join(format!("{id}.txt"));
            let predictions = if pred_path.is_file() {
                parse_kitti_labels(&read_text(&pred_path)?)
                    .map_err(|e| Error::InvalidInput(format!("{}: {e}", pred_path.display())))?
            } else {
                Vec::new()
            };
            if let Some(b) = predictions.iter().find(|b| b.score.is_none()) {
                return Err(Error::InvalidInput(format!(
                    "{}: {} detection without a score",
                    pred_path.display(),
                    b.class
                )));
            }
            Ok(EvalFrame {
                id,
                ground_truth,
                predictions,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.bin");
        write_atomic(&p, b"one").unwrap();
        write_atomic(&p, b"two").unwrap();
        assert_eq!(fs::read(&p).unwrap(), b"two");
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }

    #[test]
    fn frame_ids() {
        let dir = tempfile::tempdir().unwrap();
        for name in [
            "000002.png",
            "000001.f32",
            "000001.f32.hdr",
            "notes.png",
            "12.png",
        ] {
            fs::write(dir.path().join(name), b"").unwrap();
        }
        assert_eq!(
            discover_frames(dir.path(), &DEPTH_EXTENSIONS).unwrap(),
            ["000001", "000002"]
        );
    }

    #[test]
    fn manifest_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(MANIFEST_NAME);
        let mut m = BTreeMap::new();
        m.insert("000003".to_string(), (10, 4));
        m.insert("000001".to_string(), (7, 7));
        fs::write(&p, render_manifest(&m)).unwrap();
        assert_eq!(read_manifest(&p).unwrap(), m);
        fs::write(&p, "frame\tpoints\tsparse_points\nbad line\n").unwrap();
        assert!(read_manifest(&p).is_err());
    }
}
