use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::LevelFilter;

use plidar::config::{ConfigLayer, Preset};
use plidar::metrics::{evaluate_table, TABLE_COLUMNS};
use plidar::pcio::{export_ply, read_cloud_bin, write_cloud_bin, Cloud, CloudLayout};
use plidar::pipeline::{
    load_eval_frames, paint_files, project_files, run_pipeline, sparsify_to_bytes, write_atomic,
};
use plidar::{Error, Result};

/// Pseudo-LiDAR point clouds from depth maps, and KITTI-style evaluation.
#[derive(Parser)]
#[command(name = "plidar", version)]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Flat TOML config file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Sparsification preset: kitti, waymo or custom.
    #[arg(long, global = true)]
    preset: Option<Preset>,
    /// Seed for capped voxel sampling.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Frames processed in parallel by `pipeline`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output layout: xyz, xyzi or xyzrgb.
    #[arg(long, global = true)]
    layout: Option<CloudLayout>,
    /// Recompute frames whose output already exists.
    #[arg(long, global = true)]
    force: bool,
    /// Log errors only.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Back-project a depth map into a point cloud in the velodyne frame.
    Project {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long, short)]
        output: PathBuf,
    },
    /// Project a depth map and paint foreground points with image color.
    Paint {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[arg(long)]
        image: PathBuf,
        /// Instance mask PNG; without it the frame is all background.
        #[arg(long)]
        mask: Option<PathBuf>,
        #[arg(long, short)]
        output: PathBuf,
        /// Fail when the mask file is missing.
        #[arg(long)]
        require_masks: bool,
    },
    /// Denoise, range-filter and voxel-sample a cloud.
    Sparsify {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "xyzrgb")]
        input_layout: CloudLayout,
        #[arg(long, short)]
        output: PathBuf,
        /// Also write the stage counts here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Project, paint and sparsify every frame of a split.
    Pipeline {
        #[arg(long)]
        depth_dir: Option<PathBuf>,
        #[arg(long)]
        image_dir: Option<PathBuf>,
        #[arg(long)]
        mask_dir: Option<PathBuf>,
        #[arg(long)]
        calib_dir: Option<PathBuf>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        #[arg(long)]
        require_masks: bool,
    },
    /// AP at 40 recall positions for one class.
    Eval {
        #[arg(long)]
        gt_dir: PathBuf,
        #[arg(long)]
        pred_dir: PathBuf,
        #[arg(long, default_value = "Car")]
        class: String,
        /// Count every GT of the class; ignore nothing.
        #[arg(long)]
        no_dont_care: bool,
    },
    /// Convert a cloud to binary PLY with 8-bit color.
    ExportPly {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value = "xyzrgb")]
        input_layout: CloudLayout,
        #[arg(long, short)]
        output: PathBuf,
    },
}

enum Outcome {
    Success,
    PartialFailure,
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn check_exists(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!(
            "{what} {} not found",
            path.display()
        )))
    }
}

fn layers(shared: &Shared) -> Result<ConfigLayer> {
    let file = match &shared.config {
        Some(p) => ConfigLayer::load(p)?,
        None => ConfigLayer::default(),
    };
    Ok(file.overlay(ConfigLayer {
        preset: shared.preset,
        seed: shared.seed,
        workers: shared.workers,
        layout: shared.layout,
        ..Default::default()
    }))
}

fn run(cli: Cli) -> Result<Outcome> {
    let shared = &cli.shared;
    let layer = layers(shared)?;
    match cli.command {
        Command::Project {
            depth,
            calib,
            output,
        } => {
            check_exists(&calib, "calib file")?;
            let layout = shared.layout.unwrap_or(CloudLayout::Xyz);
            let (_, cloud, _) = project_files(&depth, &calib)?;
            write_atomic(&output, &write_cloud_bin(&Cloud::Xyz(cloud), layout)?)?;
        }
        Command::Paint {
            depth,
            calib,
            image,
            mask,
            output,
            require_masks,
        } => {
            check_exists(&calib, "calib file")?;
            let mask = match mask {
                Some(m) if m.is_file() => Some(m),
                Some(m) if require_masks => {
                    return Err(Error::InvalidInput(format!(
                        "mask {} not found",
                        m.display()
                    )))
                }
                None if require_masks => {
                    return Err(Error::InvalidInput("--require-masks needs --mask".into()))
                }
                Some(m) => {
                    log::warn!("mask {} not found, painting as background", m.display());
                    None
                }
                None => None,
            };
            let painted = paint_files(&depth, &calib, &image, mask.as_deref())?;
            let layout = shared.layout.unwrap_or(CloudLayout::Xyzrgb);
            write_atomic(&output, &write_cloud_bin(&Cloud::Xyzrgb(painted), layout)?)?;
        }
        Command::Sparsify {
            input,
            input_layout,
            output,
            report,
        } => {
            let cfg = layer.sparsify_config()?;
            let cloud = read_cloud_bin(&read_file(&input)?, input_layout)?.into_painted()?;
            let layout = layer.layout.unwrap_or(CloudLayout::Xyzrgb);
            let (bytes, counts) = sparsify_to_bytes(&cloud, &cfg, layout)?;
            write_atomic(&output, &bytes)?;
            if let Some(path) = report {
                write_atomic(&path, counts.to_string().as_bytes())?;
            }
            if !shared.quiet {
                print!("{counts}");
            }
        }
        Command::Pipeline {
            depth_dir,
            image_dir,
            mask_dir,
            calib_dir,
            output_dir,
            require_masks,
        } => {
            let cfg = layer
                .overlay(ConfigLayer {
                    depth_dir,
                    image_dir,
                    mask_dir,
                    calib_dir,
                    output_dir,
                    require_masks: require_masks.then_some(true),
                    ..Default::default()
                })
                .pipeline_config()?;
            let summary = run_pipeline(&cfg, shared.force)?;
            log::info!(
                "{} processed, {} skipped, {} failed",
                summary.processed.len(),
                summary.skipped.len(),
                summary.failed.len()
            );
            if !summary.failed.is_empty() {
                return Ok(Outcome::PartialFailure);
            }
        }
        Command::Eval {
            gt_dir,
            pred_dir,
            class,
            no_dont_care,
        } => {
            let frames = load_eval_frames(&gt_dir, &pred_dir)?;
            let table = evaluate_table(&frames, &class, &TABLE_COLUMNS, !no_dont_care)?;
            print!("{:<10}", class);
            for (mode, thr) in TABLE_COLUMNS {
                print!("{:>10}", format!("{mode}@{thr}"));
            }
            println!();
            for (difficulty, row) in table {
                print!("{:<10}", difficulty.to_string());
                for ap in row {
                    print!("{ap:>10.2}");
                }
                println!();
            }
        }
        Command::ExportPly {
            input,
            input_layout,
            output,
        } => {
            let cloud = read_cloud_bin(&read_file(&input)?, input_layout)?.into_painted()?;
            write_atomic(&output, &export_ply(&cloud))?;
        }
    }
    Ok(Outcome::Success)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.shared.quiet {
        LevelFilter::Error
    } else {
        LevelFilter::Info
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .init();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::PartialFailure) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
