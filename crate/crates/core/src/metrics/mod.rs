//! Rotated-box overlap and KITTI-style average precision.

mod ap;
mod iou;

pub use ap::{
    ap40, assign_difficulty, evaluate_table, Difficulty, EvalConfig, EvalFrame, EvalMode, PrCurve,
    RECALL_POSITIONS, TABLE_COLUMNS,
};
pub use iou::{bev_intersection_area, bev_iou, clip_convex, iou_3d, polygon_area, AREA_EPSILON};
