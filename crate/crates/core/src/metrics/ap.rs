use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::pcio::Box3D;

use super::iou::{bev_iou, iou_3d};

pub const RECALL_POSITIONS: usize = 40;

const MIN_HEIGHT: [f64; 3] = [40.0, 25.0, 25.0];
const MAX_OCCLUSION: [i32; 3] = [0, 1, 2];
const MAX_TRUNCATION: [f64; 3] = [0.15, 0.30, 0.50];
const DONT_CARE_OVERLAP: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Difficulty {
    Easy,
    Moderate,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Moderate, Difficulty::Hard];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Difficulty::Easy => "easy",
            Difficulty::Moderate => "moderate",
            Difficulty::Hard => "hard",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EvalMode {
    ThreeD,
    Bev,
}

impl FromStr for EvalMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "3d" => Ok(EvalMode::ThreeD),
            "bev" => Ok(EvalMode::Bev),
            other => Err(Error::InvalidInput(format!("unknown eval mode `{other}`"))),
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EvalMode::ThreeD => "3D",
            EvalMode::Bev => "BEV",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalConfig {
    pub iou_threshold: f64,
    pub mode: EvalMode,
    pub difficulty: Difficulty,
    pub class: String,
    /// Apply the devkit ignore rules: difficulty filtering, neighbor
    /// classes, DontCare regions and the minimum detection height. When
    /// off, every GT of `class` counts and nothing is ignored.
    pub dont_care: bool,
}

impl EvalConfig {
    pub fn new(class: &str, mode: EvalMode, iou_threshold: f64, difficulty: Difficulty) -> Self {
        Self {
            iou_threshold,
            mode,
            difficulty,
            class: class.to_string(),
            dont_care: true,
        }
    }

    pub fn without_dont_care(mut self) -> Self {
        self.dont_care = false;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.iou_threshold > 0.0 && self.iou_threshold <= 1.0) {
            return Err(Error::InvalidInput(format!(
                "IoU threshold {} outside (0, 1]",
                self.iou_threshold
            )));
        }
        Ok(())
    }

    fn overlap(&self, a: &Box3D, b: &Box3D) -> f64 {
        match self.mode {
            EvalMode::ThreeD => iou_3d(a, b),
            EvalMode::Bev => bev_iou(a, b),
        }
    }
}

/// One frame of ground truth and scored detections.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EvalFrame {
    pub id: String,
    pub ground_truth: Vec<Box3D>,
    pub predictions: Vec<Box3D>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PrCurve {
    /// Interpolated precision at recall `k / 40`, `k = 1..=40`.
    pub precision: [f64; RECALL_POSITIONS],
    pub ap: f64,
}

impl PrCurve {
    pub fn recall_positions() -> [f64; RECALL_POSITIONS] {
        std::array::from_fn(|k| (k + 1) as f64 / RECALL_POSITIONS as f64)
    }
}

/// Hardest level a GT qualifies for, or `None` when it falls outside all
/// three.
pub fn assign_difficulty(gt: &Box3D) -> Option<Difficulty> {
    Difficulty::ALL.into_iter().find(|d| {
        let i = d.index();
        gt.bbox_height() >= MIN_HEIGHT[i]
            && gt.occlusion <= MAX_OCCLUSION[i]
            && gt.truncation <= MAX_TRUNCATION[i]
    })
}

fn is_neighbor_class(target: &str, class: &str) -> bool {
    matches!(
        (target, class),
        ("Car", "Van") | ("Pedestrian", "Person_sitting")
    )
}

#[derive(Clone, Copy, PartialEq)]
enum GtRole {
    Counted,
    Ignored,
    Unrelated,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Outcome {
    TruePositive,
    FalsePositive,
    Ignored,
}

fn gt_role(gt: &Box3D, cfg: &EvalConfig) -> GtRole {
    if gt.class == cfg.class {
        if !cfg.dont_care {
            return GtRole::Counted;
        }
        match assign_difficulty(gt) {
            Some(d) if d <= cfg.difficulty => GtRole::Counted,
            _ => GtRole::Ignored,
        }
    } else if cfg.dont_care && is_neighbor_class(&cfg.class, &gt.class) {
        GtRole::Ignored
    } else {
        GtRole::Unrelated
    }
}

fn dont_care_covers(det: &Box3D, region: &Box3D) -> bool {
    let [l, t, r, b] = det.bbox;
    let area = (r - l) * (b - t);
    if area <= 0.0 {
        return false;
    }
    let iw = r.min(region.bbox[2]) - l.max(region.bbox[0]);
    let ih = b.min(region.bbox[3]) - t.max(region.bbox[1]);
    iw > 0.0 && ih > 0.0 && iw * ih / area > DONT_CARE_OVERLAP
}

fn best_match(
    det: &Box3D,
    gts: &[Box3D],
    roles: &[GtRole],
    taken: &[bool],
    want: GtRole,
    cfg: &EvalConfig,
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (g, gt) in gts.iter().enumerate() {
        if taken[g] || roles[g] != want {
            continue;
        }
        let iou = cfg.overlap(det, gt);
        if iou >= cfg.iou_threshold && best.is_none_or(|(_, b)| iou > b) {
            best = Some((g, iou));
        }
    }
    best.map(|(g, _)| g)
}

/// Greedy per-frame matching. Returns the number of counted GTs and, for
/// every considered detection, its score and outcome in descending-score
/// order.
fn match_frame(frame: &EvalFrame, cfg: &EvalConfig) -> (usize, Vec<(f64, Outcome)>) {
    let gts = &frame.ground_truth;
    let roles: Vec<GtRole> = gts.iter().map(|g| gt_role(g, cfg)).collect();
    let n_gt = roles.iter().filter(|r| **r == GtRole::Counted).count();
    let regions: Vec<&Box3D> = if cfg.dont_care {
        gts.iter().filter(|g| g.is_dont_care()).collect()
    } else {
        Vec::new()
    };
    let mut order: Vec<usize> = (0..frame.predictions.len())
        .filter(|&i| frame.predictions[i].class == cfg.class)
        .collect();
    let score = |i: usize| frame.predictions[i].score.unwrap_or(0.0);
    order.sort_by(|&a, &b| score(b).total_cmp(&score(a)));

    let mut taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(order.len());
    for i in order {
        let det = &frame.predictions[i];
        if cfg.dont_care && det.bbox_height() < MIN_HEIGHT[cfg.difficulty.index()] {
            out.push((score(i), Outcome::Ignored));
            continue;
        }
        let outcome = if let Some(g) = best_match(det, gts, &roles, &taken, GtRole::Counted, cfg) {
            taken[g] = true;
            Outcome::TruePositive
        } else if let Some(g) = best_match(det, gts, &roles, &taken, GtRole::Ignored, cfg) {
            taken[g] = true;
            Outcome::Ignored
        } else if regions.iter().any(|r| dont_care_covers(det, r)) {
            Outcome::Ignored
        } else {
            Outcome::FalsePositive
        };
        out.push((score(i), outcome));
    }
    (n_gt, out)
}

/// Average precision over 40 evenly spaced recall positions.
///
/// Detections from all frames are ranked by score, ties broken by frame
/// order and then by position within the frame. Precision at recall `r` is
/// the best precision at any operating point whose recall reaches `r`.
pub fn ap40(frames: &[EvalFrame], cfg: &EvalConfig) -> Result<PrCurve> {
    cfg.validate()?;
    let mut seen = HashSet::new();
    for f in frames {
        if !seen.insert(f.id.as_str()) {
            return Err(Error::InvalidInput(format!("duplicate frame id {}", f.id)));
        }
    }

    let mut n_gt = 0usize;
    let mut ranked = Vec::new();
    for frame in frames {
        let (n, outcomes) = match_frame(frame, cfg);
        n_gt += n;
        ranked.extend(outcomes.into_iter().filter(|(_, o)| *o != Outcome::Ignored));
    }
    let mut precision = [0.0; RECALL_POSITIONS];
    if n_gt == 0 {
        return Ok(PrCurve { precision, ap: 0.0 });
    }
    // Stable sort keeps the frame/input order among equal scores.
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points: Vec<(usize, f64)> = Vec::with_capacity(ranked.len());
    let (mut tp, mut fp) = (0usize, 0usize);
    for (_, outcome) in &ranked {
        match outcome {
            Outcome::TruePositive => tp += 1,
            _ => fp += 1,
        }
        points.push((tp, tp as f64 / (tp + fp) as f64));
    }
    let mut best_after = vec![0.0f64; points.len() + 1];
    for i in (0..points.len()).rev() {
        best_after[i] = best_after[i + 1].max(points[i].1);
    }
    for (k, p) in precision.iter_mut().enumerate() {
        let needed = (k + 1) * n_gt;
        if let Some(i) = points
            .iter()
            .position(|(tp, _)| tp * RECALL_POSITIONS >= needed)
        {
            *p = best_after[i];
        }
    }
    let ap = precision.iter().sum::<f64>() / RECALL_POSITIONS as f64;
    Ok(PrCurve {
        precision,
        ap: ap.clamp(0.0, 1.0),
    })
}

/// `(mode, threshold)` columns of the summary table.
pub const TABLE_COLUMNS: [(EvalMode, f64); 4] = [
    (EvalMode::ThreeD, 0.7),
    (EvalMode::Bev, 0.7),
    (EvalMode::ThreeD, 0.5),
    (EvalMode::Bev, 0.5),
];

/// AP for every difficulty (rows) and `columns` entry, as percentages.
pub fn evaluate_table(
    frames: &[EvalFrame],
    class: &str,
    columns: &[(EvalMode, f64)],
    dont_care: bool,
) -> Result<Vec<(Difficulty, Vec<f64>)>> {
    Difficulty::ALL
        .into_iter()
        .map(|d| {
            let row = columns
                .iter()
                .map(|&(mode, thr)| {
                    let mut cfg = EvalConfig::new(class, mode, thr, d);
                    cfg.dont_care = dont_care;
                    ap40(frames, &cfg).map(|c| c.ap * 100.0)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((d, row))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn car(x: f64) -> Box3D {
        Box3D::new("Car", [x, 1.5, 20.0], [1.5, 1.6, 3.9], 0.0)
            .with_bbox([100.0, 100.0, 200.0, 160.0])
    }

    fn cfg() -> EvalConfig {
        EvalConfig::new("Car", EvalMode::ThreeD, 0.7, Difficulty::Moderate).without_dont_care()
    }

    fn frame(id: &str, gt: Vec<Box3D>, pred: Vec<Box3D>) -> EvalFrame {
        EvalFrame {
            id: id.into(),
            ground_truth: gt,
            predictions: pred,
        }
    }

    #[test]
    fn difficulty_examples() {
        let mut b = car(0.0).with_bbox([0.0, 0.0, 10.0, 50.0]);
        assert_eq!(assign_difficulty(&b), Some(Difficulty::Easy));
        b.bbox = [0.0, 0.0, 10.0, 30.0];
        b.occlusion = 1;
        b.truncation = 0.2;
        assert_eq!(assign_difficulty(&b), Some(Difficulty::Moderate));
        b.occlusion = 2;
        assert_eq!(assign_difficulty(&b), Some(Difficulty::Hard));
        b.bbox = [0.0, 0.0, 10.0, 10.0];
        assert_eq!(assign_difficulty(&b), None);
    }

    #[test]
    fn perfect_detector() {
        let frames = vec![
            frame(
                "0",
                vec![car(0.0), car(5.0)],
                vec![car(0.0).with_score(0.9), car(5.0).with_score(0.3)],
            ),
            frame("1", vec![car(-4.0)], vec![car(-4.0).with_score(0.5)]),
        ];
        let curve = ap40(&frames, &cfg()).unwrap();
        assert_eq!(curve.ap, 1.0);
        assert!(curve.precision.iter().all(|&p| p == 1.0));
    }

    #[test]
    fn hand_rolled_curve() {
        let frames = vec![frame(
            "0",
            vec![car(0.0), car(5.0)],
            vec![
                car(0.0).with_score(0.9),
                car(10.0).with_score(0.8),
                car(5.0).with_score(0.7),
            ],
        )];
        let ap = ap40(&frames, &cfg()).unwrap().ap;
        assert!((ap - (20.0 + 20.0 * 2.0 / 3.0) / 40.0).abs() < 1e-6);
    }

    #[test]
    fn no_predictions_and_no_gt() {
        assert_eq!(
            ap40(&[frame("0", vec![car(0.0)], vec![])], &cfg())
                .unwrap()
                .ap,
            0.0
        );
        assert_eq!(
            ap40(
                &[frame("0", vec![], vec![car(0.0).with_score(1.0)])],
                &cfg()
            )
            .unwrap()
            .ap,
            0.0
        );
        assert_eq!(ap40(&[], &cfg()).unwrap().ap, 0.0);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let frames = vec![frame("7", vec![], vec![]), frame("7", vec![], vec![])];
        assert!(matches!(ap40(&frames, &cfg()), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn threshold_validated() {
        let mut c = cfg();
        c.iou_threshold = 0.0;
        assert!(ap40(&[], &c).is_err());
    }

    #[test]
    fn duplicate_detection_is_false_positive() {
        let frames = vec![frame(
            "0",
            vec![car(0.0)],
            vec![car(0.0).with_score(0.9), car(0.0).with_score(0.8)],
        )];
        let curve = ap40(&frames, &cfg()).unwrap();
        assert_eq!(curve.ap, 1.0);
        let frames = vec![frame(
            "0",
            vec![car(0.0)],
            vec![car(0.0).with_score(0.8), car(9.0).with_score(0.9)],
        )];
        assert_eq!(ap40(&frames, &cfg()).unwrap().ap, 0.5);
    }

    #[test]
    fn van_and_dont_care_are_ignored() {
        let mut c = cfg();
        c.dont_care = true;
        let van = Box3D {
            class: "Van".into(),
            ..car(8.0)
        };
        let dc = Box3D {
            class: "DontCare".into(),
            ..car(-8.0)
        }
        .with_bbox([300.0, 100.0, 400.0, 160.0]);
        let in_dc = car(-20.0)
            .with_bbox([310.0, 105.0, 390.0, 150.0])
            .with_score(0.95);
        let frames = vec![frame(
            "0",
            vec![car(0.0), van, dc],
            vec![car(8.0).with_score(0.99), in_dc, car(0.0).with_score(0.5)],
        )];
        assert_eq!(ap40(&frames, &c).unwrap().ap, 1.0);
        c.dont_care = false;
        assert!(ap40(&frames, &c).unwrap().ap < 1.0);
    }

    #[test]
    fn harder_gt_ignored_at_easier_level() {
        let mut hard = car(5.0);
        hard.occlusion = 2;
        let frames = vec![frame(
            "0",
            vec![car(0.0), hard],
            vec![car(0.0).with_score(0.9), car(5.0).with_score(0.8)],
        )];
        let mut c = EvalConfig::new("Car", EvalMode::ThreeD, 0.7, Difficulty::Easy);
        assert_eq!(ap40(&frames, &c).unwrap().ap, 1.0);
        c.difficulty = Difficulty::Hard;
        assert_eq!(ap40(&frames, &c).unwrap().ap, 1.0);
        let frames = vec![frame(
            "0",
            frames[0].ground_truth.clone(),
            vec![car(0.0).with_score(0.9)],
        )];
        assert_eq!(ap40(&frames, &c).unwrap().ap, 0.5);
    }

    #[test]
    fn table_shape() {
        let frames = vec![frame("0", vec![car(0.0)], vec![car(0.0).with_score(0.9)])];
        let table = evaluate_table(&frames, "Car", &TABLE_COLUMNS, true).unwrap();
        assert_eq!(table.len(), 3);
        assert!(table.iter().all(|(_, row)| row == &vec![100.0; 4]));
    }
}
