use std::f64::consts::PI;

use plidar::metrics::{ap40, bev_iou, iou_3d, Difficulty, EvalConfig, EvalFrame, EvalMode};
use plidar::Box3D;
use proptest::prelude::*;

fn boxes() -> impl Strategy<Value = Box3D> {
    (
        -5.0..5.0f64,
        0.0..2.0f64,
        -5.0..5.0f64,
        0.5..2.0f64,
        0.3..3.0f64,
        0.3..5.0f64,
        -PI..PI,
    )
        .prop_map(|(x, y, z, h, w, l, ry)| Box3D::new("Car", [x, y, z], [h, w, l], ry))
}

fn frames() -> impl Strategy<Value = Vec<EvalFrame>> {
    let frame = (
        prop::collection::vec(boxes(), 0..5),
        prop::collection::vec((boxes(), 0.0..1.0f64), 0..6),
        prop::collection::vec((any::<prop::sample::Index>(), 0.0..1.0f64), 0..4),
    )
        .prop_map(|(gt, fps, hits)| {
            let mut predictions: Vec<Box3D> =
                fps.into_iter().map(|(b, s)| b.with_score(s)).collect();
            if !gt.is_empty() {
                predictions.extend(
                    hits.into_iter()
                        .map(|(i, s)| i.get(&gt).clone().with_score(s)),
                );
            }
            (gt, predictions)
        });
    prop::collection::vec(frame, 1..4).prop_map(|fs| {
        fs.into_iter()
            .enumerate()
            .map(|(i, (ground_truth, predictions))| EvalFrame {
                id: i.to_string(),
                ground_truth,
                predictions,
            })
            .collect()
    })
}

fn cfg() -> EvalConfig {
    EvalConfig::new("Car", EvalMode::Bev, 0.5, Difficulty::Hard).without_dont_care()
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded(a in boxes(), b in boxes()) {
        for f in [bev_iou, iou_3d] {
            let (ab, ba) = (f(&a, &b), f(&b, &a));
            prop_assert!((ab - ba).abs() <= 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(f(&a, &a), 1.0);
        }
    }

    #[test]
    fn iou_3d_equals_bev_at_equal_heights(a in boxes(), b in boxes()) {
        let mut b = b;
        b.location[1] = a.location[1];
        b.dimensions[0] = a.dimensions[0];
        prop_assert!((iou_3d(&a, &b) - bev_iou(&a, &b)).abs() <= 1e-12);
    }

    #[test]
    fn lowest_false_positive_never_raises_ap(frames in frames(), far in 100.0..200.0f64) {
        let base = ap40(&frames, &cfg()).unwrap();
        let mut more = frames.clone();
        let min = frames.iter().flat_map(|f| f.predictions.iter().map(|p| p.score.unwrap())).fold(1.0, f64::min);
        more[0].predictions.push(Box3D::new("Car", [far, 0.0, far], [1.0, 1.0, 1.0], 0.0).with_score(min - 0.5));
        prop_assert!(ap40(&more, &cfg()).unwrap().ap <= base.ap);
        prop_assert!((0.0..=1.0).contains(&base.ap));
        prop_assert!(base.precision.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn removing_a_false_positive_never_lowers_ap(frames in frames(), score in 0.0..1.0f64, far in 100.0..200.0f64) {
        let mut with_fp = frames.clone();
        with_fp[0].predictions.insert(0, Box3D::new("Car", [far, 0.0, far], [1.0, 1.0, 1.0], 0.0).with_score(score));
        prop_assert!(ap40(&frames, &cfg()).unwrap().ap >= ap40(&with_fp, &cfg()).unwrap().ap);
    }
}
