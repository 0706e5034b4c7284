//! Detection-quality evaluation: IoU, greedy confidence-ordered matching,
//! precision-recall curves, average precision, and mAP@50.
//!
//! The protocol: detections sort by descending confidence (ties keep input
//! order); each detection greedily claims the unmatched same-image,
//! same-class ground truth with the highest IoU at or above the threshold;
//! every ground truth matches at most once. Cumulative TP/FP counts trace
//! the PR curve, and AP integrates the precision envelope over recall
//! (all-points interpolation by default, 11-point behind a flag). mAP
//! averages AP over the classes present in the ground truth; classes that
//! appear only in predictions contribute false positives but no AP term.

mod io;

use serde::Serialize;
use thiserror::Error;

pub use io::{
    load_detections_dir, load_ground_truth_dir, parse_detection_line, parse_ground_truth_line,
    pr_curve_csv, write_pr_csv,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{path}:{line}: expected {expected} fields, got {got}")]
    FieldCount {
        path: String,
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("{path}:{line}: invalid number {token:?}")]
    BadNumber {
        path: String,
        line: usize,
        token: String,
    },
    #[error("{path}:{line}: {what} {value} out of range {range}")]
    OutOfRange {
        path: String,
        line: usize,
        what: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("curve inconsistency: {tp} true positives with zero ground truths")]
    InconsistentCurve { tp: usize },
    #[error("invalid box: {0}")]
    InvalidBox(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Axis-aligned box in normalized center format: `(cx, cy, w, h)`,
/// centers in `[0, 1]`, sizes in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundingBox {
    pub cx: f64,
    pub cy: f64,
    pub w: f64,
    pub h: f64,
}

impl BoundingBox {
    pub fn new(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self, EvalError> {
        if !(0.0..=1.0).contains(&cx) || !(0.0..=1.0).contains(&cy) {
            return Err(EvalError::InvalidBox(format!(
                "center ({cx}, {cy}) outside [0, 1]"
            )));
        }
        if !(w > 0.0 && w <= 1.0 && h > 0.0 && h <= 1.0) {
            return Err(EvalError::InvalidBox(format!(
                "size ({w}, {h}) outside (0, 1]"
            )));
        }
        Ok(Self { cx, cy, w, h })
    }

    fn corners(&self) -> (f64, f64, f64, f64) {
        (
            self.cx - self.w / 2.0,
            self.cy - self.h / 2.0,
            self.cx + self.w / 2.0,
            self.cy + self.h / 2.0,
        )
    }
}

/// Intersection over union; 0 for disjoint boxes, exactly 1 for identical
/// ones (areas derive from the same corner arithmetic as the overlap).
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let (ax1, ay1, ax2, ay2) = a.corners();
    let (bx1, by1, bx2, by2) = b.corners();
    let iw = (ax2.min(bx2) - ax1.max(bx1)).max(0.0);
    let ih = (ay2.min(by2) - ay1.max(by1)).max(0.0);
    let inter = iw * ih;
    let area_a = (ax2 - ax1) * (ay2 - ay1);
    let area_b = (bx2 - bx1) * (by2 - by1);
    let union = area_a + area_b - inter;
    inter / union
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BoundingBox,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Detection {
    pub image_id: String,
    pub class_id: usize,
    pub bbox: BoundingBox,
    pub confidence: f32,
}

/// One matched detection: its index into the input slice and whether it
/// claimed a ground truth. Emitted in confidence order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetMatch {
    pub det_index: usize,
    pub tp: bool,
}

/// Greedy matching over the detections, in descending-confidence order
/// (ties keep input order). Each detection may claim the unmatched
/// same-image, same-class ground truth with the highest IoU >= threshold
/// (IoU ties resolve to the earliest ground truth).
pub fn match_detections(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
) -> Vec<DetMatch> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| {
        dets[b]
            .confidence
            .total_cmp(&dets[a].confidence)
            .then(a.cmp(&b))
    });

    let mut gt_taken = vec![false; gts.len()];
    let mut out = Vec::with_capacity(dets.len());
    for &di in &order {
        let d = &dets[di];
        let mut best: Option<(usize, f64)> = None;
        for (gi, gt) in gts.iter().enumerate() {
            if gt_taken[gi] || gt.image_id != d.image_id || gt.class_id != d.class_id {
                continue;
            }
            let overlap = iou(&d.bbox, &gt.bbox);
            if overlap < iou_thresh {
                continue;
            }
            let better = match best {
                None => true,
                Some((_, b)) => overlap > b,
            };
            if better {
                best = Some((gi, overlap));
            }
        }
        let tp = match best {
            Some((gi, _)) => {
                gt_taken[gi] = true;
                true
            }
            None => false,
        };
        out.push(DetMatch { det_index: di, tp });
    }
    out
}

/// A precision-recall curve: one point per detection prefix, recall
/// non-decreasing. `class_id` is `None` for the all-class pooled curve.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PrCurve {
    pub class_id: Option<usize>,
    pub num_gt: usize,
    pub points: Vec<PrPoint>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PrPoint {
    pub recall: f64,
    pub precision: f64,
}

/// Cumulative precision/recall over an ordered TP/FP sequence.
pub fn pr_curve(flags: &[bool], num_gt: usize) -> Result<PrCurve, EvalError> {
    let tp_total = flags.iter().filter(|&&f| f).count();
    if num_gt == 0 && tp_total > 0 {
        return Err(EvalError::InconsistentCurve { tp: tp_total });
    }
    let mut points = Vec::with_capacity(flags.len());
    let mut tp = 0usize;
    let mut fp = 0usize;
    for &f in flags {
        if f {
            tp += 1;
        } else {
            fp += 1;
        }
        let recall = if num_gt == 0 {
            0.0
        } else {
            tp as f64 / num_gt as f64
        };
        points.push(PrPoint {
            recall,
            precision: tp as f64 / (tp + fp) as f64,
        });
    }
    Ok(PrCurve {
        class_id: None,
        num_gt,
        points,
    })
}

/// AP interpolation rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMethod {
    /// Integrate the precision envelope over all distinct recall steps.
    AllPoints,
    /// Mean of the envelope sampled at recalls 0.0, 0.1, ..., 1.0.
    ElevenPoint,
}

/// Area under the interpolated precision envelope.
pub fn average_precision(curve: &PrCurve, method: ApMethod) -> f64 {
    if curve.points.is_empty() {
        return 0.0;
    }
    // Envelope from the right: p~(r) = max precision at recall >= r.
    let n = curve.points.len();
    let mut env = vec![0.0f64; n];
    let mut running = 0.0f64;
    for (e, point) in env.iter_mut().zip(&curve.points).rev() {
        running = running.max(point.precision);
        *e = running;
    }
    match method {
        ApMethod::AllPoints => {
            // Credit each recall step at the first point of its plateau,
            // where env already holds the max precision at recall >= r.
            let mut ap = 0.0;
            let mut prev_recall = 0.0;
            for i in 0..n {
                let r = curve.points[i].recall;
                if r > prev_recall {
                    ap += (r - prev_recall) * env[i];
                    prev_recall = r;
                }
            }
            ap
        }
        ApMethod::ElevenPoint => {
            let mut total = 0.0;
            for step in 0..=10 {
                let r = step as f64 / 10.0;
                let p = curve
                    .points
                    .iter()
                    .zip(&env)
                    .find(|(pt, _)| pt.recall >= r)
                    .map_or(0.0, |(_, &e)| e);
                total += p;
            }
            total / 11.0
        }
    }
}

/// Per-class outcome: AP is `None` for classes with detections but no
/// ground truth (they are excluded from the mAP mean).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassEval {
    pub class_id: usize,
    pub num_gt: usize,
    pub tp: usize,
    pub fp: usize,
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub iou_threshold: f64,
    pub ap_method: ApMethod,
    pub per_class: Vec<ClassEval>,
    /// Mean AP over classes with at least one ground truth; 0 when there
    /// are none.
    pub map50: f64,
    pub curves: Vec<PrCurve>,
    /// Micro-averaged curve over all classes jointly.
    pub pooled_curve: PrCurve,
}

/// Evaluate detections against ground truth at one IoU threshold.
pub fn evaluate(
    dets: &[Detection],
    gts: &[GroundTruth],
    iou_thresh: f64,
    method: ApMethod,
) -> EvalReport {
    let mut class_ids: Vec<usize> = gts.iter().map(|g| g.class_id).collect();
    class_ids.extend(dets.iter().map(|d| d.class_id));
    class_ids.sort_unstable();
    class_ids.dedup();

    let mut per_class = Vec::new();
    let mut curves = Vec::new();
    // (confidence, global input index, tp) for the pooled curve.
    let mut pooled: Vec<(f32, usize, bool)> = Vec::new();

    for &class_id in &class_ids {
        let class_dets: Vec<(usize, &Detection)> = dets
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == class_id)
            .collect();
        let class_gts: Vec<GroundTruth> = gts
            .iter()
            .filter(|g| g.class_id == class_id)
            .cloned()
            .collect();
        let local: Vec<Detection> = class_dets.iter().map(|(_, d)| (*d).clone()).collect();
        let matches = match_detections(&local, &class_gts, iou_thresh);
        let flags: Vec<bool> = matches.iter().map(|m| m.tp).collect();
        let tp = flags.iter().filter(|&&f| f).count();
        let fp = flags.len() - tp;
        for m in &matches {
            let global_index = class_dets[m.det_index].0;
            pooled.push((local[m.det_index].confidence, global_index, m.tp));
        }

        let num_gt = class_gts.len();
        if num_gt > 0 {
            let mut curve = pr_curve(&flags, num_gt).expect("tp <= num_gt by construction");
            curve.class_id = Some(class_id);
            let ap = average_precision(&curve, method);
            per_class.push(ClassEval {
                class_id,
                num_gt,
                tp,
                fp,
                ap: Some(ap),
            });
            curves.push(curve);
        } else {
            per_class.push(ClassEval {
                class_id,
                num_gt: 0,
                tp: 0,
                fp,
                ap: None,
            });
        }
    }

    let aps: Vec<f64> = per_class.iter().filter_map(|c| c.ap).collect();
    let map50 = if aps.is_empty() {
        0.0
    } else {
        aps.iter().sum::<f64>() / aps.len() as f64
    };

    pooled.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let pooled_flags: Vec<bool> = pooled.iter().map(|&(_, _, tp)| tp).collect();
    let pooled_curve =
        pr_curve(&pooled_flags, gts.len()).expect("pooled tp <= total gt by construction");

    EvalReport {
        iou_threshold: iou_thresh,
        ap_method: method,
        per_class,
        map50,
        curves,
        pooled_curve,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bbox(cx: f64, cy: f64, w: f64, h: f64) -> BoundingBox {
        BoundingBox::new(cx, cy, w, h).unwrap()
    }

    fn gt(image: &str, class: usize, b: BoundingBox) -> GroundTruth {
        GroundTruth {
            image_id: image.to_string(),
            class_id: class,
            bbox: b,
        }
    }

    fn det(image: &str, class: usize, b: BoundingBox, conf: f32) -> Detection {
        Detection {
            image_id: image.to_string(),
            class_id: class,
            bbox: b,
            confidence: conf,
        }
    }

    #[test]
    fn iou_identical_and_disjoint() {
        let a = bbox(0.5, 0.5, 0.2, 0.2);
        assert_eq!(iou(&a, &a), 1.0);
        let b = bbox(0.1, 0.1, 0.05, 0.05);
        assert_eq!(iou(&a, &b), 0.0);
    }

    #[test]
    fn iou_half_width_offset_is_one_third() {
        // Squares of side 0.4 offset by half their width:
        // intersection 0.2*0.4 = 0.08, union 0.32 - 0.08 = 0.24.
        let a = bbox(0.4, 0.5, 0.4, 0.4);
        let b = bbox(0.6, 0.5, 0.4, 0.4);
        assert!((iou(&a, &b) - 1.0 / 3.0).abs() <= 1e-12);
    }

    #[test]
    fn single_perfect_match_is_tp() {
        let g = vec![gt("img", 0, bbox(0.5, 0.5, 0.2, 0.2))];
        let d = vec![det("img", 0, bbox(0.5, 0.5, 0.2, 0.2), 0.9)];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(m.len(), 1);
        assert!(m[0].tp);
    }

    #[test]
    fn duplicate_detection_cannot_rematch() {
        let g = vec![gt("img", 0, bbox(0.5, 0.5, 0.2, 0.2))];
        let d = vec![
            det("img", 0, bbox(0.5, 0.5, 0.2, 0.2), 0.9),
            det("img", 0, bbox(0.51, 0.5, 0.2, 0.2), 0.8),
        ];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(
            m.iter().map(|x| x.tp).collect::<Vec<_>>(),
            vec![true, false]
        );
    }

    #[test]
    fn threshold_is_inclusive() {
        // IoU exactly 0.5: boxes 0.2x0.2 overlapping two-thirds horizontally.
        let g = vec![gt("img", 0, bbox(0.5, 0.5, 0.3, 0.3))];
        let d_at = det("img", 0, bbox(0.5, 0.5, 0.3, 0.3), 0.9);
        assert!(match_detections(&[d_at], &g, 1.0)[0].tp, ">= must include 1.0");

        // IoU just below threshold is a FP.
        let d_below = det("img", 0, bbox(0.62, 0.5, 0.3, 0.3), 0.9);
        let overlap = iou(&d_below.bbox, &g[0].bbox);
        assert!(overlap < 0.5 && overlap > 0.4);
        assert!(!match_detections(&[d_below], &g, 0.5)[0].tp);
    }

    #[test]
    fn matching_respects_image_and_class() {
        let g = vec![gt("a", 0, bbox(0.5, 0.5, 0.2, 0.2))];
        let wrong_image = det("b", 0, bbox(0.5, 0.5, 0.2, 0.2), 0.9);
        let wrong_class = det("a", 1, bbox(0.5, 0.5, 0.2, 0.2), 0.9);
        assert!(!match_detections(&[wrong_image], &g, 0.5)[0].tp);
        assert!(!match_detections(&[wrong_class], &g, 0.5)[0].tp);
    }

    #[test]
    fn confidence_ties_keep_input_order() {
        let g = vec![gt("img", 0, bbox(0.5, 0.5, 0.2, 0.2))];
        let d = vec![
            det("img", 0, bbox(0.52, 0.5, 0.2, 0.2), 0.7),
            det("img", 0, bbox(0.5, 0.5, 0.2, 0.2), 0.7),
        ];
        let m = match_detections(&d, &g, 0.5);
        assert_eq!(m[0].det_index, 0);
        assert!(m[0].tp, "first in file order wins the tie");
        assert!(!m[1].tp);
    }

    #[test]
    fn pr_curve_hand_examples() {
        let c = pr_curve(&[true], 1).unwrap();
        assert_eq!(c.points, vec![PrPoint { recall: 1.0, precision: 1.0 }]);

        let c = pr_curve(&[false, true], 1).unwrap();
        assert_eq!(
            c.points,
            vec![
                PrPoint { recall: 0.0, precision: 0.0 },
                PrPoint { recall: 1.0, precision: 0.5 },
            ]
        );

        let c = pr_curve(&[true, true, false], 4).unwrap();
        assert_eq!(c.points[0], PrPoint { recall: 0.25, precision: 1.0 });
        assert_eq!(c.points[1], PrPoint { recall: 0.5, precision: 1.0 });
        assert!((c.points[2].precision - 2.0 / 3.0).abs() <= 1e-12);
        assert_eq!(c.points[2].recall, 0.5);
    }

    #[test]
    fn pr_curve_zero_gt() {
        assert!(pr_curve(&[], 0).unwrap().points.is_empty());
        assert!(matches!(
            pr_curve(&[true], 0),
            Err(EvalError::InconsistentCurve { tp: 1 })
        ));
        // FP-only with no ground truth is representable.
        let c = pr_curve(&[false, false], 0).unwrap();
        assert!(c.points.iter().all(|p| p.recall == 0.0 && p.precision == 0.0));
    }

    #[test]
    fn ap_hand_examples() {
        let perfect = pr_curve(&[true], 1).unwrap();
        assert_eq!(average_precision(&perfect, ApMethod::AllPoints), 1.0);

        let half = pr_curve(&[false, true], 1).unwrap();
        assert_eq!(average_precision(&half, ApMethod::AllPoints), 0.5);

        let empty = pr_curve(&[], 5).unwrap();
        assert_eq!(average_precision(&empty, ApMethod::AllPoints), 0.0);
    }

    #[test]
    fn envelope_is_non_increasing() {
        let flags = [true, false, true, false, false, true];
        let curve = pr_curve(&flags, 4).unwrap();
        let n = curve.points.len();
        let mut env = vec![0.0; n];
        let mut run = 0.0f64;
        for i in (0..n).rev() {
            run = run.max(curve.points[i].precision);
            env[i] = run;
        }
        for w in env.windows(2) {
            assert!(w[0] >= w[1]);
        }
    }

    #[test]
    fn eleven_point_on_known_curve() {
        // [FP, TP] with 1 GT: envelope precision 0.5 everywhere on [0, 1].
        let half = pr_curve(&[false, true], 1).unwrap();
        assert!((average_precision(&half, ApMethod::ElevenPoint) - 0.5).abs() <= 1e-12);
    }

    #[test]
    fn evaluate_perfect_three_classes() {
        let mut gts = Vec::new();
        let mut dets = Vec::new();
        for class in 0..3 {
            let b = bbox(0.3 + 0.1 * class as f64, 0.5, 0.2, 0.2);
            gts.push(gt("img0", class, b));
            dets.push(det("img0", class, b, 0.9));
        }
        let report = evaluate(&dets, &gts, 0.5, ApMethod::AllPoints);
        assert_eq!(report.map50, 1.0);
        assert_eq!(report.curves.len(), 3);
        for c in &report.per_class {
            assert_eq!(c.ap, Some(1.0));
        }
    }

    #[test]
    fn undetected_class_halves_the_mean() {
        let b = bbox(0.5, 0.5, 0.2, 0.2);
        let gts = vec![gt("img0", 0, b), gt("img0", 1, b)];
        let dets = vec![det("img0", 0, b, 0.9)];
        let report = evaluate(&dets, &gts, 0.5, ApMethod::AllPoints);
        assert_eq!(report.map50, 0.5);
    }

    #[test]
    fn detection_only_class_excluded_from_mean() {
        let b = bbox(0.5, 0.5, 0.2, 0.2);
        let gts = vec![gt("img0", 0, b)];
        let dets = vec![det("img0", 0, b, 0.9), det("img0", 7, b, 0.8)];
        let report = evaluate(&dets, &gts, 0.5, ApMethod::AllPoints);
        assert_eq!(report.map50, 1.0);
        let stray = report.per_class.iter().find(|c| c.class_id == 7).unwrap();
        assert_eq!(stray.ap, None);
        assert_eq!(stray.fp, 1);
        // The stray FP still shows up in the pooled curve.
        assert_eq!(report.pooled_curve.points.len(), 2);
    }

    #[test]
    fn confidence_scaling_leaves_ap_unchanged() {
        let b = |cx: f64| bbox(cx, 0.5, 0.1, 0.2);
        let gts = vec![
            gt("i0", 0, b(0.2)),
            gt("i0", 0, b(0.5)),
            gt("i1", 0, b(0.4)),
        ];
        let dets = vec![
            det("i0", 0, b(0.2), 0.9),
            det("i0", 0, b(0.8), 0.6),
            det("i1", 0, b(0.4), 0.4),
            det("i0", 0, b(0.5), 0.3),
        ];
        let r1 = evaluate(&dets, &gts, 0.5, ApMethod::AllPoints);
        let scaled: Vec<Detection> = dets
            .iter()
            .map(|d| Detection {
                confidence: d.confidence * 0.5,
                ..d.clone()
            })
            .collect();
        let r2 = evaluate(&scaled, &gts, 0.5, ApMethod::AllPoints);
        assert_eq!(r1.map50, r2.map50);
    }

    #[test]
    fn empty_inputs_give_zero_map() {
        let report = evaluate(&[], &[], 0.5, ApMethod::AllPoints);
        assert_eq!(report.map50, 0.0);
        assert!(report.pooled_curve.points.is_empty());
    }
}
