//! Dataset-level average precision with 101-point interpolation.

use super::Prediction;
use crate::geometry::Box2D;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApResult {
    /// In `[0, 100]`.
    pub ap: f64,
    pub ground_truth: usize,
    pub predictions: usize,
    /// Set when the dataset had no ground truth; `ap` is then 0.
    pub no_ground_truth: bool,
}

/// AP over images given as (predictions, ground-truth boxes). Predictions
/// from all images are ranked together by confidence; each is greedily
/// matched to the unmatched ground truth of its own image with the highest
/// IOU, counting as a true positive when that IOU is at least `iou_threshold`.
pub fn average_precision(images: &[(Vec<Prediction>, Vec<Box2D>)], iou_threshold: f64) -> ApResult {
    let ground_truth: usize = images.iter().map(|(_, gt)| gt.len()).sum();
    let mut ranked: Vec<(usize, usize)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, (preds, _))| (0..preds.len()).map(move |j| (i, j)))
        .collect();
    let predictions = ranked.len();
    if ground_truth == 0 {
        log::warn!("average precision requested on a dataset without ground truth");
        return ApResult {
            ap: 0.0,
            ground_truth,
            predictions,
            no_ground_truth: true,
        };
    }
    // stable: ties keep image order, then prediction order
    ranked.sort_by(|a, b| {
        let ca = images[a.0].0[a.1].confidence;
        let cb = images[b.0].0[b.1].confidence;
        cb.total_cmp(&ca)
    });

    let mut matched: Vec<Vec<bool>> = images.iter().map(|(_, gt)| vec![false; gt.len()]).collect();
    let mut tp = 0usize;
    let mut curve = Vec::with_capacity(ranked.len());
    for (k, &(i, j)) in ranked.iter().enumerate() {
        let pred = &images[i].0[j];
        let gts = &images[i].1;
        let best = gts
            .iter()
            .enumerate()
            .filter(|(g, _)| !matched[i][*g])
            .map(|(g, b)| (g, pred.bbox.iou(b)))
            .fold(None, |best: Option<(usize, f64)>, (g, iou)| match best {
                Some((_, b)) if b >= iou => best,
                _ => Some((g, iou)),
            });
        if let Some((g, iou)) = best {
            if iou >= iou_threshold {
                matched[i][g] = true;
                tp += 1;
            }
        }
        let precision = tp as f64 / (k + 1) as f64;
        let recall = tp as f64 / ground_truth as f64;
        curve.push((recall, precision));
    }

    // interpolated precision: best precision at any recall ≥ r
    let mut envelope = vec![0.0; curve.len()];
    let mut best: f64 = 0.0;
    for k in (0..curve.len()).rev() {
        best = best.max(curve[k].1);
        envelope[k] = best;
    }
    let mut sum = 0.0;
    for step in 0..=100 {
        let r = f64::from(step) / 100.0;
        // first curve point reaching recall r; recall is non-decreasing
        let k = curve.partition_point(|&(rec, _)| rec < r - 1e-12);
        if k < curve.len() {
            sum += envelope[k];
        }
    }
    ApResult {
        ap: 100.0 * sum / 101.0,
        ground_truth,
        predictions,
        no_ground_truth: false,
    }
}

/// IOU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * f64::from(i)).collect()
}

/// AP averaged over several IOU thresholds.
pub fn average_precision_over(images: &[(Vec<Prediction>, Vec<Box2D>)], thresholds: &[f64]) -> ApResult {
    let runs: Vec<ApResult> = thresholds.iter().map(|&t| average_precision(images, t)).collect();
    let first = runs.first().copied().unwrap_or(ApResult {
        ap: 0.0,
        ground_truth: images.iter().map(|(_, gt)| gt.len()).sum(),
        predictions: images.iter().map(|(p, _)| p.len()).sum(),
        no_ground_truth: false,
    });
    ApResult {
        ap: if runs.is_empty() {
            0.0
        } else {
            runs.iter().map(|r| r.ap).sum::<f64>() / runs.len() as f64
        },
        ..first
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(x: f64) -> Box2D {
        Box2D::new(x, 0.0, x + 10.0, 10.0).unwrap()
    }

    fn p(x: f64, confidence: f64) -> Prediction {
        Prediction { bbox: b(x), confidence }
    }

    #[test]
    fn perfect_and_empty() {
        let gt = vec![b(0.0), b(100.0)];
        let perfect = average_precision(&[(vec![p(0.0, 0.9), p(100.0, 0.8)], gt.clone())], 0.5);
        assert!((perfect.ap - 100.0).abs() < 1e-12);
        let nothing = average_precision(&[(vec![], gt)], 0.5);
        assert_eq!(nothing.ap, 0.0);
        let no_gt = average_precision(&[(vec![p(0.0, 0.9)], vec![])], 0.5);
        assert!(no_gt.no_ground_truth);
        assert_eq!(no_gt.ap, 0.0);
    }

    #[test]
    fn hand_computed_curve() {
        // PR points (1, .5), (.5, .5), (.667, 1): 51 recall steps at
        // precision 1, 50 at 2/3.
        let gt = vec![b(0.0), b(100.0)];
        let preds = vec![p(0.0, 0.9), p(300.0, 0.8), p(100.0, 0.7)];
        let r = average_precision(&[(preds, gt)], 0.5);
        let expected = 100.0 * (51.0 + 50.0 * 2.0 / 3.0) / 101.0;
        assert!((r.ap - expected).abs() < 1e-9, "{}", r.ap);
        assert!((r.ap - 83.498).abs() < 1e-3);
    }

    #[test]
    fn averaged_over_thresholds() {
        // IOU .6 with the only ground truth: a hit below .6, a miss above
        let gt = vec![Box2D::new(0.0, 0.0, 10.0, 10.0).unwrap()];
        let pred = Prediction {
            bbox: Box2D::new(0.0, 0.0, 6.0, 10.0).unwrap(),
            confidence: 0.9,
        };
        let images = [(vec![pred], gt)];
        let t = coco_thresholds();
        assert_eq!(t.len(), 10);
        let r = average_precision_over(&images, &t);
        assert!((r.ap - 30.0).abs() < 1e-9, "{}", r.ap);
    }
}
