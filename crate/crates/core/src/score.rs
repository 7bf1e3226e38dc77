//! Per-example detection score and intervention deltas.
//!
//! Predictions are visited from most to least confident. Each one is aligned
//! with the still-unclaimed ground-truth box it overlaps most and contributes
//! `confidence × IOU`; the box becomes claimed when that IOU exceeds
//! [`CLAIM_IOU`]. The score is the mean contribution.

use crate::detector::Prediction;
use crate::error::{Error, Result};
use crate::geometry::{Box2D, LabelSet};
use serde::{Deserialize, Serialize};

/// Alignment IOU above which a ground-truth box is claimed.
pub const CLAIM_IOU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreTerm {
    pub confidence: f64,
    /// IOU with the aligned ground truth; 0 when none was left.
    pub iou: f64,
    pub claimed: bool,
}

impl ScoreTerm {
    pub fn value(&self) -> f64 {
        self.confidence * self.iou
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub score: f64,
    /// In processing order.
    pub terms: Vec<ScoreTerm>,
    pub unmatched_ground_truth: usize,
}

/// Processing order: confidence descending, then larger area, then input order.
pub fn processing_order(predictions: &[Prediction]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..predictions.len()).collect();
    order.sort_by(|&a, &b| {
        let (pa, pb) = (&predictions[a], &predictions[b]);
        pb.confidence
            .total_cmp(&pa.confidence)
            .then(pb.bbox.area().total_cmp(&pa.bbox.area()))
    });
    order
}

pub fn score_boxes(predictions: &[Prediction], ground_truth: &[Box2D]) -> Result<ScoreReport> {
    for p in predictions {
        if !p.bbox.is_valid() {
            return Err(Error::Invalid(format!("malformed prediction box {:?}", p.bbox)));
        }
        if !(0.0..=1.0).contains(&p.confidence) {
            return Err(Error::Invalid(format!("confidence {} outside [0, 1]", p.confidence)));
        }
    }
    if let Some(b) = ground_truth.iter().find(|b| !b.is_valid()) {
        return Err(Error::Invalid(format!("malformed ground-truth box {b:?}")));
    }
    if predictions.is_empty() {
        let score = if ground_truth.is_empty() { 1.0 } else { 0.0 };
        return Ok(ScoreReport {
            score,
            terms: Vec::new(),
            unmatched_ground_truth: ground_truth.len(),
        });
    }

    let mut claimed = vec![false; ground_truth.len()];
    let mut terms = Vec::with_capacity(predictions.len());
    for i in processing_order(predictions) {
        let p = &predictions[i];
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in ground_truth.iter().enumerate() {
            if claimed[g] {
                continue;
            }
            let iou = p.bbox.iou(gt);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        let term = match best {
            Some((g, iou)) => {
                let claim = iou > CLAIM_IOU;
                if claim {
                    claimed[g] = true;
                }
                ScoreTerm {
                    confidence: p.confidence,
                    iou,
                    claimed: claim,
                }
            }
            None => ScoreTerm {
                confidence: p.confidence,
                iou: 0.0,
                claimed: false,
            },
        };
        terms.push(term);
    }
    let score = terms.iter().map(ScoreTerm::value).sum::<f64>() / terms.len() as f64;
    Ok(ScoreReport {
        score,
        terms,
        unmatched_ground_truth: claimed.iter().filter(|c| !**c).count(),
    })
}

pub fn score_example(predictions: &[Prediction], labels: &LabelSet) -> Result<ScoreReport> {
    let gt: Vec<Box2D> = labels.labels.iter().map(|l| l.bbox).collect();
    score_boxes(predictions, &gt)
}

/// `after − before`.
pub fn delta(score_after: f64, score_before: f64) -> f64 {
    score_after - score_before
}

/// `|delta| ≥ threshold`; the threshold must be positive.
pub fn is_sufficient(delta: f64, threshold: f64) -> Result<bool> {
    if !(threshold > 0.0) {
        return Err(Error::Config(format!("sufficiency threshold must be positive, got {threshold}")));
    }
    Ok(delta.abs() >= threshold)
}
