//! Segmentation metrics over flattened per-node labelings.

use serde::Serialize;

use crate::error::{Error, Result};

/// A metric value plus whether it was well defined. Undefined ratios (0/0)
/// report `value = 0.0` and `defined = false`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub value: f64,
    pub defined: bool,
}

impl Score {
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            Score {
                value: 0.0,
                defined: false,
            }
        } else {
            Score {
                value: num as f64 / den as f64,
                defined: true,
            }
        }
    }
}

fn check_lengths(truth: &[usize], pred: &[usize]) -> Result<()> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    Ok(())
}

/// `(tp, fp, fn)` for one class.
fn confusion(truth: &[usize], pred: &[usize], class: usize) -> (usize, usize, usize) {
    let mut counts = (0, 0, 0);
    for (&t, &p) in truth.iter().zip(pred) {
        match (t == class, p == class) {
            (true, true) => counts.0 += 1,
            (false, true) => counts.1 += 1,
            (true, false) => counts.2 += 1,
            (false, false) => {}
        }
    }
    counts
}

/// Fraction of nodes labeled correctly. An empty labeling scores 1.
pub fn pixel_accuracy(truth: &[usize], pred: &[usize]) -> Result<f64> {
    check_lengths(truth, pred)?;
    if truth.is_empty() {
        return Ok(1.0);
    }
    let hits = truth.iter().zip(pred).filter(|(t, p)| t == p).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// `TP / (TP + FP + FN)` for `class`; undefined if the class appears in
/// neither labeling.
pub fn intersection_over_union(truth: &[usize], pred: &[usize], class: usize) -> Result<Score> {
    check_lengths(truth, pred)?;
    let (tp, fp, fn_) = confusion(truth, pred, class);
    Ok(Score::ratio(tp, tp + fp + fn_))
}

pub fn precision(truth: &[usize], pred: &[usize], class: usize) -> Result<Score> {
    check_lengths(truth, pred)?;
    let (tp, fp, _) = confusion(truth, pred, class);
    Ok(Score::ratio(tp, tp + fp))
}

pub fn recall(truth: &[usize], pred: &[usize], class: usize) -> Result<Score> {
    check_lengths(truth, pred)?;
    let (tp, _, fn_) = confusion(truth, pred, class);
    Ok(Score::ratio(tp, tp + fn_))
}

/// `2pr / (p + r)`; undefined (value 0) when `p + r = 0`.
pub fn f_score(truth: &[usize], pred: &[usize], class: usize) -> Result<Score> {
    check_lengths(truth, pred)?;
    let (tp, fp, fn_) = confusion(truth, pred, class);
    // 2pr/(p+r) simplifies to 2TP / (2TP + FP + FN) whenever it is defined.
    if tp == 0 {
        return Ok(Score {
            value: 0.0,
            defined: false,
        });
    }
    Ok(Score::ratio(2 * tp, 2 * tp + fp + fn_))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    /// 0-based class index.
    pub class: usize,
    pub support: usize,
    pub iou: Score,
    pub f_score: Score,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// One row per class present in the truth or the prediction.
    pub per_class: Vec<ClassMetrics>,
    /// Mean of the per-class rows (undefined values count as 0).
    pub mean_iou: f64,
    pub mean_f_score: f64,
}

pub fn evaluate(truth: &[usize], pred: &[usize], num_classes: usize) -> Result<Evaluation> {
    check_lengths(truth, pred)?;
    let accuracy = pixel_accuracy(truth, pred)?;
    let mut per_class = Vec::new();
    for class in 0..num_classes {
        let (tp, fp, fn_) = confusion(truth, pred, class);
        if tp + fp + fn_ == 0 {
            continue;
        }
        per_class.push(ClassMetrics {
            class,
            support: tp + fn_,
            iou: intersection_over_union(truth, pred, class)?,
            f_score: f_score(truth, pred, class)?,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| -> f64 {
        if per_class.is_empty() {
            0.0
        } else {
            per_class.iter().map(f).sum::<f64>() / per_class.len() as f64
        }
    };
    let mean_iou = mean(|m| m.iou.value);
    let mean_f_score = mean(|m| m.f_score.value);
    Ok(Evaluation {
        accuracy,
        per_class,
        mean_iou,
        mean_f_score,
    })
}
