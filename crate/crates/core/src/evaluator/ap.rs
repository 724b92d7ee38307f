//! Average precision over score-ranked, globally pooled predictions.

use std::collections::BTreeMap;

use super::matching::{greedy_match, iou_matrix, score_order, GtView, PredView};
use super::EvalError;

/// The ten IoU thresholds 0.50, 0.55, …, 0.95 of the swept metric, generated
/// from integers so comparisons against exact pixel-count ratios behave
/// predictably.
pub const AP_SWEEP_THRESHOLDS: [f64; 10] = [
    0.50, 0.55, 0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90, 0.95,
];

/// Per-prediction outcome flags at one threshold, pooled across images in
/// input order. Matching runs per image; ranking is global.
fn pooled_tp_flags(
    preds: &[PredView],
    gts: &[GtView],
    iou_threshold: f64,
) -> Result<Vec<(f64, bool)>, EvalError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(EvalError::InvalidThreshold(iou_threshold));
    }
    // group indexes by image id, preserving input order within groups
    let mut pred_groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, p) in preds.iter().enumerate() {
        pred_groups.entry(p.image_id).or_default().push(i);
    }
    let mut gt_groups: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, g) in gts.iter().enumerate() {
        gt_groups.entry(g.image_id).or_default().push(i);
    }

    let mut flags: Vec<Option<(f64, bool)>> = vec![None; preds.len()];
    for (&image_id, pred_idx) in &pred_groups {
        let image_preds: Vec<PredView> = pred_idx.iter().map(|&i| preds[i].clone()).collect();
        let empty = Vec::new();
        let gt_idx = gt_groups.get(&image_id).unwrap_or(&empty);
        let image_gts: Vec<GtView> = gt_idx.iter().map(|&i| gts[i].clone()).collect();

        let order = score_order(&image_preds);
        let matrix = iou_matrix(&image_preds, &image_gts)?;
        let matched = greedy_match(&order, &matrix, image_gts.len(), iou_threshold);
        for (local, &global) in pred_idx.iter().enumerate() {
            flags[global] = Some((preds[global].score, matched[local].is_some()));
        }
    }
    Ok(flags.into_iter().map(|f| f.expect("every prediction flagged")).collect())
}

/// 101-point interpolated AP from pooled (score, is_tp) flags.
pub(crate) fn interpolated_ap(mut flags: Vec<(f64, bool)>, n_gt: usize) -> f64 {
    // global ranking: score descending, stable in input order
    let mut order: Vec<usize> = (0..flags.len()).collect();
    order.sort_by(|&a, &b| flags[b].0.partial_cmp(&flags[a].0).expect("finite").then(a.cmp(&b)));
    let ranked: Vec<bool> = order.iter().map(|&i| flags[i].1).collect();
    flags.clear();

    let mut precisions = Vec::with_capacity(ranked.len());
    let mut recalls = Vec::with_capacity(ranked.len());
    let mut tp = 0u64;
    let mut fp = 0u64;
    for &is_tp in &ranked {
        if is_tp {
            tp += 1;
        } else {
            fp += 1;
        }
        precisions.push(tp as f64 / (tp + fp) as f64);
        recalls.push(tp as f64 / n_gt as f64);
    }

    // precision envelope: monotone non-increasing from the right
    for k in (0..precisions.len().saturating_sub(1)).rev() {
        precisions[k] = precisions[k].max(precisions[k + 1]);
    }

    // sample at recall levels 0.00, 0.01, ..., 1.00
    let mut total = 0.0;
    let mut k = 0usize;
    for level in 0..=100u32 {
        let r = level as f64 / 100.0;
        while k < recalls.len() && recalls[k] < r {
            k += 1;
        }
        if k < recalls.len() {
            total += precisions[k];
        }
    }
    total / 101.0
}

/// AP at one IoU threshold over all images of a split.
///
/// Inputs are one class's predictions and ground truths; matching is
/// class-aware regardless. Returns `None` when the class has no ground-truth
/// instances (undefined, distinct from zero).
pub fn average_precision(
    preds: &[PredView],
    gts: &[GtView],
    iou_threshold: f64,
) -> Result<Option<f64>, EvalError> {
    if gts.is_empty() {
        // still validate the threshold for a total contract
        if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
            return Err(EvalError::InvalidThreshold(iou_threshold));
        }
        return Ok(None);
    }
    let flags = pooled_tp_flags(preds, gts, iou_threshold)?;
    Ok(Some(interpolated_ap(flags, gts.len())))
}

/// Mean AP over the ten thresholds 0.50..0.95; `None` when the class has no
/// ground truth at any threshold.
pub fn ap_range(preds: &[PredView], gts: &[GtView]) -> Result<Option<f64>, EvalError> {
    let mut sum = 0.0;
    for &t in &AP_SWEEP_THRESHOLDS {
        match average_precision(preds, gts, t)? {
            Some(ap) => sum += ap,
            None => return Ok(None),
        }
    }
    Ok(Some(sum / AP_SWEEP_THRESHOLDS.len() as f64))
}
