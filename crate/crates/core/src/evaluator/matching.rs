use crate::dataset::{AnnotationSet, DatasetError, GroundTruthInstance, PredictionInstance};
use crate::geometry::{iou, rle_decode, BinaryMask};

use super::EvalError;

/// Prediction with a materialized mask, the unit the evaluator works on.
#[derive(Debug, Clone)]
pub struct PredView {
    pub image_id: u64,
    pub category_id: u64,
    pub score: f64,
    pub mask: BinaryMask,
}

impl PredView {
    pub fn from_instance(pred: &PredictionInstance) -> Result<Self, DatasetError> {
        let mask = rle_decode(&pred.rle)
            .map_err(|e| DatasetError::Schema {
                field: "rle".into(),
                message: e.to_string(),
            })?;
        Ok(PredView {
            image_id: pred.image_id,
            category_id: pred.category_id,
            score: pred.score,
            mask,
        })
    }
}

/// Ground truth with a materialized mask.
#[derive(Debug, Clone)]
pub struct GtView {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub vessel_ref: Option<u64>,
    pub mask: BinaryMask,
}

impl GtView {
    pub fn from_instance(set: &AnnotationSet, gt: &GroundTruthInstance) -> Result<Self, DatasetError> {
        Ok(GtView {
            id: gt.id,
            image_id: gt.image_id,
            category_id: gt.category_id,
            vessel_ref: gt.vessel_ref,
            mask: set.instance_mask(gt)?,
        })
    }
}

/// Outcome of one-to-one matching on a single image.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    /// (prediction index, ground-truth index, IoU), in match order
    pub pairs: Vec<(usize, usize, f64)>,
    /// false positives
    pub unmatched_preds: Vec<usize>,
    /// false negatives
    pub unmatched_gts: Vec<usize>,
}

impl MatchResult {
    pub fn tp(&self) -> usize {
        self.pairs.len()
    }

    /// One-to-one sanity check: no index appears twice and the partition
    /// covers both sides exactly.
    pub fn assert_one_to_one(&self, n_preds: usize, n_gts: usize) {
        let mut pred_seen = vec![false; n_preds];
        let mut gt_seen = vec![false; n_gts];
        for &(p, g, _) in &self.pairs {
            assert!(!pred_seen[p], "prediction {p} matched twice");
            assert!(!gt_seen[g], "ground truth {g} matched twice");
            pred_seen[p] = true;
            gt_seen[g] = true;
        }
        for &p in &self.unmatched_preds {
            assert!(!pred_seen[p], "prediction {p} both matched and unmatched");
            pred_seen[p] = true;
        }
        for &g in &self.unmatched_gts {
            assert!(!gt_seen[g], "ground truth {g} both matched and unmatched");
            gt_seen[g] = true;
        }
        assert!(pred_seen.iter().all(|&s| s), "prediction unaccounted for");
        assert!(gt_seen.iter().all(|&s| s), "ground truth unaccounted for");
    }
}

/// Score-descending processing order with ties broken by input order.
pub(crate) fn score_order(preds: &[PredView]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| {
        preds[b]
            .score
            .partial_cmp(&preds[a].score)
            .expect("scores are finite")
            .then(a.cmp(&b))
    });
    order
}

/// Pairwise IoU matrix, `matrix[pred][gt]`; `None` entries are class
/// mismatches (never matchable).
pub(crate) fn iou_matrix(
    preds: &[PredView],
    gts: &[GtView],
) -> Result<Vec<Vec<Option<f64>>>, EvalError> {
    let mut matrix = vec![vec![None; gts.len()]; preds.len()];
    for (pi, pred) in preds.iter().enumerate() {
        for (gi, gt) in gts.iter().enumerate() {
            if pred.category_id == gt.category_id {
                matrix[pi][gi] = Some(iou(&pred.mask, &gt.mask)?);
            }
        }
    }
    Ok(matrix)
}

/// Greedy core over a precomputed IoU matrix. Returns `gt_of_pred`.
pub(crate) fn greedy_match(
    order: &[usize],
    matrix: &[Vec<Option<f64>>],
    n_gts: usize,
    threshold: f64,
) -> Vec<Option<(usize, f64)>> {
    let mut gt_taken = vec![false; n_gts];
    let mut gt_of_pred: Vec<Option<(usize, f64)>> = vec![None; matrix.len()];
    for &pi in order {
        let mut best: Option<(usize, f64)> = None;
        for (gi, entry) in matrix[pi].iter().enumerate() {
            let Some(v) = entry else { continue };
            if gt_taken[gi] || *v < threshold {
                continue;
            }
            // strictly higher IoU wins; ties keep the lowest index
            if best.map_or(true, |(_, bv)| *v > bv) {
                best = Some((gi, *v));
            }
        }
        if let Some((gi, v)) = best {
            gt_taken[gi] = true;
            gt_of_pred[pi] = Some((gi, v));
        }
    }
    gt_of_pred
}

/// One-to-one greedy matching within a single image.
///
/// Predictions are processed in descending score order (ties by input
/// order); each takes the unmatched same-class ground truth with the highest
/// IoU at or above `iou_threshold`, ties going to the lowest ground-truth
/// index. Unmatched predictions are false positives, unmatched ground truths
/// false negatives.
pub fn match_instances(
    preds: &[PredView],
    gts: &[GtView],
    iou_threshold: f64,
) -> Result<MatchResult, EvalError> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(EvalError::InvalidThreshold(iou_threshold));
    }
    let mut image_ids = preds
        .iter()
        .map(|p| p.image_id)
        .chain(gts.iter().map(|g| g.image_id));
    if let Some(first) = image_ids.next() {
        if image_ids.any(|id| id != first) {
            return Err(EvalError::MixedImageIds);
        }
    }

    let order = score_order(preds);
    let matrix = iou_matrix(preds, gts)?;
    let gt_of_pred = greedy_match(&order, &matrix, gts.len(), iou_threshold);

    let mut pairs = Vec::new();
    for &pi in &order {
        if let Some((gi, v)) = gt_of_pred[pi] {
            pairs.push((pi, gi, v));
        }
    }
    let matched_gts: Vec<bool> = {
        let mut taken = vec![false; gts.len()];
        for &(_, gi, _) in &pairs {
            taken[gi] = true;
        }
        taken
    };
    let unmatched_preds = (0..preds.len())
        .filter(|&pi| gt_of_pred[pi].is_none())
        .collect();
    let unmatched_gts = (0..gts.len()).filter(|&gi| !matched_gts[gi]).collect();

    Ok(MatchResult {
        pairs,
        unmatched_preds,
        unmatched_gts,
    })
}

/// `P = TP/(TP+FP)`, `R = TP/(TP+FN)`, zero when the denominator is zero.
pub fn precision_recall(tp: u64, fp: u64, fn_: u64) -> (f64, f64) {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    (precision, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::BBox;

    pub(crate) fn block_mask(w: u32, h: u32, b: BBox) -> BinaryMask {
        let mut m = BinaryMask::new(w, h).unwrap();
        for y in b.y_min..b.y_max.min(h) {
            for x in b.x_min..b.x_max.min(w) {
                m.set(x, y, true);
            }
        }
        m
    }

    fn pred(image_id: u64, class: u64, score: f64, b: BBox) -> PredView {
        PredView {
            image_id,
            category_id: class,
            score,
            mask: block_mask(64, 64, b),
        }
    }

    fn gt(id: u64, image_id: u64, class: u64, b: BBox) -> GtView {
        GtView {
            id,
            image_id,
            category_id: class,
            vessel_ref: None,
            mask: block_mask(64, 64, b),
        }
    }

    #[test]
    fn single_overlapping_pred_is_tp() {
        // columns 0..20 vs 5..25 over the same rows: IoU = 15/25 = 0.6
        let p = vec![pred(1, 1, 0.9, BBox::new(5, 0, 25, 10).unwrap())];
        let g = vec![gt(1, 1, 1, BBox::new(0, 0, 20, 10).unwrap())];
        let m = match_instances(&p, &g, 0.5).unwrap();
        assert_eq!(m.tp(), 1);
        assert!(m.unmatched_preds.is_empty());
        assert!(m.unmatched_gts.is_empty());
        assert!((m.pairs[0].2 - 0.6).abs() < 1e-12);
        m.assert_one_to_one(1, 1);
    }

    #[test]
    fn one_to_one_rule_makes_second_pred_fp() {
        let b = BBox::new(0, 0, 20, 10).unwrap();
        let p = vec![
            pred(1, 1, 0.8, BBox::new(1, 0, 21, 10).unwrap()),
            pred(1, 1, 0.9, BBox::new(2, 0, 22, 10).unwrap()),
        ];
        let g = vec![gt(1, 1, 1, b)];
        let m = match_instances(&p, &g, 0.5).unwrap();
        assert_eq!(m.tp(), 1);
        // the higher-score prediction (index 1) takes the ground truth
        assert_eq!(m.pairs[0].0, 1);
        assert_eq!(m.unmatched_preds, vec![0]);
        m.assert_one_to_one(2, 1);
    }

    #[test]
    fn class_mismatch_never_matches() {
        let b = BBox::new(0, 0, 20, 10).unwrap();
        let p = vec![pred(1, 2, 0.9, b)];
        let g = vec![gt(1, 1, 1, b)];
        let m = match_instances(&p, &g, 0.5).unwrap();
        assert_eq!(m.tp(), 0);
        assert_eq!(m.unmatched_preds, vec![0]);
        assert_eq!(m.unmatched_gts, vec![0]);
    }

    #[test]
    fn score_ties_break_by_input_order() {
        let g = vec![gt(1, 1, 1, BBox::new(0, 0, 20, 10).unwrap())];
        let p = vec![
            pred(1, 1, 0.7, BBox::new(0, 0, 20, 10).unwrap()),
            pred(1, 1, 0.7, BBox::new(1, 0, 21, 10).unwrap()),
        ];
        let m = match_instances(&p, &g, 0.5).unwrap();
        assert_eq!(m.pairs[0].0, 0, "equal scores: earlier input wins");
    }

    #[test]
    fn iou_ties_take_lowest_gt_index() {
        // two identical ground truths; the prediction overlaps both equally
        let b = BBox::new(0, 0, 20, 10).unwrap();
        let p = vec![pred(1, 1, 0.9, b)];
        let g = vec![gt(1, 1, 1, b), gt(2, 1, 1, b)];
        let m = match_instances(&p, &g, 0.5).unwrap();
        assert_eq!(m.pairs[0].1, 0);
    }

    #[test]
    fn mixed_image_ids_rejected() {
        let b = BBox::new(0, 0, 20, 10).unwrap();
        let p = vec![pred(1, 1, 0.9, b)];
        let g = vec![gt(1, 2, 1, b)];
        assert!(matches!(
            match_instances(&p, &g, 0.5),
            Err(EvalError::MixedImageIds)
        ));
    }

    #[test]
    fn invalid_threshold_rejected() {
        assert!(matches!(
            match_instances(&[], &[], 0.0),
            Err(EvalError::InvalidThreshold(_))
        ));
        assert!(matches!(
            match_instances(&[], &[], 1.2),
            Err(EvalError::InvalidThreshold(_))
        ));
        assert!(match_instances(&[], &[], 1.0).is_ok());
    }

    #[test]
    fn precision_recall_basics() {
        assert_eq!(precision_recall(3, 1, 1), (0.75, 0.75));
        assert_eq!(precision_recall(0, 0, 5), (0.0, 0.0));
        assert_eq!(precision_recall(0, 0, 0), (0.0, 0.0));
        let (p, r) = precision_recall(7, 3, 2);
        assert!((p - 0.7).abs() < 1e-15 && (r - 7.0 / 9.0).abs() < 1e-15);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            /// TP/FP/FN from randomized scenes equals an independent greedy
            /// re-implementation working from scratch over pairwise IoUs.
            #[test]
            fn matches_independent_greedy_oracle(seed in any::<u64>()) {
                use rand::{Rng, SeedableRng};
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
                let (w, h) = (48u32, 40u32);
                let n_gt = rng.gen_range(0..5usize);
                let n_pred = rng.gen_range(0..7usize);
                let classes = [1u64, 2];
                let mut gts = Vec::new();
                for i in 0..n_gt {
                    let bw = rng.gen_range(6..20u32);
                    let bh = rng.gen_range(6..16u32);
                    let x = rng.gen_range(0..w - bw);
                    let y = rng.gen_range(0..h - bh);
                    gts.push(gt(i as u64 + 1, 1, classes[rng.gen_range(0..2)],
                                BBox::new(x, y, x + bw, y + bh).unwrap()));
                }
                let mut preds = Vec::new();
                for _ in 0..n_pred {
                    let bw = rng.gen_range(6..20u32);
                    let bh = rng.gen_range(6..16u32);
                    let x = rng.gen_range(0..w - bw);
                    let y = rng.gen_range(0..h - bh);
                    preds.push(pred(1, classes[rng.gen_range(0..2)], rng.gen_range(0.0..1.0),
                                    BBox::new(x, y, x + bw, y + bh).unwrap()));
                }
                let threshold = rng.gen_range(0.2..0.9);
                let result = match_instances(&preds, &gts, threshold).unwrap();
                result.assert_one_to_one(preds.len(), gts.len());

                // oracle: brute-force pixel IoUs, same greedy rule, separate code
                let mut order: Vec<usize> = (0..preds.len()).collect();
                order.sort_by(|&a, &b| preds[b].score.partial_cmp(&preds[a].score).unwrap().then(a.cmp(&b)));
                let mut taken = vec![false; gts.len()];
                let mut pairs = 0usize;
                for &pi in &order {
                    let mut best: Option<(usize, f64)> = None;
                    for (gi, g) in gts.iter().enumerate() {
                        if taken[gi] || g.category_id != preds[pi].category_id { continue; }
                        let mut inter = 0u64;
                        let mut uni = 0u64;
                        for y in 0..h {
                            for x in 0..w {
                                let a = preds[pi].mask.get(x, y);
                                let b = g.mask.get(x, y);
                                if a && b { inter += 1; }
                                if a || b { uni += 1; }
                            }
                        }
                        let v = if uni == 0 { 0.0 } else { inter as f64 / uni as f64 };
                        if v >= threshold && best.map_or(true, |(_, bv)| v > bv) {
                            best = Some((gi, v));
                        }
                    }
                    if let Some((gi, _)) = best {
                        taken[gi] = true;
                        pairs += 1;
                    }
                }
                prop_assert_eq!(result.tp(), pairs);
                prop_assert_eq!(result.unmatched_preds.len(), preds.len() - pairs);
                prop_assert_eq!(result.unmatched_gts.len(), gts.len() - pairs);
            }
        }
    }
}
