//! Hierarchical vessel-conditioned evaluation.
//!
//! Level 1 matches vessel predictions to vessel ground truths. Level 2 admits
//! an interface prediction only if it associates — at least half of its mask
//! contained — to a ground-truth vessel that level 1 matched; admitted
//! predictions are then matched against the interface ground truths assigned
//! to that same vessel. Results are reported per (interface type, vessel
//! category) cell; ground truths and false positives that associate to no
//! vessel land in the `unassigned` pseudo-category.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{AnnotationSet, CategoryKind, InterfaceType, PredictionSet};
use crate::geometry::containment;

use super::ap::{interpolated_ap, AP_SWEEP_THRESHOLDS};
use super::matching::{greedy_match, iou_matrix, match_instances, score_order, GtView, PredView};
use super::EvalError;

pub const UNASSIGNED_VESSEL: &str = "unassigned";

#[derive(Debug, Clone)]
pub struct ConditionedConfig {
    /// level-2 threshold used for the TP/FP/FN counts and precision/recall
    pub interface_iou_threshold: f64,
    /// level-1 vessel matching threshold
    pub vessel_iou_threshold: f64,
    /// minimum fraction of an interface mask inside a vessel mask to associate
    pub containment_threshold: f64,
}

impl Default for ConditionedConfig {
    fn default() -> Self {
        ConditionedConfig {
            interface_iou_threshold: 0.5,
            vessel_iou_threshold: 0.5,
            containment_threshold: 0.5,
        }
    }
}

/// One (interface type, vessel category) cell of the conditioned table.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionedCell {
    pub interface_type: InterfaceType,
    pub vessel_category: String,
    /// ground-truth interfaces assigned to this cell
    pub instance_count: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap50: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ap5095: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionedResult {
    pub cells: Vec<ConditionedCell>,
    pub warnings: Vec<String>,
}

impl ConditionedResult {
    pub fn total_tp(&self) -> u64 {
        self.cells.iter().map(|c| c.tp).sum()
    }
}

/// Cell key: interface type plus vessel category name (or "unassigned").
type CellKey = (InterfaceType, String);

struct ImageOutcome {
    /// per ground-truth interface: cell key and whether it was matched at the
    /// counting threshold
    gt_rows: Vec<(CellKey, bool)>,
    /// per interface prediction: cell key, score, matched flag at the
    /// counting threshold, matched flags at the ten sweep thresholds
    pred_rows: Vec<(CellKey, f64, bool, [bool; 10])>,
    warnings: Vec<String>,
}

fn assign_vessel(
    mask: &crate::geometry::BinaryMask,
    vessels: &[GtView],
    threshold: f64,
) -> Result<Option<usize>, EvalError> {
    let mut best: Option<(usize, f64)> = None;
    for (vi, vessel) in vessels.iter().enumerate() {
        let ratio = containment(mask, &vessel.mask)?;
        if ratio >= threshold && best.map_or(true, |(_, b)| ratio > b) {
            best = Some((vi, ratio));
        }
    }
    Ok(best.map(|(vi, _)| vi))
}

fn evaluate_image(
    image_id: u64,
    gts: &[GtView],
    preds: &[PredView],
    kinds: &HashMap<u64, CategoryKind>,
    itypes: &HashMap<u64, InterfaceType>,
    vessel_names: &HashMap<u64, String>,
    config: &ConditionedConfig,
) -> Result<ImageOutcome, EvalError> {
    let vessels: Vec<GtView> = gts
        .iter()
        .filter(|g| kinds.get(&g.category_id) == Some(&CategoryKind::Vessel))
        .cloned()
        .collect();
    let iface_gts: Vec<GtView> = gts
        .iter()
        .filter(|g| kinds.get(&g.category_id) == Some(&CategoryKind::Interface))
        .cloned()
        .collect();
    let vessel_preds: Vec<PredView> = preds
        .iter()
        .filter(|p| kinds.get(&p.category_id) == Some(&CategoryKind::Vessel))
        .cloned()
        .collect();
    let iface_preds: Vec<PredView> = preds
        .iter()
        .filter(|p| kinds.get(&p.category_id) == Some(&CategoryKind::Interface))
        .cloned()
        .collect();

    // level 1
    let vessel_match = match_instances(&vessel_preds, &vessels, config.vessel_iou_threshold)?;
    let mut vessel_matched = vec![false; vessels.len()];
    for &(_, gi, _) in &vessel_match.pairs {
        vessel_matched[gi] = true;
    }

    let vessel_id_to_idx: HashMap<u64, usize> =
        vessels.iter().enumerate().map(|(i, v)| (v.id, i)).collect();

    // ground-truth interface -> vessel
    let mut warnings = Vec::new();
    let mut gt_vessel: Vec<Option<usize>> = Vec::with_capacity(iface_gts.len());
    for gt in &iface_gts {
        let assigned = match gt.vessel_ref {
            Some(vref) => vessel_id_to_idx.get(&vref).copied(),
            None => assign_vessel(&gt.mask, &vessels, config.containment_threshold)?,
        };
        if assigned.is_none() {
            warnings.push(format!(
                "image {image_id}: interface instance {} associates to no vessel; counted as '{UNASSIGNED_VESSEL}'",
                gt.id
            ));
        }
        gt_vessel.push(assigned);
    }

    // prediction -> vessel, eligibility via the matched-vessel gate
    let mut pred_vessel: Vec<Option<usize>> = Vec::with_capacity(iface_preds.len());
    for pred in &iface_preds {
        pred_vessel.push(assign_vessel(&pred.mask, &vessels, config.containment_threshold)?);
    }
    let eligible: Vec<bool> = pred_vessel
        .iter()
        .map(|v| v.is_some_and(|vi| vessel_matched[vi]))
        .collect();

    // level 2: greedy matching within each (vessel, class) bucket
    let mut buckets: BTreeMap<(usize, u64), (Vec<usize>, Vec<usize>)> = BTreeMap::new();
    for (pi, pred) in iface_preds.iter().enumerate() {
        if eligible[pi] {
            let vi = pred_vessel[pi].expect("eligible implies assigned");
            buckets.entry((vi, pred.category_id)).or_default().0.push(pi);
        }
    }
    for (gi, gt) in iface_gts.iter().enumerate() {
        if let Some(vi) = gt_vessel[gi] {
            buckets.entry((vi, gt.category_id)).or_default().1.push(gi);
        }
    }

    let count_thr = config.interface_iou_threshold;
    let mut gt_matched_count = vec![false; iface_gts.len()];
    let mut pred_matched_count = vec![false; iface_preds.len()];
    let mut pred_matched_sweep = vec![[false; 10]; iface_preds.len()];

    for ((_vi, _class), (pred_idx, gt_idx)) in &buckets {
        let bucket_preds: Vec<PredView> =
            pred_idx.iter().map(|&pi| iface_preds[pi].clone()).collect();
        let bucket_gts: Vec<GtView> = gt_idx.iter().map(|&gi| iface_gts[gi].clone()).collect();
        let order = score_order(&bucket_preds);
        let matrix = iou_matrix(&bucket_preds, &bucket_gts)?;

        let assignment = greedy_match(&order, &matrix, bucket_gts.len(), count_thr);
        for (local, &pi) in pred_idx.iter().enumerate() {
            if let Some((local_gi, _)) = assignment[local] {
                pred_matched_count[pi] = true;
                gt_matched_count[gt_idx[local_gi]] = true;
            }
        }
        for (ti, &thr) in AP_SWEEP_THRESHOLDS.iter().enumerate() {
            let assignment = greedy_match(&order, &matrix, bucket_gts.len(), thr);
            for (local, &pi) in pred_idx.iter().enumerate() {
                if assignment[local].is_some() {
                    pred_matched_sweep[pi][ti] = true;
                }
            }
        }
    }

    let cell_of_vessel = |vi: Option<usize>| -> String {
        match vi {
            Some(vi) => vessel_names
                .get(&vessels[vi].category_id)
                .cloned()
                .unwrap_or_else(|| UNASSIGNED_VESSEL.to_string()),
            None => UNASSIGNED_VESSEL.to_string(),
        }
    };

    let gt_rows = iface_gts
        .iter()
        .enumerate()
        .map(|(gi, gt)| {
            let itype = itypes[&gt.category_id];
            ((itype, cell_of_vessel(gt_vessel[gi])), gt_matched_count[gi])
        })
        .collect();
    let pred_rows = iface_preds
        .iter()
        .enumerate()
        .map(|(pi, pred)| {
            let itype = itypes[&pred.category_id];
            (
                (itype, cell_of_vessel(pred_vessel[pi])),
                pred.score,
                pred_matched_count[pi],
                pred_matched_sweep[pi],
            )
        })
        .collect();

    Ok(ImageOutcome {
        gt_rows,
        pred_rows,
        warnings,
    })
}

/// Run the two-level protocol over whole sets and aggregate per cell.
pub fn vessel_conditioned_eval(
    gt: &AnnotationSet,
    preds: &PredictionSet,
    config: &ConditionedConfig,
) -> Result<ConditionedResult, EvalError> {
    if !(config.interface_iou_threshold > 0.0 && config.interface_iou_threshold <= 1.0) {
        return Err(EvalError::InvalidThreshold(config.interface_iou_threshold));
    }
    preds.validate_against(gt)?;

    let kinds: HashMap<u64, CategoryKind> =
        gt.categories.iter().map(|c| (c.id, c.kind)).collect();
    let itypes: HashMap<u64, InterfaceType> = gt
        .categories
        .iter()
        .filter_map(|c| c.interface_type.map(|t| (c.id, t)))
        .collect();
    let vessel_names: HashMap<u64, String> = gt
        .categories
        .iter()
        .filter(|c| c.kind == CategoryKind::Vessel)
        .map(|c| (c.id, c.name.clone()))
        .collect();

    let gts_by_image = gt.instances_by_image();
    let preds_by_image = preds.by_image();
    let mut image_ids: Vec<u64> = gt.images.iter().map(|im| im.id).collect();
    image_ids.sort_unstable();

    let outcomes: Vec<Result<ImageOutcome, EvalError>> = image_ids
        .par_iter()
        .map(|&image_id| {
            let empty_g = Vec::new();
            let empty_p = Vec::new();
            let gt_insts = gts_by_image.get(&image_id).unwrap_or(&empty_g);
            let pred_insts = preds_by_image.get(&image_id).unwrap_or(&empty_p);
            let gt_views = gt_insts
                .iter()
                .map(|inst| GtView::from_instance(gt, inst))
                .collect::<Result<Vec<_>, _>>()?;
            let pred_views = pred_insts
                .iter()
                .map(|inst| PredView::from_instance(inst))
                .collect::<Result<Vec<_>, _>>()?;
            evaluate_image(
                image_id,
                &gt_views,
                &pred_views,
                &kinds,
                &itypes,
                &vessel_names,
                config,
            )
        })
        .collect();

    // deterministic reduce in image-id order
    struct CellAcc {
        instance_count: u64,
        tp: u64,
        fp: u64,
        fn_: u64,
        flags50: Vec<(f64, bool)>,
        flags_sweep: [Vec<(f64, bool)>; 10],
    }
    let mut cells: BTreeMap<(usize, String), CellAcc> = BTreeMap::new();
    let type_index = |t: InterfaceType| {
        InterfaceType::ALL
            .iter()
            .position(|&x| x == t)
            .expect("known type")
    };
    let mut warnings = Vec::new();

    for outcome in outcomes {
        let outcome = outcome?;
        warnings.extend(outcome.warnings);
        for ((itype, vessel), matched) in outcome.gt_rows {
            let acc = cells
                .entry((type_index(itype), vessel))
                .or_insert_with(|| CellAcc {
                    instance_count: 0,
                    tp: 0,
                    fp: 0,
                    fn_: 0,
                    flags50: Vec::new(),
                    flags_sweep: Default::default(),
                });
            acc.instance_count += 1;
            if !matched {
                acc.fn_ += 1;
            }
        }
        for ((itype, vessel), score, matched, sweep) in outcome.pred_rows {
            let acc = cells
                .entry((type_index(itype), vessel))
                .or_insert_with(|| CellAcc {
                    instance_count: 0,
                    tp: 0,
                    fp: 0,
                    fn_: 0,
                    flags50: Vec::new(),
                    flags_sweep: Default::default(),
                });
            if matched {
                acc.tp += 1;
            } else {
                acc.fp += 1;
            }
            acc.flags50.push((score, sweep[0]));
            for (ti, flags) in acc.flags_sweep.iter_mut().enumerate() {
                flags.push((score, sweep[ti]));
            }
        }
    }

    let cells = cells
        .into_iter()
        .map(|((ti, vessel), acc)| {
            let itype = InterfaceType::ALL[ti];
            let has_support = acc.instance_count > 0;
            let (precision, recall) = if has_support {
                let (p, r) = super::matching::precision_recall(acc.tp, acc.fp, acc.fn_);
                (Some(p), Some(r))
            } else {
                (None, None)
            };
            let ap50 = has_support
                .then(|| interpolated_ap(acc.flags50.clone(), acc.instance_count as usize));
            let ap5095 = has_support.then(|| {
                acc.flags_sweep
                    .iter()
                    .map(|flags| interpolated_ap(flags.clone(), acc.instance_count as usize))
                    .sum::<f64>()
                    / AP_SWEEP_THRESHOLDS.len() as f64
            });
            ConditionedCell {
                interface_type: itype,
                vessel_category: vessel,
                instance_count: acc.instance_count,
                tp: acc.tp,
                fp: acc.fp,
                fn_: acc.fn_,
                precision,
                recall,
                ap50,
                ap5095,
            }
        })
        .collect();

    Ok(ConditionedResult { cells, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_fixture, FixtureSpec};
    use crate::geometry::{rle_encode, BinaryMask};

    fn block(w: u32, h: u32, x0: u32, y0: u32, bw: u32, bh: u32) -> BinaryMask {
        let mut m = BinaryMask::new(w, h).unwrap();
        for y in y0..y0 + bh {
            for x in x0..x0 + bw {
                m.set(x, y, true);
            }
        }
        m
    }

    /// Hand-built scene: one vessel with one interface.
    fn tiny_scene(vessel_pred: bool) -> (AnnotationSet, PredictionSet) {
        use crate::dataset::*;
        let (w, h) = (64u32, 64u32);
        let vessel_mask = block(w, h, 8, 8, 40, 48);
        let iface_mask = block(w, h, 10, 30, 36, 4);
        let images = vec![ImageInfo {
            id: 1,
            width: w,
            height: h,
            split: Split::Val,
        }];
        let categories = vec![
            Category {
                id: 1,
                name: "beaker".into(),
                kind: CategoryKind::Vessel,
                interface_type: None,
            },
            Category {
                id: 11,
                name: "G/L boundary".into(),
                kind: CategoryKind::Interface,
                interface_type: Some(InterfaceType::GasLiquid),
            },
        ];
        let instances = vec![
            GroundTruthInstance {
                id: 1,
                image_id: 1,
                category_id: 1,
                segmentation: Segmentation::Rle(rle_encode(&vessel_mask)),
                bbox: [8, 8, 48, 56],
                vessel_ref: None,
            },
            GroundTruthInstance {
                id: 2,
                image_id: 1,
                category_id: 11,
                segmentation: Segmentation::Rle(rle_encode(&iface_mask)),
                bbox: [10, 30, 46, 34],
                vessel_ref: Some(1),
            },
        ];
        let mut preds = vec![PredictionInstance {
            image_id: 1,
            category_id: 11,
            rle: rle_encode(&iface_mask),
            score: 0.95,
            color_attr: None,
        }];
        if vessel_pred {
            preds.push(PredictionInstance {
                image_id: 1,
                category_id: 1,
                rle: rle_encode(&vessel_mask),
                score: 0.9,
                color_attr: None,
            });
        }
        (
            AnnotationSet::new(images, categories, instances).unwrap(),
            PredictionSet::new(preds).unwrap(),
        )
    }

    #[test]
    fn correct_vessel_and_interface_is_cell_tp() {
        let (gt, preds) = tiny_scene(true);
        let result = vessel_conditioned_eval(&gt, &preds, &ConditionedConfig::default()).unwrap();
        let cell = result
            .cells
            .iter()
            .find(|c| c.vessel_category == "beaker")
            .unwrap();
        assert_eq!((cell.tp, cell.fp, cell.fn_), (1, 0, 0));
        assert_eq!(cell.ap50, Some(1.0));
        assert!(result.warnings.is_empty());
    }

    #[test]
    fn missed_vessel_gates_a_perfect_interface_mask() {
        let (gt, preds) = tiny_scene(false);
        let result = vessel_conditioned_eval(&gt, &preds, &ConditionedConfig::default()).unwrap();
        let cell = result
            .cells
            .iter()
            .find(|c| c.vessel_category == "beaker")
            .unwrap();
        // the interface prediction is ineligible: FP for the cell, GT is FN
        assert_eq!((cell.tp, cell.fp, cell.fn_), (0, 1, 1));
        assert_eq!(cell.precision, Some(0.0));
        assert_eq!(cell.recall, Some(0.0));
    }

    #[test]
    fn interface_outside_any_vessel_warns_and_lands_unassigned() {
        use crate::dataset::*;
        let (w, h) = (64u32, 64u32);
        let iface_mask = block(w, h, 2, 2, 20, 3);
        let gt = AnnotationSet::new(
            vec![ImageInfo {
                id: 1,
                width: w,
                height: h,
                split: Split::Val,
            }],
            vec![Category {
                id: 11,
                name: "G/L boundary".into(),
                kind: CategoryKind::Interface,
                interface_type: Some(InterfaceType::GasLiquid),
            }],
            vec![GroundTruthInstance {
                id: 1,
                image_id: 1,
                category_id: 11,
                segmentation: Segmentation::Rle(rle_encode(&iface_mask)),
                bbox: [2, 2, 22, 5],
                vessel_ref: None,
            }],
        )
        .unwrap();
        let preds = PredictionSet::new(vec![]).unwrap();
        let result = vessel_conditioned_eval(&gt, &preds, &ConditionedConfig::default()).unwrap();
        assert_eq!(result.warnings.len(), 1);
        let cell = &result.cells[0];
        assert_eq!(cell.vessel_category, UNASSIGNED_VESSEL);
        assert_eq!((cell.instance_count, cell.fn_), (1, 1));
    }

    #[test]
    fn conditioned_tp_never_exceeds_unconditioned_tp() {
        use crate::dataset::CategoryKind;
        for seed in 0..20u64 {
            let spec = FixtureSpec {
                images: 6,
                vessels: true,
                ..FixtureSpec::default()
            };
            let fx = make_fixture(&spec, seed).unwrap();
            let conditioned =
                vessel_conditioned_eval(&fx.annotations, &fx.predictions, &ConditionedConfig::default())
                    .unwrap();

            // unconditioned interface TP count over the same scenes
            let kinds: std::collections::HashMap<u64, CategoryKind> = fx
                .annotations
                .categories
                .iter()
                .map(|c| (c.id, c.kind))
                .collect();
            let gts_by_image = fx.annotations.instances_by_image();
            let preds_by_image = fx.predictions.by_image();
            let mut unconditioned_tp = 0u64;
            for img in &fx.annotations.images {
                let gt_views: Vec<GtView> = gts_by_image
                    .get(&img.id)
                    .map(|v| {
                        v.iter()
                            .filter(|g| kinds[&g.category_id] == CategoryKind::Interface)
                            .map(|g| GtView::from_instance(&fx.annotations, g).unwrap())
                            .collect()
                    })
                    .unwrap_or_default();
                let pred_views: Vec<PredView> = preds_by_image
                    .get(&img.id)
                    .map(|v| {
                        v.iter()
                            .filter(|p| kinds[&p.category_id] == CategoryKind::Interface)
                            .map(|p| PredView::from_instance(p).unwrap())
                            .collect()
                    })
                    .unwrap_or_default();
                unconditioned_tp +=
                    match_instances(&pred_views, &gt_views, 0.5).unwrap().tp() as u64;
            }
            assert!(
                conditioned.total_tp() <= unconditioned_tp,
                "seed {seed}: conditioned {} > unconditioned {}",
                conditioned.total_tp(),
                unconditioned_tp
            );
        }
    }
}
