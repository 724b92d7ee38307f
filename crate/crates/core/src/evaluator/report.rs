//! Whole-split evaluation driver and the `report.json` writer.
//!
//! The report keeps raw ratios; percentage formatting with two decimals
//! happens only at the presentation layer (CLI tables).

use std::collections::HashSet;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;

use crate::dataset::{AnnotationSet, CategoryKind, InterfaceType, PredictionSet};

use super::ap::{ap_range, average_precision};
use super::conditioned::{vessel_conditioned_eval, ConditionedConfig, ConditionedResult};
use super::matching::{match_instances, precision_recall, GtView, PredView};
use super::EvalError;

pub const REPORT_VERSION: &str = "report/1";

#[derive(Debug, Clone)]
pub struct EvalConfig {
    /// IoU threshold for the TP/FP/FN counts behind precision/recall
    pub iou_threshold: f64,
    /// also run the hierarchical vessel-conditioned protocol
    pub conditioned: bool,
    pub conditioned_config: ConditionedConfig,
    /// category ids excluded from the macro average
    pub exclude_from_macro: Vec<u64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_threshold: 0.5,
            conditioned: false,
            conditioned_config: ConditionedConfig::default(),
            exclude_from_macro: Vec::new(),
        }
    }
}

/// Metric block for one class with ground-truth support.
#[derive(Debug, Clone, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub ap50: f64,
    pub ap5095: f64,
    /// `ap50 - ap5095`, the boundary-sensitivity gap
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassReport {
    pub category_id: u64,
    pub name: String,
    pub kind: CategoryKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface_type: Option<InterfaceType>,
    /// ground-truth instance count
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    /// absent when the class has no ground truth (printed as "/")
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metrics: Option<ClassMetrics>,
}

/// Unweighted means over the included classes.
#[derive(Debug, Clone, Serialize)]
pub struct MacroSummary {
    pub precision: f64,
    pub recall: f64,
    pub ap50: f64,
    pub ap5095: f64,
    pub gap: f64,
    pub included_categories: Vec<u64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub version: &'static str,
    pub iou_threshold: f64,
    pub per_class: Vec<ClassReport>,
    #[serde(rename = "macro", skip_serializing_if = "Option::is_none")]
    pub macro_summary: Option<MacroSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditioned: Option<ConditionedResult>,
}

/// Unweighted macro average over classes that have metrics and are not
/// excluded. Errors when nothing remains.
pub fn macro_report(
    per_class: &[ClassReport],
    exclude: &HashSet<u64>,
) -> Result<MacroSummary, EvalError> {
    let included: Vec<&ClassReport> = per_class
        .iter()
        .filter(|c| c.metrics.is_some() && !exclude.contains(&c.category_id))
        .collect();
    if included.is_empty() {
        return Err(EvalError::EmptyMacro);
    }
    let n = included.len() as f64;
    let mean = |f: &dyn Fn(&ClassMetrics) -> f64| -> f64 {
        included
            .iter()
            .map(|c| f(c.metrics.as_ref().expect("filtered")))
            .sum::<f64>()
            / n
    };
    Ok(MacroSummary {
        precision: mean(&|m| m.precision),
        recall: mean(&|m| m.recall),
        ap50: mean(&|m| m.ap50),
        ap5095: mean(&|m| m.ap5095),
        gap: mean(&|m| m.gap),
        included_categories: included.iter().map(|c| c.category_id).collect(),
    })
}

/// Evaluate predictions against ground truth: per-class metrics at the
/// configured threshold, AP at 0.5 and over the 0.50–0.95 sweep, macro
/// averages over interface classes, and optionally the conditioned table.
pub fn evaluate(
    gt: &AnnotationSet,
    preds: &PredictionSet,
    config: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if !(config.iou_threshold > 0.0 && config.iou_threshold <= 1.0) {
        return Err(EvalError::InvalidThreshold(config.iou_threshold));
    }
    preds.validate_against(gt)?;

    let gts_by_image = gt.instances_by_image();
    let preds_by_image = preds.by_image();
    let mut image_ids: Vec<u64> = gt.images.iter().map(|im| im.id).collect();
    image_ids.sort_unstable();

    // materialize masks once per image, in parallel, deterministic order
    let views: Vec<(Vec<GtView>, Vec<PredView>)> = image_ids
        .par_iter()
        .map(|&image_id| {
            let gt_views = gts_by_image
                .get(&image_id)
                .map(|insts| {
                    insts
                        .iter()
                        .map(|inst| GtView::from_instance(gt, inst))
                        .collect::<Result<Vec<_>, _>>()
                })
                .unwrap_or_else(|| Ok(Vec::new()))?;
            let pred_views = preds_by_image
                .get(&image_id)
                .map(|insts| {
                    insts
                        .iter()
                        .map(|inst| PredView::from_instance(inst))
                        .collect::<Result<Vec<_>, _>>()
                })
                .unwrap_or_else(|| Ok(Vec::new()))?;
            Ok::<_, EvalError>((gt_views, pred_views))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut categories: Vec<_> = gt.categories.clone();
    categories.sort_by_key(|c| c.id);

    let per_class: Vec<ClassReport> = categories
        .par_iter()
        .map(|cat| {
            // per-image counting at the configured threshold
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fn_ = 0u64;
            let mut class_preds: Vec<PredView> = Vec::new();
            let mut class_gts: Vec<GtView> = Vec::new();
            for (gt_views, pred_views) in &views {
                let g: Vec<GtView> = gt_views
                    .iter()
                    .filter(|v| v.category_id == cat.id)
                    .cloned()
                    .collect();
                let p: Vec<PredView> = pred_views
                    .iter()
                    .filter(|v| v.category_id == cat.id)
                    .cloned()
                    .collect();
                let m = match_instances(&p, &g, config.iou_threshold)?;
                tp += m.tp() as u64;
                fp += m.unmatched_preds.len() as u64;
                fn_ += m.unmatched_gts.len() as u64;
                class_preds.extend(p);
                class_gts.extend(g);
            }

            let support = class_gts.len() as u64;
            let metrics = if support == 0 {
                None
            } else {
                let (precision, recall) = precision_recall(tp, fp, fn_);
                let ap50 = average_precision(&class_preds, &class_gts, 0.5)?
                    .expect("support > 0");
                let ap5095 = ap_range(&class_preds, &class_gts)?.expect("support > 0");
                Some(ClassMetrics {
                    precision,
                    recall,
                    ap50,
                    ap5095,
                    gap: ap50 - ap5095,
                })
            };
            Ok(ClassReport {
                category_id: cat.id,
                name: cat.name.clone(),
                kind: cat.kind,
                interface_type: cat.interface_type,
                support,
                tp,
                fp,
                fn_,
                metrics,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;

    // macro over interface classes with support, minus explicit excludes
    let mut exclude: HashSet<u64> = config.exclude_from_macro.iter().copied().collect();
    for c in &per_class {
        if c.kind != CategoryKind::Interface {
            exclude.insert(c.category_id);
        }
    }
    let macro_summary = macro_report(&per_class, &exclude).ok();

    let conditioned = if config.conditioned {
        Some(vessel_conditioned_eval(gt, preds, &config.conditioned_config)?)
    } else {
        None
    };

    Ok(EvalReport {
        version: REPORT_VERSION,
        iou_threshold: config.iou_threshold,
        per_class,
        macro_summary,
        conditioned,
    })
}

/// Serialize a report to pretty JSON, trailing newline included.
pub fn write_report_json(path: impl AsRef<Path>, report: &EvalReport) -> Result<(), EvalError> {
    let mut text = serde_json::to_string_pretty(report).expect("reports serialize");
    text.push('\n');
    std::fs::write(path.as_ref(), text).map_err(|source| EvalError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{make_fixture, FixtureSpec};

    fn class_report(id: u64, ap50: f64, ap5095: f64) -> ClassReport {
        ClassReport {
            category_id: id,
            name: format!("class {id}"),
            kind: CategoryKind::Interface,
            interface_type: Some(InterfaceType::GasLiquid),
            support: 10,
            tp: 5,
            fp: 1,
            fn_: 5,
            metrics: Some(ClassMetrics {
                precision: 0.5,
                recall: 0.5,
                ap50,
                ap5095,
                gap: ap50 - ap5095,
            }),
        }
    }

    #[test]
    fn macro_means_are_unweighted() {
        let classes = vec![
            class_report(1, 0.7864, 0.5112),
            class_report(2, 0.8502, 0.6733),
            class_report(3, 0.8977, 0.5687),
            class_report(4, 0.8394, 0.5839),
        ];
        let summary = macro_report(&classes, &HashSet::new()).unwrap();
        assert!((summary.ap50 * 100.0 - 84.34).abs() < 0.005);
        assert!((summary.ap5095 * 100.0 - 58.43).abs() < 0.005);
        // the gap column at two decimals
        let gaps: Vec<String> = classes
            .iter()
            .map(|c| format!("{:.2}", c.metrics.as_ref().unwrap().gap * 100.0))
            .collect();
        assert_eq!(gaps, vec!["27.52", "17.69", "32.90", "25.55"]);
    }

    #[test]
    fn excluding_everything_errors() {
        let classes = vec![class_report(1, 0.5, 0.4)];
        let exclude: HashSet<u64> = [1].into_iter().collect();
        assert!(matches!(
            macro_report(&classes, &exclude),
            Err(EvalError::EmptyMacro)
        ));
    }

    #[test]
    fn zero_support_class_reported_without_metrics() {
        let spec = FixtureSpec {
            images: 4,
            interface_classes: 3,
            ..FixtureSpec::default()
        };
        let fx = make_fixture(&spec, 13).unwrap();
        let report = evaluate(&fx.annotations, &fx.predictions, &EvalConfig::default()).unwrap();
        // vessel classes have no instances in flat scenes
        let vessel_report = report
            .per_class
            .iter()
            .find(|c| c.kind == CategoryKind::Vessel)
            .unwrap();
        assert_eq!(vessel_report.support, 0);
        assert!(vessel_report.metrics.is_none());
        // macro only spans interface classes
        if let Some(m) = &report.macro_summary {
            assert!(m.included_categories.iter().all(|id| *id >= 11));
        }
    }

    #[test]
    fn evaluation_is_image_order_independent_and_deterministic() {
        let spec = FixtureSpec {
            images: 10,
            ..FixtureSpec::default()
        };
        let fx = make_fixture(&spec, 21).unwrap();
        let a = evaluate(&fx.annotations, &fx.predictions, &EvalConfig::default()).unwrap();

        // permute image, instance and prediction order
        let mut gt2 = fx.annotations.clone();
        gt2.images.reverse();
        gt2.instances.reverse();
        let mut preds2 = fx.predictions.clone();
        preds2.predictions.reverse();
        let b = evaluate(&gt2, &preds2, &EvalConfig::default()).unwrap();

        let ja = serde_json::to_string(&a.macro_summary).unwrap();
        let jb = serde_json::to_string(&b.macro_summary).unwrap();
        assert_eq!(ja, jb);
        for (ca, cb) in a.per_class.iter().zip(&b.per_class) {
            assert_eq!(ca.category_id, cb.category_id);
            assert_eq!(ca.tp, cb.tp);
            assert_eq!(
                serde_json::to_string(&ca.metrics).unwrap(),
                serde_json::to_string(&cb.metrics).unwrap()
            );
        }
    }

    #[test]
    fn ap50_never_below_ap5095() {
        for seed in 0..10u64 {
            let spec = FixtureSpec {
                images: 8,
                ..FixtureSpec::default()
            };
            let fx = make_fixture(&spec, seed).unwrap();
            let report =
                evaluate(&fx.annotations, &fx.predictions, &EvalConfig::default()).unwrap();
            for c in &report.per_class {
                if let Some(m) = &c.metrics {
                    assert!(
                        m.ap50 >= m.ap5095 - 1e-12,
                        "seed {seed} class {}: ap50 {} < ap5095 {}",
                        c.category_id,
                        m.ap50,
                        m.ap5095
                    );
                }
            }
        }
    }
}
