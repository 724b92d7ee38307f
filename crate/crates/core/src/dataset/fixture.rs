//! Synthetic scene generator with known ground truth, used to drive the
//! evaluator oracles and the hierarchical protocol tests.
//!
//! Scenes are rectangles: ground-truth instances are axis-aligned blocks,
//! matched predictions are shifted copies whose IoU is exact by pixel
//! counting, decoys are unrelated blocks. With `vessels` enabled, disjoint
//! vessel rectangles carry horizontal interface strips, some vessel
//! predictions are dropped to exercise the level-1 gate, and some decoys sit
//! outside every vessel to exercise the "unassigned" path.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::geometry::{iou, rle_decode, rle_encode, BinaryMask, RleMask};

use super::{
    AnnotationSet, Category, CategoryKind, ColorAttr, DatasetError, GroundTruthInstance,
    ImageInfo, InterfaceType, PredictionInstance, PredictionSet, Segmentation, Split,
};

/// Generator parameters. Defaults give small mixed scenes with three
/// interface classes.
#[derive(Debug, Clone)]
pub struct FixtureSpec {
    pub images: usize,
    pub width: u32,
    pub height: u32,
    /// how many of the five interface types are used (1..=5)
    pub interface_classes: usize,
    pub max_gts_per_image: usize,
    pub max_preds_per_image: usize,
    /// probability a ground-truth instance gets a matching prediction
    pub match_rate: f64,
    /// probability a matching prediction carries the wrong class
    pub wrong_class_rate: f64,
    /// build vessel scenes (disjoint vessels with contained interfaces)
    pub vessels: bool,
    /// probability a vessel has no matching vessel prediction
    pub vessel_miss_rate: f64,
    /// probability an interface annotation omits vessel_ref
    pub omit_vessel_ref_rate: f64,
    /// one extra single-instance image per entry, with a prediction at
    /// exactly this IoU
    pub exact_pairs: Vec<f64>,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec {
            images: 10,
            width: 160,
            height: 120,
            interface_classes: 3,
            max_gts_per_image: 6,
            max_preds_per_image: 8,
            match_rate: 0.8,
            wrong_class_rate: 0.05,
            vessels: false,
            vessel_miss_rate: 0.3,
            omit_vessel_ref_rate: 0.3,
            exact_pairs: Vec::new(),
        }
    }
}

/// Record of an exact-IoU pair image.
#[derive(Debug, Clone)]
pub struct PairLedger {
    pub image_id: u64,
    pub gt_id: u64,
    pub requested_iou: f64,
    /// realized IoU, verified by pixel counting at generation time
    pub iou: f64,
}

/// Record of a generated matched prediction.
#[derive(Debug, Clone)]
pub struct IntendedMatch {
    pub image_id: u64,
    pub gt_id: u64,
    pub pred_index: usize,
    pub iou: f64,
}

#[derive(Debug, Clone, Default)]
pub struct FixtureLedger {
    pub pairs: Vec<PairLedger>,
    pub intended: Vec<IntendedMatch>,
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub annotations: AnnotationSet,
    pub predictions: PredictionSet,
    pub ledger: FixtureLedger,
}

pub const VESSEL_CATEGORY_IDS: [u64; 3] = [1, 2, 3];
pub const INTERFACE_CATEGORY_IDS: [u64; 5] = [11, 12, 13, 14, 15];

fn scene_categories(interface_classes: usize) -> Vec<Category> {
    let mut cats = vec![
        Category {
            id: 1,
            name: "beaker".into(),
            kind: CategoryKind::Vessel,
            interface_type: None,
        },
        Category {
            id: 2,
            name: "conical flask".into(),
            kind: CategoryKind::Vessel,
            interface_type: None,
        },
        Category {
            id: 3,
            name: "test tube".into(),
            kind: CategoryKind::Vessel,
            interface_type: None,
        },
    ];
    for (i, itype) in InterfaceType::ALL.iter().take(interface_classes).enumerate() {
        cats.push(Category {
            id: INTERFACE_CATEGORY_IDS[i],
            name: format!("{} boundary", itype.label()),
            kind: CategoryKind::Interface,
            interface_type: Some(*itype),
        });
    }
    cats
}

fn rect_mask(w: u32, h: u32, x0: u32, y0: u32, rw: u32, rh: u32) -> BinaryMask {
    let mut m = BinaryMask::new(w, h).expect("positive dims");
    for y in y0..(y0 + rh).min(h) {
        for x in x0..(x0 + rw).min(w) {
            m.set(x, y, true);
        }
    }
    m
}

fn mask_to_rle(m: &BinaryMask) -> RleMask {
    rle_encode(m)
}

/// Find strip length and shift realizing an exact IoU `(L-d)/(L+d) = r`.
fn exact_strip(width: u32, r: f64) -> Option<(u32, u32)> {
    if !(r > 0.0 && r <= 1.0) {
        return None;
    }
    for len in 4..width {
        let d_real = len as f64 * (1.0 - r) / (1.0 + r);
        let d = d_real.round();
        if d < 0.0 {
            continue;
        }
        let d = d as u32;
        if len + d > width {
            continue;
        }
        let realized = (len - d) as f64 / (len + d) as f64;
        if (realized - r).abs() < 1e-12 {
            return Some((len, d));
        }
    }
    None
}

struct Builder {
    images: Vec<ImageInfo>,
    instances: Vec<GroundTruthInstance>,
    predictions: Vec<PredictionInstance>,
    ledger: FixtureLedger,
    next_instance_id: u64,
}

impl Builder {
    fn add_gt(
        &mut self,
        image_id: u64,
        category_id: u64,
        mask: &BinaryMask,
        vessel_ref: Option<u64>,
    ) -> u64 {
        let id = self.next_instance_id;
        self.next_instance_id += 1;
        let bb = mask.tight_bbox().expect("generator masks are non-empty");
        self.instances.push(GroundTruthInstance {
            id,
            image_id,
            category_id,
            segmentation: Segmentation::Rle(mask_to_rle(mask)),
            bbox: [bb.x_min, bb.y_min, bb.x_max, bb.y_max],
            vessel_ref,
        });
        id
    }

    fn add_pred(
        &mut self,
        image_id: u64,
        category_id: u64,
        mask: &BinaryMask,
        score: f64,
        color_attr: Option<ColorAttr>,
    ) -> usize {
        self.predictions.push(PredictionInstance {
            image_id,
            category_id,
            rle: mask_to_rle(mask),
            score,
            color_attr,
        });
        self.predictions.len() - 1
    }
}

/// Generate a reproducible annotation/prediction pair with a ledger of
/// intended matches.
pub fn make_fixture(spec: &FixtureSpec, seed: u64) -> Result<Fixture, DatasetError> {
    if spec.max_gts_per_image > 112 {
        return Err(DatasetError::Infeasible(format!(
            "max_gts_per_image {} exceeds the scene density cap of 112",
            spec.max_gts_per_image
        )));
    }
    if spec.interface_classes == 0 || spec.interface_classes > 5 {
        return Err(DatasetError::Infeasible(
            "interface_classes must be in 1..=5".into(),
        ));
    }
    if spec.width < 32 || spec.height < 32 {
        return Err(DatasetError::Infeasible(
            "images must be at least 32x32".into(),
        ));
    }
    for &r in &spec.exact_pairs {
        if exact_strip(spec.width, r).is_none() {
            return Err(DatasetError::Infeasible(format!(
                "no strip on a width-{} grid realizes IoU {r} exactly",
                spec.width
            )));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder {
        images: Vec::new(),
        instances: Vec::new(),
        predictions: Vec::new(),
        ledger: FixtureLedger::default(),
        next_instance_id: 1,
    };
    let class_ids: Vec<u64> = INTERFACE_CATEGORY_IDS[..spec.interface_classes].to_vec();

    for img_idx in 0..spec.images {
        let image_id = img_idx as u64 + 1;
        b.images.push(ImageInfo {
            id: image_id,
            width: spec.width,
            height: spec.height,
            split: Split::Val,
        });
        if spec.vessels {
            vessel_scene(&mut b, spec, image_id, &class_ids, &mut rng);
        } else {
            flat_scene(&mut b, spec, image_id, &class_ids, &mut rng);
        }
    }

    // exact-IoU pair images
    for &r in &spec.exact_pairs {
        let image_id = b.images.len() as u64 + 1;
        b.images.push(ImageInfo {
            id: image_id,
            width: spec.width,
            height: spec.height,
            split: Split::Val,
        });
        let (len, d) = exact_strip(spec.width, r).expect("checked above");
        let rows = 4.min(spec.height);
        let gt_mask = rect_mask(spec.width, spec.height, 0, 2, len, rows);
        let pred_mask = rect_mask(spec.width, spec.height, d, 2, len, rows);
        let gt_id = b.add_gt(image_id, class_ids[0], &gt_mask, None);
        let pred_index = b.add_pred(image_id, class_ids[0], &pred_mask, 0.9, None);
        let realized = iou(&gt_mask, &pred_mask).expect("same dims");
        b.ledger.pairs.push(PairLedger {
            image_id,
            gt_id,
            requested_iou: r,
            iou: realized,
        });
        b.ledger.intended.push(IntendedMatch {
            image_id,
            gt_id,
            pred_index,
            iou: realized,
        });
    }

    let annotations = AnnotationSet::new(
        b.images,
        scene_categories(spec.interface_classes),
        b.instances,
    )?;
    let predictions = PredictionSet::new(b.predictions)?;
    predictions.validate_against(&annotations)?;
    Ok(Fixture {
        annotations,
        predictions,
        ledger: b.ledger,
    })
}

/// Shifted copy of a block with a randomized target IoU; returns the mask.
fn shifted_block(
    w: u32,
    h: u32,
    x0: u32,
    y0: u32,
    rw: u32,
    rh: u32,
    target_iou: f64,
    rng: &mut ChaCha8Rng,
) -> BinaryMask {
    let d_real = rw as f64 * (1.0 - target_iou) / (1.0 + target_iou);
    let d = d_real.round().max(0.0) as u32;
    // shift whichever direction stays on the grid
    let shift_right = x0 + d + rw <= w;
    let shift_left = x0 >= d;
    let nx = if shift_right && (!shift_left || rng.gen_bool(0.5)) {
        x0 + d
    } else if shift_left {
        x0 - d
    } else {
        x0
    };
    rect_mask(w, h, nx, y0, rw, rh)
}

fn flat_scene(
    b: &mut Builder,
    spec: &FixtureSpec,
    image_id: u64,
    class_ids: &[u64],
    rng: &mut ChaCha8Rng,
) {
    let (w, h) = (spec.width, spec.height);
    let n_gt = rng.gen_range(0..=spec.max_gts_per_image);
    let mut gt_geoms: Vec<(u64, u64, u32, u32, u32, u32)> = Vec::new();
    for _ in 0..n_gt {
        let rw = rng.gen_range(10..=(w / 3).max(11));
        let rh = rng.gen_range(6..=(h / 3).max(7));
        let x0 = rng.gen_range(0..=(w - rw));
        let y0 = rng.gen_range(0..=(h - rh));
        let class = class_ids[rng.gen_range(0..class_ids.len())];
        let mask = rect_mask(w, h, x0, y0, rw, rh);
        let gt_id = b.add_gt(image_id, class, &mask, None);
        gt_geoms.push((gt_id, class, x0, y0, rw, rh));
    }

    let mut preds_left = spec.max_preds_per_image;
    let mut last_score: Option<f64> = None;
    for &(gt_id, class, x0, y0, rw, rh) in &gt_geoms {
        if preds_left == 0 {
            break;
        }
        if rng.gen_bool(spec.match_rate) {
            let target = rng.gen_range(0.25..0.95);
            let mask = shifted_block(w, h, x0, y0, rw, rh, target, rng);
            let pred_class = if rng.gen_bool(spec.wrong_class_rate) {
                class_ids[rng.gen_range(0..class_ids.len())]
            } else {
                class
            };
            // occasional exact score ties exercise the stable ordering rule
            let score = match last_score {
                Some(s) if rng.gen_bool(0.15) => s,
                _ => rng.gen_range(0.3..1.0),
            };
            last_score = Some(score);
            let pred_index = b.add_pred(image_id, pred_class, &mask, score, None);
            preds_left -= 1;
            if pred_class == class {
                let gt_mask = rect_mask(w, h, x0, y0, rw, rh);
                let realized = iou(&gt_mask, &mask).expect("same dims");
                b.ledger.intended.push(IntendedMatch {
                    image_id,
                    gt_id,
                    pred_index,
                    iou: realized,
                });
            }
        }
    }
    let n_decoys = rng.gen_range(0..=preds_left);
    for _ in 0..n_decoys {
        let rw = rng.gen_range(8..=(w / 4).max(9));
        let rh = rng.gen_range(5..=(h / 4).max(6));
        let x0 = rng.gen_range(0..=(w - rw));
        let y0 = rng.gen_range(0..=(h - rh));
        let class = class_ids[rng.gen_range(0..class_ids.len())];
        let mask = rect_mask(w, h, x0, y0, rw, rh);
        b.add_pred(image_id, class, &mask, rng.gen_range(0.05..0.7), None);
    }
}

fn vessel_scene(
    b: &mut Builder,
    spec: &FixtureSpec,
    image_id: u64,
    class_ids: &[u64],
    rng: &mut ChaCha8Rng,
) {
    let (w, h) = (spec.width, spec.height);
    // quadrant slots keep vessels disjoint
    let slots = [
        (2u32, 2u32),
        (w / 2 + 2, 2),
        (2, h / 2 + 2),
        (w / 2 + 2, h / 2 + 2),
    ];
    let slot_w = w / 2 - 6;
    let slot_h = h / 2 - 6;
    let n_vessels = rng.gen_range(1..=3usize);

    for slot_idx in 0..n_vessels {
        let (sx, sy) = slots[slot_idx];
        let vw = rng.gen_range(slot_w * 3 / 4..=slot_w);
        let vh = rng.gen_range(slot_h * 3 / 4..=slot_h);
        let vx = sx + rng.gen_range(0..=(slot_w - vw));
        let vy = sy + rng.gen_range(0..=(slot_h - vh));
        let vessel_class = VESSEL_CATEGORY_IDS[rng.gen_range(0..VESSEL_CATEGORY_IDS.len())];
        let vessel_mask = rect_mask(w, h, vx, vy, vw, vh);
        let vessel_id = b.add_gt(image_id, vessel_class, &vessel_mask, None);

        // vessel prediction, unless this vessel is deliberately missed
        if !rng.gen_bool(spec.vessel_miss_rate) {
            let target = rng.gen_range(0.6..0.95);
            let mask = shifted_block(w, h, vx, vy, vw, vh, target, rng);
            let pred_index =
                b.add_pred(image_id, vessel_class, &mask, rng.gen_range(0.5..1.0), None);
            let realized = iou(&vessel_mask, &mask).expect("same dims");
            b.ledger.intended.push(IntendedMatch {
                image_id,
                gt_id: vessel_id,
                pred_index,
                iou: realized,
            });
        } else if rng.gen_bool(0.3) {
            // wrong-class vessel prediction: overlaps but can never match
            let other = VESSEL_CATEGORY_IDS
                .iter()
                .copied()
                .find(|&c| c != vessel_class)
                .expect("three vessel classes");
            let mask = shifted_block(w, h, vx, vy, vw, vh, 0.8, rng);
            b.add_pred(image_id, other, &mask, rng.gen_range(0.5..1.0), None);
        }

        // interface strips inside the vessel
        let n_ifaces = rng.gen_range(1..=2usize);
        for _ in 0..n_ifaces {
            if vh < 12 {
                continue;
            }
            let ih = rng.gen_range(3..=5u32);
            let iy = vy + rng.gen_range(1..=(vh - ih - 1));
            let ix = vx + 1;
            let iw = vw - 2;
            let class = class_ids[rng.gen_range(0..class_ids.len())];
            let strip = rect_mask(w, h, ix, iy, iw, ih);
            let vessel_ref = if rng.gen_bool(spec.omit_vessel_ref_rate) {
                None
            } else {
                Some(vessel_id)
            };
            let iface_id = b.add_gt(image_id, class, &strip, vessel_ref);

            if rng.gen_bool(spec.match_rate) {
                let dy = rng.gen_range(0..=2u32).min(iy - vy);
                let pred_strip = rect_mask(w, h, ix, iy - dy, iw, ih);
                let pred_class = if rng.gen_bool(spec.wrong_class_rate) {
                    class_ids[rng.gen_range(0..class_ids.len())]
                } else {
                    class
                };
                let pred_index = b.add_pred(
                    image_id,
                    pred_class,
                    &pred_strip,
                    rng.gen_range(0.3..1.0),
                    None,
                );
                if pred_class == class {
                    let realized = iou(&strip, &pred_strip).expect("same dims");
                    b.ledger.intended.push(IntendedMatch {
                        image_id,
                        gt_id: iface_id,
                        pred_index,
                        iou: realized,
                    });
                }
            }
        }
    }

    // decoy interface predictions outside every vessel (the "unassigned" path)
    if rng.gen_bool(0.5) {
        let (sx, sy) = slots[3];
        let iw = slot_w.min(30).max(8);
        let ih = 4;
        let strip = rect_mask(w, h, sx, sy + 4, iw, ih);
        let class = class_ids[rng.gen_range(0..class_ids.len())];
        b.add_pred(image_id, class, &strip, rng.gen_range(0.2..0.9), None);
    }
}

const STATS_VESSEL_NAMES: [&str; 23] = [
    "beaker",
    "conical flask",
    "round-bottom flask",
    "volumetric flask",
    "separatory funnel",
    "test tube",
    "pear-shaped flask",
    "graduated cylinder",
    "measuring cup",
    "petri dish",
    "vial",
    "desiccator",
    "burette",
    "pipette",
    "crystallizing dish",
    "evaporating dish",
    "watch glass",
    "funnel",
    "condenser",
    "dropping funnel",
    "gas washing bottle",
    "weighing bottle",
    "reagent bottle",
];

/// Deterministic annotation set shaped like the benchmark corpus: 3,668
/// images (2,939 train / 729 val), 30 categories, 18,458 instances with
/// scale bins 2,108 / 5,926 / 10,424 and interface counts
/// 3,637 G/L, 852 L/S, 327 L/L, 477 G/S, 7 S/S.
pub fn make_stats_fixture() -> AnnotationSet {
    const IMAGES: u64 = 3668;
    const TRAIN: u64 = 2939;
    const SIDE: u32 = 200;
    const TOTAL_PX: u64 = SIDE as u64 * SIDE as u64;
    const SMALL: u64 = 2108;
    const MEDIUM: u64 = 5926;
    const LARGE: u64 = 10424;
    const INSTANCES: u64 = SMALL + MEDIUM + LARGE;
    const INTERFACE_COUNTS: [(InterfaceType, u64); 5] = [
        (InterfaceType::GasLiquid, 3637),
        (InterfaceType::LiquidSolid, 852),
        (InterfaceType::LiquidLiquid, 327),
        (InterfaceType::GasSolid, 477),
        (InterfaceType::SolidSolid, 7),
    ];
    const AUXILIARY: u64 = 158;

    let images: Vec<ImageInfo> = (1..=IMAGES)
        .map(|id| ImageInfo {
            id,
            width: SIDE,
            height: SIDE,
            split: if id <= TRAIN { Split::Train } else { Split::Val },
        })
        .collect();

    let mut categories: Vec<Category> = Vec::with_capacity(30);
    for (i, name) in STATS_VESSEL_NAMES.iter().enumerate() {
        categories.push(Category {
            id: i as u64 + 1,
            name: (*name).into(),
            kind: CategoryKind::Vessel,
            interface_type: None,
        });
    }
    for (i, (itype, _)) in INTERFACE_COUNTS.iter().enumerate() {
        categories.push(Category {
            id: 100 + i as u64,
            name: format!("{} boundary", itype.label()),
            kind: CategoryKind::Interface,
            interface_type: Some(*itype),
        });
    }
    categories.push(Category {
        id: 200,
        name: "label".into(),
        kind: CategoryKind::Auxiliary,
        interface_type: None,
    });
    categories.push(Category {
        id: 201,
        name: "stopper".into(),
        kind: CategoryKind::Auxiliary,
        interface_type: None,
    });

    // instance -> image assignment: image 1 carries 112 instances (the
    // density maximum), images 2..=12 carry 6, the rest carry 5
    let mut image_of_instance = Vec::with_capacity(INSTANCES as usize);
    for image_id in 1..=IMAGES {
        let quota = match image_id {
            1 => 112,
            2..=12 => 6,
            _ => 5,
        };
        for _ in 0..quota {
            image_of_instance.push(image_id);
        }
    }
    debug_assert_eq!(image_of_instance.len() as u64, INSTANCES);

    let interface_total: u64 = INTERFACE_COUNTS.iter().map(|&(_, n)| n).sum();
    let category_of = |i: u64| -> u64 {
        if i < interface_total {
            let mut cum = 0;
            for (slot, &(_, n)) in INTERFACE_COUNTS.iter().enumerate() {
                cum += n;
                if i < cum {
                    return 100 + slot as u64;
                }
            }
            unreachable!()
        } else if i >= INSTANCES - AUXILIARY {
            200 + (i % 2)
        } else {
            1 + ((i - interface_total) % 23)
        }
    };

    let area_of = |i: u64| -> u64 {
        if i < SMALL {
            100
        } else if i < SMALL + MEDIUM {
            2_000
        } else {
            10_000
        }
    };

    let instances: Vec<GroundTruthInstance> = (0..INSTANCES)
        .map(|i| {
            let area = area_of(i);
            let offset = (i * 37) % (TOTAL_PX - area);
            GroundTruthInstance {
                id: i + 1,
                image_id: image_of_instance[i as usize],
                category_id: category_of(i),
                segmentation: Segmentation::Rle(RleMask {
                    width: SIDE,
                    height: SIDE,
                    runs: vec![offset, area, TOTAL_PX - offset - area],
                }),
                bbox: [0, 0, SIDE, SIDE],
                vessel_ref: None,
            }
        })
        .collect();

    AnnotationSet::new(images, categories, instances).expect("stats fixture is valid")
}

#[cfg(test)]
mod tests {
    use super::super::{load_annotations, write_annotations, write_predictions};
    use super::*;

    #[test]
    fn same_seed_gives_byte_identical_files() {
        let spec = FixtureSpec {
            images: 8,
            ..FixtureSpec::default()
        };
        let a = make_fixture(&spec, 7).unwrap();
        let b = make_fixture(&spec, 7).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.json"), dir.path().join("b.json"));
        write_annotations(&pa, &a.annotations).unwrap();
        write_annotations(&pb, &b.annotations).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
        write_predictions(&pa, &a.predictions).unwrap();
        write_predictions(&pb, &b.predictions).unwrap();
        assert_eq!(std::fs::read(&pa).unwrap(), std::fs::read(&pb).unwrap());
    }

    #[test]
    fn different_seeds_differ() {
        let spec = FixtureSpec::default();
        let a = make_fixture(&spec, 1).unwrap();
        let b = make_fixture(&spec, 2).unwrap();
        assert_ne!(
            a.annotations.instances.len() + a.predictions.predictions.len(),
            0
        );
        let sa = serde_json::to_string(&a.annotations.instances).unwrap();
        let sb = serde_json::to_string(&b.annotations.instances).unwrap();
        assert_ne!(sa, sb);
    }

    #[test]
    fn exact_pair_realizes_requested_iou() {
        let spec = FixtureSpec {
            images: 0,
            exact_pairs: vec![0.62],
            ..FixtureSpec::default()
        };
        let fx = make_fixture(&spec, 3).unwrap();
        assert_eq!(fx.ledger.pairs.len(), 1);
        let pair = &fx.ledger.pairs[0];
        assert_eq!(pair.iou, 0.62, "pixel-counted IoU must equal 62/100 exactly");
    }

    #[test]
    fn ledger_ious_match_pixel_counts() {
        let spec = FixtureSpec {
            images: 12,
            ..FixtureSpec::default()
        };
        let fx = make_fixture(&spec, 11).unwrap();
        assert!(!fx.ledger.intended.is_empty());
        for m in &fx.ledger.intended {
            let gt = fx
                .annotations
                .instances
                .iter()
                .find(|g| g.id == m.gt_id)
                .unwrap();
            let gt_mask = fx.annotations.instance_mask(gt).unwrap();
            let pred = &fx.predictions.predictions[m.pred_index];
            let pred_mask = rle_decode(&pred.rle).unwrap();
            assert_eq!(iou(&gt_mask, &pred_mask).unwrap(), m.iou);
        }
    }

    #[test]
    fn vessel_scene_populates_vessel_ref() {
        let spec = FixtureSpec {
            images: 6,
            vessels: true,
            omit_vessel_ref_rate: 0.0,
            ..FixtureSpec::default()
        };
        let fx = make_fixture(&spec, 5).unwrap();
        let ifaces: Vec<_> = fx
            .annotations
            .instances
            .iter()
            .filter(|i| INTERFACE_CATEGORY_IDS.contains(&i.category_id))
            .collect();
        assert!(!ifaces.is_empty());
        assert!(ifaces.iter().all(|i| i.vessel_ref.is_some()));
    }

    #[test]
    fn infeasible_specs_error() {
        let too_dense = FixtureSpec {
            max_gts_per_image: 113,
            ..FixtureSpec::default()
        };
        assert!(matches!(
            make_fixture(&too_dense, 0),
            Err(DatasetError::Infeasible(_))
        ));
        let bad_iou = FixtureSpec {
            exact_pairs: vec![1.5],
            ..FixtureSpec::default()
        };
        assert!(matches!(
            make_fixture(&bad_iou, 0),
            Err(DatasetError::Infeasible(_))
        ));
    }

    #[test]
    fn generated_fixture_survives_a_load_roundtrip() {
        let spec = FixtureSpec {
            images: 50,
            ..FixtureSpec::default()
        };
        let fx = make_fixture(&spec, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        write_annotations(&path, &fx.annotations).unwrap();
        let loaded = load_annotations(&path).unwrap();
        assert_eq!(loaded.instances.len(), fx.annotations.instances.len());
        assert_eq!(loaded.images.len(), 50);
    }

    #[test]
    fn stats_fixture_matches_declared_counts() {
        let set = make_stats_fixture();
        assert_eq!(set.images.len(), 3668);
        assert_eq!(set.categories.len(), 30);
        assert_eq!(set.instances.len(), 18458);
        let summary = super::super::class_summary(&set);
        assert_eq!(summary.interface_count(InterfaceType::GasLiquid), 3637);
        assert_eq!(summary.interface_count(InterfaceType::LiquidSolid), 852);
        assert_eq!(summary.interface_count(InterfaceType::LiquidLiquid), 327);
        assert_eq!(summary.interface_count(InterfaceType::GasSolid), 477);
        assert_eq!(summary.interface_count(InterfaceType::SolidSolid), 7);
        assert_eq!(summary.max_instances_per_image, 112);
        assert_eq!(summary.images_per_split["train"], 2939);
        assert_eq!(summary.images_per_split["val"], 729);
    }
}
