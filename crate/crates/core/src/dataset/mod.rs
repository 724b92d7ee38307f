//! Annotation and prediction files in the documented JSON schema, plus the
//! dataset statistics pipeline and the synthetic fixture generator.
//!
//! Annotation files are single JSON objects with top-level keys `schema`
//! (must be `"ctg2-spec/1"`), `images`, `categories` and `annotations`;
//! segmentations are `{"polygon": [[x,y],...]}` (one ring, or a list of
//! rings) or `{"rle": {"w":..,"h":..,"runs":[..]}}`. Prediction files are a
//! bare JSON array of `{image_id, category_id, rle, score, color_attr?}`.
//! Loading validates everything up front; no partially constructed set
//! escapes.

mod fixture;
mod summary;

pub use fixture::{make_fixture, make_stats_fixture, Fixture, FixtureLedger, FixtureSpec, PairLedger};
pub use summary::{class_summary, scale_histogram, ClassSummary, ScaleHistogram};

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{rle_decode, BBox, BinaryMask, Polygon, RleMask};

pub const SCHEMA_VERSION: &str = "ctg2-spec/1";

/// Pixel-area thresholds splitting instances into small/medium/large bins
/// (32² and 96²).
pub const SCALE_SMALL_MAX: u64 = 32 * 32;
pub const SCALE_MEDIUM_MAX: u64 = 96 * 96;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: parse error: {message}")]
    Parse { path: String, message: String },
    #[error("{field}: {message}")]
    Schema { field: String, message: String },
    #[error("infeasible fixture spec: {0}")]
    Infeasible(String),
}

impl DatasetError {
    fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        DatasetError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CategoryKind {
    Vessel,
    Interface,
    Auxiliary,
}

/// The five phase-boundary types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InterfaceType {
    #[serde(rename = "G/L")]
    GasLiquid,
    #[serde(rename = "L/L")]
    LiquidLiquid,
    #[serde(rename = "L/S")]
    LiquidSolid,
    #[serde(rename = "G/S")]
    GasSolid,
    #[serde(rename = "S/S")]
    SolidSolid,
}

impl InterfaceType {
    pub const ALL: [InterfaceType; 5] = [
        InterfaceType::GasLiquid,
        InterfaceType::LiquidLiquid,
        InterfaceType::LiquidSolid,
        InterfaceType::GasSolid,
        InterfaceType::SolidSolid,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            InterfaceType::GasLiquid => "G/L",
            InterfaceType::LiquidLiquid => "L/L",
            InterfaceType::LiquidSolid => "L/S",
            InterfaceType::GasSolid => "G/S",
            InterfaceType::SolidSolid => "S/S",
        }
    }

    /// Liquid-involved boundaries receive color attributes.
    pub fn involves_liquid(&self) -> bool {
        matches!(
            self,
            InterfaceType::GasLiquid | InterfaceType::LiquidLiquid | InterfaceType::LiquidSolid
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
    pub kind: CategoryKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface_type: Option<InterfaceType>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: u64,
    pub width: u32,
    pub height: u32,
    pub split: Split,
}

/// Mask geometry carried by an annotation: polygon ring(s) or RLE.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Segmentation {
    #[serde(rename = "polygon", with = "polygon_rings")]
    Polygons(Vec<Polygon>),
    #[serde(rename = "rle")]
    Rle(RleMask),
}

/// `"polygon"` accepts one ring `[[x,y],...]` or a list of rings; a single
/// ring is written back in the one-ring form.
mod polygon_rings {
    use super::Polygon;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        One(Vec<[f64; 2]>),
        Many(Vec<Vec<[f64; 2]>>),
    }

    fn ring_to_polygon<E: Error>(ring: Vec<[f64; 2]>) -> Result<Polygon, E> {
        Ok(Polygon {
            vertices: ring.into_iter().map(|[x, y]| (x, y)).collect(),
        })
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Polygon>, D::Error> {
        match Raw::deserialize(d)? {
            Raw::One(ring) => Ok(vec![ring_to_polygon::<D::Error>(ring)?]),
            Raw::Many(rings) => rings.into_iter().map(ring_to_polygon::<D::Error>).collect(),
        }
    }

    pub fn serialize<S: Serializer>(polys: &[Polygon], s: S) -> Result<S::Ok, S::Error> {
        let rings: Vec<Vec<[f64; 2]>> = polys
            .iter()
            .map(|p| p.vertices.iter().map(|&(x, y)| [x, y]).collect())
            .collect();
        if rings.len() == 1 {
            serde::Serialize::serialize(&rings[0], s)
        } else {
            serde::Serialize::serialize(&rings, s)
        }
    }
}

impl Segmentation {
    /// Materialize on the image grid. RLE dimensions must match the image.
    pub fn to_mask(&self, width: u32, height: u32) -> Result<BinaryMask, DatasetError> {
        match self {
            Segmentation::Rle(rle) => {
                if rle.width != width || rle.height != height {
                    return Err(DatasetError::schema(
                        "segmentation.rle",
                        format!(
                            "rle is {}x{} but the image is {width}x{height}",
                            rle.width, rle.height
                        ),
                    ));
                }
                rle_decode(rle).map_err(|e| DatasetError::schema("segmentation.rle", e.to_string()))
            }
            Segmentation::Polygons(polys) => {
                let mut mask = BinaryMask::new(width, height)
                    .map_err(|e| DatasetError::schema("segmentation.polygon", e.to_string()))?;
                for poly in polys {
                    let part = crate::geometry::rasterize(poly, width, height).map_err(|e| {
                        DatasetError::schema("segmentation.polygon", e.to_string())
                    })?;
                    mask.union_with(&part);
                }
                Ok(mask)
            }
        }
    }

    /// Foreground area without materializing polygon masks twice.
    fn area_on(&self, width: u32, height: u32) -> Result<u64, DatasetError> {
        match self {
            Segmentation::Rle(rle) => Ok(rle.area()),
            Segmentation::Polygons(_) => Ok(self.to_mask(width, height)?.area()),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GroundTruthInstance {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub segmentation: Segmentation,
    /// `[x_min, y_min, x_max, y_max]`, half-open.
    pub bbox: [u32; 4],
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vessel_ref: Option<u64>,
}

impl GroundTruthInstance {
    pub fn bbox(&self) -> Result<BBox, DatasetError> {
        BBox::new(self.bbox[0], self.bbox[1], self.bbox[2], self.bbox[3])
            .map_err(|e| DatasetError::schema("bbox", e.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColorAttr {
    Colored,
    Colorless,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionInstance {
    pub image_id: u64,
    pub category_id: u64,
    pub rle: RleMask,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub color_attr: Option<ColorAttr>,
}

#[derive(Debug, Clone, Deserialize)]
struct AnnotationFile {
    schema: String,
    images: Vec<ImageInfo>,
    categories: Vec<Category>,
    annotations: Vec<GroundTruthInstance>,
}

#[derive(Debug, Clone, Serialize)]
struct AnnotationFileOut<'a> {
    schema: &'a str,
    images: &'a [ImageInfo],
    categories: &'a [Category],
    annotations: &'a [GroundTruthInstance],
}

/// Validated ground-truth collection.
#[derive(Debug, Clone)]
pub struct AnnotationSet {
    pub images: Vec<ImageInfo>,
    pub categories: Vec<Category>,
    pub instances: Vec<GroundTruthInstance>,
}

impl AnnotationSet {
    /// Build and validate from parts; the loader and generator both funnel
    /// through here so the same rules apply everywhere.
    pub fn new(
        images: Vec<ImageInfo>,
        categories: Vec<Category>,
        instances: Vec<GroundTruthInstance>,
    ) -> Result<Self, DatasetError> {
        let set = AnnotationSet {
            images,
            categories,
            instances,
        };
        set.validate()?;
        Ok(set)
    }

    fn validate(&self) -> Result<(), DatasetError> {
        let mut image_dims: HashMap<u64, (u32, u32)> = HashMap::new();
        for (i, img) in self.images.iter().enumerate() {
            if img.width == 0 || img.height == 0 {
                return Err(DatasetError::schema(
                    format!("images[{i}]"),
                    "width and height must be at least 1",
                ));
            }
            if image_dims.insert(img.id, (img.width, img.height)).is_some() {
                return Err(DatasetError::schema(
                    format!("images[{i}].id"),
                    format!("duplicate image id {}", img.id),
                ));
            }
        }

        let mut category_kinds: HashMap<u64, CategoryKind> = HashMap::new();
        for (i, cat) in self.categories.iter().enumerate() {
            if category_kinds.insert(cat.id, cat.kind).is_some() {
                return Err(DatasetError::schema(
                    format!("categories[{i}].id"),
                    format!("duplicate category id {}", cat.id),
                ));
            }
            match (cat.kind, cat.interface_type) {
                (CategoryKind::Interface, None) => {
                    return Err(DatasetError::schema(
                        format!("categories[{i}].interface_type"),
                        "interface categories must declare an interface_type",
                    ));
                }
                (CategoryKind::Vessel | CategoryKind::Auxiliary, Some(_)) => {
                    return Err(DatasetError::schema(
                        format!("categories[{i}].interface_type"),
                        "only interface categories may declare an interface_type",
                    ));
                }
                _ => {}
            }
        }

        let mut ids: HashSet<u64> = HashSet::new();
        let mut vessels_by_image: HashMap<u64, HashSet<u64>> = HashMap::new();
        for inst in &self.instances {
            if let Some(CategoryKind::Vessel) = category_kinds.get(&inst.category_id) {
                vessels_by_image
                    .entry(inst.image_id)
                    .or_default()
                    .insert(inst.id);
            }
        }

        for (i, inst) in self.instances.iter().enumerate() {
            let field = |name: &str| format!("annotations[{i}].{name}");
            if !ids.insert(inst.id) {
                return Err(DatasetError::schema(
                    field("id"),
                    format!("duplicate annotation id {}", inst.id),
                ));
            }
            let &(w, h) = image_dims.get(&inst.image_id).ok_or_else(|| {
                DatasetError::schema(
                    field("image_id"),
                    format!("unknown image {}", inst.image_id),
                )
            })?;
            if !category_kinds.contains_key(&inst.category_id) {
                return Err(DatasetError::schema(
                    field("category_id"),
                    format!("unknown category {}", inst.category_id),
                ));
            }
            inst.bbox().map_err(|e| match e {
                DatasetError::Schema { message, .. } => DatasetError::schema(field("bbox"), message),
                other => other,
            })?;
            let area = inst.segmentation.area_on(w, h).map_err(|e| match e {
                DatasetError::Schema { field: f, message } => {
                    DatasetError::schema(format!("annotations[{i}].{f}"), message)
                }
                other => other,
            })?;
            if area == 0 {
                return Err(DatasetError::schema(
                    field("segmentation"),
                    "segmentation rasterizes to an empty mask",
                ));
            }
            if let Some(vref) = inst.vessel_ref {
                let ok = vessels_by_image
                    .get(&inst.image_id)
                    .is_some_and(|set| set.contains(&vref));
                if !ok {
                    return Err(DatasetError::schema(
                        field("vessel_ref"),
                        format!("{vref} is not a vessel instance in image {}", inst.image_id),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn category(&self, id: u64) -> Option<&Category> {
        self.categories.iter().find(|c| c.id == id)
    }

    pub fn image(&self, id: u64) -> Option<&ImageInfo> {
        self.images.iter().find(|im| im.id == id)
    }

    /// Instances grouped by image id, in file order.
    pub fn instances_by_image(&self) -> HashMap<u64, Vec<&GroundTruthInstance>> {
        let mut map: HashMap<u64, Vec<&GroundTruthInstance>> = HashMap::new();
        for inst in &self.instances {
            map.entry(inst.image_id).or_default().push(inst);
        }
        map
    }

    /// Materialized mask for one instance.
    pub fn instance_mask(&self, inst: &GroundTruthInstance) -> Result<BinaryMask, DatasetError> {
        let img = self.image(inst.image_id).expect("validated image id");
        inst.segmentation.to_mask(img.width, img.height)
    }
}

/// Validated prediction collection.
#[derive(Debug, Clone, Default)]
pub struct PredictionSet {
    pub predictions: Vec<PredictionInstance>,
}

impl PredictionSet {
    pub fn new(predictions: Vec<PredictionInstance>) -> Result<Self, DatasetError> {
        for (i, pred) in predictions.iter().enumerate() {
            let field = |name: &str| format!("predictions[{i}].{name}");
            if !(0.0..=1.0).contains(&pred.score) {
                return Err(DatasetError::schema(
                    field("score"),
                    format!("score {} outside [0, 1]", pred.score),
                ));
            }
            pred.rle
                .validate()
                .map_err(|e| DatasetError::schema(field("rle"), e.to_string()))?;
            if pred.rle.area() == 0 {
                return Err(DatasetError::schema(field("rle"), "empty prediction mask"));
            }
        }
        Ok(PredictionSet { predictions })
    }

    /// Cross-checks against an annotation set: image ids resolve, category
    /// ids exist, and mask dimensions match the image.
    pub fn validate_against(&self, gt: &AnnotationSet) -> Result<(), DatasetError> {
        for (i, pred) in self.predictions.iter().enumerate() {
            let field = |name: &str| format!("predictions[{i}].{name}");
            let img = gt.image(pred.image_id).ok_or_else(|| {
                DatasetError::schema(field("image_id"), format!("unknown image {}", pred.image_id))
            })?;
            if gt.category(pred.category_id).is_none() {
                return Err(DatasetError::schema(
                    field("category_id"),
                    format!("unknown category {}", pred.category_id),
                ));
            }
            if pred.rle.width != img.width || pred.rle.height != img.height {
                return Err(DatasetError::schema(
                    field("rle"),
                    format!(
                        "rle is {}x{} but image {} is {}x{}",
                        pred.rle.width, pred.rle.height, pred.image_id, img.width, img.height
                    ),
                ));
            }
        }
        Ok(())
    }

    pub fn by_image(&self) -> HashMap<u64, Vec<&PredictionInstance>> {
        let mut map: HashMap<u64, Vec<&PredictionInstance>> = HashMap::new();
        for pred in &self.predictions {
            map.entry(pred.image_id).or_default().push(pred);
        }
        map
    }
}

fn read_to_string(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Load and fully validate an annotation file.
pub fn load_annotations(path: impl AsRef<Path>) -> Result<AnnotationSet, DatasetError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let file: AnnotationFile = serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    if file.schema != SCHEMA_VERSION {
        return Err(DatasetError::schema(
            "schema",
            format!("expected \"{SCHEMA_VERSION}\", found \"{}\"", file.schema),
        ));
    }
    AnnotationSet::new(file.images, file.categories, file.annotations)
}

/// Load and validate a prediction file (a bare JSON array).
pub fn load_predictions(path: impl AsRef<Path>) -> Result<PredictionSet, DatasetError> {
    let path = path.as_ref();
    let text = read_to_string(path)?;
    let predictions: Vec<PredictionInstance> =
        serde_json::from_str(&text).map_err(|e| DatasetError::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
    PredictionSet::new(predictions)
}

pub fn write_annotations(path: impl AsRef<Path>, set: &AnnotationSet) -> Result<(), DatasetError> {
    let out = AnnotationFileOut {
        schema: SCHEMA_VERSION,
        images: &set.images,
        categories: &set.categories,
        annotations: &set.instances,
    };
    let text = serde_json::to_string_pretty(&out).expect("annotation sets serialize");
    std::fs::write(path.as_ref(), text).map_err(|source| DatasetError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

pub fn write_predictions(path: impl AsRef<Path>, set: &PredictionSet) -> Result<(), DatasetError> {
    let text = serde_json::to_string_pretty(&set.predictions).expect("predictions serialize");
    std::fs::write(path.as_ref(), text).map_err(|source| DatasetError::Io {
        path: path.as_ref().display().to_string(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip_rle(w: u32, h: u32, offset: u64, len: u64) -> RleMask {
        let total = w as u64 * h as u64;
        RleMask {
            width: w,
            height: h,
            runs: vec![offset, len, total - offset - len],
        }
    }

    fn minimal_set() -> (Vec<ImageInfo>, Vec<Category>) {
        (
            vec![ImageInfo {
                id: 1,
                width: 10,
                height: 10,
                split: Split::Train,
            }],
            vec![
                Category {
                    id: 1,
                    name: "beaker".into(),
                    kind: CategoryKind::Vessel,
                    interface_type: None,
                },
                Category {
                    id: 2,
                    name: "gas-liquid boundary".into(),
                    kind: CategoryKind::Interface,
                    interface_type: Some(InterfaceType::GasLiquid),
                },
            ],
        )
    }

    #[test]
    fn minimal_file_roundtrips() {
        let (images, categories) = minimal_set();
        let set = AnnotationSet::new(images, categories, vec![]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        write_annotations(&path, &set).unwrap();
        let loaded = load_annotations(&path).unwrap();
        assert_eq!(loaded.images.len(), 1);
        assert_eq!(loaded.categories.len(), 2);
        assert!(loaded.instances.is_empty());
    }

    #[test]
    fn unknown_category_named_in_error() {
        let (images, categories) = minimal_set();
        let inst = GroundTruthInstance {
            id: 1,
            image_id: 1,
            category_id: 99,
            segmentation: Segmentation::Rle(strip_rle(10, 10, 0, 5)),
            bbox: [0, 0, 5, 1],
            vessel_ref: None,
        };
        let err = AnnotationSet::new(images, categories, vec![inst]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("annotations[0].category_id"), "{msg}");
        assert!(msg.contains("99"), "{msg}");
    }

    #[test]
    fn vessel_ref_must_point_at_vessel_in_same_image() {
        let (images, categories) = minimal_set();
        let vessel = GroundTruthInstance {
            id: 1,
            image_id: 1,
            category_id: 1,
            segmentation: Segmentation::Rle(strip_rle(10, 10, 0, 50)),
            bbox: [0, 0, 10, 5],
            vessel_ref: None,
        };
        let iface = GroundTruthInstance {
            id: 2,
            image_id: 1,
            category_id: 2,
            segmentation: Segmentation::Rle(strip_rle(10, 10, 10, 10)),
            bbox: [0, 1, 10, 2],
            vessel_ref: Some(1),
        };
        AnnotationSet::new(images.clone(), categories.clone(), vec![vessel.clone(), iface.clone()])
            .unwrap();

        // pointing at another interface instead of a vessel fails
        let mut bad = iface.clone();
        bad.vessel_ref = Some(2);
        let err = AnnotationSet::new(images, categories, vec![vessel, bad]).unwrap_err();
        assert!(err.to_string().contains("vessel_ref"), "{err}");
    }

    #[test]
    fn empty_segmentation_rejected() {
        let (images, categories) = minimal_set();
        let inst = GroundTruthInstance {
            id: 1,
            image_id: 1,
            category_id: 1,
            segmentation: Segmentation::Rle(RleMask {
                width: 10,
                height: 10,
                runs: vec![100],
            }),
            bbox: [0, 0, 5, 1],
            vessel_ref: None,
        };
        let err = AnnotationSet::new(images, categories, vec![inst]).unwrap_err();
        assert!(err.to_string().contains("empty mask"), "{err}");
    }

    #[test]
    fn wrong_schema_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gt.json");
        std::fs::write(
            &path,
            r#"{"schema":"ctg2-spec/0","images":[],"categories":[],"annotations":[]}"#,
        )
        .unwrap();
        let err = load_annotations(&path).unwrap_err();
        assert!(err.to_string().contains("ctg2-spec/1"), "{err}");
    }

    #[test]
    fn polygon_single_ring_and_ring_list_both_parse() {
        let one = r#"{"polygon": [[0.0,0.0],[4.0,0.0],[4.0,4.0],[0.0,4.0]]}"#;
        let many = r#"{"polygon": [[[0.0,0.0],[4.0,0.0],[4.0,4.0],[0.0,4.0]],[[5.0,5.0],[8.0,5.0],[5.0,8.0]]]}"#;
        let seg1: Segmentation = serde_json::from_str(one).unwrap();
        let seg2: Segmentation = serde_json::from_str(many).unwrap();
        assert_eq!(seg1.to_mask(10, 10).unwrap().area(), 16);
        let mask2 = seg2.to_mask(10, 10).unwrap();
        assert!(mask2.area() > 16);
    }

    #[test]
    fn prediction_score_out_of_range_rejected() {
        let pred = PredictionInstance {
            image_id: 1,
            category_id: 2,
            rle: strip_rle(10, 10, 0, 5),
            score: 1.5,
            color_attr: None,
        };
        let err = PredictionSet::new(vec![pred]).unwrap_err();
        assert!(err.to_string().contains("predictions[0].score"), "{err}");
    }
}
