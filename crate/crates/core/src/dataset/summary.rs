//! Dataset statistics: instance-scale histogram and per-category summaries.

use std::collections::HashMap;

use serde::Serialize;

use super::{
    AnnotationSet, CategoryKind, DatasetError, InterfaceType, Split, SCALE_MEDIUM_MAX,
    SCALE_SMALL_MAX,
};

/// Small/medium/large instance-area bins (thresholds 32² and 96² pixels).
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ScaleHistogram {
    pub small: u64,
    pub medium: u64,
    pub large: u64,
    pub small_fraction: f64,
    pub medium_fraction: f64,
    pub large_fraction: f64,
}

pub fn scale_histogram(set: &AnnotationSet) -> Result<ScaleHistogram, DatasetError> {
    let mut small = 0u64;
    let mut medium = 0u64;
    let mut large = 0u64;
    for inst in &set.instances {
        let img = set.image(inst.image_id).expect("validated image id");
        let area = match &inst.segmentation {
            super::Segmentation::Rle(rle) => rle.area(),
            seg => seg.to_mask(img.width, img.height)?.area(),
        };
        if area < SCALE_SMALL_MAX {
            small += 1;
        } else if area < SCALE_MEDIUM_MAX {
            medium += 1;
        } else {
            large += 1;
        }
    }
    let total = (small + medium + large) as f64;
    let frac = |n: u64| if total > 0.0 { n as f64 / total } else { 0.0 };
    Ok(ScaleHistogram {
        small,
        medium,
        large,
        small_fraction: frac(small),
        medium_fraction: frac(medium),
        large_fraction: frac(large),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CategoryCount {
    pub category_id: u64,
    pub name: String,
    pub kind: CategoryKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub interface_type: Option<InterfaceType>,
    pub count: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassSummary {
    pub per_category: Vec<CategoryCount>,
    /// image counts keyed by split label
    pub images_per_split: HashMap<String, u64>,
    pub total_instances: u64,
    pub max_instances_per_image: u64,
    pub mean_instances_per_image: f64,
}

impl ClassSummary {
    /// Instance count for one interface type, summed over its categories.
    pub fn interface_count(&self, itype: InterfaceType) -> u64 {
        self.per_category
            .iter()
            .filter(|c| c.interface_type == Some(itype))
            .map(|c| c.count)
            .sum()
    }
}

pub fn class_summary(set: &AnnotationSet) -> ClassSummary {
    let mut counts: HashMap<u64, u64> = HashMap::new();
    let mut per_image: HashMap<u64, u64> = HashMap::new();
    for inst in &set.instances {
        *counts.entry(inst.category_id).or_insert(0) += 1;
        *per_image.entry(inst.image_id).or_insert(0) += 1;
    }

    let per_category = set
        .categories
        .iter()
        .map(|cat| CategoryCount {
            category_id: cat.id,
            name: cat.name.clone(),
            kind: cat.kind,
            interface_type: cat.interface_type,
            count: counts.get(&cat.id).copied().unwrap_or(0),
        })
        .collect();

    let mut images_per_split: HashMap<String, u64> = HashMap::new();
    for img in &set.images {
        let label = match img.split {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        };
        *images_per_split.entry(label.to_string()).or_insert(0) += 1;
    }

    let total_instances = set.instances.len() as u64;
    let max_instances_per_image = per_image.values().copied().max().unwrap_or(0);
    let mean_instances_per_image = if set.images.is_empty() {
        0.0
    } else {
        total_instances as f64 / set.images.len() as f64
    };

    ClassSummary {
        per_category,
        images_per_split,
        total_instances,
        max_instances_per_image,
        mean_instances_per_image,
    }
}
