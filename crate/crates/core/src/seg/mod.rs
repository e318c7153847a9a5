//! Zero-shot 3D semantic segmentation: 2D regions per view, numbered mark
//! overlays, model labeling of marks, back-projection and multi-view fusion.

mod fuse;
mod label;
mod mask;

use std::collections::VecDeque;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::font;
use crate::render::ViewBundle;
use crate::scene::LabeledPointCloud;
use crate::vlm::VlmBackend;
use crate::{Error, Result};

pub use fuse::{backproject_view, fuse_labels, median_nn_spacing, miou, MiouReport};
pub use label::{label_prompt, label_regions, parse_region_labels, ColorKeyedLabeler, RandomLabeler};
pub use mask::{decode_mask, ingest_masks, write_mask_png, MaskFileSegmenter};

/// One proposed region. Pixels are (u, v) in row-major order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region2D {
    pub mark_id: u32,
    pub pixels: Vec<(u32, u32)>,
    pub centroid: (u32, u32),
}

impl Region2D {
    /// Builds a region; the centroid is the member pixel closest to the mean
    /// position, so it always lies inside the region.
    pub fn new(mark_id: u32, mut pixels: Vec<(u32, u32)>) -> Self {
        pixels.sort_unstable_by_key(|&(u, v)| (v, u));
        let n = pixels.len().max(1) as f64;
        let mu = pixels.iter().map(|p| p.0 as f64).sum::<f64>() / n;
        let mv = pixels.iter().map(|p| p.1 as f64).sum::<f64>() / n;
        let centroid = pixels
            .iter()
            .copied()
            .min_by(|a, b| {
                let da = (a.0 as f64 - mu).powi(2) + (a.1 as f64 - mv).powi(2);
                let db = (b.0 as f64 - mu).powi(2) + (b.1 as f64 - mv).powi(2);
                da.total_cmp(&db)
            })
            .unwrap_or((0, 0));
        Self {
            mark_id,
            pixels,
            centroid,
        }
    }

    pub fn area(&self) -> usize {
        self.pixels.len()
    }

    pub fn mean_color(&self, img: &RgbImage) -> [u8; 3] {
        let mut sum = [0u64; 3];
        for &(u, v) in &self.pixels {
            let p = img.get_pixel(u, v).0;
            for c in 0..3 {
                sum[c] += p[c] as u64;
            }
        }
        let n = self.pixels.len().max(1) as u64;
        sum.map(|s| ((s + n / 2) / n) as u8)
    }
}

/// Class assigned to one mark; `None` means rejected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionLabel {
    pub mark_id: u32,
    pub class_id: Option<u32>,
}

pub trait Segmenter: Send + Sync {
    fn segment(&self, image: &RgbImage) -> Result<Vec<Region2D>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BuiltinSegmenter {
    pub min_region_px: usize,
    pub quant_levels: u32,
}

impl Default for BuiltinSegmenter {
    fn default() -> Self {
        Self {
            min_region_px: 50,
            quant_levels: 8,
        }
    }
}

impl Segmenter for BuiltinSegmenter {
    fn segment(&self, image: &RgbImage) -> Result<Vec<Region2D>> {
        Ok(builtin_segment(image, self.min_region_px, self.quant_levels))
    }
}

/// Connected components of uniform quantized color, largest first.
pub fn builtin_segment(image: &RgbImage, min_region_px: usize, quant_levels: u32) -> Vec<Region2D> {
    let (w, h) = image.dimensions();
    let levels = quant_levels.clamp(1, 256);
    let quant: Vec<[u8; 3]> = image
        .pixels()
        .map(|p| p.0.map(|c| (c as u32 * levels / 256) as u8))
        .collect();
    let mut seen = vec![false; quant.len()];
    let mut comps: Vec<Vec<(u32, u32)>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..quant.len() {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let key = quant[start];
        let mut comp = Vec::new();
        while let Some(i) = queue.pop_front() {
            let (u, v) = ((i as u32) % w, (i as u32) / w);
            comp.push((u, v));
            let mut visit = |j: usize| {
                if !seen[j] && quant[j] == key {
                    seen[j] = true;
                    queue.push_back(j);
                }
            };
            if u > 0 {
                visit(i - 1);
            }
            if u + 1 < w {
                visit(i + 1);
            }
            if v > 0 {
                visit(i - w as usize);
            }
            if v + 1 < h {
                visit(i + w as usize);
            }
        }
        if comp.len() >= min_region_px.max(1) {
            comps.push(comp);
        }
    }
    // Stable sort keeps scan order among equal areas.
    comps.sort_by_key(|c| std::cmp::Reverse(c.len()));
    comps
        .into_iter()
        .enumerate()
        .map(|(k, c)| Region2D::new(k as u32 + 1, c))
        .collect()
}

pub const MARK_SCALE: u32 = 2;

/// Draws every mark id centered on its region centroid, white on a black halo.
pub fn overlay_marks(image: &RgbImage, regions: &[Region2D]) -> RgbImage {
    let mut out = image.clone();
    for r in regions {
        let text = r.mark_id.to_string();
        let (tw, th) = font::text_size(&text, MARK_SCALE);
        let x = r.centroid.0 as i64 - tw as i64 / 2;
        let y = r.centroid.1 as i64 - th as i64 / 2;
        for dy in -1..=1 {
            for dx in -1..=1 {
                if dx != 0 || dy != 0 {
                    font::draw_text(&mut out, &text, x + dx, y + dy, MARK_SCALE, [0, 0, 0]);
                }
            }
        }
        font::draw_text(&mut out, &text, x, y, MARK_SCALE, [255, 255, 255]);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SegConfig {
    pub min_region_px: usize,
    pub quant_levels: u32,
    pub stride_px: u32,
    /// Fixed fusion radius; derived from the ground-truth spacing when absent.
    pub radius_m: Option<f64>,
    pub radius_factor: f64,
}

impl Default for SegConfig {
    fn default() -> Self {
        Self {
            min_region_px: 50,
            quant_levels: 8,
            stride_px: 4,
            radius_m: None,
            radius_factor: 2.0,
        }
    }
}

impl SegConfig {
    pub fn builtin(&self) -> BuiltinSegmenter {
        BuiltinSegmenter {
            min_region_px: self.min_region_px,
            quant_levels: self.quant_levels,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ViewSegmentation {
    pub regions: Vec<Region2D>,
    pub labels: Vec<RegionLabel>,
    pub marked: RgbImage,
    pub points: Vec<(nalgebra::Point3<f64>, u32)>,
}

#[derive(Debug, Clone)]
pub struct SegOutcome {
    pub predicted: Vec<u32>,
    pub report: MiouReport,
    pub labeled_fraction: f64,
    pub radius_m: f64,
    pub per_view: Vec<ViewSegmentation>,
}

/// Segment, mark, label and back-project every view, then fuse onto the
/// ground-truth points and score.
pub fn segment_views(
    views: &[ViewBundle],
    gt: &LabeledPointCloud,
    segmenter: &dyn Segmenter,
    labeler: &dyn VlmBackend,
    cfg: &SegConfig,
) -> Result<SegOutcome> {
    let classes = gt.class_names();
    let mut per_view = Vec::with_capacity(views.len());
    for view in views {
        let regions = segmenter.segment(&view.color)?;
        let marked = overlay_marks(&view.color, &regions);
        let labels = label_regions(&view.color, &marked, &regions, classes, labeler)?;
        let points = backproject_view(&regions, &labels, view, cfg.stride_px);
        per_view.push(ViewSegmentation {
            regions,
            labels,
            marked,
            points,
        });
    }
    let radius_m = match cfg.radius_m {
        Some(r) => r,
        None => {
            let s = median_nn_spacing(gt.points())
                .ok_or_else(|| Error::InvalidSpec("ground truth needs at least two points".into()))?;
            cfg.radius_factor * s
        }
    };
    let clouds: Vec<_> = per_view.iter().map(|v| v.points.clone()).collect();
    let predicted = fuse_labels(&clouds, gt.points(), gt.num_classes(), radius_m)?;
    let report = miou(&predicted, gt.labels(), gt.num_classes())?;
    let unl = gt.unlabeled();
    let labeled_fraction = if predicted.is_empty() {
        0.0
    } else {
        predicted.iter().filter(|&&l| l != unl).count() as f64 / predicted.len() as f64
    };
    Ok(SegOutcome {
        predicted,
        report,
        labeled_fraction,
        radius_m,
        per_view,
    })
}
