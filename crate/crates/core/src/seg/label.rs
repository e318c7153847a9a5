use std::sync::{Arc, LazyLock};

use image::RgbImage;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use sha2::{Digest, Sha256};

use super::{Region2D, RegionLabel};
use crate::metrics::normalize;
use crate::vlm::{self, ChatRequest, UserPart, VlmBackend, VlmReply};
use crate::{Error, Result};

pub const LABEL_SYSTEM: &str = "You are a careful annotator of indoor scene images.";

static MARK_COLOR: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?m)^(\d+): mean color #([0-9a-f]{6})$").unwrap());
static ANSWER_LINE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\s*\[?(\d+)\]?\s*[:.)\-]\s*(.*?)\s*$").unwrap());

/// Prompt text listing every mark with its mean color and the closed label set.
pub fn label_prompt(source: &RgbImage, regions: &[Region2D], class_names: &[String]) -> String {
    let mut s = String::from(
        "The image is divided into regions, each marked with a white number. \
         Assign every numbered region exactly one label from this list: [",
    );
    s.push_str(&class_names.join(", "));
    s.push_str("]. If no label fits, answer 'unknown'. Reply with one line per region in the form 'k: label'.\nRegions:\n");
    for r in regions {
        let [cr, cg, cb] = r.mean_color(source);
        s.push_str(&format!("{}: mean color #{cr:02x}{cg:02x}{cb:02x}\n", r.mark_id));
    }
    s
}

/// Maps "k: label" lines onto the marks. Unknown labels and missing marks
/// are rejected; the first line for a mark wins.
pub fn parse_region_labels(text: &str, regions: &[Region2D], class_names: &[String]) -> Vec<RegionLabel> {
    let norm_classes: Vec<String> = class_names.iter().map(|c| normalize(c).joined()).collect();
    let mut found: std::collections::HashMap<u32, Option<u32>> = std::collections::HashMap::new();
    for line in text.lines() {
        let Some(c) = ANSWER_LINE.captures(line) else { continue };
        let Ok(mark) = c[1].parse::<u32>() else { continue };
        let label = normalize(&c[2]).joined();
        let class = norm_classes.iter().position(|n| *n == label).map(|i| i as u32);
        found.entry(mark).or_insert(class);
    }
    regions
        .iter()
        .map(|r| RegionLabel {
            mark_id: r.mark_id,
            class_id: found.get(&r.mark_id).copied().flatten(),
        })
        .collect()
}

/// One model call per image. Parsing problems degrade to rejected labels.
pub fn label_regions(
    source: &RgbImage,
    marked: &RgbImage,
    regions: &[Region2D],
    class_names: &[String],
    backend: &dyn VlmBackend,
) -> Result<Vec<RegionLabel>> {
    if regions.is_empty() {
        return Ok(Vec::new());
    }
    if class_names.len() < 2 {
        return Err(Error::InvalidSpec("labeling needs at least two classes".into()));
    }
    let req = ChatRequest::new(
        LABEL_SYSTEM,
        vec![
            UserPart::Image(Arc::new(marked.clone())),
            UserPart::Text(label_prompt(source, regions, class_names)),
        ],
    );
    let reply = vlm::complete(&req, backend)?;
    Ok(parse_region_labels(&reply.text, regions, class_names))
}

fn prompt_marks(text: &str) -> Vec<(u32, [u8; 3])> {
    MARK_COLOR
        .captures_iter(text)
        .filter_map(|c| {
            let mark = c[1].parse().ok()?;
            let v = u32::from_str_radix(&c[2], 16).ok()?;
            Some((mark, [(v >> 16) as u8, (v >> 8) as u8, v as u8]))
        })
        .collect()
}

/// Labels regions by looking their mean color up in a known palette. Stands
/// in for the model on synthetic scenes whose surfaces carry class colors.
pub struct ColorKeyedLabeler {
    palette: Vec<([u8; 3], Option<u32>)>,
    class_names: Vec<String>,
    tolerance: u8,
}

impl ColorKeyedLabeler {
    pub fn new(palette: Vec<([u8; 3], Option<u32>)>, class_names: Vec<String>) -> Self {
        Self {
            palette,
            class_names,
            tolerance: 6,
        }
    }
}

impl VlmBackend for ColorKeyedLabeler {
    fn id(&self) -> String {
        "color-keyed".into()
    }

    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        let mut text = String::new();
        for (mark, color) in prompt_marks(&request.text()) {
            let hit = self.palette.iter().find(|(c, _)| (0..3).all(|k| c[k].abs_diff(color[k]) <= self.tolerance));
            let name = hit
                .and_then(|(_, id)| *id)
                .and_then(|id| self.class_names.get(id as usize))
                .map_or("unknown", String::as_str);
            text.push_str(&format!("{mark}: {name}\n"));
        }
        Ok(VlmReply {
            text,
            usage: None,
            backend_id: self.id(),
        })
    }
}

/// Uniformly random labels, seeded by the request content.
pub struct RandomLabeler {
    class_names: Vec<String>,
    seed: u64,
}

impl RandomLabeler {
    pub fn new(class_names: Vec<String>, seed: u64) -> Self {
        Self { class_names, seed }
    }
}

impl VlmBackend for RandomLabeler {
    fn id(&self) -> String {
        format!("random-labeler:{}", self.seed)
    }

    fn complete(&self, request: &ChatRequest) -> Result<VlmReply> {
        let text = request.text();
        let digest = Sha256::digest(text.as_bytes());
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ u64::from_le_bytes(digest[..8].try_into().unwrap()));
        let mut out = String::new();
        for (mark, _) in prompt_marks(&text) {
            let k = rng.random_range(0..self.class_names.len().max(1));
            out.push_str(&format!("{mark}: {}\n", self.class_names.get(k).map_or("unknown", String::as_str)));
        }
        Ok(VlmReply {
            text: out,
            usage: None,
            backend_id: self.id(),
        })
    }
}
