//! Grid overlay for the bird's-eye view: lattice lines, integer tick
//! labels and direction words, plus the exact lattice <-> world mapping
//! that viewpoint proposals are expressed in.
//!
//! A density `d` grid has `d` cells and `d + 1` lines per axis. Grid point
//! `(0, 0)` is the min corner of the scene footprint and `(d, d)` the max
//! corner.

use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::font::{self, fill_rect, GLYPH_H, GLYPH_W};
use crate::pose::Orientation;
use crate::render::BevImage;
use crate::scene::SceneBounds;
use crate::{Error, Result};

pub const MAX_DENSITY: u32 = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub density: u32,
    /// `[xmin, ymin, xmax, ymax]` in world meters.
    pub bounds_xy: [f64; 4],
}

pub fn make_grid(bounds: &SceneBounds, density: u32) -> Result<GridSpec> {
    if !(1..=MAX_DENSITY).contains(&density) {
        return Err(Error::InvalidDensity(density));
    }
    if !bounds.has_planar_extent() {
        return Err(Error::InvalidSpec("grid needs positive x and y extent".into()));
    }
    Ok(GridSpec {
        density,
        bounds_xy: [bounds.min[0], bounds.min[1], bounds.max[0], bounds.max[1]],
    })
}

impl GridSpec {
    pub fn num_points(&self) -> usize {
        let n = self.density as usize + 1;
        n * n
    }

    pub fn contains(&self, i: i64, j: i64) -> bool {
        let d = self.density as i64;
        (0..=d).contains(&i) && (0..=d).contains(&j)
    }

    pub fn grid_to_world(&self, i: i64, j: i64) -> Result<(f64, f64)> {
        if !self.contains(i, j) {
            return Err(Error::OutOfGrid(i, j));
        }
        let [x0, y0, x1, y1] = self.bounds_xy;
        let d = self.density as f64;
        Ok((x0 + i as f64 * (x1 - x0) / d, y0 + j as f64 * (y1 - y0) / d))
    }

    /// Nearest lattice point, clamped into the grid. Exact halfway points
    /// go to the lower index.
    pub fn world_to_grid(&self, x: f64, y: f64) -> (i64, i64) {
        let [x0, y0, x1, y1] = self.bounds_xy;
        let d = self.density as f64;
        let snap = |t: f64| -> i64 {
            if t.is_nan() {
                return 0;
            }
            let r = (t - 0.5 - 1e-9).ceil();
            r.clamp(0.0, d) as i64
        };
        (snap((x - x0) / (x1 - x0) * d), snap((y - y0) / (y1 - y0) * d))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayStyle {
    pub line_color: [u8; 3],
    pub line_thickness: u32,
    /// Tick label glyph height in pixels; rounded down to a multiple of 7.
    pub tick_font_px: u32,
    /// Direction word glyph height in pixels.
    pub word_font_px: u32,
    pub text_color: [u8; 3],
    pub text_background: [u8; 3],
}

impl Default for OverlayStyle {
    fn default() -> Self {
        Self {
            line_color: [0, 255, 0],
            line_thickness: 2,
            tick_font_px: 14,
            word_font_px: 7,
            text_color: [255, 255, 255],
            text_background: [0, 0, 0],
        }
    }
}

fn scale_for(px: u32) -> u32 {
    (px / GLYPH_H).max(1)
}

/// Half-open pixel rectangle `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub x1: i64,
    pub y1: i64,
}

impl Rect {
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= self.x0 && x < self.x1 && y >= self.y0 && y < self.y1
    }

    fn within(&self, w: u32, h: u32) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1 <= w as i64 && self.y1 <= h as i64
    }

    fn overlaps(&self, o: &Rect) -> bool {
        self.x0 < o.x1 && o.x0 < self.x1 && self.y0 < o.y1 && o.y0 < self.y1
    }
}

#[derive(Debug, Clone)]
pub struct TextBox {
    pub text: String,
    pub rect: Rect,
    pub scale: u32,
    /// Letters stacked top to bottom instead of left to right.
    pub vertical: bool,
}

/// Everything the overlay draws, in pixel space.
#[derive(Debug, Clone)]
pub struct AnnotationLayout {
    pub vertical_lines: Vec<Rect>,
    pub horizontal_lines: Vec<Rect>,
    pub tick_labels: Vec<TextBox>,
    pub direction_words: Vec<TextBox>,
}

impl AnnotationLayout {
    pub fn rects(&self) -> impl Iterator<Item = &Rect> {
        self.vertical_lines
            .iter()
            .chain(&self.horizontal_lines)
            .chain(self.tick_labels.iter().map(|t| &t.rect))
            .chain(self.direction_words.iter().map(|t| &t.rect))
    }
}

fn text_box(text: &str, scale: u32, vertical: bool) -> (i64, i64) {
    if vertical {
        let n = text.chars().count() as i64;
        ((GLYPH_W * scale) as i64 + 2, n * (GLYPH_H as i64 + 1) * scale as i64 - scale as i64 + 2)
    } else {
        let (w, h) = font::text_size(text, scale);
        (w as i64 + 2, h as i64 + 2)
    }
}

/// Smallest BEV scale at which the tick labels of a density-`d` grid over
/// `bounds` do not collide under `style`.
pub fn min_px_per_meter(bounds: &SceneBounds, density: u32, style: &OverlayStyle) -> f64 {
    let s = scale_for(style.tick_font_px);
    let (lw, lh) = text_box(&density.to_string(), s, false);
    let e = bounds.extent();
    let per_x = (lw + 2) as f64 * density as f64 / e[0];
    let per_y = (lh + 2) as f64 * density as f64 / e[1];
    per_x.max(per_y).ceil()
}

/// Computes where lines, tick labels and direction words go.
pub fn annotation_layout(bev: &BevImage, spec: &GridSpec, style: &OverlayStyle) -> Result<AnnotationLayout> {
    if style.line_thickness == 0 {
        return Err(Error::InvalidSpec("line thickness must be at least 1".into()));
    }
    let (w, h) = bev.color.dimensions();
    let d = spec.density as i64;
    let th = style.line_thickness as i64;
    let lo = (th - 1) / 2;
    let cols: Vec<i64> = (0..=d)
        .map(|i| {
            let (x, _) = spec.grid_to_world(i, 0).unwrap();
            bev.world_to_pixel(x, 0.0).0.round() as i64
        })
        .collect();
    let rows: Vec<i64> = (0..=d)
        .map(|j| {
            let (_, y) = spec.grid_to_world(0, j).unwrap();
            bev.world_to_pixel(0.0, y).1.round() as i64
        })
        .collect();
    let (left, right) = (cols[0], cols[d as usize]);
    let (bottom, top) = (rows[0], rows[d as usize]);
    let grid = Rect {
        x0: left - lo,
        y0: top - lo,
        x1: right - lo + th,
        y1: bottom - lo + th,
    };
    if !grid.within(w, h) {
        return Err(Error::StyleOverflow("grid lines fall outside the BEV image".into()));
    }
    let vertical_lines = cols
        .iter()
        .map(|&c| Rect {
            x0: c - lo,
            x1: c - lo + th,
            y0: grid.y0,
            y1: grid.y1,
        })
        .collect();
    let horizontal_lines = rows
        .iter()
        .map(|&r| Rect {
            x0: grid.x0,
            x1: grid.x1,
            y0: r - lo,
            y1: r - lo + th,
        })
        .collect();

    let s = scale_for(style.tick_font_px);
    let mut tick_labels = Vec::new();
    for (i, &c) in cols.iter().enumerate() {
        let text = i.to_string();
        let (bw, bh) = text_box(&text, s, false);
        let y0 = grid.y1 + 2;
        tick_labels.push(TextBox {
            rect: Rect {
                x0: c - bw / 2,
                x1: c - bw / 2 + bw,
                y0,
                y1: y0 + bh,
            },
            text,
            scale: s,
            vertical: false,
        });
    }
    for (j, &r) in rows.iter().enumerate() {
        let text = j.to_string();
        let (bw, bh) = text_box(&text, s, false);
        let x1 = grid.x0 - 2;
        tick_labels.push(TextBox {
            rect: Rect {
                x0: x1 - bw,
                x1,
                y0: r - bh / 2,
                y1: r - bh / 2 + bh,
            },
            text,
            scale: s,
            vertical: false,
        });
    }
    for t in &tick_labels {
        if !t.rect.within(w, h) {
            return Err(Error::StyleOverflow(format!(
                "tick label '{}' at font {} px leaves the {w}x{h} image",
                t.text, style.tick_font_px
            )));
        }
    }
    let n = tick_labels.len() / 2;
    for axis in [&tick_labels[..n], &tick_labels[n..]] {
        if axis.windows(2).any(|p| p[0].rect.overlaps(&p[1].rect)) {
            return Err(Error::StyleOverflow(format!(
                "tick labels overlap at density {} and font {} px",
                spec.density, style.tick_font_px
            )));
        }
    }

    let ws = scale_for(style.word_font_px);
    let mut direction_words = Vec::new();
    for o in Orientation::ALL {
        let dir = o.direction();
        let vertical = dir[0] != 0.0;
        let text = o.word().to_ascii_uppercase();
        let (bw, bh) = text_box(&text, ws, vertical);
        let (x0, y0) = if dir[1] > 0.0 {
            ((w as i64 - bw) / 2, 0)
        } else if dir[1] < 0.0 {
            ((w as i64 - bw) / 2, h as i64 - bh)
        } else if dir[0] < 0.0 {
            (0, (h as i64 - bh) / 2)
        } else {
            (w as i64 - bw, (h as i64 - bh) / 2)
        };
        let rect = Rect {
            x0,
            y0,
            x1: x0 + bw,
            y1: y0 + bh,
        };
        if !rect.within(w, h) {
            return Err(Error::StyleOverflow(format!("direction word '{text}' does not fit")));
        }
        direction_words.push(TextBox {
            text,
            rect,
            scale: ws,
            vertical,
        });
    }
    Ok(AnnotationLayout {
        vertical_lines,
        horizontal_lines,
        tick_labels,
        direction_words,
    })
}

fn draw_box(img: &mut RgbImage, t: &TextBox, style: &OverlayStyle) {
    let r = t.rect;
    fill_rect(img, r.x0, r.y0, r.x1, r.y1, style.text_background);
    if t.vertical {
        let step = (GLYPH_H as i64 + 1) * t.scale as i64;
        for (k, ch) in t.text.chars().enumerate() {
            font::draw_text(img, &ch.to_string(), r.x0 + 1, r.y0 + 1 + k as i64 * step, t.scale, style.text_color);
        }
    } else {
        font::draw_text(img, &t.text, r.x0 + 1, r.y0 + 1, t.scale, style.text_color);
    }
}

/// Draws the grid overlay on a copy of the BEV image.
pub fn annotate_bev(bev: &BevImage, spec: &GridSpec, style: &OverlayStyle) -> Result<RgbImage> {
    let layout = annotation_layout(bev, spec, style)?;
    let mut img = bev.color.clone();
    for r in layout.vertical_lines.iter().chain(&layout.horizontal_lines) {
        fill_rect(&mut img, r.x0, r.y0, r.x1, r.y1, style.line_color);
    }
    for t in layout.tick_labels.iter().chain(&layout.direction_words) {
        draw_box(&mut img, t, style);
    }
    Ok(img)
}
