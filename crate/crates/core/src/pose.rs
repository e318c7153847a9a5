//! Viewpoint grammar: `(i, j) orientation` proposals and the camera poses
//! they denote.
//!
//! Parser rules, applied per line of the reply:
//! - a position is a parenthesized pair of integers, `(3, 5)` or `(3,5)`;
//!   parentheses around anything else are ignored;
//! - an orientation is one of `front`, `back`, `left`, `right` as a whole
//!   word, in any case and with or without quotes;
//! - if the line's first match is a position, each position binds to the
//!   first orientation after it and before the next position
//!   (`Position: (3, 5), Orientation: left`);
//! - if the line's first match is an orientation, each position binds to
//!   the last orientation between it and the previous position
//!   (`front (0, 0)`);
//! - positions without an orientation are dropped; order of appearance is kept.

use std::collections::HashSet;
use std::sync::LazyLock;

use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::render::{CameraIntrinsics, CameraPose};
use crate::solp::GridSpec;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Front,
    Back,
    Left,
    Right,
}

/// Word and horizontal world direction of each orientation. The grid
/// overlay prints these words on the matching image borders.
const ORIENTATIONS: [(Orientation, &str, [f64; 3]); 4] = [
    (Orientation::Front, "front", [0.0, 1.0, 0.0]),
    (Orientation::Back, "back", [0.0, -1.0, 0.0]),
    (Orientation::Left, "left", [-1.0, 0.0, 0.0]),
    (Orientation::Right, "right", [1.0, 0.0, 0.0]),
];

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::Front, Orientation::Back, Orientation::Left, Orientation::Right];

    fn entry(self) -> &'static (Orientation, &'static str, [f64; 3]) {
        ORIENTATIONS.iter().find(|e| e.0 == self).unwrap()
    }

    pub fn word(self) -> &'static str {
        self.entry().1
    }

    pub fn direction(self) -> [f64; 3] {
        self.entry().2
    }

    pub fn from_word(w: &str) -> Option<Self> {
        ORIENTATIONS
            .iter()
            .find(|e| e.1.eq_ignore_ascii_case(w))
            .map(|e| e.0)
    }
}

impl std::fmt::Display for Orientation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.word())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ViewProposal {
    pub grid_point: (i64, i64),
    pub orientation: Orientation,
    pub raw_span: String,
}

impl ViewProposal {
    pub fn new(i: i64, j: i64, orientation: Orientation) -> Self {
        Self {
            grid_point: (i, j),
            orientation,
            raw_span: String::new(),
        }
    }

    pub fn key(&self) -> ((i64, i64), Orientation) {
        (self.grid_point, self.orientation)
    }

    /// `(i, j) orientation`, the canonical reply form.
    pub fn canonical(&self) -> String {
        format!("({}, {}) {}", self.grid_point.0, self.grid_point.1, self.orientation)
    }
}

static PAIR_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(\s*([+-]?\d{1,9})\s*,\s*([+-]?\d{1,9})\s*\)").unwrap());
static WORD_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(?i)\b(front|back|left|right)\b").unwrap());

enum Token {
    Pair(i64, i64),
    Word(Orientation),
}

/// Extracts every position bound to an orientation. Never fails; an empty
/// result means nothing usable was found.
pub fn parse_view_proposals(text: &str) -> Vec<ViewProposal> {
    let mut out = Vec::new();
    for line in text.lines() {
        let mut tokens: Vec<(usize, Token)> = Vec::new();
        for c in PAIR_RE.captures_iter(line) {
            let (Ok(i), Ok(j)) = (c[1].parse::<i64>(), c[2].parse::<i64>()) else {
                continue;
            };
            tokens.push((c.get(0).unwrap().start(), Token::Pair(i, j)));
        }
        if tokens.is_empty() {
            continue;
        }
        for m in WORD_RE.find_iter(line) {
            if let Some(o) = Orientation::from_word(m.as_str()) {
                tokens.push((m.start(), Token::Word(o)));
            }
        }
        tokens.sort_by_key(|t| t.0);
        let words_first = matches!(tokens[0].1, Token::Word(_));
        let span = line.trim().to_string();
        let mut pending: Option<(i64, i64)> = None;
        let mut last_word: Option<Orientation> = None;
        for (_, tok) in &tokens {
            match *tok {
                Token::Pair(i, j) => {
                    if words_first {
                        if let Some(o) = last_word.take() {
                            out.push(ViewProposal {
                                grid_point: (i, j),
                                orientation: o,
                                raw_span: span.clone(),
                            });
                        }
                    } else {
                        pending = Some((i, j));
                    }
                }
                Token::Word(o) => {
                    if words_first {
                        last_word = Some(o);
                    } else if let Some((i, j)) = pending.take() {
                        out.push(ViewProposal {
                            grid_point: (i, j),
                            orientation: o,
                            raw_span: span.clone(),
                        });
                    }
                }
            }
        }
    }
    out
}

/// Camera height and tilt used for every planned view.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraRigConfig {
    pub eye_height: f64,
    pub pitch_down_deg: f64,
    pub intrinsics: CameraIntrinsics,
}

impl Default for CameraRigConfig {
    fn default() -> Self {
        Self {
            eye_height: 1.6,
            pitch_down_deg: 15.0,
            intrinsics: CameraIntrinsics::default(),
        }
    }
}

impl CameraRigConfig {
    pub fn new(eye_height: f64, pitch_down_deg: f64, intrinsics: CameraIntrinsics) -> Result<Self> {
        let rig = Self {
            eye_height,
            pitch_down_deg,
            intrinsics,
        };
        rig.validate(None)?;
        Ok(rig)
    }

    pub fn validate(&self, scene_height: Option<f64>) -> Result<()> {
        if !(self.eye_height > 0.0) || scene_height.is_some_and(|h| self.eye_height >= h) {
            return Err(Error::InvalidCamera(format!(
                "eye height {} must be inside the scene height {scene_height:?}",
                self.eye_height
            )));
        }
        if !(0.0..90.0).contains(&self.pitch_down_deg) {
            return Err(Error::InvalidCamera(format!(
                "pitch {} must be in [0, 90) degrees",
                self.pitch_down_deg
            )));
        }
        self.intrinsics.validate()
    }
}

/// Camera at the grid point, `eye_height` above the floor, looking along
/// the orientation tilted `pitch_down_deg` toward the floor. Camera x is the
/// horizontal right of the view direction and camera y points image-down.
pub fn pose_from_proposal(p: &ViewProposal, spec: &GridSpec, rig: &CameraRigConfig, floor_z: f64) -> Result<CameraPose> {
    let (x, y) = spec.grid_to_world(p.grid_point.0, p.grid_point.1)?;
    let [dx, dy, _] = p.orientation.direction();
    let pitch = rig.pitch_down_deg.to_radians();
    let forward = Vector3::new(dx * pitch.cos(), dy * pitch.cos(), -pitch.sin());
    let right = Vector3::new(dy, -dx, 0.0);
    let down = forward.cross(&right);
    let rotation = Matrix3::from_columns(&[right, down, forward]);
    CameraPose::new(rotation, Point3::new(x, y, floor_z + rig.eye_height))
}

/// Clamps proposals into the lattice, drops duplicates of `existing` and of
/// earlier entries, and refills each dropped slot with a seeded random
/// unused (point, orientation) pair so the length is preserved.
pub fn sanitize_proposals(new: &[ViewProposal], existing: &[ViewProposal], spec: &GridSpec, seed: u64) -> Result<Vec<ViewProposal>> {
    let d = spec.density as i64;
    let mut used: HashSet<((i64, i64), Orientation)> = existing.iter().map(|p| p.key()).collect();
    let mut slots: Vec<Option<ViewProposal>> = Vec::with_capacity(new.len());
    for p in new {
        let mut q = p.clone();
        q.grid_point = (p.grid_point.0.clamp(0, d), p.grid_point.1.clamp(0, d));
        if used.insert(q.key()) {
            slots.push(Some(q));
        } else {
            slots.push(None);
        }
    }
    if slots.iter().all(Option::is_some) {
        return Ok(slots.into_iter().flatten().collect());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(slots.len());
    for slot in slots {
        match slot {
            Some(p) => out.push(p),
            None => {
                let free: Vec<((i64, i64), Orientation)> = (0..=d)
                    .flat_map(|i| (0..=d).map(move |j| (i, j)))
                    .flat_map(|g| Orientation::ALL.into_iter().map(move |o| (g, o)))
                    .filter(|k| !used.contains(k))
                    .collect();
                if free.is_empty() {
                    return Err(Error::LatticeExhausted);
                }
                let pick = free[rng.random_range(0..free.len())];
                used.insert(pick);
                out.push(ViewProposal {
                    grid_point: pick.0,
                    orientation: pick.1,
                    raw_span: "<replacement>".into(),
                });
            }
        }
    }
    Ok(out)
}
