//! The zero-shot agent loop: iterative viewpoint selection over the
//! annotated bird's-eye view, view rendering, and downstream tasks.

mod record;
mod rundir;
mod task;

use std::sync::Arc;

use image::RgbImage;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::pose::{parse_view_proposals, pose_from_proposal, sanitize_proposals, CameraRigConfig, Orientation, ViewProposal};
use crate::render::{render_bev, render_perspective, BevImage, CameraPose, RenderOptions, ViewBundle};
use crate::scene::{compute_bounds, strip_ceiling, SceneBounds, TriangleMesh, DEFAULT_CUT_HEIGHT};
use crate::solp::{annotate_bev, make_grid, min_px_per_meter, GridSpec, OverlayStyle};
use crate::vlm::{self, ChatRequest, UserPart, VlmBackend};
use crate::{Error, Result};

pub use record::{Exchange, RecordingBackend};
pub use rundir::{load_poses, save_json, save_plan, PoseRecord};
pub use task::{build_task_request, parse_numbered_answers, run_task, TaskAnswer, TaskKind, TaskPayload, QA_EXAMPLE_BLOCK, QA_INSTRUCTION};

pub const PLAN_SYSTEM: &str = "You are an assistant that plans camera viewpoints to observe 3D scenes.";
pub const RETRY_SUFFIX: &str = "Your previous reply could not be parsed; reply ONLY with lines of the form '(i, j) orientation'.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanConfig {
    pub n_total: usize,
    pub n_per_iter: usize,
    pub density: u32,
    pub max_parse_retries: u32,
    pub rig: CameraRigConfig,
    pub max_images: usize,
    pub seed: u64,
    pub scene_type: Option<String>,
    pub bev_px_per_meter: f64,
    pub bev_margin_m: f64,
    pub cut_height: f64,
    pub style: OverlayStyle,
}

impl Default for PlanConfig {
    fn default() -> Self {
        Self {
            n_total: 24,
            n_per_iter: 3,
            density: 8,
            max_parse_retries: 3,
            rig: CameraRigConfig::default(),
            max_images: 24,
            seed: 0,
            scene_type: None,
            bev_px_per_meter: 64.0,
            bev_margin_m: 0.5,
            cut_height: DEFAULT_CUT_HEIGHT,
            style: OverlayStyle::default(),
        }
    }
}

impl PlanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_per_iter == 0 || self.n_per_iter > self.n_total {
            return Err(Error::InvalidSpec(format!(
                "need 1 <= n_per_iter ({}) <= n_total ({})",
                self.n_per_iter, self.n_total
            )));
        }
        if self.n_total > self.max_images {
            return Err(Error::InvalidSpec(format!(
                "n_total {} exceeds the image budget {}",
                self.n_total, self.max_images
            )));
        }
        if !(self.bev_px_per_meter > 0.0) || !(self.bev_margin_m >= 0.0) || !(self.cut_height > 0.0) {
            return Err(Error::InvalidSpec("BEV scale, margin and cut height must be positive".into()));
        }
        self.rig.validate(None)
    }

    pub fn iterations(&self) -> usize {
        self.n_total.div_ceil(self.n_per_iter)
    }
}

/// Planning canvas derived from the mesh.
#[derive(Debug, Clone)]
pub struct PlanCanvas {
    pub bounds: SceneBounds,
    pub grid: GridSpec,
    pub bev: BevImage,
    pub annotated: RgbImage,
}

/// BEV of the ceiling-stripped mesh with the grid overlay. The scale is
/// raised when needed so tick labels fit.
pub fn prepare_canvas(mesh: &TriangleMesh, cfg: &PlanConfig) -> Result<PlanCanvas> {
    let bounds = compute_bounds(mesh)?;
    cfg.rig.validate(Some(bounds.extent()[2]))?;
    let grid = make_grid(&bounds, cfg.density)?;
    let stripped = strip_ceiling(mesh, cfg.cut_height)?;
    let ppm = cfg.bev_px_per_meter.max(min_px_per_meter(&bounds, cfg.density, &cfg.style));
    let bev = render_bev(&stripped, &bounds, ppm, cfg.bev_margin_m)?;
    let annotated = annotate_bev(&bev, &grid, &cfg.style)?;
    Ok(PlanCanvas {
        bounds,
        grid,
        bev,
        annotated,
    })
}

#[derive(Debug, Clone)]
pub struct PlanState {
    pub canvas: PlanCanvas,
    pub proposals: Vec<ViewProposal>,
    pub poses: Vec<CameraPose>,
    pub views: Vec<ViewBundle>,
    pub iteration: usize,
    pub log: Vec<Exchange>,
}

impl PlanState {
    pub fn new(canvas: PlanCanvas) -> Self {
        Self {
            canvas,
            proposals: Vec::new(),
            poses: Vec::new(),
            views: Vec::new(),
            iteration: 0,
            log: Vec::new(),
        }
    }

    fn accept(&mut self, mesh: &TriangleMesh, cfg: &PlanConfig, p: ViewProposal) -> Result<()> {
        let pose = pose_from_proposal(&p, &self.canvas.grid, &cfg.rig, self.canvas.bounds.min[2])?;
        let view = render_perspective(mesh, &cfg.rig.intrinsics, &pose, &RenderOptions::default())?;
        self.proposals.push(p);
        self.poses.push(pose);
        self.views.push(view);
        Ok(())
    }
}

/// Text of the view-selection prompt for the current iteration.
pub fn view_selection_text(state: &PlanState, cfg: &PlanConfig) -> String {
    let d = cfg.density;
    let n = cfg.n_per_iter.min(cfg.n_total - state.proposals.len().min(cfg.n_total)).max(1);
    let mut s = format!("Given a bird's-eye view of a scene, please provide {n} pictures to comprehensively understand the scene.\n");
    if let Some(t) = &cfg.scene_type {
        s.push_str(&format!("The scene is {t}.\n"));
    }
    s.push_str(&format!(
        "The image is overlaid with a {d}x{d} grid of green lines. The vertical lines are labelled 0 to {d} along the bottom edge and the horizontal lines 0 to {d} along the left edge; \
         a grid point (i, j) is where vertical line i meets horizontal line j. \
         The words front, back, left and right at the image borders name the four viewing directions.\n"
    ));
    s.push_str("Could you suggest camera positions and orientations for each shot?\n");
    s.push_str(
        "The position can be present as the grid point in the picture, like (0, 0). The orientations can be chosen from ['left', 'right', 'front', 'back'].\n",
    );
    s.push_str(&format!("This is round {} of {}.\n", state.iteration + 1, cfg.iterations()));
    if !state.proposals.is_empty() {
        s.push_str("Viewpoints already chosen:\n");
        for p in &state.proposals {
            s.push_str(&p.canonical());
            s.push('\n');
        }
        s.push_str("Choose new viewpoints that observe parts of the scene these views miss.\n");
    }
    s.push_str("Reply with one line per picture in the form '(i, j) orientation'.");
    s
}

pub fn build_view_selection_prompt(state: &PlanState, cfg: &PlanConfig) -> ChatRequest {
    ChatRequest::new(
        PLAN_SYSTEM,
        vec![
            UserPart::Image(Arc::new(state.canvas.annotated.clone())),
            UserPart::Text(view_selection_text(state, cfg)),
        ],
    )
}

/// Runs the iterative planning loop until `n_total` views are accepted.
pub fn plan_views(mesh: &TriangleMesh, cfg: &PlanConfig, backend: &dyn VlmBackend) -> Result<PlanState> {
    cfg.validate()?;
    let mut state = PlanState::new(prepare_canvas(mesh, cfg)?);
    while state.proposals.len() < cfg.n_total {
        let want = cfg.n_per_iter.min(cfg.n_total - state.proposals.len());
        let base = build_view_selection_prompt(&state, cfg);
        let mut req = base.clone();
        let mut parsed = Vec::new();
        for attempt in 0..=cfg.max_parse_retries {
            if attempt > 0 {
                log::info!("round {}: reply unparseable, retry {attempt}", state.iteration + 1);
                req = base.clone();
                req.user_parts.push(UserPart::Text(RETRY_SUFFIX.into()));
            }
            let reply = vlm::complete(&req, backend)?;
            state.log.push(Exchange::new(&req, &reply.text));
            parsed = parse_view_proposals(&reply.text);
            if !parsed.is_empty() {
                break;
            }
        }
        if parsed.is_empty() {
            return Err(Error::Planning(format!(
                "round {}: no viewpoint parsed after {} retries",
                state.iteration + 1,
                cfg.max_parse_retries
            )));
        }
        parsed.truncate(want);
        let round_seed = cfg.seed.wrapping_add(state.iteration as u64);
        let mut accepted = sanitize_proposals(&parsed, &state.proposals, &state.canvas.grid, round_seed)?;
        if accepted.len() < want {
            let mut taken = state.proposals.clone();
            taken.extend(accepted.iter().cloned());
            let fill = random_pairs(&state.canvas.grid, &taken, want - accepted.len(), round_seed ^ 0x9e37_79b9_7f4a_7c15)?;
            accepted.extend(fill);
        }
        for p in accepted {
            state.accept(mesh, cfg, p)?;
        }
        state.iteration += 1;
    }
    Ok(state)
}

/// `count` distinct unused lattice pairs drawn uniformly.
fn random_pairs(grid: &GridSpec, taken: &[ViewProposal], count: usize, seed: u64) -> Result<Vec<ViewProposal>> {
    let d = grid.density as i64;
    let used: std::collections::HashSet<_> = taken.iter().map(ViewProposal::key).collect();
    let free: Vec<ViewProposal> = (0..=d)
        .flat_map(|i| (0..=d).map(move |j| (i, j)))
        .flat_map(|(i, j)| Orientation::ALL.into_iter().map(move |o| ViewProposal::new(i, j, o)))
        .filter(|p| !used.contains(&p.key()))
        .collect();
    if free.len() < count {
        return Err(Error::LatticeExhausted);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, free.len(), count).into_vec();
    idx.sort_unstable();
    Ok(idx.into_iter().map(|i| free[i].clone()).collect())
}

/// Baseline arm: `n_total` distinct random pairs, no model calls.
pub fn random_plan(mesh: &TriangleMesh, cfg: &PlanConfig, seed: u64) -> Result<PlanState> {
    cfg.validate()?;
    let mut state = PlanState::new(prepare_canvas(mesh, cfg)?);
    let mut picks = random_pairs(&state.canvas.grid, &[], cfg.n_total, seed)?;
    // Sampled indices come back sorted; shuffle order with the same seed so
    // prefixes are not biased toward low grid indices.
    use rand::seq::SliceRandom;
    picks.shuffle(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(1)));
    for p in picks {
        state.accept(mesh, cfg, p)?;
    }
    state.iteration = 1;
    Ok(state)
}
