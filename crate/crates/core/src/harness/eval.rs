use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::manifest::SceneManifest;
use super::report::emit_markdown;
use crate::agent::{plan_views, random_plan, run_task, save_json, save_plan, PlanConfig, PlanState, RecordingBackend, TaskPayload};
use crate::coverage::{surface_coverage, DEFAULT_VISIBILITY_TOL};
use crate::metrics::{evaluate, EvalItem, MetricReport};
use crate::render::write_png;
use crate::scene::{load_labeled_cloud, load_mesh, sample_surface_points, save_labeled_cloud, strip_ceiling, LabeledPointCloud, PlyEncoding};
use crate::seg::{segment_views, ColorKeyedLabeler, RandomLabeler, SegConfig};
use crate::vlm::{ScriptedBackend, ScriptedTranscript, VlmBackend};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalTask {
    Qa,
    Caption,
    Decompose,
    Dialog,
    Segment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanMode {
    Selected,
    Random,
}

/// Who names the marked regions during segmentation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelerKind {
    /// The configured model backend.
    Vlm,
    /// Lookup in the manifest's surface palette.
    Palette,
    /// Uniformly random classes.
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub task: EvalTask,
    pub plan_mode: PlanMode,
    pub plan: PlanConfig,
    #[serde(default)]
    pub seg: SegConfig,
    pub labeler: LabelerKind,
    pub seed: u64,
    /// Surface points used for the coverage column.
    pub coverage_samples: usize,
    pub workers: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            task: EvalTask::Qa,
            plan_mode: PlanMode::Selected,
            plan: PlanConfig::default(),
            seg: SegConfig::default(),
            labeler: LabelerKind::Vlm,
            seed: 0,
            coverage_samples: 4000,
            workers: 2,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::InvalidSpec("workers must be at least 1".into()));
        }
        if self.seg.stride_px == 0 {
            return Err(Error::InvalidSpec("stride must be at least 1".into()));
        }
        self.plan.validate()
    }
}

/// Supplies the model backend for each scene.
pub trait BackendProvider: Sync {
    /// Identifies everything about the backend that can change replies.
    fn fingerprint(&self, manifest: &SceneManifest) -> String;
    fn backend_for(&self, manifest: &SceneManifest) -> Result<Arc<dyn VlmBackend>>;
}

/// Scripted replies from the manifest's transcript, or a shared default.
pub struct ScriptedProvider {
    pub default_transcript: Option<PathBuf>,
}

impl ScriptedProvider {
    fn path<'a>(&'a self, m: &'a SceneManifest) -> Option<&'a PathBuf> {
        m.transcript_path.as_ref().or(self.default_transcript.as_ref())
    }
}

impl BackendProvider for ScriptedProvider {
    fn fingerprint(&self, m: &SceneManifest) -> String {
        match self.path(m).map(fs::read) {
            Some(Ok(bytes)) => format!("scripted:{}", hex::encode(Sha256::digest(&bytes))),
            _ => "scripted:missing".into(),
        }
    }

    fn backend_for(&self, m: &SceneManifest) -> Result<Arc<dyn VlmBackend>> {
        let path = self
            .path(m)
            .ok_or_else(|| Error::InvalidSpec(format!("scene {} has no transcript", m.scene_id)))?;
        Ok(Arc::new(ScriptedBackend::new(ScriptedTranscript::load(path)?)))
    }
}

/// One backend for every scene.
pub struct SharedProvider(pub Arc<dyn VlmBackend>);

impl BackendProvider for SharedProvider {
    fn fingerprint(&self, _: &SceneManifest) -> String {
        self.0.id()
    }

    fn backend_for(&self, _: &SceneManifest) -> Result<Arc<dyn VlmBackend>> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRow {
    pub scene_id: String,
    pub status: SceneStatus,
    pub error: Option<String>,
    pub n_views: usize,
    pub vlm_calls: usize,
    pub coverage: Option<f64>,
    pub metrics: Option<MetricReport>,
    pub miou: Option<f64>,
    pub labeled_fraction: Option<f64>,
}

impl SceneRow {
    fn failed(scene_id: &str, err: &Error, vlm_calls: usize) -> Self {
        Self {
            scene_id: scene_id.into(),
            status: SceneStatus::Failed,
            error: Some(err.to_string()),
            n_views: 0,
            vlm_calls,
            coverage: None,
            metrics: None,
            miou: None,
            labeled_fraction: None,
        }
    }
}

/// Arithmetic means over the successful rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_scenes: usize,
    pub n_failed: usize,
    pub bleu1: Option<f64>,
    pub bleu4: Option<f64>,
    pub meteor: Option<f64>,
    pub rouge_l: Option<f64>,
    pub cider: Option<f64>,
    pub em: Option<f64>,
    pub miou: Option<f64>,
    pub labeled_fraction: Option<f64>,
    pub coverage: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let v: Vec<f64> = values.collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

impl Aggregate {
    pub fn from_rows(rows: &[SceneRow]) -> Self {
        let ok: Vec<&SceneRow> = rows.iter().filter(|r| r.status == SceneStatus::Ok).collect();
        let m = |f: fn(&MetricReport) -> f64| mean(ok.iter().filter_map(|r| r.metrics.as_ref()).map(f));
        Self {
            n_scenes: rows.len(),
            n_failed: rows.len() - ok.len(),
            bleu1: m(|x| x.bleu1),
            bleu4: m(|x| x.bleu4),
            meteor: m(|x| x.meteor),
            rouge_l: m(|x| x.rouge_l),
            cider: mean(ok.iter().filter_map(|r| r.metrics.as_ref()?.cider)),
            em: m(|x| x.em),
            miou: mean(ok.iter().filter_map(|r| r.miou)),
            labeled_fraction: mean(ok.iter().filter_map(|r| r.labeled_fraction)),
            coverage: mean(ok.iter().filter_map(|r| r.coverage)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config_hash: String,
    pub config: EvalConfig,
    pub rows: Vec<SceneRow>,
    pub aggregate: Aggregate,
    pub vlm_calls: usize,
    pub notes: Vec<String>,
}

impl RunReport {
    pub fn new(config_hash: String, config: EvalConfig, rows: Vec<SceneRow>) -> Self {
        let aggregate = Aggregate::from_rows(&rows);
        let vlm_calls = rows.iter().map(|r| r.vlm_calls).sum();
        Self {
            config_hash,
            config,
            rows,
            aggregate,
            vlm_calls,
            notes: vec![
                "BLEU is the mean of sentence-level scores.".into(),
                "METEOR aligns exact tokens and suffix-stripped stems only; no synonym stage.".into(),
                "CIDEr-D uses the items of one scene as its corpus and is absent for scenes with fewer than two items.".into(),
                "Scores come from this implementation and are not comparable across metric toolkits.".into(),
            ],
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub report: RunReport,
    /// True when an existing run directory was reused.
    pub reused: bool,
}

fn file_digest(path: &Path) -> String {
    fs::read(path).map_or_else(|_| "unreadable".into(), |b| hex::encode(Sha256::digest(&b)))
}

pub fn config_hash(manifests: &[SceneManifest], cfg: &EvalConfig, provider: &dyn BackendProvider) -> Result<String> {
    let scenes: Vec<serde_json::Value> = manifests
        .iter()
        .map(|m| {
            Ok(serde_json::json!({
                "manifest": m,
                "mesh": file_digest(&m.mesh_path),
                "gt": m.gt_labels_path.as_deref().map(file_digest),
                "backend": provider.fingerprint(m),
            }))
        })
        .collect::<Result<_>>()?;
    let doc = serde_json::json!({"config": cfg, "scenes": scenes});
    let digest = Sha256::digest(serde_json::to_vec(&doc)?);
    Ok(hex::encode(&digest[..8]))
}

fn load_report(path: &Path) -> Result<RunReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Evaluates every scene and writes `run-<hash>/` under `out`. A directory
/// that already holds a report for the same configuration is reused.
pub fn run_eval(manifests: &[SceneManifest], cfg: &EvalConfig, provider: &dyn BackendProvider, out: impl AsRef<Path>) -> Result<RunOutcome> {
    cfg.validate()?;
    let mut ids = std::collections::HashSet::new();
    for m in manifests {
        m.validate()?;
        if !ids.insert(&m.scene_id) {
            return Err(Error::manifest("scene_id", format!("duplicate scene id '{}'", m.scene_id)));
        }
    }
    let hash = config_hash(manifests, cfg, provider)?;
    let dir = out.as_ref().join(format!("run-{hash}"));
    let report_path = dir.join("report.json");
    if report_path.exists() {
        log::info!("reusing {}", dir.display());
        return Ok(RunOutcome {
            report: load_report(&report_path)?,
            dir,
            reused: true,
        });
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    save_json(
        &dir.join("config.json"),
        &serde_json::json!({"config": cfg, "scenes": manifests}),
    )?;

    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::InvalidSpec(e.to_string()))?;
    let results: Vec<(SceneRow, f64)> = pool.install(|| {
        manifests
            .par_iter()
            .map(|m| {
                let t = Instant::now();
                let scene_dir = dir.join("scenes").join(&m.scene_id);
                let row = run_scene(m, cfg, provider, &scene_dir);
                (row, t.elapsed().as_secs_f64())
            })
            .collect()
    });
    let timing: BTreeMap<String, f64> = results.iter().map(|(r, s)| (r.scene_id.clone(), *s)).collect();
    let rows: Vec<SceneRow> = results.into_iter().map(|(r, _)| r).collect();
    let report = RunReport::new(hash, cfg.clone(), rows);
    save_json(&report_path, &report)?;
    let md = emit_markdown(&report);
    fs::write(dir.join("report.md"), md).map_err(|e| Error::io(&dir, e))?;
    save_json(
        &dir.join("timing.json"),
        &serde_json::json!({"total_seconds": start.elapsed().as_secs_f64(), "scenes": timing}),
    )?;
    Ok(RunOutcome {
        dir,
        report,
        reused: false,
    })
}

fn run_scene(m: &SceneManifest, cfg: &EvalConfig, provider: &dyn BackendProvider, dir: &Path) -> SceneRow {
    let backend: std::result::Result<Arc<dyn VlmBackend>, Error> = provider.backend_for(m);
    let unavailable;
    let inner: &dyn VlmBackend = match &backend {
        Ok(b) => b.as_ref(),
        Err(e) => {
            unavailable = Unavailable(e.to_string());
            &unavailable
        }
    };
    let rec = RecordingBackend::new(inner);
    let result = fs::create_dir_all(dir)
        .map_err(|e| Error::io(dir, e))
        .and_then(|_| scene_body(m, cfg, &rec, dir));
    let calls = rec.exchanges().len();
    let saved = match rec.transcript() {
        Some(t) => t.save(dir.join("transcript.json")),
        None => Ok(()),
    };
    match result.and_then(|row| saved.map(|_| row)) {
        Ok(mut row) => {
            row.vlm_calls = calls;
            row
        }
        Err(e) => {
            log::warn!("scene {} failed: {e}", m.scene_id);
            SceneRow::failed(&m.scene_id, &e, calls)
        }
    }
}

/// Stands in when a scene has no usable backend; fails on first use.
struct Unavailable(String);

impl VlmBackend for Unavailable {
    fn id(&self) -> String {
        "unavailable".into()
    }

    fn complete(&self, _: &crate::vlm::ChatRequest) -> Result<crate::vlm::VlmReply> {
        Err(Error::InvalidSpec(self.0.clone()))
    }
}

fn coverage_points(gt: Option<&LabeledPointCloud>, mesh: &crate::scene::TriangleMesh, cfg: &EvalConfig) -> Result<Vec<nalgebra::Point3<f64>>> {
    if let Some(gt) = gt {
        let step = (gt.len() / cfg.coverage_samples.max(1)).max(1);
        return Ok(gt.points().iter().step_by(step).copied().collect());
    }
    sample_surface_points(&strip_ceiling(mesh, cfg.plan.cut_height)?, cfg.coverage_samples.max(1), cfg.seed)
}

fn scene_body(m: &SceneManifest, cfg: &EvalConfig, backend: &dyn VlmBackend, dir: &Path) -> Result<SceneRow> {
    let mesh = load_mesh(&m.mesh_path)?;
    let gt = match &m.gt_labels_path {
        Some(p) => Some(load_labeled_cloud(p)?),
        None => None,
    };
    let plan_cfg = PlanConfig {
        seed: cfg.seed,
        scene_type: m.scene_type.clone().or(cfg.plan.scene_type.clone()),
        ..cfg.plan.clone()
    };
    let state: PlanState = match cfg.plan_mode {
        PlanMode::Selected => plan_views(&mesh, &plan_cfg, backend)?,
        PlanMode::Random => random_plan(&mesh, &plan_cfg, cfg.seed)?,
    };
    save_plan(&state, &plan_cfg, None, dir)?;
    let pts = coverage_points(gt.as_ref(), &mesh, cfg)?;
    let coverage = surface_coverage(
        &pts,
        state.views.iter().map(|v| (&v.intrinsics, &v.pose, &v.depth)),
        DEFAULT_VISIBILITY_TOL,
    );
    let mut row = SceneRow {
        scene_id: m.scene_id.clone(),
        status: SceneStatus::Ok,
        error: None,
        n_views: state.views.len(),
        vlm_calls: 0,
        coverage: Some(coverage),
        metrics: None,
        miou: None,
        labeled_fraction: None,
    };
    let missing = |what: &str| Error::manifest(what, format!("scene {} has no {what} for this task", m.scene_id));
    let items: Vec<EvalItem> = match cfg.task {
        EvalTask::Qa => {
            if m.qa.is_empty() {
                return Err(missing("qa"));
            }
            let questions = m.qa.iter().map(|q| q.question.clone()).collect();
            let ans = run_task(&state.views, &TaskPayload::Qa { questions }, backend)?;
            ans.answers
                .into_iter()
                .zip(&m.qa)
                .map(|(candidate, q)| EvalItem {
                    candidate,
                    references: q.answers.clone(),
                })
                .collect()
        }
        EvalTask::Caption => {
            if m.captions.is_empty() {
                return Err(missing("captions"));
            }
            let ans = run_task(&state.views, &TaskPayload::Caption, backend)?;
            vec![EvalItem {
                candidate: ans.text().to_string(),
                references: m.captions.clone(),
            }]
        }
        EvalTask::Decompose => {
            let d = m.decomposition.as_ref().ok_or_else(|| missing("decomposition"))?;
            let ans = run_task(&state.views, &TaskPayload::Decomposition { goal: d.goal.clone() }, backend)?;
            vec![EvalItem {
                candidate: ans.text().to_string(),
                references: d.references.clone(),
            }]
        }
        EvalTask::Dialog => {
            if m.dialog.is_empty() {
                return Err(missing("dialog"));
            }
            m.dialog
                .iter()
                .map(|c| {
                    let payload = TaskPayload::Dialog {
                        history: c.history.clone(),
                        message: c.message.clone(),
                    };
                    let ans = run_task(&state.views, &payload, backend)?;
                    Ok(EvalItem {
                        candidate: ans.text().to_string(),
                        references: c.references.clone(),
                    })
                })
                .collect::<Result<_>>()?
        }
        EvalTask::Segment => {
            let gt = gt.as_ref().ok_or_else(|| missing("gt_labels_path"))?;
            if let Some(names) = &m.class_names {
                if names.as_slice() != gt.class_names() {
                    return Err(Error::manifest("class_names", "differ from the classes stored in the ground-truth file"));
                }
            }
            let classes = gt.class_names().to_vec();
            let palette_labeler;
            let random_labeler;
            let labeler: &dyn VlmBackend = match cfg.labeler {
                LabelerKind::Vlm => backend,
                LabelerKind::Palette => {
                    if m.palette.is_empty() {
                        return Err(missing("palette"));
                    }
                    palette_labeler = ColorKeyedLabeler::new(m.palette_ids(), classes.clone());
                    &palette_labeler
                }
                LabelerKind::Random => {
                    random_labeler = RandomLabeler::new(classes.clone(), cfg.seed);
                    &random_labeler
                }
            };
            let outcome = segment_views(&state.views, gt, &cfg.seg.builtin(), labeler, &cfg.seg)?;
            for (k, v) in outcome.per_view.iter().enumerate() {
                write_png(&v.marked, dir.join(format!("view_{k:02}.marks.png")))?;
                crate::seg::write_mask_png(&v.regions, v.marked.width(), v.marked.height(), dir.join(format!("view_{k:02}.mask.png")))?;
            }
            let pred = LabeledPointCloud::new(gt.points().to_vec(), outcome.predicted.clone(), classes.clone())?;
            save_labeled_cloud(dir.join("labels.ply"), &pred, PlyEncoding::BinaryLittleEndian)?;
            let mut j = outcome.report.to_named_json(&classes);
            j["labeled_fraction"] = serde_json::json!(outcome.labeled_fraction);
            j["radius_m"] = serde_json::json!(outcome.radius_m);
            save_json(&dir.join("miou.json"), &j)?;
            row.miou = Some(outcome.report.miou);
            row.labeled_fraction = Some(outcome.labeled_fraction);
            return Ok(row);
        }
    };
    let metrics = evaluate(&items)?;
    save_json(&dir.join("answers.json"), &items)?;
    save_json(&dir.join("scores.json"), &metrics)?;
    row.metrics = Some(metrics);
    Ok(row)
}
