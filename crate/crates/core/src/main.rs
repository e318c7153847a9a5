use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use agent3d::agent::{plan_views, prepare_canvas, random_plan, run_task, save_json, save_plan, PlanConfig, PlanState, RecordingBackend, TaskPayload};
use agent3d::harness::{
    emit_markdown, gen_toy, load_manifest, run_ablation, run_eval, AblationAxis, BackendProvider, EvalConfig, EvalTask, LabelerKind, PlanMode,
    RunReport, SceneManifest, ScriptedProvider, SharedProvider, ToyGenOptions,
};
use agent3d::pose::CameraRigConfig;
use agent3d::render::{render_bev, write_png, CameraIntrinsics};
use agent3d::scene::{compute_bounds, load_labeled_cloud, load_mesh, strip_ceiling, TriangleMesh, DEFAULT_CUT_HEIGHT};
use agent3d::seg::{segment_views, ColorKeyedLabeler, RandomLabeler, SegConfig};
use agent3d::vlm::{CacheBackend, HttpBackend, HttpConfig, ScriptedBackend, ScriptedTranscript, VlmBackend};
use agent3d::{Error, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "agent3d", version, about = "Zero-shot 3D scene understanding with a vision-language model")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendKind {
    Http,
    Scripted,
    Cache,
}

#[derive(Clone, Copy, ValueEnum)]
enum PlanArg {
    Selected,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum TaskArg {
    Qa,
    Caption,
    Decompose,
    Dialog,
    Segment,
}

#[derive(Clone, Copy, ValueEnum)]
enum LabelerArg {
    Vlm,
    Palette,
    Random,
}

#[derive(Clone, Copy, ValueEnum)]
enum AxisArg {
    NViews,
    Density,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Markdown,
}

#[derive(Args, Clone)]
struct Shared {
    /// Mesh file (.ply) used directly, without a manifest.
    #[arg(long, global = true)]
    scene: Option<PathBuf>,
    /// Scene manifest; repeat for several scenes.
    #[arg(long = "manifest", global = true)]
    manifests: Vec<PathBuf>,
    #[arg(long, global = true, default_value_t = 24)]
    views: usize,
    #[arg(long = "per-iter", global = true, default_value_t = 3)]
    per_iter: usize,
    #[arg(long, global = true, default_value_t = 8)]
    density: u32,
    #[arg(long, global = true, value_enum, default_value_t = BackendKind::Scripted)]
    backend: BackendKind,
    /// Scripted transcript; defaults to the manifest's transcript.
    #[arg(long, global = true)]
    transcript: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "runs")]
    out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = PlanArg::Selected)]
    plan: PlanArg,
    /// Square render size in pixels.
    #[arg(long = "image-size", global = true, default_value_t = 512)]
    image_size: u32,
    /// Reply cache directory for the cache backend.
    #[arg(long = "cache-dir", global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long = "max-parse-retries", global = true, default_value_t = 3)]
    max_parse_retries: u32,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic toy rooms with manifests and scripted transcripts.
    GenToy {
        #[arg(long, default_value_t = 2)]
        count: usize,
        #[arg(long = "gt-points", default_value_t = 20_000)]
        gt_points: usize,
        #[command(flatten)]
        shared: Shared,
    },
    /// Render the top-down view with the ceiling removed.
    RenderBev {
        #[arg(long, default_value_t = 64.0)]
        ppm: f64,
        #[arg(long, default_value_t = 0.5)]
        margin: f64,
        #[arg(long, default_value_t = DEFAULT_CUT_HEIGHT)]
        cut: f64,
        #[command(flatten)]
        shared: Shared,
    },
    /// Render the top-down view with the labelled grid overlay.
    Annotate {
        #[command(flatten)]
        shared: Shared,
    },
    /// Plan viewpoints and render them.
    PlanViews {
        #[command(flatten)]
        shared: Shared,
    },
    /// Answer questions about a scene.
    Ask {
        /// Questions; the manifest's questions are used when none are given.
        #[arg(long = "question")]
        questions: Vec<String>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Describe a scene.
    Caption {
        #[command(flatten)]
        shared: Shared,
    },
    /// Break a goal into steps grounded in the scene.
    Decompose {
        #[arg(long)]
        goal: Option<String>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Continue a conversation about a scene.
    Dialog {
        #[arg(long)]
        message: String,
        /// Earlier turns, alternating user and assistant.
        #[arg(long = "history")]
        history: Vec<String>,
        #[command(flatten)]
        shared: Shared,
    },
    /// Label the scene's ground-truth points and report mIoU.
    Segment {
        #[arg(long, value_enum, default_value_t = LabelerArg::Vlm)]
        labeler: LabelerArg,
        #[arg(long, default_value_t = 4)]
        stride: u32,
        #[command(flatten)]
        shared: Shared,
    },
    /// Evaluate one task over manifests.
    Eval {
        #[arg(long, value_enum, default_value_t = TaskArg::Qa)]
        task: TaskArg,
        #[arg(long, value_enum, default_value_t = LabelerArg::Vlm)]
        labeler: LabelerArg,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        #[command(flatten)]
        shared: Shared,
    },
    /// Sweep the number of views or the grid density.
    Ablate {
        #[arg(long, value_enum)]
        axis: AxisArg,
        #[arg(long, value_enum, default_value_t = TaskArg::Qa)]
        task: TaskArg,
        #[arg(long, value_enum, default_value_t = LabelerArg::Vlm)]
        labeler: LabelerArg,
        #[arg(long, default_value_t = 2)]
        workers: usize,
        #[command(flatten)]
        shared: Shared,
    },
    /// Print or rewrite the report of a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
        format: FormatArg,
    },
}

impl Shared {
    fn plan_config(&self) -> PlanConfig {
        PlanConfig {
            n_total: self.views,
            n_per_iter: self.per_iter,
            density: self.density,
            max_parse_retries: self.max_parse_retries,
            max_images: self.views.max(24),
            seed: self.seed,
            rig: CameraRigConfig {
                intrinsics: CameraIntrinsics::square(self.image_size),
                ..CameraRigConfig::default()
            },
            ..PlanConfig::default()
        }
    }

    fn manifests(&self) -> Result<Vec<SceneManifest>> {
        self.manifests.iter().map(load_manifest).collect()
    }

    /// The single scene named by --manifest or --scene.
    fn one_scene(&self) -> Result<(Option<SceneManifest>, TriangleMesh)> {
        match (self.manifests.as_slice(), &self.scene) {
            ([m], None) => {
                let m = load_manifest(m)?;
                let mesh = load_mesh(&m.mesh_path)?;
                Ok((Some(m), mesh))
            }
            ([], Some(p)) => Ok((None, load_mesh(p)?)),
            _ => Err(Error::InvalidSpec("give exactly one of --manifest or --scene".into())),
        }
    }

    fn live_backend(&self) -> Result<Arc<dyn VlmBackend>> {
        let http = HttpBackend::new(HttpConfig::from_env())?;
        Ok(match self.backend {
            BackendKind::Cache => {
                let dir = self.cache_dir.clone().unwrap_or_else(|| self.out.join(".vlm_cache"));
                Arc::new(CacheBackend::new(http, dir)?)
            }
            _ => Arc::new(http),
        })
    }

    fn provider(&self) -> Result<Box<dyn BackendProvider>> {
        Ok(match self.backend {
            BackendKind::Scripted => Box::new(ScriptedProvider {
                default_transcript: self.transcript.clone(),
            }),
            _ => Box::new(SharedProvider(self.live_backend()?)),
        })
    }

    fn backend_for(&self, m: Option<&SceneManifest>) -> Result<Arc<dyn VlmBackend>> {
        match self.backend {
            BackendKind::Scripted => {
                let path = self
                    .transcript
                    .clone()
                    .or_else(|| m.and_then(|m| m.transcript_path.clone()))
                    .ok_or_else(|| Error::InvalidSpec("scripted backend needs --transcript or a manifest transcript".into()))?;
                Ok(Arc::new(ScriptedBackend::new(ScriptedTranscript::load(path)?)))
            }
            _ => self.live_backend(),
        }
    }

    fn plan(&self, m: Option<&SceneManifest>, mesh: &TriangleMesh, backend: &dyn VlmBackend) -> Result<(PlanConfig, PlanState)> {
        let mut cfg = self.plan_config();
        cfg.scene_type = m.and_then(|m| m.scene_type.clone());
        let state = match self.plan {
            PlanArg::Selected => plan_views(mesh, &cfg, backend)?,
            PlanArg::Random => random_plan(mesh, &cfg, self.seed)?,
        };
        Ok((cfg, state))
    }

    fn eval_config(&self, task: TaskArg, labeler: LabelerArg, workers: usize) -> EvalConfig {
        EvalConfig {
            task: match task {
                TaskArg::Qa => EvalTask::Qa,
                TaskArg::Caption => EvalTask::Caption,
                TaskArg::Decompose => EvalTask::Decompose,
                TaskArg::Dialog => EvalTask::Dialog,
                TaskArg::Segment => EvalTask::Segment,
            },
            plan_mode: match self.plan {
                PlanArg::Selected => PlanMode::Selected,
                PlanArg::Random => PlanMode::Random,
            },
            plan: self.plan_config(),
            labeler: labeler_kind(labeler),
            seed: self.seed,
            workers,
            ..EvalConfig::default()
        }
    }
}

fn labeler_kind(l: LabelerArg) -> LabelerKind {
    match l {
        LabelerArg::Vlm => LabelerKind::Vlm,
        LabelerArg::Palette => LabelerKind::Palette,
        LabelerArg::Random => LabelerKind::Random,
    }
}

fn mkdir(p: &Path) -> Result<()> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))
}

fn write_text(p: &Path, text: &str) -> Result<()> {
    fs::write(p, text).map_err(|e| Error::io(p, e))
}

/// Plans, runs one task, and writes the plan, answer and transcript.
fn single_task(shared: &Shared, payload: impl FnOnce(Option<&SceneManifest>) -> Result<TaskPayload>) -> Result<()> {
    let (m, mesh) = shared.one_scene()?;
    let inner = shared.backend_for(m.as_ref())?;
    let rec = RecordingBackend::new(inner.as_ref());
    let (cfg, state) = shared.plan(m.as_ref(), &mesh, &rec)?;
    let payload = payload(m.as_ref())?;
    let answer = run_task(&state.views, &payload, &rec)?;
    save_plan(&state, &cfg, Some(&rec), &shared.out)?;
    save_json(&shared.out.join("answer.json"), &answer)?;
    match &payload {
        TaskPayload::Qa { questions } => {
            for (q, a) in questions.iter().zip(&answer.answers) {
                println!("{q}\t{a}");
            }
        }
        _ => println!("{}", answer.text()),
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenToy { count, gt_points, shared } => {
            let opts = ToyGenOptions {
                count,
                seed: shared.seed,
                gt_points,
                ..ToyGenOptions::default()
            };
            for p in gen_toy(&shared.out, &opts)? {
                println!("{}", p.display());
            }
        }
        Command::RenderBev { ppm, margin, cut, shared } => {
            let (_, mesh) = shared.one_scene()?;
            let bounds = compute_bounds(&mesh)?;
            let bev = render_bev(&strip_ceiling(&mesh, cut)?, &bounds, ppm, margin)?;
            mkdir(&shared.out)?;
            let p = shared.out.join("bev.png");
            write_png(&bev.color, &p)?;
            println!("{}", p.display());
        }
        Command::Annotate { shared } => {
            let (_, mesh) = shared.one_scene()?;
            let canvas = prepare_canvas(&mesh, &shared.plan_config())?;
            mkdir(&shared.out)?;
            write_png(&canvas.bev.color, shared.out.join("bev.png"))?;
            let p = shared.out.join("bev_annotated.png");
            write_png(&canvas.annotated, &p)?;
            save_json(&shared.out.join("grid.json"), &canvas.grid)?;
            println!("{}", p.display());
        }
        Command::PlanViews { shared } => {
            let (m, mesh) = shared.one_scene()?;
            let inner = shared.backend_for(m.as_ref())?;
            let rec = RecordingBackend::new(inner.as_ref());
            let (cfg, state) = shared.plan(m.as_ref(), &mesh, &rec)?;
            save_plan(&state, &cfg, Some(&rec), &shared.out)?;
            for p in &state.proposals {
                println!("{}", p.canonical());
            }
        }
        Command::Ask { questions, shared } => single_task(&shared, |m| {
            let questions = if questions.is_empty() {
                m.map(|m| m.qa.iter().map(|q| q.question.clone()).collect()).unwrap_or_default()
            } else {
                questions
            };
            if questions.is_empty() {
                return Err(Error::InvalidSpec("no questions given".into()));
            }
            Ok(TaskPayload::Qa { questions })
        })?,
        Command::Caption { shared } => single_task(&shared, |_| Ok(TaskPayload::Caption))?,
        Command::Decompose { goal, shared } => single_task(&shared, |m| {
            let goal = goal.or_else(|| m.and_then(|m| m.decomposition.as_ref()?.goal.clone()));
            Ok(TaskPayload::Decomposition { goal })
        })?,
        Command::Dialog { message, history, shared } => single_task(&shared, |_| Ok(TaskPayload::Dialog { history, message }))?,
        Command::Segment { labeler, stride, shared } => {
            let (m, mesh) = shared.one_scene()?;
            let m = m.ok_or_else(|| Error::InvalidSpec("segment needs --manifest".into()))?;
            let gt_path = m
                .gt_labels_path
                .as_ref()
                .ok_or_else(|| Error::manifest("gt_labels_path", "required for segmentation"))?;
            let gt = load_labeled_cloud(gt_path)?;
            let classes = gt.class_names().to_vec();
            let needs_vlm = matches!(shared.plan, PlanArg::Selected) || matches!(labeler, LabelerArg::Vlm);
            let inner: Arc<dyn VlmBackend> = if needs_vlm {
                shared.backend_for(Some(&m))?
            } else {
                Arc::new(RandomLabeler::new(classes.clone(), shared.seed))
            };
            let rec = RecordingBackend::new(inner.as_ref());
            let (cfg, state) = shared.plan(Some(&m), &mesh, &rec)?;
            let labeler: Box<dyn VlmBackend + '_> = match labeler {
                LabelerArg::Vlm => Box::new(&rec),
                LabelerArg::Palette => Box::new(ColorKeyedLabeler::new(m.palette_ids(), classes.clone())),
                LabelerArg::Random => Box::new(RandomLabeler::new(classes.clone(), shared.seed)),
            };
            let seg_cfg = SegConfig {
                stride_px: stride,
                ..SegConfig::default()
            };
            let outcome = segment_views(&state.views, &gt, &seg_cfg.builtin(), labeler.as_ref(), &seg_cfg)?;
            save_plan(&state, &cfg, Some(&rec), &shared.out)?;
            for (k, v) in outcome.per_view.iter().enumerate() {
                write_png(&v.marked, shared.out.join(format!("view_{k:02}.marks.png")))?;
            }
            let report = outcome.report.to_named_json(&classes);
            save_json(&shared.out.join("miou.json"), &report)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        Command::Eval {
            task,
            labeler,
            workers,
            shared,
        } => {
            let cfg = shared.eval_config(task, labeler, workers);
            let run = run_eval(&shared.manifests()?, &cfg, shared.provider()?.as_ref(), &shared.out)?;
            eprintln!("{}{}", run.dir.display(), if run.reused { " (reused)" } else { "" });
            print!("{}", emit_markdown(&run.report));
        }
        Command::Ablate {
            axis,
            task,
            labeler,
            workers,
            shared,
        } => {
            let cfg = shared.eval_config(task, labeler, workers);
            let axis = match axis {
                AxisArg::NViews => AblationAxis::NViews,
                AxisArg::Density => AblationAxis::Density,
            };
            let table = run_ablation(&shared.manifests()?, axis, &cfg, shared.provider()?.as_ref(), &shared.out)?;
            print!("{}", table.to_markdown());
        }
        Command::Report { run, format } => {
            let p = run.join("report.json");
            let text = fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
            let report: RunReport = serde_json::from_str(&text)?;
            match format {
                FormatArg::Json => println!("{}", serde_json::to_string_pretty(&report)?),
                FormatArg::Markdown => {
                    let md = emit_markdown(&report);
                    write_text(&run.join("report.md"), &md)?;
                    print!("{md}");
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
