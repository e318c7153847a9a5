//! Scene manifests, evaluation runs, ablations and reports.

mod ablation;
mod eval;
mod manifest;
mod report;
mod toygen;

pub use ablation::{run_ablation, AblationAxis, AblationRow, AblationTable};
pub use eval::{
    config_hash, run_eval, Aggregate, BackendProvider, EvalConfig, EvalTask, LabelerKind, PlanMode, RunOutcome, RunReport, SceneRow,
    SceneStatus, ScriptedProvider, SharedProvider,
};
pub use manifest::{load_manifest, DecompositionRef, DialogCase, PaletteEntry, QaPair, SceneManifest};
pub use report::{emit_markdown, fmt_opt, metric_header, parse_markdown_report, parse_markdown_table, MarkdownRow, METRIC_COLUMNS};
pub use toygen::{gen_toy, toy_spec, ToyGenOptions, SCRIPTED_DENSITIES, SCRIPTED_PER_ITER, SCRIPTED_VIEWS, UNPARSEABLE_DENSITY};
