use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::{run_eval, Aggregate, BackendProvider, EvalConfig};
use super::manifest::SceneManifest;
use super::report::{fmt_opt, metric_header, METRIC_COLUMNS};
use crate::agent::save_json;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AblationAxis {
    NViews,
    Density,
}

impl AblationAxis {
    pub fn values(self) -> [u32; 3] {
        match self {
            AblationAxis::NViews => [6, 12, 24],
            AblationAxis::Density => [4, 8, 16],
        }
    }

    pub fn column(self) -> &'static str {
        match self {
            AblationAxis::NViews => "Views",
            AblationAxis::Density => "Density",
        }
    }

    pub fn apply(self, base: &EvalConfig, value: u32) -> EvalConfig {
        let mut cfg = base.clone();
        match self {
            AblationAxis::NViews => {
                cfg.plan.n_total = value as usize;
                cfg.plan.max_images = cfg.plan.max_images.max(value as usize);
                cfg.plan.n_per_iter = cfg.plan.n_per_iter.min(value as usize);
            }
            AblationAxis::Density => cfg.plan.density = value,
        }
        cfg
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub value: u32,
    /// True when no scene completed at this setting.
    pub failed: bool,
    pub aggregate: Aggregate,
    pub run_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: AblationAxis,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    /// Metric columns plus surface coverage; failed settings show `-`.
    pub fn to_markdown(&self) -> String {
        let mut s = format!("| {} | {} | Coverage |\n", self.axis.column(), metric_header());
        s.push_str(&format!("|{}\n", "---|".repeat(METRIC_COLUMNS.len() + 2)));
        for r in &self.rows {
            let a = &r.aggregate;
            let cells = if r.failed {
                [None; 7]
            } else {
                [a.bleu1, a.bleu4, a.meteor, a.rouge_l, a.cider, a.em, a.coverage]
            };
            write!(s, "| {} |", r.value).unwrap();
            for c in cells {
                write!(s, " {} |", fmt_opt(c)).unwrap();
            }
            s.push('\n');
        }
        s
    }
}

/// One evaluation per axis value with everything else held fixed. Writes
/// ablation_<axis>.json and .md under `out`.
pub fn run_ablation(
    manifests: &[SceneManifest],
    axis: AblationAxis,
    base: &EvalConfig,
    provider: &dyn BackendProvider,
    out: impl AsRef<Path>,
) -> Result<AblationTable> {
    let out = out.as_ref();
    let mut rows = Vec::new();
    for value in axis.values() {
        let cfg = axis.apply(base, value);
        let run = run_eval(manifests, &cfg, provider, out)?;
        let a = run.report.aggregate;
        rows.push(AblationRow {
            value,
            failed: a.n_scenes == 0 || a.n_failed == a.n_scenes,
            aggregate: a,
            run_dir: run.dir,
        });
    }
    let table = AblationTable { axis, rows };
    let stem = match axis {
        AblationAxis::NViews => "ablation_n_views",
        AblationAxis::Density => "ablation_density",
    };
    save_json(&out.join(format!("{stem}.json")), &table)?;
    let p = out.join(format!("{stem}.md"));
    fs::write(&p, table.to_markdown()).map_err(|e| Error::io(&p, e))?;
    Ok(table)
}
