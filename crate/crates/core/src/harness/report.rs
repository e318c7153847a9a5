use std::fmt::Write as _;

use super::eval::{EvalTask, RunReport, SceneStatus};
use crate::metrics::MetricReport;
use crate::{Error, Result};

pub const METRIC_COLUMNS: [&str; 6] = ["B-1", "B-4", "METEOR", "ROUGE-L", "CIDEr", "EM"];

/// `B-1 | B-4 | METEOR | ROUGE-L | CIDEr | EM`
pub fn metric_header() -> String {
    METRIC_COLUMNS.join(" | ")
}

pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| x.to_string())
}

pub fn metric_cells(m: Option<&MetricReport>) -> [Option<f64>; 6] {
    match m {
        Some(m) => [Some(m.bleu1), Some(m.bleu4), Some(m.meteor), Some(m.rouge_l), m.cider, Some(m.em)],
        None => [None; 6],
    }
}

fn row(label: &str, cells: &[Option<f64>]) -> String {
    let mut s = format!("| {label} |");
    for c in cells {
        write!(s, " {} |", fmt_opt(*c)).unwrap();
    }
    s
}

/// Separator for a table with a label column and `n` value columns.
fn separator(n: usize) -> String {
    format!("|{}", "---|".repeat(n + 1))
}

/// Markdown rendering of a run report. Numbers are written at full
/// precision so the table parses back to the JSON values.
pub fn emit_markdown(report: &RunReport) -> String {
    let cfg = &report.config;
    let mut s = String::from("# Evaluation report\n\n");
    writeln!(
        s,
        "Run `{}`: task {:?}, plan {:?}, {} views, density {}, seed {}.\n",
        report.config_hash, cfg.task, cfg.plan_mode, cfg.plan.n_total, cfg.plan.density, cfg.seed
    )
    .unwrap();
    let a = &report.aggregate;
    if cfg.task == EvalTask::Segment {
        s.push_str("| Scene | mIoU | Labeled | Coverage |\n");
        s.push_str(&separator(3));
        s.push('\n');
        for r in &report.rows {
            s.push_str(&row(&r.scene_id, &[r.miou, r.labeled_fraction, r.coverage]));
            s.push('\n');
        }
        s.push_str(&row("Mean", &[a.miou, a.labeled_fraction, a.coverage]));
        s.push('\n');
    } else {
        writeln!(s, "| Scene | {} |", metric_header()).unwrap();
        s.push_str(&separator(METRIC_COLUMNS.len()));
        s.push('\n');
        for r in &report.rows {
            s.push_str(&row(&r.scene_id, &metric_cells(r.metrics.as_ref())));
            s.push('\n');
        }
        let mean = [a.bleu1, a.bleu4, a.meteor, a.rouge_l, a.cider, a.em];
        s.push_str(&row("Mean", &mean));
        s.push('\n');
    }
    writeln!(s, "\nScenes: {}, failed: {}, model calls: {}.", a.n_scenes, a.n_failed, report.vlm_calls).unwrap();
    for r in report.rows.iter().filter(|r| r.status == SceneStatus::Failed) {
        writeln!(s, "- {} failed: {}", r.scene_id, r.error.as_deref().unwrap_or("unknown error")).unwrap();
    }
    if !report.notes.is_empty() {
        s.push('\n');
        for n in &report.notes {
            writeln!(s, "- {n}").unwrap();
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarkdownRow {
    pub label: String,
    pub cells: Vec<Option<f64>>,
}

/// Reads back the first table whose header is `| <first> | <columns...> |`.
pub fn parse_markdown_table(md: &str, first: &str, columns: &[&str]) -> Result<Vec<MarkdownRow>> {
    let header = format!("| {first} | {} |", columns.join(" | "));
    let mut lines = md.lines().skip_while(|l| l.trim() != header);
    if lines.next().is_none() {
        return Err(Error::Parse(format!("table header '{header}' not found")));
    }
    lines.next();
    let mut rows = Vec::new();
    for line in lines {
        let line = line.trim();
        if !line.starts_with('|') {
            break;
        }
        let cells: Vec<&str> = line.trim_matches('|').split('|').map(str::trim).collect();
        if cells.len() != columns.len() + 1 {
            return Err(Error::Parse(format!("row has {} cells: {line}", cells.len())));
        }
        let values = cells[1..]
            .iter()
            .map(|c| {
                if *c == "-" {
                    Ok(None)
                } else {
                    c.parse::<f64>().map(Some).map_err(|e| Error::Parse(format!("cell '{c}': {e}")))
                }
            })
            .collect::<Result<_>>()?;
        rows.push(MarkdownRow {
            label: cells[0].to_string(),
            cells: values,
        });
    }
    Ok(rows)
}

pub fn parse_markdown_report(md: &str) -> Result<Vec<MarkdownRow>> {
    parse_markdown_table(md, "Scene", &METRIC_COLUMNS)
}
