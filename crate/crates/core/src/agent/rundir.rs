use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PlanConfig, PlanState, RecordingBackend};
use crate::pose::ViewProposal;
use crate::render::{write_pfm, write_png, CameraPose};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub index: usize,
    pub proposal: ViewProposal,
    pub pose: CameraPose,
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes poses.json, config.json, bev.png, bev_annotated.png and
/// view_XX.png / view_XX.pfm; transcript.json when a recorder is given.
pub fn save_plan(state: &PlanState, cfg: &PlanConfig, recorder: Option<&RecordingBackend>, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let poses: Vec<PoseRecord> = state
        .proposals
        .iter()
        .zip(&state.poses)
        .enumerate()
        .map(|(index, (p, pose))| PoseRecord {
            index,
            proposal: p.clone(),
            pose: *pose,
        })
        .collect();
    save_json(&dir.join("poses.json"), &poses)?;
    save_json(&dir.join("config.json"), cfg)?;
    write_png(&state.canvas.bev.color, dir.join("bev.png"))?;
    write_png(&state.canvas.annotated, dir.join("bev_annotated.png"))?;
    for (k, v) in state.views.iter().enumerate() {
        write_png(&v.color, dir.join(format!("view_{k:02}.png")))?;
        write_pfm(&v.depth, dir.join(format!("view_{k:02}.pfm")))?;
    }
    if let Some(t) = recorder.and_then(RecordingBackend::transcript) {
        t.save(dir.join("transcript.json"))?;
    }
    Ok(())
}

pub fn load_poses(path: impl AsRef<Path>) -> Result<Vec<PoseRecord>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
