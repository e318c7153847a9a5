use std::fs;
use std::path::{Path, PathBuf};

use super::manifest::{DecompositionRef, DialogCase, PaletteEntry, QaPair, SceneManifest};
use crate::coverage::greedy_coverage_plan;
use crate::pose::{CameraRigConfig, ViewProposal};
use crate::render::CameraIntrinsics;
use crate::scene::{build_toy_room, compute_bounds, save_labeled_cloud, save_mesh, PlyEncoding, ToyRoomSpec};
use crate::solp::make_grid;
use crate::vlm::{MatchRule, ScriptRule, ScriptedTranscript};
use crate::{Error, Result};

/// Densities for which the generated transcript answers planning prompts.
pub const SCRIPTED_DENSITIES: [u32; 2] = [4, 8];
/// Density whose planning prompts get an unparseable reply.
pub const UNPARSEABLE_DENSITY: u32 = 16;
pub const SCRIPTED_VIEWS: usize = 24;
pub const SCRIPTED_PER_ITER: usize = 3;

const NUMBER_WORDS: [&str; 7] = ["zero", "one", "two", "three", "four", "five", "six"];

#[derive(Debug, Clone)]
pub struct ToyGenOptions {
    pub count: usize,
    pub seed: u64,
    pub gt_points: usize,
    /// Ground-truth points used to score candidate views for the script.
    pub probe_points: usize,
    pub probe_px: u32,
    pub rig: CameraRigConfig,
}

impl Default for ToyGenOptions {
    fn default() -> Self {
        Self {
            count: 2,
            seed: 0,
            gt_points: 20_000,
            probe_points: 3000,
            probe_px: 64,
            rig: CameraRigConfig::default(),
        }
    }
}

fn rule(contains: &[String], min_images: usize, response: String, note: &str) -> ScriptRule {
    ScriptRule {
        matcher: MatchRule {
            contains: contains.to_vec(),
            equals: None,
            min_images,
        },
        response,
        note: Some(note.into()),
    }
}

/// The `k`-th toy room: a table and two or three chairs.
pub fn toy_spec(k: usize, seed: u64, gt_points: usize) -> ToyRoomSpec {
    let mut spec = ToyRoomSpec::demo(seed.wrapping_add(k as u64));
    let chair = spec.furniture[1].clone();
    if k % 2 == 1 {
        spec.extent = [5.5, 4.5, 2.5];
        spec.furniture.push(chair);
    }
    spec.gt_points = gt_points;
    spec
}

fn proposal_lines(props: &[ViewProposal]) -> String {
    props.iter().map(ViewProposal::canonical).collect::<Vec<_>>().join("\n")
}

/// Writes `count` toy scenes under `out`, each with mesh.ply,
/// gt_labels.ply, transcript.json and manifest.json. Returns the manifest
/// paths.
pub fn gen_toy(out: impl AsRef<Path>, opts: &ToyGenOptions) -> Result<Vec<PathBuf>> {
    let out = out.as_ref();
    let mut manifests = Vec::new();
    for k in 0..opts.count {
        let spec = toy_spec(k, opts.seed, opts.gt_points);
        let scene_id = format!("toy_{k:02}");
        let dir = out.join(&scene_id);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let (mesh, gt) = build_toy_room(&spec)?;
        save_mesh(dir.join("mesh.ply"), &mesh, PlyEncoding::BinaryLittleEndian)?;
        save_labeled_cloud(dir.join("gt_labels.ply"), &gt, PlyEncoding::BinaryLittleEndian)?;
        fs::write(dir.join("toy_spec.json"), serde_json::to_string_pretty(&spec)? + "\n").map_err(|e| Error::io(&dir, e))?;

        let bounds = compute_bounds(&mesh)?;
        let step = (gt.len() / opts.probe_points.max(1)).max(1);
        let probe_pts: Vec<_> = gt.points().iter().step_by(step).copied().collect();
        let mut rules = vec![rule(
            &[format!("{UNPARSEABLE_DENSITY}x{UNPARSEABLE_DENSITY} grid")],
            1,
            "The grid is too dense for me to read the line numbers reliably.".into(),
            "dense grid",
        )];
        for d in SCRIPTED_DENSITIES {
            let grid = make_grid(&bounds, d)?;
            let plan = greedy_coverage_plan(
                &mesh,
                &probe_pts,
                &grid,
                &opts.rig,
                CameraIntrinsics::square(opts.probe_px),
                bounds.min[2],
                SCRIPTED_VIEWS,
            )?;
            for (r, chunk) in plan.chunks(SCRIPTED_PER_ITER).enumerate() {
                rules.push(rule(
                    &[format!("{d}x{d} grid"), format!("This is round {} of", r + 1)],
                    1,
                    proposal_lines(chunk),
                    &format!("density {d} round {}", r + 1),
                ));
            }
        }

        let n = spec.furniture.iter().filter(|f| f.class_name == "chair").count();
        let word = NUMBER_WORDS[n.min(NUMBER_WORDS.len() - 1)];
        let qa = vec![
            QaPair {
                question: "How many chairs are in the room?".into(),
                answers: vec![n.to_string(), word.into()],
            },
            QaPair {
                question: "What color is the table?".into(),
                answers: vec!["brown".into()],
            },
            QaPair {
                question: "What color are the chairs?".into(),
                answers: vec!["blue".into()],
            },
            QaPair {
                question: "What is the largest piece of furniture in the room?".into(),
                answers: vec!["the table".into(), "table".into()],
            },
            QaPair {
                question: "What color are the walls?".into(),
                answers: vec!["white".into(), "light gray".into()],
            },
        ];
        rules.push(rule(
            &["one-by-one with correspondence number".into()],
            1,
            format!("Answers: [1. {n} 2. Brown 3. dark blue 4. a table 5. white]"),
            "qa",
        ));
        rules.push(rule(
            &["Describe the scene".into()],
            1,
            format!("A room with a brown table and {word} blue chairs on a beige floor."),
            "caption",
        ));
        let goal = "get ready to eat at the table".to_string();
        rules.push(rule(
            &[format!("Break the task \"{goal}\"")],
            1,
            "1. walk to the brown table 2. pull out a blue chair 3. sit on the chair".into(),
            "decomposition",
        ));
        let message = "How many chairs are there?".to_string();
        rules.push(rule(std::slice::from_ref(&message), 0, format!("There are {word} chairs."), "dialog"));
        ScriptedTranscript::new(rules, true)?.save(dir.join("transcript.json"))?;

        let class_names = spec.class_names();
        let palette = spec
            .palette()
            .into_iter()
            .map(|(color, id)| PaletteEntry {
                color,
                class: id.map(|i| class_names[i as usize].clone()),
            })
            .collect();
        let manifest = SceneManifest {
            scene_id,
            mesh_path: "mesh.ply".into(),
            scene_type: Some("an indoor room".into()),
            gt_labels_path: Some("gt_labels.ply".into()),
            class_names: Some(class_names),
            qa,
            captions: vec![
                format!("a room with a brown table and {word} blue chairs"),
                format!("a small room with a wooden table and {n} chairs around it"),
            ],
            decomposition: Some(DecompositionRef {
                goal: Some(goal),
                references: vec![
                    "walk to the table, pull out a chair and sit on the chair".into(),
                    "go to the table and sit down on one of the chairs".into(),
                ],
            }),
            dialog: vec![DialogCase {
                history: vec!["Is there a table in the room?".into(), "Yes, there is a brown table.".into()],
                message,
                references: vec![format!("there are {word} chairs"), n.to_string()],
            }],
            palette,
            transcript_path: Some("transcript.json".into()),
        };
        manifest.validate()?;
        let path = dir.join("manifest.json");
        manifest.save(&path)?;
        manifests.push(path);
    }
    Ok(manifests)
}
