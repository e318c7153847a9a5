mod common;

use agent3d::agent::{build_task_request, plan_views, PlanConfig, TaskPayload};
use agent3d::harness::load_manifest;
use agent3d::render::CameraIntrinsics;
use agent3d::scene::load_mesh;
use agent3d::vlm::{ScriptedBackend, ScriptedTranscript};

const GOAL_3: &str = "Given a bird's-eye view of a scene, please provide 3 pictures to comprehensively understand the scene.";
const FORMAT: &str =
    "The position can be present as the grid point in the picture, like (0, 0). The orientations can be chosen from ['left', 'right', 'front', 'back'].";
const QA: &str = "Understand a 3D scene without direct access to the point clouds but only images from different viewpoints. \
Later, I'll ask you a series of questions about the scene, and I'd like your responses one-by-one with correspondence number, \
in the order the questions are presented. Please keep each response short and clear.";
const EXAMPLES: &str = "Examples: questions: [1. How many chairs are around the table? 2. what's the color of the table? \
3. Where is the beige wooden working table placed? 4. What is in the corner of the bath? ].";
const EXAMPLE_ANSWERS: &str = "Answers: [1. 3 2. Brown 3. right of tall cabinet 4. shower]";

#[test]
fn planning_and_qa_prompts_carry_fixed_sentences() {
    let tmp = tempfile::tempdir().unwrap();
    let manifests = common::toy_scenes(tmp.path(), 3000);
    let m = load_manifest(&manifests[0]).unwrap();
    let mesh = load_mesh(&m.mesh_path).unwrap();
    let backend = ScriptedBackend::new(ScriptedTranscript::load(m.transcript_path.as_ref().unwrap()).unwrap());
    let mut cfg = PlanConfig {
        n_total: 6,
        scene_type: m.scene_type.clone(),
        ..PlanConfig::default()
    };
    cfg.rig.intrinsics = CameraIntrinsics::square(64);
    let state = plan_views(&mesh, &cfg, &backend).unwrap();
    assert_eq!(state.log.len(), 2);
    for (k, ex) in state.log.iter().enumerate() {
        assert_eq!(ex.image_count, 1);
        let t = &ex.request_text;
        assert!(t.contains(GOAL_3), "{t}");
        assert!(t.contains(FORMAT), "{t}");
        assert!(t.contains("8x8 grid"));
        assert!(t.contains(&format!("This is round {} of 2.", k + 1)));
        assert!(t.contains("an indoor room"));
    }
    // the second round lists the first round's picks
    for p in &state.proposals[..3] {
        assert!(state.log[1].request_text.contains(&p.canonical()));
    }

    let req = build_task_request(
        &state.views,
        &TaskPayload::Qa {
            questions: vec!["How many chairs are there?".into(), "What color is the table?".into()],
        },
    )
    .unwrap();
    let t = req.text();
    assert!(t.contains(QA));
    assert!(t.contains(EXAMPLES));
    assert!(t.contains(EXAMPLE_ANSWERS));
    assert!(t.ends_with("Questions: [1. How many chairs are there? 2. What color is the table?].\nAnswers:"), "{t}");
    assert_eq!(req.image_count(), 6);
}
