mod common;

use agent3d::harness::toy_spec;
use agent3d::pose::{parse_view_proposals, pose_from_proposal, CameraRigConfig, Orientation, ViewProposal};
use agent3d::render::{project, render_perspective, unproject, CameraIntrinsics, CameraPose, RenderOptions};
use agent3d::scene::{build_toy_room, compute_bounds, SceneBounds};
use agent3d::solp::make_grid;
use common::*;
use nalgebra::{Matrix3, Point3, Rotation3, Vector3};
use proptest::prelude::*;

fn bounds8() -> SceneBounds {
    SceneBounds::new([0.0, 0.0, 0.0], [8.0, 8.0, 3.0]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn unproject_then_project_round_trips(
        axis in prop::array::uniform3(-1.0f64..1.0),
        angle in -std::f64::consts::PI..std::f64::consts::PI,
        pos in prop::array::uniform3(-20.0f64..20.0),
        u in 0.0f64..640.0,
        v in 0.0f64..480.0,
        d in 0.05f64..50.0,
    ) {
        let axis = Vector3::from(axis);
        prop_assume!(axis.norm() > 1e-3);
        let r = Rotation3::from_axis_angle(&nalgebra::Unit::new_normalize(axis), angle);
        let pose = CameraPose::new(*r.matrix(), Point3::from(pos)).unwrap();
        let k = CameraIntrinsics::new(525.0, 520.0, 319.5, 239.5, 640, 480).unwrap();
        let p = unproject(&k, &pose, u, v, d).unwrap();
        let back = project(&k, &pose, &p).unwrap();
        prop_assert!((back.u - u).abs() < 1e-6 && (back.v - v).abs() < 1e-6 && (back.depth - d).abs() < 1e-6);
        let again = unproject(&k, &pose, back.u, back.v, back.depth).unwrap();
        prop_assert!((again - p).norm() < 1e-6);
    }
}

#[test]
fn points_behind_camera_do_not_project() {
    let k = CameraIntrinsics::square(64);
    let pose = CameraPose::identity();
    assert!(project(&k, &pose, &Point3::new(0.0, 0.0, -1.0)).is_none());
    assert!(project(&k, &pose, &Point3::new(0.0, 0.0, 0.0)).is_none());
}

#[test]
fn lattice_round_trip_is_exact() {
    for d in [4u32, 8, 16] {
        for b in [bounds8(), SceneBounds::new([-2.3, 1.7, 0.0], [3.9, 6.05, 2.5]).unwrap()] {
            let g = make_grid(&b, d).unwrap();
            assert_eq!(g.num_points(), ((d + 1) * (d + 1)) as usize);
            for i in 0..=d as i64 {
                for j in 0..=d as i64 {
                    let (x, y) = g.grid_to_world(i, j).unwrap();
                    assert_eq!(g.world_to_grid(x, y), (i, j), "d={d} ({i},{j})");
                }
            }
            assert!(g.grid_to_world(d as i64 + 1, 0).is_err());
            assert!(g.grid_to_world(0, -1).is_err());
            assert_eq!(g.world_to_grid(-100.0, 1e6), (0, d as i64));
        }
    }
}

#[test]
fn parse_fixture_passes() {
    let cases = parse_cases();
    assert_eq!(cases.len(), 20);
    for c in cases {
        let got: Vec<(i64, i64, String)> = parse_view_proposals(&c.text)
            .into_iter()
            .map(|p| (p.grid_point.0, p.grid_point.1, p.orientation.to_string()))
            .collect();
        assert_eq!(got, c.expected, "input {:?}", c.text);
    }
}

fn assert_orthonormal(r: &Matrix3<f64>) {
    let e = (r.transpose() * r - Matrix3::identity()).abs().max();
    assert!(e < 1e-6, "R^T R deviates by {e}");
    assert!((r.determinant() - 1.0).abs() < 1e-6);
}

#[test]
fn constructed_rotations_are_orthonormal() {
    let g = make_grid(&bounds8(), 4).unwrap();
    for pitch in [0.0, 15.0, 30.0, 45.0, 89.0] {
        let rig = CameraRigConfig::new(1.6, pitch, CameraIntrinsics::default()).unwrap();
        for i in 0..=4 {
            for j in 0..=4 {
                for o in Orientation::ALL {
                    let pose = pose_from_proposal(&ViewProposal::new(i, j, o), &g, &rig, 0.0).unwrap();
                    assert_orthonormal(pose.rotation());
                    let f = pose.forward();
                    let [dx, dy, _] = o.direction();
                    let p = pitch.to_radians();
                    assert!((f - Vector3::new(dx * p.cos(), dy * p.cos(), -p.sin())).norm() < 1e-9);
                    // camera x stays horizontal and y points downward on screen
                    assert!(pose.rotation()[(2, 0)].abs() < 1e-12);
                    assert!(pose.rotation()[(2, 1)] <= 1e-12);
                }
            }
        }
    }
}

#[test]
fn rasterizer_matches_ray_casting() {
    let spec = toy_spec(0, 0, 2000);
    let (mesh, _) = build_toy_room(&spec).unwrap();
    let bounds = compute_bounds(&mesh).unwrap();
    let g = make_grid(&bounds, 8).unwrap();
    let k = CameraIntrinsics::square(64);
    let rig = CameraRigConfig::new(1.6, 15.0, k).unwrap();
    let opts = RenderOptions::default();
    for prop in [
        ViewProposal::new(1, 1, Orientation::Front),
        ViewProposal::new(4, 4, Orientation::Right),
        ViewProposal::new(7, 6, Orientation::Back),
    ] {
        let pose = pose_from_proposal(&prop, &g, &rig, bounds.min[2]).unwrap();
        let view = render_perspective(&mesh, &k, &pose, &opts).unwrap();
        let (mut covered, mut agree) = (0usize, 0usize);
        for v in 0..64u32 {
            for u in 0..64u32 {
                let d = view.depth.get(u, v);
                if !d.is_finite() {
                    continue;
                }
                covered += 1;
                if let Some(t) = ray_cast_depth(&mesh, &k, &pose, u as f64, v as f64, opts.near) {
                    if (t - d as f64).abs() < 2e-3 {
                        agree += 1;
                    }
                }
            }
        }
        assert!(covered > 64 * 64 / 2, "{covered}");
        let frac = agree as f64 / covered as f64;
        assert!(frac >= 0.995, "{}: {frac}", prop.canonical());
    }
}
