//! Surface coverage of a view set and a greedy coverage planner used to
//! script deterministic viewpoint replies for synthetic scenes.

use nalgebra::Point3;
use rayon::prelude::*;

use crate::pose::{pose_from_proposal, CameraRigConfig, Orientation, ViewProposal};
use crate::render::{project, render_perspective, CameraIntrinsics, CameraPose, DepthImage, RenderOptions};
use crate::scene::TriangleMesh;
use crate::solp::GridSpec;
use crate::Result;

/// Depth agreement needed for a point to count as seen.
pub const DEFAULT_VISIBILITY_TOL: f64 = 0.05;

/// Whether `p` projects into the frame at a pixel whose stored depth agrees
/// with the point's camera depth.
pub fn is_visible(p: &Point3<f64>, k: &CameraIntrinsics, pose: &CameraPose, depth: &DepthImage, tol: f64) -> bool {
    let Some(pd) = project(k, pose, p) else { return false };
    let (u, v) = (pd.u.round(), pd.v.round());
    if u < 0.0 || v < 0.0 || u >= k.width as f64 || v >= k.height as f64 {
        return false;
    }
    let d = depth.get(u as u32, v as u32) as f64;
    d.is_finite() && (d - pd.depth).abs() <= tol
}

/// Per-point visibility in one view.
pub fn visible_mask(points: &[Point3<f64>], k: &CameraIntrinsics, pose: &CameraPose, depth: &DepthImage, tol: f64) -> Vec<bool> {
    points.iter().map(|p| is_visible(p, k, pose, depth, tol)).collect()
}

/// Fraction of `points` seen by at least one of the `(intrinsics, pose, depth)` views.
pub fn surface_coverage<'a>(points: &[Point3<f64>], views: impl IntoIterator<Item = (&'a CameraIntrinsics, &'a CameraPose, &'a DepthImage)>, tol: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut seen = vec![false; points.len()];
    for (k, pose, depth) in views {
        for (s, p) in seen.iter_mut().zip(points) {
            if !*s {
                *s = is_visible(p, k, pose, depth, tol);
            }
        }
    }
    seen.iter().filter(|&&s| s).count() as f64 / points.len() as f64
}

/// Picks up to `n` distinct lattice views greedily by marginal coverage of
/// `points`, skipping lattice points on the grid border. Each candidate is
/// rendered once with `probe` intrinsics; ties go to the earlier candidate
/// in (i, j, orientation) order.
pub fn greedy_coverage_plan(
    mesh: &TriangleMesh,
    points: &[Point3<f64>],
    spec: &GridSpec,
    rig: &CameraRigConfig,
    probe: CameraIntrinsics,
    floor_z: f64,
    n: usize,
) -> Result<Vec<ViewProposal>> {
    let d = spec.density as i64;
    let interior = if d >= 2 { 1..d } else { 0..d + 1 };
    let candidates: Vec<ViewProposal> = interior
        .clone()
        .flat_map(|i| interior.clone().map(move |j| (i, j)))
        .flat_map(|(i, j)| Orientation::ALL.into_iter().map(move |o| ViewProposal::new(i, j, o)))
        .collect();
    let probe_rig = CameraRigConfig { intrinsics: probe, ..*rig };
    let masks: Vec<Vec<bool>> = candidates
        .par_iter()
        .map(|c| {
            let pose = pose_from_proposal(c, spec, &probe_rig, floor_z)?;
            let view = render_perspective(mesh, &probe, &pose, &RenderOptions::default())?;
            Ok(visible_mask(points, &probe, &pose, &view.depth, DEFAULT_VISIBILITY_TOL))
        })
        .collect::<Result<_>>()?;
    let mut covered = vec![false; points.len()];
    let mut taken = vec![false; candidates.len()];
    let mut out = Vec::new();
    while out.len() < n.min(candidates.len()) {
        let mut best: Option<(usize, usize)> = None;
        for (ci, m) in masks.iter().enumerate() {
            if taken[ci] {
                continue;
            }
            let gain = m.iter().zip(&covered).filter(|(v, c)| **v && !**c).count();
            if best.is_none_or(|(_, g)| gain > g) {
                best = Some((ci, gain));
            }
        }
        let (ci, _) = best.expect("untaken candidate exists");
        taken[ci] = true;
        for (c, v) in covered.iter_mut().zip(&masks[ci]) {
            *c |= *v;
        }
        out.push(candidates[ci].clone());
    }
    Ok(out)
}
