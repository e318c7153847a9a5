//! C ABI over the agent3d library.
//!
//! Every function returns an [`A3dStatus`]; on failure the message is kept
//! per thread and read with [`a3d_last_error`]. Objects cross the boundary
//! as opaque handles that the caller releases with the matching `*_free`.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use agent3d::metrics;
use agent3d::pose::{self, CameraRigConfig, Orientation, ViewProposal};
use agent3d::render::{self, CameraIntrinsics, CameraPose, RenderOptions, ViewBundle};
use agent3d::scene::{self, LabeledPointCloud, ToyRoomSpec, TriangleMesh};
use agent3d::seg;
use agent3d::solp::{self, GridSpec};
use agent3d::Error;
use nalgebra::{Matrix3, Point3};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum A3dStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    OutOfRange = 5,
    BufferTooSmall = 6,
    Internal = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum A3dOrientation {
    Front = 0,
    Back = 1,
    Left = 2,
    Right = 3,
}

impl From<Orientation> for A3dOrientation {
    fn from(o: Orientation) -> Self {
        match o {
            Orientation::Front => A3dOrientation::Front,
            Orientation::Back => A3dOrientation::Back,
            Orientation::Left => A3dOrientation::Left,
            Orientation::Right => A3dOrientation::Right,
        }
    }
}

impl From<A3dOrientation> for Orientation {
    fn from(o: A3dOrientation) -> Self {
        match o {
            A3dOrientation::Front => Orientation::Front,
            A3dOrientation::Back => Orientation::Back,
            A3dOrientation::Left => Orientation::Left,
            A3dOrientation::Right => Orientation::Right,
        }
    }
}

/// Pinhole intrinsics in pixels.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct A3dIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

/// Camera-to-world rotation in row-major order and camera center.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct A3dPose {
    pub rotation: [f64; 9],
    pub position: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct A3dGrid {
    pub density: u32,
    /// xmin, ymin, xmax, ymax
    pub bounds_xy: [f64; 4],
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct A3dProposal {
    pub i: i64,
    pub j: i64,
    pub orientation: A3dOrientation,
}

pub struct A3dMesh(TriangleMesh);

pub struct A3dCloud {
    xyz: Vec<f64>,
    labels: Vec<u32>,
}

pub struct A3dView(ViewBundle);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).unwrap_or_default());
}

fn status_of(e: &Error) -> A3dStatus {
    match e {
        Error::Io { .. } => A3dStatus::Io,
        Error::Parse(_) | Error::UnsupportedFormat(_) | Error::Json(_) | Error::Manifest { .. } => A3dStatus::Parse,
        Error::OutOfGrid(..) | Error::InvalidDepth(_) | Error::InvalidDensity(_) => A3dStatus::OutOfRange,
        _ => A3dStatus::InvalidArgument,
    }
}

/// Runs `f`, mapping errors and panics to a status and recording the message.
fn guard(f: impl FnOnce() -> Result<(), (A3dStatus, String)>) -> A3dStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => A3dStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            A3dStatus::Internal
        }
    }
}

trait IntoFfi<T> {
    fn ffi(self) -> Result<T, (A3dStatus, String)>;
}

impl<T> IntoFfi<T> for agent3d::Result<T> {
    fn ffi(self) -> Result<T, (A3dStatus, String)> {
        self.map_err(|e| (status_of(&e), e.to_string()))
    }
}

fn null(what: &str) -> (A3dStatus, String) {
    (A3dStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> (A3dStatus, String) {
    (A3dStatus::InvalidArgument, msg.into())
}

unsafe fn cstr<'a>(p: *const c_char, what: &str) -> Result<&'a str, (A3dStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid(format!("{what} is not UTF-8")))
}

unsafe fn cstr_list<'a>(p: *const *const c_char, n: usize, what: &str) -> Result<Vec<&'a str>, (A3dStatus, String)> {
    if n > 0 && p.is_null() {
        return Err(null(what));
    }
    (0..n).map(|k| cstr(*p.add(k), what)).collect()
}

unsafe fn out<T>(p: *mut T, v: T, what: &str) -> Result<(), (A3dStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    p.write(v);
    Ok(())
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, (A3dStatus, String)> {
    p.as_ref().ok_or_else(|| null(what))
}

fn intrinsics(k: &A3dIntrinsics) -> Result<CameraIntrinsics, (A3dStatus, String)> {
    CameraIntrinsics::new(k.fx, k.fy, k.cx, k.cy, k.width, k.height).ffi()
}

fn camera_pose(p: &A3dPose) -> Result<CameraPose, (A3dStatus, String)> {
    let r = Matrix3::from_row_slice(&p.rotation);
    CameraPose::new(r, Point3::from(p.position)).ffi()
}

fn pose_out(p: &CameraPose) -> A3dPose {
    let r = p.rotation();
    let mut rotation = [0.0; 9];
    for i in 0..3 {
        for j in 0..3 {
            rotation[i * 3 + j] = r[(i, j)];
        }
    }
    let c = p.position();
    A3dPose {
        rotation,
        position: [c.x, c.y, c.z],
    }
}

fn grid_spec(g: &A3dGrid) -> Result<GridSpec, (A3dStatus, String)> {
    let [x0, y0, x1, y1] = g.bounds_xy;
    let b = scene::SceneBounds::new([x0, y0, 0.0], [x1, y1, 0.0]).ffi()?;
    solp::make_grid(&b, g.density).ffi()
}

/// Message of the last failed call on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn a3d_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn a3d_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub unsafe extern "C" fn a3d_mesh_load_ply(path: *const c_char, out_mesh: *mut *mut A3dMesh) -> A3dStatus {
    guard(|| {
        let path = cstr(path, "path")?;
        let mesh = scene::load_mesh(path).ffi()?;
        out(out_mesh, Box::into_raw(Box::new(A3dMesh(mesh))), "out_mesh")
    })
}

/// Builds a toy room from a JSON spec. `out_cloud` may be null when the
/// labeled ground truth is not wanted.
#[no_mangle]
pub unsafe extern "C" fn a3d_toy_room_from_json(spec_json: *const c_char, out_mesh: *mut *mut A3dMesh, out_cloud: *mut *mut A3dCloud) -> A3dStatus {
    guard(|| {
        let json = cstr(spec_json, "spec_json")?;
        let spec: ToyRoomSpec = serde_json::from_str(json).map_err(|e| (A3dStatus::Parse, e.to_string()))?;
        let (mesh, cloud) = scene::build_toy_room(&spec).ffi()?;
        if out_mesh.is_null() {
            return Err(null("out_mesh"));
        }
        if !out_cloud.is_null() {
            out_cloud.write(Box::into_raw(Box::new(cloud_handle(&cloud))));
        }
        out_mesh.write(Box::into_raw(Box::new(A3dMesh(mesh))));
        Ok(())
    })
}

fn cloud_handle(c: &LabeledPointCloud) -> A3dCloud {
    A3dCloud {
        xyz: c.points().iter().flat_map(|p| [p.x, p.y, p.z]).collect(),
        labels: c.labels().to_vec(),
    }
}

#[no_mangle]
pub unsafe extern "C" fn a3d_mesh_free(mesh: *mut A3dMesh) {
    if !mesh.is_null() {
        drop(Box::from_raw(mesh));
    }
}

#[no_mangle]
pub unsafe extern "C" fn a3d_mesh_counts(mesh: *const A3dMesh, out_vertices: *mut usize, out_faces: *mut usize) -> A3dStatus {
    guard(|| {
        let m = &get(mesh, "mesh")?.0;
        out(out_vertices, m.vertices().len(), "out_vertices")?;
        out(out_faces, m.faces().len(), "out_faces")
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_mesh_bounds(mesh: *const A3dMesh, out_min: *mut [f64; 3], out_max: *mut [f64; 3]) -> A3dStatus {
    guard(|| {
        let b = scene::compute_bounds(&get(mesh, "mesh")?.0).ffi()?;
        out(out_min, b.min, "out_min")?;
        out(out_max, b.max, "out_max")
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_cloud_len(cloud: *const A3dCloud) -> usize {
    cloud.as_ref().map_or(0, |c| c.labels.len())
}

/// `3 * len` coordinates, x y z per point.
#[no_mangle]
pub unsafe extern "C" fn a3d_cloud_points(cloud: *const A3dCloud) -> *const f64 {
    cloud.as_ref().map_or(ptr::null(), |c| c.xyz.as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn a3d_cloud_labels(cloud: *const A3dCloud) -> *const u32 {
    cloud.as_ref().map_or(ptr::null(), |c| c.labels.as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn a3d_cloud_free(cloud: *mut A3dCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

/// Writes (u, v, depth); `out_in_front` is 0 when the point is behind the camera.
#[no_mangle]
pub unsafe extern "C" fn a3d_project(
    k: *const A3dIntrinsics,
    pose: *const A3dPose,
    point: *const [f64; 3],
    out_uvd: *mut [f64; 3],
    out_in_front: *mut u8,
) -> A3dStatus {
    guard(|| {
        let k = intrinsics(get(k, "k")?)?;
        let pose = camera_pose(get(pose, "pose")?)?;
        let p = Point3::from(*get(point, "point")?);
        match render::project(&k, &pose, &p) {
            Some(pd) => {
                out(out_uvd, [pd.u, pd.v, pd.depth], "out_uvd")?;
                out(out_in_front, 1, "out_in_front")
            }
            None => out(out_in_front, 0, "out_in_front"),
        }
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_unproject(k: *const A3dIntrinsics, pose: *const A3dPose, u: f64, v: f64, depth: f64, out_point: *mut [f64; 3]) -> A3dStatus {
    guard(|| {
        let k = intrinsics(get(k, "k")?)?;
        let pose = camera_pose(get(pose, "pose")?)?;
        let p = render::unproject(&k, &pose, u, v, depth).ffi()?;
        out(out_point, [p.x, p.y, p.z], "out_point")
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_render(mesh: *const A3dMesh, k: *const A3dIntrinsics, pose: *const A3dPose, out_view: *mut *mut A3dView) -> A3dStatus {
    guard(|| {
        let m = &get(mesh, "mesh")?.0;
        let k = intrinsics(get(k, "k")?)?;
        let pose = camera_pose(get(pose, "pose")?)?;
        let v = render::render_perspective(m, &k, &pose, &RenderOptions::default()).ffi()?;
        out(out_view, Box::into_raw(Box::new(A3dView(v))), "out_view")
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_view_size(view: *const A3dView, out_width: *mut u32, out_height: *mut u32) -> A3dStatus {
    guard(|| {
        let v = &get(view, "view")?.0;
        out(out_width, v.color.width(), "out_width")?;
        out(out_height, v.color.height(), "out_height")
    })
}

/// Row-major RGB bytes, `3 * width * height` long.
#[no_mangle]
pub unsafe extern "C" fn a3d_view_color(view: *const A3dView) -> *const u8 {
    view.as_ref().map_or(ptr::null(), |v| v.0.color.as_raw().as_ptr())
}

/// Row-major camera depth, `width * height` floats; background is +inf.
#[no_mangle]
pub unsafe extern "C" fn a3d_view_depth(view: *const A3dView) -> *const f32 {
    view.as_ref().map_or(ptr::null(), |v| v.0.depth.as_slice().as_ptr())
}

#[no_mangle]
pub unsafe extern "C" fn a3d_view_free(view: *mut A3dView) {
    if !view.is_null() {
        drop(Box::from_raw(view));
    }
}

#[no_mangle]
pub unsafe extern "C" fn a3d_make_grid(mesh: *const A3dMesh, density: u32, out_grid: *mut A3dGrid) -> A3dStatus {
    guard(|| {
        let b = scene::compute_bounds(&get(mesh, "mesh")?.0).ffi()?;
        let g = solp::make_grid(&b, density).ffi()?;
        out(
            out_grid,
            A3dGrid {
                density: g.density,
                bounds_xy: g.bounds_xy,
            },
            "out_grid",
        )
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_grid_to_world(grid: *const A3dGrid, i: i64, j: i64, out_x: *mut f64, out_y: *mut f64) -> A3dStatus {
    guard(|| {
        let (x, y) = grid_spec(get(grid, "grid")?)?.grid_to_world(i, j).ffi()?;
        out(out_x, x, "out_x")?;
        out(out_y, y, "out_y")
    })
}

/// Nearest lattice point, clamped into the grid.
#[no_mangle]
pub unsafe extern "C" fn a3d_world_to_grid(grid: *const A3dGrid, x: f64, y: f64, out_i: *mut i64, out_j: *mut i64) -> A3dStatus {
    guard(|| {
        let (i, j) = grid_spec(get(grid, "grid")?)?.world_to_grid(x, y);
        out(out_i, i, "out_i")?;
        out(out_j, j, "out_j")
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_pose_from_proposal(
    grid: *const A3dGrid,
    proposal: *const A3dProposal,
    eye_height: f64,
    pitch_down_deg: f64,
    floor_z: f64,
    out_pose: *mut A3dPose,
) -> A3dStatus {
    guard(|| {
        let spec = grid_spec(get(grid, "grid")?)?;
        let p = get(proposal, "proposal")?;
        let rig = CameraRigConfig::new(eye_height, pitch_down_deg, CameraIntrinsics::default()).ffi()?;
        let vp = ViewProposal::new(p.i, p.j, p.orientation.into());
        let pose = pose::pose_from_proposal(&vp, &spec, &rig, floor_z).ffi()?;
        out(out_pose, pose_out(&pose), "out_pose")
    })
}

/// Parses `(i, j) orientation` proposals. `out_count` always receives the
/// number found; when it exceeds `capacity` nothing is written to `out` and
/// the status is `BufferTooSmall`.
#[no_mangle]
pub unsafe extern "C" fn a3d_parse_proposals(text: *const c_char, out_buf: *mut A3dProposal, capacity: usize, out_count: *mut usize) -> A3dStatus {
    guard(|| {
        let text = cstr(text, "text")?;
        let props = pose::parse_view_proposals(text);
        out(out_count, props.len(), "out_count")?;
        if props.len() > capacity {
            return Err((A3dStatus::BufferTooSmall, format!("{} proposals, capacity {capacity}", props.len())));
        }
        if !props.is_empty() && out_buf.is_null() {
            return Err(null("out_buf"));
        }
        for (k, p) in props.iter().enumerate() {
            out_buf.add(k).write(A3dProposal {
                i: p.grid_point.0,
                j: p.grid_point.1,
                orientation: p.orientation.into(),
            });
        }
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_bleu(candidate: *const c_char, refs: *const *const c_char, n_refs: usize, max_n: u32, out_score: *mut f64) -> A3dStatus {
    guard(|| {
        let c = cstr(candidate, "candidate")?;
        let r = cstr_list(refs, n_refs, "refs")?;
        let s = metrics::bleu(c, &r, max_n as usize).ffi()?;
        out(out_score, s, "out_score")
    })
}

unsafe fn text_metric(candidate: *const c_char, refs: *const *const c_char, n_refs: usize, out_score: *mut f64, f: fn(&str, &[&str]) -> f64) -> A3dStatus {
    guard(|| {
        let c = cstr(candidate, "candidate")?;
        let r = cstr_list(refs, n_refs, "refs")?;
        if r.is_empty() {
            return Err(invalid("at least one reference is required"));
        }
        out(out_score, f(c, &r), "out_score")
    })
}

#[no_mangle]
pub unsafe extern "C" fn a3d_rouge_l(candidate: *const c_char, refs: *const *const c_char, n_refs: usize, out_score: *mut f64) -> A3dStatus {
    text_metric(candidate, refs, n_refs, out_score, |c, r| metrics::rouge_l(c, r))
}

#[no_mangle]
pub unsafe extern "C" fn a3d_meteor_lite(candidate: *const c_char, refs: *const *const c_char, n_refs: usize, out_score: *mut f64) -> A3dStatus {
    text_metric(candidate, refs, n_refs, out_score, |c, r| metrics::meteor_lite(c, r))
}

#[no_mangle]
pub unsafe extern "C" fn a3d_exact_match(candidate: *const c_char, refs: *const *const c_char, n_refs: usize, out_score: *mut f64) -> A3dStatus {
    text_metric(candidate, refs, n_refs, out_score, |c, r| metrics::exact_match(c, r))
}

/// CIDEr-D over `n_items` candidates. References are flattened: item k owns
/// the next `ref_counts[k]` entries of `refs`. Writes `n_items` scores.
#[no_mangle]
pub unsafe extern "C" fn a3d_cider_d(
    candidates: *const *const c_char,
    n_items: usize,
    refs: *const *const c_char,
    ref_counts: *const usize,
    out_scores: *mut f64,
) -> A3dStatus {
    guard(|| {
        let cands = cstr_list(candidates, n_items, "candidates")?;
        if n_items > 0 && (ref_counts.is_null() || out_scores.is_null()) {
            return Err(null("ref_counts or out_scores"));
        }
        let counts: Vec<usize> = (0..n_items).map(|k| *ref_counts.add(k)).collect();
        let flat = cstr_list(refs, counts.iter().sum(), "refs")?;
        let mut grouped = Vec::with_capacity(n_items);
        let mut at = 0;
        for c in counts {
            grouped.push(flat[at..at + c].to_vec());
            at += c;
        }
        let scores = metrics::cider_d(&cands, &grouped).ffi()?;
        for (k, s) in scores.into_iter().enumerate() {
            out_scores.add(k).write(s);
        }
        Ok(())
    })
}

/// Mean IoU over classes present in either labeling; labels equal to
/// `num_classes` mean unlabeled.
#[no_mangle]
pub unsafe extern "C" fn a3d_miou(pred: *const u32, gt: *const u32, len: usize, num_classes: usize, out_miou: *mut f64) -> A3dStatus {
    guard(|| {
        if len > 0 && (pred.is_null() || gt.is_null()) {
            return Err(null("pred or gt"));
        }
        let (p, g) = if len == 0 {
            (&[][..], &[][..])
        } else {
            (std::slice::from_raw_parts(pred, len), std::slice::from_raw_parts(gt, len))
        };
        let r = seg::miou(p, g, num_classes).ffi()?;
        out(out_miou, r.miou, "out_miou")
    })
}
