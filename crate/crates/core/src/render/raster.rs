use image::{Rgb, RgbImage};
use nalgebra::Vector3;

use super::{BevImage, CameraIntrinsics, CameraPose, DepthImage, RenderOptions, ViewBundle};
use crate::scene::{SceneBounds, TriangleMesh};
use crate::{Error, Result};

/// Screen-space vertex. Pixel centers sit at integer coordinates.
#[derive(Debug, Clone, Copy)]
struct ScreenVertex {
    x: f64,
    y: f64,
    /// Reciprocal of camera depth for perspective, 1 for orthographic.
    inv_w: f64,
    /// Value compared in the depth test (smaller wins).
    key: f64,
    color: [f64; 3],
}

fn edge(a: &ScreenVertex, b: &ScreenVertex, px: f64, py: f64) -> f64 {
    (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x)
}

/// Top-left rule for positively oriented triangles in y-down screen space.
fn is_top_left(a: &ScreenVertex, b: &ScreenVertex) -> bool {
    let (dx, dy) = (b.x - a.x, b.y - a.y);
    (dy == 0.0 && dx > 0.0) || dy < 0.0
}

struct Target<'a> {
    width: u32,
    height: u32,
    keys: &'a mut [f64],
    colors: &'a mut [[u8; 3]],
}

/// Rasterizes one triangle with a strict depth test. With `perspective`,
/// depth keys and colors are interpolated perspective-correctly, and the
/// key written is `1 / inv_w` (camera depth).
fn rasterize(tri: [ScreenVertex; 3], perspective: bool, key_range: (f64, f64), t: &mut Target) {
    let [v0, mut v1, mut v2] = tri;
    let mut area = edge(&v0, &v1, v2.x, v2.y);
    if !area.is_finite() || area == 0.0 {
        return;
    }
    if area < 0.0 {
        std::mem::swap(&mut v1, &mut v2);
        area = -area;
    }
    let min_x = v0.x.min(v1.x).min(v2.x).ceil().max(0.0);
    let max_x = v0.x.max(v1.x).max(v2.x).floor().min(t.width as f64 - 1.0);
    let min_y = v0.y.min(v1.y).min(v2.y).ceil().max(0.0);
    let max_y = v0.y.max(v1.y).max(v2.y).floor().min(t.height as f64 - 1.0);
    if min_x > max_x || min_y > max_y {
        return;
    }
    let tl = [is_top_left(&v1, &v2), is_top_left(&v2, &v0), is_top_left(&v0, &v1)];
    let inside = |w: f64, top_left: bool| w > 0.0 || (w == 0.0 && top_left);

    for py in min_y as u32..=max_y as u32 {
        let fy = py as f64;
        for px in min_x as u32..=max_x as u32 {
            let fx = px as f64;
            let w0 = edge(&v1, &v2, fx, fy);
            let w1 = edge(&v2, &v0, fx, fy);
            let w2 = edge(&v0, &v1, fx, fy);
            if !(inside(w0, tl[0]) && inside(w1, tl[1]) && inside(w2, tl[2])) {
                continue;
            }
            let (l0, l1, l2) = (w0 / area, w1 / area, w2 / area);
            let (key, color) = if perspective {
                let iw = l0 * v0.inv_w + l1 * v1.inv_w + l2 * v2.inv_w;
                let c = |k: usize| (l0 * v0.color[k] * v0.inv_w + l1 * v1.color[k] * v1.inv_w + l2 * v2.color[k] * v2.inv_w) / iw;
                (1.0 / iw, [c(0), c(1), c(2)])
            } else {
                let c = |k: usize| l0 * v0.color[k] + l1 * v1.color[k] + l2 * v2.color[k];
                (l0 * v0.key + l1 * v1.key + l2 * v2.key, [c(0), c(1), c(2)])
            };
            if !(key > key_range.0 && key < key_range.1) {
                continue;
            }
            let idx = (py * t.width + px) as usize;
            if key < t.keys[idx] {
                t.keys[idx] = key;
                t.colors[idx] = color.map(|c| c.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
}

#[derive(Clone, Copy)]
struct CamVertex {
    p: Vector3<f64>,
    color: [f64; 3],
}

/// Sutherland-Hodgman clip of a camera-space polygon against z >= near.
fn clip_near(poly: &[CamVertex], near: f64) -> Vec<CamVertex> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let (ain, bin) = (a.p.z >= near, b.p.z >= near);
        if ain {
            out.push(a);
        }
        if ain != bin {
            let s = (near - a.p.z) / (b.p.z - a.p.z);
            let mut p = a.p + (b.p - a.p) * s;
            p.z = near;
            let color = [0, 1, 2].map(|k| a.color[k] + (b.color[k] - a.color[k]) * s);
            out.push(CamVertex { p, color });
        }
    }
    out
}

fn rgb_f64(c: [u8; 3]) -> [f64; 3] {
    c.map(|x| x as f64)
}

/// Z-buffered perspective render of `mesh`. No culling, no shading, no
/// multisampling. Background pixels get `clear_color` and infinite depth.
pub fn render_perspective(mesh: &TriangleMesh, k: &CameraIntrinsics, pose: &CameraPose, opts: &RenderOptions) -> Result<ViewBundle> {
    if mesh.is_empty() {
        return Err(Error::EmptyScene);
    }
    k.validate()?;
    if !(opts.near > 0.0 && opts.near < opts.far) {
        return Err(Error::InvalidCamera(format!("need 0 < near < far, got {} / {}", opts.near, opts.far)));
    }
    let n = (k.width * k.height) as usize;
    let mut keys = vec![f64::INFINITY; n];
    let mut colors = vec![opts.clear_color; n];
    let mut target = Target {
        width: k.width,
        height: k.height,
        keys: &mut keys,
        colors: &mut colors,
    };
    let cam: Vec<Vector3<f64>> = mesh.vertices().iter().map(|v| pose.world_to_camera(v)).collect();
    for (fi, f) in mesh.faces().iter().enumerate() {
        let tc = mesh.triangle_colors(fi);
        let poly: Vec<CamVertex> = (0..3)
            .map(|j| CamVertex {
                p: cam[f[j] as usize],
                color: rgb_f64(tc[j]),
            })
            .collect();
        if poly.iter().all(|v| v.p.z < opts.near) {
            continue;
        }
        let clipped = if poly.iter().all(|v| v.p.z >= opts.near) {
            poly
        } else {
            clip_near(&poly, opts.near)
        };
        if clipped.len() < 3 {
            continue;
        }
        let screen: Vec<ScreenVertex> = clipped
            .iter()
            .map(|v| ScreenVertex {
                x: k.fx * v.p.x / v.p.z + k.cx,
                y: k.fy * v.p.y / v.p.z + k.cy,
                inv_w: 1.0 / v.p.z,
                key: v.p.z,
                color: v.color,
            })
            .collect();
        for t in 1..screen.len() - 1 {
            rasterize([screen[0], screen[t], screen[t + 1]], true, (opts.near, opts.far), &mut target);
        }
    }
    let mut color = RgbImage::new(k.width, k.height);
    for (i, c) in colors.iter().enumerate() {
        color.put_pixel(i as u32 % k.width, i as u32 / k.width, Rgb(*c));
    }
    let depth = DepthImage::from_raw(k.width, k.height, keys.iter().map(|&d| d as f32).collect())?;
    Ok(ViewBundle {
        color,
        depth,
        pose: *pose,
        intrinsics: *k,
    })
}

/// Orthographic top-down render: image +x is world +x, image up is world
/// +y, and the highest surface wins in every column. The image covers the
/// xy extent of `bounds` plus `margin_m` on every side; background is black.
pub fn render_bev(mesh: &TriangleMesh, bounds: &SceneBounds, px_per_meter: f64, margin_m: f64) -> Result<BevImage> {
    if mesh.is_empty() {
        return Err(Error::EmptyScene);
    }
    if !bounds.has_planar_extent() {
        return Err(Error::InvalidSpec("bounds have no xy extent".into()));
    }
    if !(px_per_meter > 0.0) || !(margin_m >= 0.0) {
        return Err(Error::InvalidSpec(format!("bad BEV scale {px_per_meter} / margin {margin_m}")));
    }
    let e = bounds.extent();
    let dim = |len: f64| ((len + 2.0 * margin_m) * px_per_meter - 1e-9).ceil().max(1.0) as u32;
    let (width, height) = (dim(e[0]), dim(e[1]));
    let half = 0.5 / px_per_meter;
    let origin = [bounds.min[0] - margin_m + half, bounds.min[1] - margin_m + half];

    let n = (width * height) as usize;
    let mut keys = vec![f64::INFINITY; n];
    let mut colors = vec![[0u8; 3]; n];
    let mut target = Target {
        width,
        height,
        keys: &mut keys,
        colors: &mut colors,
    };
    for fi in 0..mesh.faces().len() {
        let tri = mesh.triangle(fi);
        let tc = mesh.triangle_colors(fi);
        let sv = [0, 1, 2].map(|j| ScreenVertex {
            x: (tri[j].x - origin[0]) * px_per_meter,
            y: (height - 1) as f64 - (tri[j].y - origin[1]) * px_per_meter,
            inv_w: 1.0,
            key: -tri[j].z,
            color: rgb_f64(tc[j]),
        });
        rasterize(sv, false, (f64::NEG_INFINITY, f64::INFINITY), &mut target);
    }
    let mut color = RgbImage::new(width, height);
    for (i, c) in colors.iter().enumerate() {
        color.put_pixel(i as u32 % width, i as u32 / width, Rgb(*c));
    }
    Ok(BevImage {
        color,
        px_per_meter,
        origin_world_xy: origin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::render::project;
    use nalgebra::{Matrix3, Point3};

    fn tri_mesh(tris: &[([[f64; 3]; 3], [u8; 3])]) -> TriangleMesh {
        let mut v = Vec::new();
        let mut c = Vec::new();
        let mut f = Vec::new();
        for (t, col) in tris {
            let b = v.len() as u32;
            for p in t {
                v.push(Point3::new(p[0], p[1], p[2]));
                c.push(*col);
            }
            f.push([b, b + 1, b + 2]);
        }
        TriangleMesh::new(v, c, f).unwrap()
    }

    fn k64() -> CameraIntrinsics {
        CameraIntrinsics::new(32.0, 32.0, 32.0, 32.0, 64, 64).unwrap()
    }

    #[test]
    fn center_pixel_color_and_depth() {
        // Tilted plane through (0, 0, 2): z = 2 + 0.25 x.
        let m = tri_mesh(&[([[-3.0, -3.0, 1.25], [3.0, -3.0, 2.75], [0.0, 4.0, 2.0]], [255, 0, 0])]);
        let v = render_perspective(&m, &k64(), &CameraPose::identity(), &RenderOptions::default()).unwrap();
        assert_eq!(v.color.get_pixel(32, 32).0, [255, 0, 0]);
        assert!((v.depth.get(32, 32) as f64 - 2.0).abs() < 1e-3);
    }

    #[test]
    fn facing_away_is_all_background() {
        let m = tri_mesh(&[([[-1.0, -1.0, -2.0], [1.0, -1.0, -2.0], [0.0, 1.0, -2.0]], [255, 0, 0])]);
        let v = render_perspective(&m, &k64(), &CameraPose::identity(), &RenderOptions::default()).unwrap();
        assert!(v.color.pixels().all(|p| p.0 == [0, 0, 0]));
        assert!(v.depth.as_slice().iter().all(|d| d.is_infinite()));
    }

    #[test]
    fn nearer_triangle_wins() {
        let far = ([[-5.0, -5.0, 2.0], [5.0, -5.0, 2.0], [0.0, 5.0, 2.0]], [0, 0, 255]);
        let near = ([[-5.0, -5.0, 1.0], [5.0, -5.0, 1.0], [0.0, 5.0, 1.0]], [0, 255, 0]);
        for order in [[far, near], [near, far]] {
            let m = tri_mesh(&order);
            let v = render_perspective(&m, &k64(), &CameraPose::identity(), &RenderOptions::default()).unwrap();
            assert_eq!(v.color.get_pixel(32, 32).0, [0, 255, 0]);
            assert!((v.depth.get(32, 32) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn shared_edge_is_not_double_covered() {
        // Two triangles forming a quad; count how often each pixel is hit.
        let a = [[-1.0, -1.0, 1.0], [1.0, -1.0, 1.0], [1.0, 1.0, 1.0]];
        let b = [[-1.0, -1.0, 1.0], [1.0, 1.0, 1.0], [-1.0, 1.0, 1.0]];
        let k = k64();
        let mut hits = vec![0u32; 64 * 64];
        for t in [a, b] {
            let m = tri_mesh(&[(t, [9, 9, 9])]);
            let v = render_perspective(&m, &k, &CameraPose::identity(), &RenderOptions::default()).unwrap();
            for (i, d) in v.depth.as_slice().iter().enumerate() {
                if d.is_finite() {
                    hits[i] += 1;
                }
            }
        }
        assert!(hits.iter().all(|&h| h <= 1));
        // The quad spans pixel centers 0..=64 exclusive of the right/bottom edge.
        assert_eq!(hits.iter().filter(|&&h| h == 1).count(), 64 * 64);
    }

    #[test]
    fn near_plane_clipping_keeps_visible_part() {
        // Floor plane passing under and behind the camera.
        let m = tri_mesh(&[([[-10.0, 1.0, -10.0], [10.0, 1.0, -10.0], [0.0, 1.0, 30.0]], [50, 60, 70])]);
        let v = render_perspective(&m, &k64(), &CameraPose::identity(), &RenderOptions::default()).unwrap();
        // Lower image half sees the floor (camera y points down).
        let p = project(&k64(), &CameraPose::identity(), &Point3::new(0.0, 1.0, 2.0)).unwrap();
        let d = v.depth.get(p.u.round() as u32, p.v.round() as u32);
        assert!((d - 2.0).abs() < 1e-3, "{d}");
        assert!(v.depth.get(32, 10).is_infinite());
    }

    #[test]
    fn deterministic_render() {
        let m = tri_mesh(&[([[-1.0, -1.0, 3.0], [1.0, -0.5, 2.0], [0.0, 1.0, 2.5]], [1, 200, 3])]);
        let r = nalgebra::Rotation3::from_euler_angles(0.05, 0.1, 0.0);
        let pose = CameraPose::new(*r.matrix(), Point3::new(0.1, 0.0, 0.0)).unwrap();
        let a = render_perspective(&m, &k64(), &pose, &RenderOptions::default()).unwrap();
        let b = render_perspective(&m, &k64(), &pose, &RenderOptions::default()).unwrap();
        assert_eq!(a.color, b.color);
        assert_eq!(a.depth, b.depth);
        let _ = Matrix3::<f64>::identity();
    }

    fn quad(lo: [f64; 2], hi: [f64; 2], z: f64, c: [u8; 3]) -> Vec<([[f64; 3]; 3], [u8; 3])> {
        vec![
            ([[lo[0], lo[1], z], [hi[0], lo[1], z], [hi[0], hi[1], z]], c),
            ([[lo[0], lo[1], z], [hi[0], hi[1], z], [lo[0], hi[1], z]], c),
        ]
    }

    #[test]
    fn bev_red_floor_fills_image() {
        let m = tri_mesh(&quad([0.0, 0.0], [1.0, 1.0], 0.0, [255, 0, 0]));
        let b = SceneBounds::new([0.0, 0.0, 0.0], [1.0, 1.0, 0.0]).unwrap();
        let bev = render_bev(&m, &b, 100.0, 0.0).unwrap();
        assert_eq!(bev.color.dimensions(), (100, 100));
        assert_eq!(bev.color.pixels().filter(|p| p.0 == [255, 0, 0]).count(), 100 * 100);
    }

    #[test]
    fn bev_highest_surface_wins() {
        let mut tris = quad([0.0, 0.0], [2.0, 2.0], 0.0, [255, 0, 0]);
        tris.extend(quad([0.5, 0.5], [1.0, 1.0], 0.8, [0, 0, 255]));
        let m = tri_mesh(&tris);
        let b = SceneBounds::new([0.0, 0.0, 0.0], [2.0, 2.0, 0.8]).unwrap();
        let bev = render_bev(&m, &b, 50.0, 0.0).unwrap();
        let (c, r) = bev.world_to_pixel(0.75, 0.75);
        assert_eq!(bev.color.get_pixel(c.round() as u32, r.round() as u32).0, [0, 0, 255]);
        let (c, r) = bev.world_to_pixel(1.5, 1.5);
        assert_eq!(bev.color.get_pixel(c.round() as u32, r.round() as u32).0, [255, 0, 0]);
    }

    #[test]
    fn bev_mapping_round_trip() {
        let m = tri_mesh(&quad([0.0, 0.0], [6.0, 4.0], 0.0, [1, 2, 3]));
        let b = SceneBounds::new([0.0, 0.0, 0.0], [6.0, 4.0, 0.0]).unwrap();
        let bev = render_bev(&m, &b, 37.0, 0.5).unwrap();
        for &(x, y) in &[(0.0, 0.0), (6.0, 4.0), (1.234, 3.21), (5.5, 0.1)] {
            let (c, r) = bev.world_to_pixel(x, y);
            let (x2, y2) = bev.pixel_to_world(c.round(), r.round());
            let half = 0.5 / bev.px_per_meter;
            assert!((x - x2).abs() <= half + 1e-12 && (y - y2).abs() <= half + 1e-12);
        }
    }
}
