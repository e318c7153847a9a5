//! Scene geometry: colored triangle meshes, bounds, labelled point clouds,
//! PLY I/O, and the synthetic toy-room generator used as a desk-scale
//! stand-in for scanned rooms.

mod ply;
mod sample;
mod toy;

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use ply::{load_labeled_cloud, load_mesh, save_labeled_cloud, save_mesh, PlyEncoding};
pub use sample::{sample_surface_points, sample_surface_points_with_faces};
pub use toy::{build_toy_room, FurnitureItem, ToyRoomSpec, CEILING_COLOR, FLOOR_COLOR, WALL_COLOR};

/// Default height above the floor at which geometry is cut for top-down rendering.
pub const DEFAULT_CUT_HEIGHT: f64 = 2.2;

/// A colored triangle soup. World frame is z-up and right-handed.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    vertices: Vec<Point3<f64>>,
    colors: Vec<[u8; 3]>,
    faces: Vec<[u32; 3]>,
}

impl TriangleMesh {
    pub fn new(vertices: Vec<Point3<f64>>, colors: Vec<[u8; 3]>, faces: Vec<[u32; 3]>) -> Result<Self> {
        if colors.len() != vertices.len() {
            return Err(Error::InvalidMesh(format!(
                "{} colors for {} vertices",
                colors.len(),
                vertices.len()
            )));
        }
        if let Some(v) = vertices.iter().position(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not finite")));
        }
        let n = vertices.len() as u64;
        for (k, f) in faces.iter().enumerate() {
            if f.iter().any(|&i| i as u64 >= n) {
                return Err(Error::InvalidMesh(format!("face {k} indexes past {n} vertices")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidMesh(format!("face {k} is degenerate")));
            }
        }
        Ok(Self {
            vertices,
            colors,
            faces,
        })
    }

    pub fn vertices(&self) -> &[Point3<f64>] {
        &self.vertices
    }

    pub fn vertex_colors(&self) -> &[[u8; 3]] {
        &self.colors
    }

    pub fn faces(&self) -> &[[u32; 3]] {
        &self.faces
    }

    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    /// Corner positions of face `k`.
    pub fn triangle(&self, k: usize) -> [Point3<f64>; 3] {
        let f = self.faces[k];
        [
            self.vertices[f[0] as usize],
            self.vertices[f[1] as usize],
            self.vertices[f[2] as usize],
        ]
    }

    pub fn triangle_colors(&self, k: usize) -> [[u8; 3]; 3] {
        let f = self.faces[k];
        [
            self.colors[f[0] as usize],
            self.colors[f[1] as usize],
            self.colors[f[2] as usize],
        ]
    }

    /// Keeps the faces selected by `keep`, dropping vertices no longer referenced.
    /// Surviving vertices keep their relative order.
    pub fn filter_faces(&self, mut keep: impl FnMut(usize) -> bool) -> TriangleMesh {
        let faces: Vec<[u32; 3]> = (0..self.faces.len())
            .filter(|&k| keep(k))
            .map(|k| self.faces[k])
            .collect();
        let mut used = vec![false; self.vertices.len()];
        for f in &faces {
            for &i in f {
                used[i as usize] = true;
            }
        }
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::new();
        let mut colors = Vec::new();
        for (i, &u) in used.iter().enumerate() {
            if u {
                remap[i] = vertices.len() as u32;
                vertices.push(self.vertices[i]);
                colors.push(self.colors[i]);
            }
        }
        let faces = faces
            .into_iter()
            .map(|f| [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]])
            .collect();
        TriangleMesh {
            vertices,
            colors,
            faces,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneBounds {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SceneBounds {
    pub fn new(min: [f64; 3], max: [f64; 3]) -> Result<Self> {
        if (0..3).any(|a| !(min[a] <= max[a])) {
            return Err(Error::InvalidSpec(format!("bounds min {min:?} exceeds max {max:?}")));
        }
        Ok(Self { min, max })
    }

    pub fn extent(&self) -> [f64; 3] {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    /// Whether the xy footprint has positive area, as needed to anchor a grid.
    pub fn has_planar_extent(&self) -> bool {
        let e = self.extent();
        e[0] > 0.0 && e[1] > 0.0
    }

    pub fn contains(&self, p: &Point3<f64>, tol: f64) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] - tol && p[a] <= self.max[a] + tol)
    }
}

/// Exact componentwise extrema over all vertices.
pub fn compute_bounds(mesh: &TriangleMesh) -> Result<SceneBounds> {
    let mut it = mesh.vertices.iter();
    let first = it.next().ok_or(Error::EmptyScene)?;
    let mut min = [first.x, first.y, first.z];
    let mut max = min;
    for v in it {
        for a in 0..3 {
            min[a] = min[a].min(v[a]);
            max[a] = max[a].max(v[a]);
        }
    }
    Ok(SceneBounds { min, max })
}

/// Removes every face with a vertex at or above `floor + cut_height`,
/// where the floor is the lowest vertex z.
pub fn strip_ceiling(mesh: &TriangleMesh, cut_height: f64) -> Result<TriangleMesh> {
    if !(cut_height > 0.0) {
        return Err(Error::InvalidSpec(format!("cut height must be positive, got {cut_height}")));
    }
    let bounds = compute_bounds(mesh)?;
    let threshold = bounds.min[2] + cut_height;
    let out = mesh.filter_faces(|k| mesh.triangle(k).iter().all(|v| v.z < threshold));
    if out.is_empty() {
        return Err(Error::EmptyScene);
    }
    Ok(out)
}

/// Label value marking a point with no class.
pub fn unlabeled(num_classes: usize) -> u32 {
    num_classes as u32
}

/// Points with per-point class ids. Unlabelled points carry `class_names.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPointCloud {
    points: Vec<Point3<f64>>,
    labels: Vec<u32>,
    class_names: Vec<String>,
}

impl LabeledPointCloud {
    pub fn new(points: Vec<Point3<f64>>, labels: Vec<u32>, class_names: Vec<String>) -> Result<Self> {
        if points.len() != labels.len() {
            return Err(Error::LengthMismatch(points.len(), labels.len()));
        }
        let c = class_names.len() as u32;
        if let Some(bad) = labels.iter().find(|&&l| l > c) {
            return Err(Error::InvalidSpec(format!("label {bad} exceeds {c} classes")));
        }
        Ok(Self {
            points,
            labels,
            class_names,
        })
    }

    pub fn points(&self) -> &[Point3<f64>] {
        &self.points
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn unlabeled(&self) -> u32 {
        unlabeled(self.class_names.len())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mesh(verts: &[[f64; 3]], faces: &[[u32; 3]]) -> TriangleMesh {
        TriangleMesh::new(
            verts.iter().map(|v| Point3::new(v[0], v[1], v[2])).collect(),
            vec![[10, 20, 30]; verts.len()],
            faces.to_vec(),
        )
        .unwrap()
    }

    #[test]
    fn bounds_of_two_vertices() {
        let m = mesh(&[[0.0, 0.0, 0.0], [1.0, 2.0, 3.0]], &[]);
        let b = compute_bounds(&m).unwrap();
        assert_eq!(b.min, [0.0, 0.0, 0.0]);
        assert_eq!(b.max, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn bounds_of_single_vertex() {
        let m = mesh(&[[5.0, 5.0, 5.0]], &[]);
        let b = compute_bounds(&m).unwrap();
        assert_eq!(b.min, b.max);
        assert_eq!(b.min, [5.0, 5.0, 5.0]);
    }

    #[test]
    fn empty_mesh_has_no_bounds() {
        let m = mesh(&[], &[]);
        assert!(matches!(compute_bounds(&m), Err(Error::EmptyScene)));
    }

    #[test]
    fn mesh_rejects_bad_faces() {
        let v = vec![Point3::origin(); 3];
        let c = vec![[0; 3]; 3];
        assert!(TriangleMesh::new(v.clone(), c.clone(), vec![[0, 1, 99]]).is_err());
        assert!(TriangleMesh::new(v.clone(), c.clone(), vec![[0, 1, 1]]).is_err());
        assert!(TriangleMesh::new(v.clone(), c[..2].to_vec(), vec![[0, 1, 2]]).is_err());
        let mut nan = v;
        nan[1].x = f64::NAN;
        assert!(TriangleMesh::new(nan, c, vec![[0, 1, 2]]).is_err());
    }

    #[test]
    fn strip_keeps_everything_below_a_tall_cut() {
        let m = mesh(
            &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 3.0]],
            &[[0, 1, 2], [0, 1, 3]],
        );
        let s = strip_ceiling(&m, 10.0).unwrap();
        assert_eq!(s.faces().len(), 2);
        let s = strip_ceiling(&m, 1.0).unwrap();
        assert_eq!(s.faces().len(), 1);
        assert_eq!(s.vertices().len(), 3);
        assert!(matches!(strip_ceiling(&m, 0.0), Err(Error::InvalidSpec(_))));
    }

    #[test]
    fn strip_everything_is_empty_scene() {
        let m = mesh(&[[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]], &[[0, 1, 2]]);
        assert!(matches!(strip_ceiling(&m, 0.5), Err(Error::EmptyScene)));
    }

    #[test]
    fn labeled_cloud_checks_labels() {
        let p = vec![Point3::origin(); 2];
        assert!(LabeledPointCloud::new(p.clone(), vec![0, 2], vec!["a".into(), "b".into()]).is_ok());
        assert!(LabeledPointCloud::new(p.clone(), vec![0, 3], vec!["a".into(), "b".into()]).is_err());
        assert!(LabeledPointCloud::new(p, vec![0], vec!["a".into()]).is_err());
    }
}
