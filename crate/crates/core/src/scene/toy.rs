use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::sample::point_in_triangle;
use super::{LabeledPointCloud, TriangleMesh};
use crate::{Error, Result};

pub const FLOOR_COLOR: [u8; 3] = [180, 160, 120];
pub const WALL_COLOR: [u8; 3] = [230, 230, 230];
pub const CEILING_COLOR: [u8; 3] = [200, 200, 255];

/// Walls are built in two stacked bands split at this height so that a
/// ceiling cut above it keeps the lower band visible from above.
const WALL_BAND_SPLIT: f64 = 2.0;
const PLACEMENT_CLEARANCE: f64 = 0.3;
const PLACEMENT_TRIES: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FurnitureItem {
    pub class_name: String,
    /// Box size along x, y, z in meters.
    pub size: [f64; 3],
    pub color: [u8; 3],
    /// Footprint center; drawn from the seed when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyRoomSpec {
    /// Room size along x, y, z in meters.
    pub extent: [f64; 3],
    pub furniture: Vec<FurnitureItem>,
    pub seed: u64,
    #[serde(default = "default_wall_thickness")]
    pub wall_thickness: f64,
    #[serde(default = "default_gt_points")]
    pub gt_points: usize,
}

fn default_wall_thickness() -> f64 {
    0.1
}

fn default_gt_points() -> usize {
    20_000
}

impl ToyRoomSpec {
    /// A 6 x 4 x 2.5 m room with a table and two chairs.
    pub fn demo(seed: u64) -> Self {
        let item = |name: &str, size: [f64; 3], color: [u8; 3]| FurnitureItem {
            class_name: name.into(),
            size,
            color,
            center: None,
        };
        Self {
            extent: [6.0, 4.0, 2.5],
            furniture: vec![
                item("table", [1.2, 0.8, 0.75], [140, 80, 30]),
                item("chair", [0.5, 0.5, 0.9], [40, 90, 200]),
                item("chair", [0.5, 0.5, 0.9], [40, 90, 200]),
            ],
            seed,
            wall_thickness: default_wall_thickness(),
            gt_points: default_gt_points(),
        }
    }

    /// `floor`, `wall`, then furniture classes in order of first appearance.
    pub fn class_names(&self) -> Vec<String> {
        let mut names = vec!["floor".to_string(), "wall".to_string()];
        for f in &self.furniture {
            if !names.contains(&f.class_name) {
                names.push(f.class_name.clone());
            }
        }
        names
    }

    /// Every surface color in the generated mesh with the class it belongs
    /// to; the ceiling has none.
    pub fn palette(&self) -> Vec<([u8; 3], Option<u32>)> {
        let names = self.class_names();
        let mut out = vec![(FLOOR_COLOR, Some(0)), (WALL_COLOR, Some(1)), (CEILING_COLOR, None)];
        for f in &self.furniture {
            let id = names.iter().position(|n| *n == f.class_name).map(|i| i as u32);
            if !out.iter().any(|(c, _)| *c == f.color) {
                out.push((f.color, id));
            }
        }
        out
    }

    fn validate(&self) -> Result<()> {
        let [x, y, z] = self.extent;
        if !(x > 0.0 && y > 0.0 && z > 0.0) || !x.is_finite() || !y.is_finite() || !z.is_finite() {
            return Err(Error::InvalidSpec(format!("room extent {:?} must be positive", self.extent)));
        }
        let t = self.wall_thickness;
        if !(t > 0.0) || 2.0 * t >= x.min(y) {
            return Err(Error::InvalidSpec(format!("wall thickness {t} does not fit the room")));
        }
        if self.furniture.is_empty() {
            return Err(Error::InvalidSpec("room needs at least one furniture item".into()));
        }
        if self.gt_points == 0 {
            return Err(Error::InvalidSpec("gt_points must be positive".into()));
        }
        for (i, f) in self.furniture.iter().enumerate() {
            if f.class_name.trim().is_empty() || f.class_name == "floor" || f.class_name == "wall" {
                return Err(Error::InvalidSpec(format!("furniture[{i}] has reserved or empty class name")));
            }
            if f.size.iter().any(|s| !(*s > 0.0)) || f.size[2] > z {
                return Err(Error::InvalidSpec(format!("furniture[{i}] size {:?} is invalid", f.size)));
            }
            if let Some([cx, cy]) = f.center {
                let (hx, hy) = (f.size[0] / 2.0, f.size[1] / 2.0);
                if cx - hx < t || cx + hx > x - t || cy - hy < t || cy + hy > y - t {
                    return Err(Error::InvalidSpec(format!("furniture[{i}] extends past the walls")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Default)]
struct MeshBuilder {
    vertices: Vec<Point3<f64>>,
    colors: Vec<[u8; 3]>,
    faces: Vec<[u32; 3]>,
}

impl MeshBuilder {
    fn quad(&mut self, corners: [Point3<f64>; 4], color: [u8; 3]) {
        let base = self.vertices.len() as u32;
        self.vertices.extend_from_slice(&corners);
        self.colors.extend_from_slice(&[color; 4]);
        self.faces.push([base, base + 1, base + 2]);
        self.faces.push([base, base + 2, base + 3]);
    }

    fn cuboid(&mut self, lo: [f64; 3], hi: [f64; 3], color: [u8; 3]) {
        let base = self.vertices.len() as u32;
        for k in 0..8u32 {
            let x = if k & 1 == 0 { lo[0] } else { hi[0] };
            let y = if k & 2 == 0 { lo[1] } else { hi[1] };
            let z = if k & 4 == 0 { lo[2] } else { hi[2] };
            self.vertices.push(Point3::new(x, y, z));
            self.colors.push(color);
        }
        const QUADS: [[u32; 4]; 6] = [
            [0, 2, 3, 1], // bottom
            [4, 5, 7, 6], // top
            [0, 1, 5, 4], // -y
            [2, 6, 7, 3], // +y
            [0, 4, 6, 2], // -x
            [1, 3, 7, 5], // +x
        ];
        for q in QUADS {
            self.faces.push([base + q[0], base + q[1], base + q[2]]);
            self.faces.push([base + q[0], base + q[2], base + q[3]]);
        }
    }
}

fn p(x: f64, y: f64, z: f64) -> Point3<f64> {
    Point3::new(x, y, z)
}

/// The five exposed faces of a box standing on the floor, as triangles.
fn exposed_box_faces(lo: [f64; 3], hi: [f64; 3]) -> Vec<[Point3<f64>; 3]> {
    let [x0, y0, z0] = lo;
    let [x1, y1, z1] = hi;
    let quads = [
        [p(x0, y0, z1), p(x1, y0, z1), p(x1, y1, z1), p(x0, y1, z1)],
        [p(x0, y0, z0), p(x1, y0, z0), p(x1, y0, z1), p(x0, y0, z1)],
        [p(x0, y1, z0), p(x1, y1, z0), p(x1, y1, z1), p(x0, y1, z1)],
        [p(x0, y0, z0), p(x0, y1, z0), p(x0, y1, z1), p(x0, y0, z1)],
        [p(x1, y0, z0), p(x1, y1, z0), p(x1, y1, z1), p(x1, y0, z1)],
    ];
    quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect()
}

fn place_furniture(spec: &ToyRoomSpec, rng: &mut ChaCha8Rng) -> Result<Vec<([f64; 3], [f64; 3])>> {
    let [x, y, _] = spec.extent;
    let t = spec.wall_thickness;
    let mut placed: Vec<([f64; 3], [f64; 3])> = Vec::new();
    let overlaps = |lo: &[f64; 3], hi: &[f64; 3], placed: &[([f64; 3], [f64; 3])], gap: f64| {
        placed.iter().any(|(a, b)| {
            lo[0] < b[0] + gap && hi[0] + gap > a[0] && lo[1] < b[1] + gap && hi[1] + gap > a[1]
        })
    };
    for (i, f) in spec.furniture.iter().enumerate() {
        let (hx, hy) = (f.size[0] / 2.0, f.size[1] / 2.0);
        let footprint = |cx: f64, cy: f64| ([cx - hx, cy - hy, 0.0], [cx + hx, cy + hy, f.size[2]]);
        let (lo, hi) = match f.center {
            Some([cx, cy]) => footprint(cx, cy),
            None => {
                let margin = t + PLACEMENT_CLEARANCE;
                let (ax, bx) = (margin + hx, x - margin - hx);
                let (ay, by) = (margin + hy, y - margin - hy);
                if ax > bx || ay > by {
                    return Err(Error::InvalidSpec(format!("furniture[{i}] does not fit in the room")));
                }
                let mut found = None;
                for _ in 0..PLACEMENT_TRIES {
                    let cx = ax + rng.random::<f64>() * (bx - ax);
                    let cy = ay + rng.random::<f64>() * (by - ay);
                    let (lo, hi) = footprint(cx, cy);
                    if !overlaps(&lo, &hi, &placed, PLACEMENT_CLEARANCE) {
                        found = Some((lo, hi));
                        break;
                    }
                }
                found.ok_or_else(|| Error::InvalidSpec(format!("no free spot for furniture[{i}]")))?
            }
        };
        placed.push((lo, hi));
    }
    Ok(placed)
}

/// Builds a closed box room with furniture and a labelled surface sampling.
///
/// Mesh: floor quad, two-band walls of `wall_thickness` inside the extent,
/// a ceiling quad at the room height, and one box per furniture item.
/// Ground truth: points on the floor (excluding furniture footprints),
/// inner wall faces, and the five exposed faces of each box.
pub fn build_toy_room(spec: &ToyRoomSpec) -> Result<(TriangleMesh, LabeledPointCloud)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let boxes = place_furniture(spec, &mut rng)?;
    let [x, y, z] = spec.extent;
    let t = spec.wall_thickness;

    let mut mb = MeshBuilder::default();
    mb.quad([p(0.0, 0.0, 0.0), p(x, 0.0, 0.0), p(x, y, 0.0), p(0.0, y, 0.0)], FLOOR_COLOR);
    let mut bands = vec![(0.0, z.min(WALL_BAND_SPLIT))];
    if z > WALL_BAND_SPLIT {
        bands.push((WALL_BAND_SPLIT, z));
    }
    for &(z0, z1) in &bands {
        mb.cuboid([0.0, 0.0, z0], [t, y, z1], WALL_COLOR);
        mb.cuboid([x - t, 0.0, z0], [x, y, z1], WALL_COLOR);
        mb.cuboid([t, 0.0, z0], [x - t, t, z1], WALL_COLOR);
        mb.cuboid([t, y - t, z0], [x - t, y, z1], WALL_COLOR);
    }
    mb.quad([p(0.0, 0.0, z), p(x, 0.0, z), p(x, y, z), p(0.0, y, z)], CEILING_COLOR);
    for (f, (lo, hi)) in spec.furniture.iter().zip(&boxes) {
        mb.cuboid(*lo, *hi, f.color);
    }
    let mesh = TriangleMesh::new(mb.vertices, mb.colors, mb.faces)?;

    let names = spec.class_names();
    let mut surfaces: Vec<([Point3<f64>; 3], u32)> = Vec::new();
    let add_quad = |q: [Point3<f64>; 4], label: u32, out: &mut Vec<([Point3<f64>; 3], u32)>| {
        out.push(([q[0], q[1], q[2]], label));
        out.push(([q[0], q[2], q[3]], label));
    };
    add_quad([p(t, t, 0.0), p(x - t, t, 0.0), p(x - t, y - t, 0.0), p(t, y - t, 0.0)], 0, &mut surfaces);
    add_quad([p(t, t, 0.0), p(t, y - t, 0.0), p(t, y - t, z), p(t, t, z)], 1, &mut surfaces);
    add_quad([p(x - t, t, 0.0), p(x - t, y - t, 0.0), p(x - t, y - t, z), p(x - t, t, z)], 1, &mut surfaces);
    add_quad([p(t, t, 0.0), p(x - t, t, 0.0), p(x - t, t, z), p(t, t, z)], 1, &mut surfaces);
    add_quad([p(t, y - t, 0.0), p(x - t, y - t, 0.0), p(x - t, y - t, z), p(t, y - t, z)], 1, &mut surfaces);
    for (f, (lo, hi)) in spec.furniture.iter().zip(&boxes) {
        let label = names.iter().position(|n| *n == f.class_name).unwrap() as u32;
        surfaces.extend(exposed_box_faces(*lo, *hi).into_iter().map(|tri| (tri, label)));
    }

    let mut cumulative = Vec::with_capacity(surfaces.len());
    let mut total = 0.0;
    for (tri, _) in &surfaces {
        total += 0.5 * (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).norm();
        cumulative.push(total);
    }
    let under_furniture = |q: &Point3<f64>| {
        boxes
            .iter()
            .any(|(lo, hi)| q.x >= lo[0] && q.x <= hi[0] && q.y >= lo[1] && q.y <= hi[1])
    };
    let mut points = Vec::with_capacity(spec.gt_points);
    let mut labels = Vec::with_capacity(spec.gt_points);
    while points.len() < spec.gt_points {
        let target = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let (tri, label) = &surfaces[k];
        let q = point_in_triangle(&tri[0], &tri[1], &tri[2], rng.random(), rng.random());
        if *label == 0 && under_furniture(&q) {
            continue;
        }
        points.push(q);
        labels.push(*label);
    }
    let cloud = LabeledPointCloud::new(points, labels, names)?;
    Ok((mesh, cloud))
}
