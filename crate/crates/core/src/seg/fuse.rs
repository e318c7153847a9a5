use std::collections::HashMap;

use nalgebra::Point3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Region2D, RegionLabel};
use crate::render::{unproject, ViewBundle};
use crate::{Error, Result};

/// Emits one labeled world point per accepted region pixel on the stride
/// lattice that has finite depth.
pub fn backproject_view(regions: &[Region2D], labels: &[RegionLabel], view: &ViewBundle, stride_px: u32) -> Vec<(Point3<f64>, u32)> {
    let stride = stride_px.max(1);
    let class_of: HashMap<u32, u32> = labels.iter().filter_map(|l| Some((l.mark_id, l.class_id?))).collect();
    let mut out = Vec::new();
    for r in regions {
        let Some(&class) = class_of.get(&r.mark_id) else { continue };
        for &(u, v) in &r.pixels {
            if u % stride != 0 || v % stride != 0 {
                continue;
            }
            let d = view.depth.get(u, v);
            if !d.is_finite() || d <= 0.0 {
                continue;
            }
            if let Ok(p) = unproject(&view.intrinsics, &view.pose, u as f64, v as f64, d as f64) {
                out.push((p, class));
            }
        }
    }
    out
}

type Cell = (i64, i64, i64);

fn cell_of(p: &Point3<f64>, size: f64) -> Cell {
    ((p.x / size).floor() as i64, (p.y / size).floor() as i64, (p.z / size).floor() as i64)
}

fn build_hash(points: impl Iterator<Item = (usize, Point3<f64>)>, size: f64) -> HashMap<Cell, Vec<usize>> {
    let mut m: HashMap<Cell, Vec<usize>> = HashMap::new();
    for (i, p) in points {
        m.entry(cell_of(&p, size)).or_default().push(i);
    }
    m
}

/// Majority vote of all back-projected points within `radius_m` of each
/// ground-truth point; ties go to the smaller class id and points with no
/// votes get `unlabeled`.
pub fn fuse_labels(per_view: &[Vec<(Point3<f64>, u32)>], gt_points: &[Point3<f64>], num_classes: usize, radius_m: f64) -> Result<Vec<u32>> {
    if !(radius_m > 0.0 && radius_m.is_finite()) {
        return Err(Error::InvalidSpec(format!("fusion radius must be positive, got {radius_m}")));
    }
    let unlabeled = num_classes as u32;
    let pts: Vec<(Point3<f64>, u32)> = per_view
        .iter()
        .flatten()
        .filter(|(_, c)| (*c as usize) < num_classes)
        .copied()
        .collect();
    let hash = build_hash(pts.iter().map(|(p, _)| *p).enumerate(), radius_m);
    let r2 = radius_m * radius_m;
    Ok(gt_points
        .par_iter()
        .map(|g| {
            let mut votes = vec![0usize; num_classes];
            let (cx, cy, cz) = cell_of(g, radius_m);
            for dx in -1..=1 {
                for dy in -1..=1 {
                    for dz in -1..=1 {
                        if let Some(ids) = hash.get(&(cx + dx, cy + dy, cz + dz)) {
                            for &i in ids {
                                if (pts[i].0 - g).norm_squared() <= r2 {
                                    votes[pts[i].1 as usize] += 1;
                                }
                            }
                        }
                    }
                }
            }
            let best = votes.iter().copied().max().unwrap_or(0);
            if best == 0 {
                unlabeled
            } else {
                votes.iter().position(|&v| v == best).unwrap() as u32
            }
        })
        .collect())
}

/// Median distance from each point to its nearest other point.
pub fn median_nn_spacing(points: &[Point3<f64>]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let (mut lo, mut hi) = (points[0].coords, points[0].coords);
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    let diag = (hi - lo).norm();
    if diag == 0.0 {
        return Some(0.0);
    }
    let size = (diag / (points.len() as f64).sqrt()).max(1e-9);
    let hash = build_hash(points.iter().copied().enumerate(), size);
    let mut d: Vec<f64> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (cx, cy, cz) = cell_of(p, size);
            let mut best = f64::INFINITY;
            let mut ring = 0i64;
            loop {
                for dx in -ring..=ring {
                    for dy in -ring..=ring {
                        for dz in -ring..=ring {
                            if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                                continue;
                            }
                            if let Some(ids) = hash.get(&(cx + dx, cy + dy, cz + dz)) {
                                for &j in ids {
                                    if j != i {
                                        best = best.min((points[j] - p).norm());
                                    }
                                }
                            }
                        }
                    }
                }
                if best <= ring as f64 * size {
                    return best;
                }
                ring += 1;
            }
        })
        .collect();
    d.sort_by(f64::total_cmp);
    let n = d.len();
    Some(if n % 2 == 1 { d[n / 2] } else { 0.5 * (d[n / 2 - 1] + d[n / 2]) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouReport {
    /// `None` for classes absent from both prediction and ground truth.
    pub per_class: Vec<Option<f64>>,
    pub miou: f64,
}

impl MiouReport {
    /// `{per_class: {name: iou}, miou}`; absent classes are omitted.
    pub fn to_named_json(&self, class_names: &[String]) -> serde_json::Value {
        let mut per = serde_json::Map::new();
        for (i, iou) in self.per_class.iter().enumerate() {
            if let (Some(v), Some(name)) = (iou, class_names.get(i)) {
                per.insert(name.clone(), serde_json::json!(v));
            }
        }
        serde_json::json!({"per_class": per, "miou": self.miou})
    }
}

pub fn miou(pred: &[u32], gt: &[u32], num_classes: usize) -> Result<MiouReport> {
    if pred.len() != gt.len() {
        return Err(Error::LengthMismatch(pred.len(), gt.len()));
    }
    let mut inter = vec![0usize; num_classes];
    let mut union = vec![0usize; num_classes];
    for (&p, &g) in pred.iter().zip(gt) {
        let (p, g) = (p as usize, g as usize);
        if p == g && p < num_classes {
            inter[p] += 1;
            union[p] += 1;
        } else {
            if p < num_classes {
                union[p] += 1;
            }
            if g < num_classes {
                union[g] += 1;
            }
        }
    }
    let per_class: Vec<Option<f64>> = (0..num_classes)
        .map(|c| (union[c] > 0).then(|| inter[c] as f64 / union[c] as f64))
        .collect();
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let miou = if present.is_empty() { 0.0 } else { present.iter().sum::<f64>() / present.len() as f64 };
    Ok(MiouReport { per_class, miou })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn miou_examples() {
        let gt: Vec<u32> = [vec![0; 100], vec![1; 100]].concat();
        assert_abs_diff_eq!(miou(&gt, &gt, 2).unwrap().miou, 1.0);
        let pred: Vec<u32> = [vec![0; 50], vec![1; 150]].concat();
        let r = miou(&pred, &gt, 2).unwrap();
        assert_abs_diff_eq!(r.per_class[0].unwrap(), 0.5);
        assert_abs_diff_eq!(r.per_class[1].unwrap(), 100.0 / 150.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.miou, (0.5 + 2.0 / 3.0) / 2.0, epsilon = 1e-12);
        assert_eq!(miou(&vec![2; 200], &gt, 2).unwrap().miou, 0.0);
        assert!(matches!(miou(&[0], &[0, 1], 2), Err(Error::LengthMismatch(1, 2))));
    }

    #[test]
    fn absent_class_excluded() {
        let r = miou(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(r.per_class, vec![Some(1.0), None, None]);
        assert_eq!(r.miou, 1.0);
    }

    #[test]
    fn fusion_rules() {
        let g = vec![Point3::new(0.0, 0.0, 0.0), Point3::new(10.0, 0.0, 0.0)];
        let views = vec![vec![(Point3::new(0.0, 0.0, 0.0), 2)]];
        assert_eq!(fuse_labels(&views, &g, 3, 0.1).unwrap(), vec![2, 3]);
        let tie = vec![vec![
            (Point3::new(0.01, 0.0, 0.0), 1),
            (Point3::new(0.02, 0.0, 0.0), 1),
            (Point3::new(-0.01, 0.0, 0.0), 0),
            (Point3::new(0.0, 0.01, 0.0), 0),
        ]];
        assert_eq!(fuse_labels(&tie, &g[..1], 3, 0.1).unwrap(), vec![0]);
    }

    #[test]
    fn nn_spacing_matches_brute_force() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<Point3<f64>> = (0..400)
            .map(|_| Point3::new(rng.random_range(0.0..3.0), rng.random_range(0.0..2.0), rng.random_range(0.0..0.1)))
            .collect();
        let mut brute: Vec<f64> = pts
            .iter()
            .enumerate()
            .map(|(i, p)| {
                pts.iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, q)| (q - p).norm())
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        brute.sort_by(f64::total_cmp);
        let want = 0.5 * (brute[199] + brute[200]);
        assert_abs_diff_eq!(median_nn_spacing(&pts).unwrap(), want, epsilon = 1e-12);
    }
}
