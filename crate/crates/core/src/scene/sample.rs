use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TriangleMesh;
use crate::{Error, Result};

/// Area-weighted uniform sampling of `n` points on the mesh surface.
pub fn sample_surface_points(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<Point3<f64>>> {
    Ok(sample_surface_points_with_faces(mesh, n, seed)?
        .into_iter()
        .map(|(p, _)| p)
        .collect())
}

/// Like [`sample_surface_points`], also returning the source face of each point.
pub fn sample_surface_points_with_faces(mesh: &TriangleMesh, n: usize, seed: u64) -> Result<Vec<(Point3<f64>, usize)>> {
    if n == 0 {
        return Err(Error::InvalidSpec("sample count must be positive".into()));
    }
    let mut cumulative = Vec::with_capacity(mesh.faces().len());
    let mut total = 0.0;
    for k in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(k);
        total += 0.5 * (b - a).cross(&(c - a)).norm();
        cumulative.push(total);
    }
    if !(total > 0.0) {
        return Err(Error::EmptyScene);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let target = rng.random::<f64>() * total;
        let k = cumulative.partition_point(|&c| c <= target).min(cumulative.len() - 1);
        let [a, b, c] = mesh.triangle(k);
        out.push((point_in_triangle(&a, &b, &c, rng.random(), rng.random()), k));
    }
    Ok(out)
}

pub(crate) fn point_in_triangle(a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>, r1: f64, r2: f64) -> Point3<f64> {
    let (s, t) = if r1 + r2 > 1.0 { (1.0 - r1, 1.0 - r2) } else { (r1, r2) };
    a + (b - a) * s + (c - a) * t
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square() -> TriangleMesh {
        TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(1.0, 0.0, 0.0),
                Point3::new(1.0, 1.0, 0.0),
                Point3::new(0.0, 1.0, 0.0),
            ],
            vec![[0; 3]; 4],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap()
    }

    #[test]
    fn unit_square_mean_is_centroid() {
        let pts = sample_surface_points(&square(), 10_000, 3).unwrap();
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.x).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.y).sum::<f64>() / n;
        assert!((mx - 0.5).abs() < 0.02 && (my - 0.5).abs() < 0.02, "{mx} {my}");
    }

    #[test]
    fn single_point_lies_on_mesh() {
        let pts = sample_surface_points(&square(), 1, 11).unwrap();
        assert_eq!(pts.len(), 1);
        let p = pts[0];
        assert_eq!(p.z, 0.0);
        assert!((0.0..=1.0).contains(&p.x) && (0.0..=1.0).contains(&p.y));
    }

    #[test]
    fn area_ratio_nine_to_one() {
        // Triangle 0 has area 4.5, triangle 1 has area 0.5.
        let m = TriangleMesh::new(
            vec![
                Point3::new(0.0, 0.0, 0.0),
                Point3::new(3.0, 0.0, 0.0),
                Point3::new(0.0, 3.0, 0.0),
                Point3::new(10.0, 0.0, 0.0),
                Point3::new(11.0, 0.0, 0.0),
                Point3::new(10.0, 1.0, 0.0),
            ],
            vec![[0; 3]; 6],
            vec![[0, 1, 2], [3, 4, 5]],
        )
        .unwrap();
        let n = 10_000usize;
        let s = sample_surface_points_with_faces(&m, n, 5).unwrap();
        let big = s.iter().filter(|(_, f)| *f == 0).count() as f64;
        let (p, nf) = (0.9, n as f64);
        let sigma = (nf * p * (1.0 - p)).sqrt();
        assert!((big - nf * p).abs() < 3.0 * sigma, "{big}");
    }

    #[test]
    fn deterministic_per_seed() {
        let a = sample_surface_points(&square(), 50, 9).unwrap();
        let b = sample_surface_points(&square(), 50, 9).unwrap();
        let c = sample_surface_points(&square(), 50, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn empty_and_zero() {
        let empty = TriangleMesh::new(vec![], vec![], vec![]).unwrap();
        assert!(matches!(sample_surface_points(&empty, 5, 0), Err(Error::EmptyScene)));
        assert!(sample_surface_points(&square(), 0, 0).is_err());
    }
}
