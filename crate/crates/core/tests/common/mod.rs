//! Independent reference implementations shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use agent3d::render::{CameraIntrinsics, CameraPose};
use agent3d::scene::TriangleMesh;
use nalgebra::{Point3, Vector3};
use serde::Deserialize;

pub const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

#[derive(Debug, Deserialize)]
pub struct MetricCase {
    pub candidate: String,
    pub references: Vec<String>,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
    pub cider_d: f64,
    pub em: f64,
}

pub fn metric_cases() -> Vec<MetricCase> {
    let text = std::fs::read_to_string(Path::new(FIXTURES).join("metric_pairs.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[derive(Debug, Deserialize)]
pub struct ParseCase {
    pub text: String,
    pub expected: Vec<(i64, i64, String)>,
}

pub fn parse_cases() -> Vec<ParseCase> {
    let text = std::fs::read_to_string(Path::new(FIXTURES).join("parse_cases.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Camera-frame depth of the nearest triangle hit by the ray through pixel
/// center (u, v), by testing every triangle.
pub fn ray_cast_depth(mesh: &TriangleMesh, k: &CameraIntrinsics, pose: &CameraPose, u: f64, v: f64, near: f64) -> Option<f64> {
    let dir_cam = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
    let dir = pose.rotation() * dir_cam;
    let origin = *pose.position();
    let mut best: Option<f64> = None;
    for f in 0..mesh.faces().len() {
        let [a, b, c] = mesh.triangle(f);
        if let Some(t) = moller_trumbore(&origin, &dir, &a, &b, &c) {
            // dir has unit camera z, so t is camera depth
            if t > near && best.is_none_or(|d| t < d) {
                best = Some(t);
            }
        }
    }
    best
}

fn moller_trumbore(o: &Point3<f64>, d: &Vector3<f64>, a: &Point3<f64>, b: &Point3<f64>, c: &Point3<f64>) -> Option<f64> {
    let e1 = b - a;
    let e2 = c - a;
    let p = d.cross(&e2);
    let det = e1.dot(&p);
    if det.abs() < 1e-14 {
        return None;
    }
    let inv = 1.0 / det;
    let s = o - a;
    let u = s.dot(&p) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let q = s.cross(&e1);
    let v = d.dot(&q) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(e2.dot(&q) * inv)
}

// Text metrics written directly from their definitions, sharing nothing
// with the library beyond the normalization contract.

pub fn tokens(s: &str) -> Vec<String> {
    let chars: Vec<char> = s.to_lowercase().chars().collect();
    let mut out = String::new();
    for i in 0..chars.len() {
        let c = chars[i];
        let keep = c.is_alphanumeric()
            || (c == '-' && i > 0 && chars[i - 1].is_alphanumeric() && i + 1 < chars.len() && chars[i + 1].is_alphanumeric());
        if keep {
            out.push(c);
        } else if c.is_whitespace() {
            out.push(' ');
        }
    }
    out.split_whitespace().map(String::from).collect()
}

pub fn oracle_stem(w: &str) -> String {
    for suf in ["ing", "ed", "es", "ly", "s"] {
        if w.ends_with(suf) && w.chars().count() - suf.chars().count() >= 3 {
            return w[..w.len() - suf.len()].to_string();
        }
    }
    w.to_string()
}

fn grams(t: &[String], n: usize) -> Vec<Vec<String>> {
    if t.len() < n {
        return vec![];
    }
    (0..=t.len() - n).map(|i| t[i..i + n].to_vec()).collect()
}

fn count(g: &[Vec<String>], x: &[String]) -> usize {
    g.iter().filter(|y| y.as_slice() == x).count()
}

pub fn oracle_bleu(cand: &str, refs: &[String], max_n: usize) -> f64 {
    let c = tokens(cand);
    let rs: Vec<Vec<String>> = refs.iter().map(|r| tokens(r)).collect();
    let mut log_p = 0.0;
    for n in 1..=max_n {
        let cg = grams(&c, n);
        if cg.is_empty() {
            return 0.0;
        }
        let mut distinct = cg.clone();
        distinct.sort();
        distinct.dedup();
        let mut clipped = 0;
        for g in &distinct {
            let max_ref = rs.iter().map(|r| count(&grams(r, n), g)).max().unwrap();
            clipped += count(&cg, g).min(max_ref);
        }
        if clipped == 0 {
            return 0.0;
        }
        log_p += (clipped as f64 / cg.len() as f64).ln();
    }
    let lc = c.len() as i64;
    let mut lens: Vec<i64> = rs.iter().map(|r| r.len() as i64).collect();
    lens.sort();
    let r = *lens.iter().min_by_key(|&&l| (l - lc).abs()).unwrap();
    let bp = if lc < r { (1.0 - r as f64 / lc as f64).exp() } else { 1.0 };
    bp * (log_p / max_n as f64).exp()
}

/// Longest common subsequence by exhaustive recursion with memoization.
fn lcs(a: &[String], b: &[String], memo: &mut HashMap<(usize, usize), usize>) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let key = (a.len(), b.len());
    if let Some(&v) = memo.get(&key) {
        return v;
    }
    let v = if a[0] == b[0] {
        1 + lcs(&a[1..], &b[1..], memo)
    } else {
        lcs(&a[1..], b, memo).max(lcs(a, &b[1..], memo))
    };
    memo.insert(key, v);
    v
}

pub fn oracle_rouge_l(cand: &str, refs: &[String]) -> f64 {
    let c = tokens(cand);
    refs.iter()
        .map(|r| {
            let r = tokens(r);
            let l = lcs(&c, &r, &mut HashMap::new()) as f64;
            if l == 0.0 {
                return 0.0;
            }
            let (p, rec, b2) = (l / c.len() as f64, l / r.len() as f64, 1.2f64 * 1.2);
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

pub fn oracle_meteor(cand: &str, refs: &[String]) -> f64 {
    let c = tokens(cand);
    refs.iter()
        .map(|r| {
            let r = tokens(r);
            let mut cu = vec![false; c.len()];
            let mut ru = vec![false; r.len()];
            let mut pairs = vec![];
            for stage in 0..2 {
                let key = |w: &String| if stage == 0 { w.clone() } else { oracle_stem(w) };
                for i in 0..c.len() {
                    if cu[i] {
                        continue;
                    }
                    if let Some(j) = (0..r.len()).find(|&j| !ru[j] && key(&r[j]) == key(&c[i])) {
                        cu[i] = true;
                        ru[j] = true;
                        pairs.push((i, j));
                    }
                }
            }
            pairs.sort();
            let m = pairs.len() as f64;
            if m == 0.0 {
                return 0.0;
            }
            let mut chunks = 1.0;
            for w in pairs.windows(2) {
                if w[1] != (w[0].0 + 1, w[0].1 + 1) {
                    chunks += 1.0;
                }
            }
            let (p, rec) = (m / c.len() as f64, m / r.len() as f64);
            10.0 * p * rec / (rec + 9.0 * p) * (1.0 - 0.5 * (chunks / m).powi(3))
        })
        .fold(0.0, f64::max)
}

/// CIDEr-D with explicit dense TF-IDF vectors over the corpus vocabulary.
pub fn oracle_cider(cands: &[String], refs: &[Vec<String>]) -> Vec<f64> {
    let st = |s: &str| tokens(s).iter().map(|w| oracle_stem(w)).collect::<Vec<_>>();
    let rt: Vec<Vec<Vec<String>>> = refs.iter().map(|rs| rs.iter().map(|r| st(r)).collect()).collect();
    let ct: Vec<Vec<String>> = cands.iter().map(|c| st(c)).collect();
    let n_items = cands.len() as f64;
    let mut out = vec![0.0; cands.len()];
    for n in 1..=4 {
        let mut vocab: Vec<Vec<String>> = rt.iter().flatten().chain(ct.iter()).flat_map(|t| grams(t, n)).collect();
        vocab.sort();
        vocab.dedup();
        let df: Vec<f64> = vocab
            .iter()
            .map(|g| rt.iter().filter(|item| item.iter().any(|r| count(&grams(r, n), g) > 0)).count().max(1) as f64)
            .collect();
        let vec_of = |t: &[String]| -> Vec<f64> {
            let gs = grams(t, n);
            vocab.iter().zip(&df).map(|(g, d)| count(&gs, g) as f64 * (n_items.ln() - d.ln())).collect()
        };
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (k, c) in ct.iter().enumerate() {
            let hv = vec_of(c);
            let mut acc = 0.0;
            for r in &rt[k] {
                let rv = vec_of(r);
                let (hn, rn) = (norm(&hv), norm(&rv));
                if hn == 0.0 || rn == 0.0 {
                    continue;
                }
                let dot: f64 = hv.iter().zip(&rv).map(|(h, r)| h.min(*r) * r).sum();
                let dl = c.len() as f64 - r.len() as f64;
                acc += (-(dl * dl) / 72.0).exp() * dot / (hn * rn);
            }
            out[k] += 10.0 * acc / rt[k].len() as f64 / 4.0;
        }
    }
    out
}

/// Writes two toy scenes under `dir` with reduced point counts and returns
/// their manifest paths.
pub fn toy_scenes(dir: &Path, gt_points: usize) -> Vec<PathBuf> {
    let opts = agent3d::harness::ToyGenOptions {
        count: 2,
        gt_points,
        ..Default::default()
    };
    agent3d::harness::gen_toy(dir, &opts).unwrap()
}

/// Every file under `root` as (relative path, bytes), sorted, skipping
/// files named in `skip`.
pub fn tree_bytes(root: &Path, skip: &[&str]) -> Vec<(PathBuf, Vec<u8>)> {
    fn walk(root: &Path, dir: &Path, skip: &[&str], out: &mut Vec<(PathBuf, Vec<u8>)>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, skip, out);
            } else if !skip.iter().any(|s| p.file_name().unwrap() == *s) {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap()));
            }
        }
    }
    let mut out = vec![];
    walk(root, root, skip, &mut out);
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}
