//! Caption and answer metrics: BLEU-n, ROUGE-L, METEOR-lite, CIDEr-D and
//! exact match over a shared normalization.
//!
//! METEOR-lite aligns by exact token then by suffix-stripped stem; it has no
//! synonym stage, so its values are not comparable with full METEOR.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const ROUGE_BETA: f64 = 1.2;
pub const CIDER_SIGMA: f64 = 6.0;
pub const CIDER_MAX_N: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedText {
    pub original: String,
    pub tokens: Vec<String>,
}

impl TokenizedText {
    pub fn joined(&self) -> String {
        self.tokens.join(" ")
    }
}

/// Lowercases, drops punctuation (hyphens survive only between two
/// alphanumerics) and splits on whitespace.
pub fn normalize(text: &str) -> TokenizedText {
    let lower: Vec<char> = text.to_lowercase().chars().collect();
    let mut cleaned = String::with_capacity(lower.len());
    for (i, &c) in lower.iter().enumerate() {
        if c.is_alphanumeric() {
            cleaned.push(c);
        } else if c == '-' {
            let before = i > 0 && lower[i - 1].is_alphanumeric();
            let after = lower.get(i + 1).is_some_and(|n| n.is_alphanumeric());
            if before && after {
                cleaned.push(c);
            }
        } else if c.is_whitespace() {
            cleaned.push(' ');
        }
    }
    TokenizedText {
        original: text.to_string(),
        tokens: cleaned.split_whitespace().map(str::to_string).collect(),
    }
}

const SUFFIXES: [&str; 5] = ["ing", "ed", "es", "ly", "s"];

/// Strips the first matching suffix of ing/ed/es/ly/s when at least three
/// characters remain.
pub fn stem(word: &str) -> &str {
    for suf in SUFFIXES {
        if let Some(base) = word.strip_suffix(suf) {
            if base.chars().count() >= 3 {
                return base;
            }
        }
    }
    word
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for g in tokens.windows(n) {
            *m.entry(g).or_insert(0) += 1;
        }
    }
    m
}

fn tokens_of<R: AsRef<str>>(refs: &[R]) -> Vec<Vec<String>> {
    refs.iter().map(|r| normalize(r.as_ref()).tokens).collect()
}

/// Sentence BLEU with clipped precisions, no smoothing, and a brevity penalty
/// against the closest reference length (shorter wins ties).
pub fn bleu<R: AsRef<str>>(candidate: &str, references: &[R], max_n: usize) -> Result<f64> {
    if !(1..=4).contains(&max_n) {
        return Err(Error::InvalidSpec(format!("max_n must be in 1..=4, got {max_n}")));
    }
    if references.is_empty() {
        return Err(Error::InvalidSpec("no references".into()));
    }
    let cand = normalize(candidate).tokens;
    if cand.is_empty() {
        return Err(Error::EmptyCandidate);
    }
    let refs = tokens_of(references);
    let mut log_sum = 0.0;
    for n in 1..=max_n {
        let counts = ngram_counts(&cand, n);
        let total: usize = counts.values().sum();
        if total == 0 {
            return Ok(0.0);
        }
        let mut max_ref: HashMap<&[String], usize> = HashMap::new();
        for r in &refs {
            for (g, c) in ngram_counts(r, n) {
                let e = max_ref.entry(g).or_insert(0);
                *e = (*e).max(c);
            }
        }
        let clipped: usize = counts.iter().map(|(g, &c)| c.min(max_ref.get(g).copied().unwrap_or(0))).sum();
        if clipped == 0 {
            return Ok(0.0);
        }
        log_sum += (clipped as f64 / total as f64).ln();
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(|r| r.len())
        .min_by_key(|&len| (len.abs_diff(c), len))
        .unwrap_or(c);
    let bp = if c < r { (1.0 - r as f64 / c as f64).exp() } else { 1.0 };
    Ok(bp * (log_sum / max_n as f64).exp())
}

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure with beta 1.2, maximized over references.
pub fn rouge_l<R: AsRef<str>>(candidate: &str, references: &[R]) -> f64 {
    let cand = normalize(candidate).tokens;
    tokens_of(references)
        .iter()
        .map(|r| {
            let lcs = lcs_len(&cand, r);
            if lcs == 0 {
                return 0.0;
            }
            let p = lcs as f64 / cand.len() as f64;
            let rec = lcs as f64 / r.len() as f64;
            let b2 = ROUGE_BETA * ROUGE_BETA;
            (1.0 + b2) * p * rec / (rec + b2 * p)
        })
        .fold(0.0, f64::max)
}

/// Unigram alignment as (candidate index, reference index) pairs sorted by
/// candidate index. Within each stage the k-th unmatched occurrence of a key
/// in the candidate pairs with the k-th unmatched occurrence in the reference.
pub fn meteor_alignment(cand: &[String], reference: &[String]) -> Vec<(usize, usize)> {
    let mut cand_used = vec![false; cand.len()];
    let mut ref_used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    for stage in 0..2 {
        let key = |w: &str| -> String {
            if stage == 0 {
                w.to_string()
            } else {
                stem(w).to_string()
            }
        };
        let mut ref_slots: HashMap<String, Vec<usize>> = HashMap::new();
        for (j, w) in reference.iter().enumerate().rev() {
            if !ref_used[j] {
                ref_slots.entry(key(w)).or_default().push(j);
            }
        }
        for (i, w) in cand.iter().enumerate() {
            if cand_used[i] {
                continue;
            }
            if let Some(j) = ref_slots.get_mut(&key(w)).and_then(Vec::pop) {
                cand_used[i] = true;
                ref_used[j] = true;
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs
}

fn count_chunks(pairs: &[(usize, usize)]) -> usize {
    if pairs.is_empty() {
        return 0;
    }
    1 + pairs
        .windows(2)
        .filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1))
        .count()
}

/// Exact-then-stem METEOR, maximized over references.
pub fn meteor_lite<R: AsRef<str>>(candidate: &str, references: &[R]) -> f64 {
    let cand = normalize(candidate).tokens;
    tokens_of(references)
        .iter()
        .map(|r| {
            let pairs = meteor_alignment(&cand, r);
            let m = pairs.len();
            if m == 0 {
                return 0.0;
            }
            let p = m as f64 / cand.len() as f64;
            let rec = m as f64 / r.len() as f64;
            let f = 10.0 * p * rec / (rec + 9.0 * p);
            let frag = count_chunks(&pairs) as f64 / m as f64;
            f * (1.0 - 0.5 * frag.powi(3))
        })
        .fold(0.0, f64::max)
}

pub fn exact_match<R: AsRef<str>>(candidate: &str, references: &[R]) -> f64 {
    let c = normalize(candidate).tokens;
    if references.iter().any(|r| normalize(r.as_ref()).tokens == c) {
        1.0
    } else {
        0.0
    }
}

type NgramVec = HashMap<Vec<String>, f64>;

fn stemmed(text: &str) -> Vec<String> {
    normalize(text).tokens.iter().map(|t| stem(t).to_string()).collect()
}

fn cider_vectors(tokens: &[String], df: &HashMap<Vec<String>, usize>, log_n: f64) -> [(NgramVec, f64); CIDER_MAX_N] {
    std::array::from_fn(|k| {
        let mut v: NgramVec = HashMap::new();
        for (g, c) in ngram_counts(tokens, k + 1) {
            let idf = log_n - (df.get(g).copied().unwrap_or(0).max(1) as f64).ln();
            v.insert(g.to_vec(), c as f64 * idf);
        }
        let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
        (v, norm)
    })
}

/// Per-item CIDEr-D scores on a 0..10 scale.
pub fn cider_d<C: AsRef<str> + Sync, R: AsRef<str> + Sync>(candidates: &[C], references: &[Vec<R>]) -> Result<Vec<f64>> {
    if candidates.len() != references.len() {
        return Err(Error::LengthMismatch(candidates.len(), references.len()));
    }
    if candidates.len() < 2 {
        return Err(Error::CorpusTooSmall(candidates.len()));
    }
    if references.iter().any(Vec::is_empty) {
        return Err(Error::InvalidSpec("every item needs at least one reference".into()));
    }
    let refs: Vec<Vec<Vec<String>>> = references.iter().map(|rs| rs.iter().map(|r| stemmed(r.as_ref())).collect()).collect();
    let mut df: HashMap<Vec<String>, usize> = HashMap::new();
    for item in &refs {
        let mut seen: std::collections::HashSet<&[String]> = std::collections::HashSet::new();
        for r in item {
            for n in 1..=CIDER_MAX_N {
                if r.len() >= n {
                    seen.extend(r.windows(n));
                }
            }
        }
        for g in seen {
            *df.entry(g.to_vec()).or_insert(0) += 1;
        }
    }
    let log_n = (candidates.len() as f64).ln();
    Ok(candidates
        .par_iter()
        .zip(refs.par_iter())
        .map(|(cand, item_refs)| {
            let ct = stemmed(cand.as_ref());
            let cv = cider_vectors(&ct, &df, log_n);
            let mut per_n = [0.0; CIDER_MAX_N];
            for r in item_refs {
                let rv = cider_vectors(r, &df, log_n);
                let delta = ct.len() as f64 - r.len() as f64;
                let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
                for n in 0..CIDER_MAX_N {
                    let (hv, hn) = &cv[n];
                    let (refv, rn) = &rv[n];
                    if *hn == 0.0 || *rn == 0.0 {
                        continue;
                    }
                    let dot: f64 = hv
                        .iter()
                        .filter_map(|(g, &h)| refv.get(g).map(|&r| h.min(r) * r))
                        .sum();
                    per_n[n] += penalty * dot / (hn * rn);
                }
            }
            10.0 * per_n.iter().map(|s| s / item_refs.len() as f64).sum::<f64>() / CIDER_MAX_N as f64
        })
        .collect())
}

/// One scored item: a candidate and its references.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub candidate: String,
    pub references: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItemScores {
    pub bleu1: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    pub em: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub bleu1: f64,
    pub bleu4: f64,
    pub meteor: f64,
    pub rouge_l: f64,
    /// Absent when fewer than two items were scored.
    pub cider: Option<f64>,
    pub em: f64,
    pub n_items: usize,
}

pub fn score_item(item: &EvalItem) -> ItemScores {
    let b = |n| match bleu(&item.candidate, &item.references, n) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("bleu-{n} scored 0: {e}");
            0.0
        }
    };
    ItemScores {
        bleu1: b(1),
        bleu4: b(4),
        meteor: meteor_lite(&item.candidate, &item.references),
        rouge_l: rouge_l(&item.candidate, &item.references),
        em: exact_match(&item.candidate, &item.references),
    }
}

/// Means of the per-item scores. CIDEr-D uses the item set as its corpus.
pub fn evaluate(items: &[EvalItem]) -> Result<MetricReport> {
    if items.is_empty() {
        return Err(Error::InvalidSpec("nothing to score".into()));
    }
    if let Some(i) = items.iter().position(|it| it.references.is_empty()) {
        return Err(Error::InvalidSpec(format!("item {i} has no references")));
    }
    let scores: Vec<ItemScores> = items.par_iter().map(score_item).collect();
    let n = items.len() as f64;
    let mean = |f: fn(&ItemScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let cider = if items.len() >= 2 {
        let cands: Vec<&str> = items.iter().map(|i| i.candidate.as_str()).collect();
        let refs: Vec<Vec<&str>> = items.iter().map(|i| i.references.iter().map(String::as_str).collect()).collect();
        let per = cider_d(&cands, &refs)?;
        Some(per.iter().sum::<f64>() / n)
    } else {
        None
    };
    Ok(MetricReport {
        bleu1: mean(|s| s.bleu1),
        bleu4: mean(|s| s.bleu4),
        meteor: mean(|s| s.meteor),
        rouge_l: mean(|s| s.rouge_l),
        cider,
        em: mean(|s| s.em),
        n_items: items.len(),
    })
}
