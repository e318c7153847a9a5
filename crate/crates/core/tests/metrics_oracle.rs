mod common;

use agent3d::metrics::{bleu, cider_d, exact_match, meteor_lite, rouge_l};
use agent3d::Error;
use common::*;

const TOL: f64 = 1e-9;

#[test]
fn fixture_has_twenty_pairs() {
    assert_eq!(metric_cases().len(), 20);
}

#[test]
fn bleu_matches_oracles() {
    for c in metric_cases() {
        for (n, want) in [(1, c.bleu1), (4, c.bleu4)] {
            let got = bleu(&c.candidate, &c.references, n).unwrap();
            assert!((got - want).abs() < TOL, "{} bleu{n}: {got} vs fixture {want}", c.candidate);
            let o = oracle_bleu(&c.candidate, &c.references, n);
            assert!((got - o).abs() < TOL, "{} bleu{n}: {got} vs oracle {o}", c.candidate);
        }
        for n in [2, 3] {
            let got = bleu(&c.candidate, &c.references, n).unwrap();
            assert!((got - oracle_bleu(&c.candidate, &c.references, n)).abs() < TOL);
        }
    }
}

#[test]
fn rouge_meteor_em_match_oracles() {
    for c in metric_cases() {
        let r = rouge_l(&c.candidate, &c.references);
        assert!((r - c.rouge_l).abs() < TOL && (r - oracle_rouge_l(&c.candidate, &c.references)).abs() < TOL, "{}", c.candidate);
        let m = meteor_lite(&c.candidate, &c.references);
        assert!((m - c.meteor).abs() < TOL && (m - oracle_meteor(&c.candidate, &c.references)).abs() < TOL, "{}", c.candidate);
        assert_eq!(exact_match(&c.candidate, &c.references), c.em, "{}", c.candidate);
    }
}

#[test]
fn cider_matches_oracles() {
    let cases = metric_cases();
    let cands: Vec<String> = cases.iter().map(|c| c.candidate.clone()).collect();
    let refs: Vec<Vec<String>> = cases.iter().map(|c| c.references.clone()).collect();
    let got = cider_d(&cands, &refs).unwrap();
    let oracle = oracle_cider(&cands, &refs);
    for (k, c) in cases.iter().enumerate() {
        assert!((got[k] - c.cider_d).abs() < TOL, "{}: {} vs fixture {}", c.candidate, got[k], c.cider_d);
        assert!((got[k] - oracle[k]).abs() < TOL, "{}: {} vs oracle {}", c.candidate, got[k], oracle[k]);
    }
}

#[test]
fn disjoint_reference_corpus_scores_ten() {
    let sents: Vec<String> = [
        "a wooden table stands here",
        "two blue chairs face north",
        "the lamp glows softly tonight",
        "green carpet covers every floor",
        "white curtains hang by windows",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let refs: Vec<Vec<String>> = sents.iter().map(|s| vec![s.clone()]).collect();
    let got = cider_d(&sents, &refs).unwrap();
    for s in &got {
        assert!((s - 10.0).abs() < TOL, "{s}");
    }
    for s in oracle_cider(&sents, &refs) {
        assert!((s - 10.0).abs() < TOL);
    }
    for s in &sents {
        assert_eq!(bleu(s, &[s], 4).unwrap(), 1.0);
        assert_eq!(rouge_l(s, &[s]), 1.0);
        assert_eq!(exact_match(s, &[s]), 1.0);
    }
}

#[test]
fn worked_examples() {
    assert!((bleu("the cat sat", &["the cat sat down"], 1).unwrap() - (1.0f64 - 4.0 / 3.0).exp()).abs() < TOL);
    assert!((rouge_l("a b c", &["a c b"]) - 2.0 / 3.0).abs() < TOL);
    assert!((meteor_lite("chair", &["chair"]) - 0.5).abs() < TOL);
    let ten = "one two three four five six seven eight nine ten";
    assert!((meteor_lite(ten, &[ten]) - 0.9995).abs() < TOL);
    assert_eq!(exact_match("Brown", &["brown."]), 1.0);
    assert_eq!(exact_match("3 chairs", &["3"]), 0.0);
    assert_eq!(exact_match("blue", &["red", "Blue!"]), 1.0);
    assert!(matches!(cider_d(&["x"], &[vec!["x"]]), Err(Error::CorpusTooSmall(1))));
    assert!(matches!(bleu("", &["x"], 1), Err(Error::EmptyCandidate)));
}

#[test]
fn reference_order_and_monotonicity() {
    for c in metric_cases() {
        let mut rev = c.references.clone();
        rev.reverse();
        assert_eq!(bleu(&c.candidate, &c.references, 4).unwrap(), bleu(&c.candidate, &rev, 4).unwrap());
        assert_eq!(rouge_l(&c.candidate, &c.references), rouge_l(&c.candidate, &rev));
        assert_eq!(meteor_lite(&c.candidate, &c.references), meteor_lite(&c.candidate, &rev));
        let mut more = c.references.clone();
        more.push("an unrelated extra reference".into());
        assert!(rouge_l(&c.candidate, &more) >= rouge_l(&c.candidate, &c.references));
        assert!(meteor_lite(&c.candidate, &more) >= meteor_lite(&c.candidate, &c.references));
        assert!(exact_match(&c.candidate, &more) >= exact_match(&c.candidate, &c.references));
    }
}
