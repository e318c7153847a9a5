use agent3d::metrics::{bleu, cider_d, exact_match, meteor_lite, normalize, rouge_l};
use agent3d::pose::parse_view_proposals;
use proptest::prelude::*;

const WORDS: [&str; 12] = ["the", "a", "chair", "chairs", "table", "red", "blue", "sits", "sitting", "near", "lamp", "room"];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS.to_vec()), 1..12).prop_map(|w| w.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn normalize_is_idempotent(s in "\\PC{0,60}") {
        let once = normalize(&s);
        prop_assert_eq!(&normalize(&once.joined()).tokens, &once.tokens);
        prop_assert!(once.tokens.iter().all(|t| !t.is_empty()));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn parser_is_total(s in "[()0-9, a-zA-Z\\n'\"-]{0,80}") {
        for p in parse_view_proposals(&s) {
            prop_assert!(s.contains(p.raw_span.as_str()));
        }
    }

    #[test]
    fn metrics_stay_in_range(c in sentence(), r1 in sentence(), r2 in sentence()) {
        let refs = [r1.clone(), r2.clone()];
        for n in 1..=4 {
            let b = bleu(&c, &refs, n).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
        }
        let r = rouge_l(&c, &refs);
        let m = meteor_lite(&c, &refs);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&r) && (0.0..=1.0 + 1e-12).contains(&m));
        prop_assert!(exact_match(&c, &refs) == 0.0 || exact_match(&c, &refs) == 1.0);
        let scores = cider_d(&[c.as_str(), r1.as_str()], &[vec![r1.clone()], vec![r2.clone()]]).unwrap();
        prop_assert!(scores.iter().all(|s| (0.0..=10.0 + 1e-9).contains(s)));
    }
}
