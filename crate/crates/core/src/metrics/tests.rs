use std::collections::HashMap;

use proptest::prelude::*;

use super::*;
use crate::annotate::{Annotation, EntitySpan, EntityType, PosTag};

fn toks(s: &str) -> Tokens {
    s.split_whitespace().map(str::to_string).collect()
}

fn corpus(lines: &[&str]) -> Vec<Tokens> {
    lines.iter().map(|l| toks(l)).collect()
}

#[test]
fn bleu_hand_counts() {
    let c = corpus(&["the cat sat on the mat"]);
    let r = corpus(&["the cat is on the mat"]);
    assert_eq!(bleu4(&c, &r).unwrap(), 0.0);
    // one extra word: p = 6/7, 5/6, 4/5, 3/4 with no brevity penalty
    let c = corpus(&["the cat sat on the mat today"]);
    let r = corpus(&["the cat sat on the mat"]);
    let expect = (6.0f64 / 7.0 * 5.0 / 6.0 * 4.0 / 5.0 * 3.0 / 4.0).powf(0.25);
    assert!((bleu4(&c, &r).unwrap() - expect).abs() < 1e-12);
    // a prefix: all precisions 1, penalty exp(1 - 6/4)
    let c = corpus(&["the cat sat on"]);
    assert!((bleu4(&c, &r).unwrap() - (-0.5f64).exp()).abs() < 1e-12);
    assert_eq!(bleu4(&r, &r).unwrap(), 1.0);
    assert_eq!(bleu4(&corpus(&["a b c d"]), &corpus(&["e f g h"])).unwrap(), 0.0);
    assert!(bleu4(&c, &[]).is_err());
    assert!(bleu4(&[], &[]).is_err());
}

#[test]
fn rouge_hand_lcs() {
    let c = corpus(&["the cat sat"]);
    let r = corpus(&["the cat on the mat"]);
    let (p, rec) = (2.0 / 3.0, 2.0 / 5.0);
    let expect = (1.0 + 1.44) * p * rec / (rec + 1.44 * p);
    assert!((rouge_l(&c, &r).unwrap() - expect).abs() < 1e-12);
    assert_eq!(rouge_l(&r, &r).unwrap(), 1.0);
    assert_eq!(rouge_l(&corpus(&["a b"]), &corpus(&["c d"])).unwrap(), 0.0);
    assert!(rouge_l(&c, &corpus(&["x", "y"])).is_err());
}

#[test]
fn meteor_formula_values() {
    let one = corpus(&["cat"]);
    assert!((meteor_lite(&one, &one).unwrap() - 0.5).abs() < 1e-12);
    let ten = corpus(&["a b c d e f g h i j"]);
    assert!((meteor_lite(&ten, &ten).unwrap() - 0.9995).abs() < 1e-12);
    assert_eq!(meteor_lite(&corpus(&["dog"]), &one).unwrap(), 0.0);
    // stems match: runs / running
    let s = meteor_lite(&corpus(&["runs"]), &corpus(&["running"])).unwrap();
    assert!((s - 0.5).abs() < 1e-12);
    // 4 matches in 2 chunks, P = 1, R = 4/5
    let s = meteor_lite(&corpus(&["a b c d"]), &corpus(&["a b x c d"])).unwrap();
    let (p, r) = (1.0, 0.8);
    let f = p * r / (0.9 * p + 0.1 * r);
    let expect = f * (1.0 - 0.5 * 0.5f64.powi(3));
    assert!((s - expect).abs() < 1e-12);
}

#[test]
fn cider_toy_corpus() {
    let refs = corpus(&["a b c d", "e f g h"]);
    assert!((cider_d(&refs, &refs).unwrap() - 10.0).abs() < 1e-9);
    let disjoint = corpus(&["p q r s", "t u v w"]);
    assert_eq!(cider_d(&disjoint, &refs).unwrap(), 0.0);
    // "x" is in every reference, so its idf is zero
    let refs = corpus(&["x a b c", "x e f g"]);
    assert_eq!(cider_d(&corpus(&["x", "x"]), &refs).unwrap(), 0.0);
    assert!(cider_d(&corpus(&["a"]), &corpus(&["a"])).is_err());
}

/// Direct transcription of the CIDEr-D definition, used as an oracle.
fn cider_oracle(cands: &[Tokens], refs: &[Tokens]) -> f64 {
    let grams = |t: &Tokens, n: usize| -> Vec<String> {
        if t.len() < n {
            return vec![];
        }
        (0..=t.len() - n).map(|i| t[i..i + n].join(" ")).collect()
    };
    let docs = refs.len() as f64;
    let mut total = 0.0;
    for (c, r) in cands.iter().zip(refs) {
        let mut s = 0.0;
        for n in 1..=4 {
            let idf = |g: &String| {
                let df = refs.iter().filter(|d| grams(d, n).contains(g)).count().max(1) as f64;
                docs.ln() - df.ln()
            };
            let vec_of = |t: &Tokens| {
                let mut v: HashMap<String, f64> = HashMap::new();
                for g in grams(t, n) {
                    *v.entry(g).or_default() += 1.0;
                }
                v.into_iter().map(|(g, k)| {
                    let w = k * idf(&g);
                    (g, w)
                }).collect::<HashMap<_, _>>()
            };
            let (vc, vr) = (vec_of(c), vec_of(r));
            let norm = |v: &HashMap<String, f64>| v.values().map(|x| x * x).sum::<f64>().sqrt();
            let (nc, nr) = (norm(&vc), norm(&vr));
            if nc == 0.0 || nr == 0.0 {
                continue;
            }
            let mut dot = 0.0;
            for (g, x) in &vc {
                if let Some(y) = vr.get(g) {
                    dot += x.min(*y) * y;
                }
            }
            let d = c.len() as f64 - r.len() as f64;
            s += dot / (nc * nr) * (-d * d / 72.0).exp();
        }
        total += 10.0 * s / 4.0;
    }
    total / cands.len() as f64
}

fn sentence() -> impl Strategy<Value = Tokens> {
    prop::collection::vec(prop::sample::select(vec!["a", "b", "c", "d", "e", "f"]), 1..9)
        .prop_map(|w| w.into_iter().map(str::to_string).collect())
}

fn aligned() -> impl Strategy<Value = (Vec<Tokens>, Vec<Tokens>)> {
    (2usize..7).prop_flat_map(|n| {
        (prop::collection::vec(sentence(), n), prop::collection::vec(sentence(), n))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cider_matches_oracle((c, r) in aligned()) {
        let got = cider_d(&c, &r).unwrap();
        prop_assert!((got - cider_oracle(&c, &r)).abs() < 1e-9);
        prop_assert!((0.0..=10.0 + 1e-9).contains(&got));
    }

    #[test]
    fn scores_are_order_invariant((c, r) in aligned(), rot in 0usize..6) {
        let k = rot % c.len();
        let (mut c2, mut r2) = (c.clone(), r.clone());
        c2.rotate_left(k);
        r2.rotate_left(k);
        prop_assert!((bleu4(&c, &r).unwrap() - bleu4(&c2, &r2).unwrap()).abs() < 1e-12);
        prop_assert!((rouge_l(&c, &r).unwrap() - rouge_l(&c2, &r2).unwrap()).abs() < 1e-12);
        prop_assert!((meteor_lite(&c, &r).unwrap() - meteor_lite(&c2, &r2).unwrap()).abs() < 1e-12);
        prop_assert!((cider_d(&c, &r).unwrap() - cider_d(&c2, &r2).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn scores_stay_in_range((c, r) in aligned()) {
        for s in [bleu4(&c, &r).unwrap(), rouge_l(&c, &r).unwrap(), meteor_lite(&c, &r).unwrap()] {
            prop_assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn deleting_tokens_never_raises_bleu(r in prop::collection::vec(sentence(), 1..5), drops in prop::collection::vec(any::<prop::sample::Index>(), 1..4)) {
        let mut damaged = r.clone();
        for (i, d) in drops.iter().enumerate() {
            let s = &mut damaged[i % r.len()];
            if s.len() > 1 {
                s.remove(d.index(s.len()));
            }
        }
        prop_assert!(bleu4(&damaged, &r).unwrap() <= bleu4(&r, &r).unwrap());
    }
}

fn ann(words: &str, spans: &[(usize, usize, EntityType)], verb: bool) -> Annotation {
    let words: Vec<String> = toks(words);
    let mut pos = vec![PosTag::Other; words.len()];
    if verb {
        pos[0] = PosTag::Verb;
    }
    let mut a = Annotation {
        entities: spans
            .iter()
            .map(|&(start, end, entity_type)| EntitySpan {
                start,
                end,
                entity_type,
                surface: String::new(),
            })
            .collect(),
        words,
        pos,
    };
    a.validate().unwrap();
    a
}

#[test]
fn entity_micro_average() {
    let g = [ann("Alice and Bob", &[(0, 1, EntityType::Person), (2, 3, EntityType::Person)], false)];
    let r = [ann("alice alone", &[(0, 1, EntityType::Person)], false)];
    let s = entity_pr_annotated(&g, &r).unwrap();
    assert_eq!((s.precision, s.recall), (0.5, 1.0));
    let s = entity_pr_annotated(&r, &r).unwrap();
    assert_eq!((s.precision, s.recall), (1.0, 1.0));
    let empty = [ann("nothing here", &[], false)];
    let s = entity_pr_annotated(&empty, &r).unwrap();
    assert_eq!(s.precision, 0.0);
    assert!(s.precision_undefined && !s.recall_undefined);
    assert_eq!(s.recall, 0.0);
}

#[test]
fn component_scores_and_flags() {
    let full = ann(
        "visits Alice Monday Paris Olympics",
        &[(1, 2, EntityType::Person), (2, 3, EntityType::Date), (3, 4, EntityType::Gpe), (4, 5, EntityType::Event)],
        true,
    );
    let who_only = ann("Alice", &[(0, 1, EntityType::Person)], false);
    let refs = [full.clone(), who_only.clone()];
    let rep = component_pr_annotated(&refs, &refs).unwrap();
    assert!(rep.components.iter().all(|c| c.score.precision == 1.0 && c.score.recall == 1.0));
    assert_eq!((rep.macro_precision, rep.macro_recall), (1.0, 1.0));
    let gen = [who_only.clone(), who_only];
    let rep = component_pr_annotated(&gen, &refs).unwrap();
    let when = &rep.components[1];
    assert_eq!(when.component, Component::When);
    assert!(when.score.precision_undefined);
    assert_eq!((when.score.precision, when.score.recall), (0.0, 0.0));
    let mean = rep.components.iter().map(|c| c.score.precision).sum::<f64>() / 5.0;
    assert_eq!(rep.macro_precision, mean);
    assert_eq!(rep.components[0].score.recall, 1.0);
}

#[test]
fn self_evaluation_report() {
    let refs: Vec<String> = [
        "Kate Pedersen visited the Havens House Museum in New York on Monday.",
        "Protesters gathered outside the building during the Olympics in 2019.",
        "A worker renovated the old painting at the museum last week.",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    let rep = evaluate(&refs, &refs, &Annotator::default()).unwrap();
    assert_eq!(rep.bleu4, 1.0);
    assert_eq!(rep.rouge_l, 1.0);
    assert!((rep.cider_d - 10.0).abs() < 1e-9);
    assert_eq!((rep.entity.precision, rep.entity.recall), (1.0, 1.0));
    let json = rep.to_json();
    let keys = ["\"captions\"", "\"bleu4\"", "\"rouge_l\"", "\"meteor_lite\"", "\"cider_d\"", "\"entity\"", "\"components\"", "\"macro_precision\"", "\"macro_recall\""];
    let pos: Vec<usize> = keys.iter().map(|k| json.find(k).expect(k)).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]), "{json}");
    let back: MetricReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, rep);
}

#[test]
fn tokens_drop_punctuation() {
    assert_eq!(caption_tokens("The Cat, sat."), toks("the cat sat"));
}
