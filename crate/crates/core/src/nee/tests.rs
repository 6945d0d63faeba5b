use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::math::finite_difference_check;

/// Six entities in two linked triangles; each document talks about one
/// entity with its own words and words shared by its triangle.
fn tiny_kb(docs_per_entity: usize) -> KnowledgeBase {
    let mut kb = KnowledgeBase::default();
    let names = ["Alpha_One", "Beta", "Gamma", "Delta", "Epsilon", "Zeta"];
    for n in names {
        kb.add_entity(n);
    }
    kb.edges = vec![(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..docs_per_entity {
        for (e, name) in names.iter().enumerate() {
            let mut words: Vec<String> = name.split('_').map(str::to_string).collect();
            let span = words.len();
            for _ in 0..8 {
                let w = if rng.gen_bool(0.4) {
                    format!("topic{e}w{}", rng.gen_range(0..4))
                } else if rng.gen_bool(0.5) {
                    format!("cluster{}w{}", e / 3, rng.gen_range(0..4))
                } else {
                    ["the", "a", "of", "in"][rng.gen_range(0..4)].to_string()
                };
                words.push(w);
            }
            kb.docs.push(Document {
                words,
                anchors: vec![Anchor { start: 0, end: span, entity: e }],
            });
        }
    }
    kb
}

fn small_cfg() -> NepConfig {
    NepConfig {
        dim: 16,
        epochs: 15,
        lr: 0.05,
        ..NepConfig::default()
    }
}

fn random_table(dim: usize, words: usize, entities: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = |n: usize| (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect::<Vec<_>>();
    let mut names = vec![UNK_WORD.to_string()];
    names.extend((1..words).map(|i| format!("w{i}")));
    EmbeddingTable::new(
        dim,
        names,
        (0..entities).map(|i| format!("E{i}")).collect(),
        v(words * dim),
        v(entities * dim),
        v(dim * dim),
        v(dim),
    )
    .unwrap()
}

#[test]
fn text_vector_examples() {
    let t = random_table(4, 5, 3, 1);
    let single = t.text_vector(&["w1"]).unwrap();
    assert_eq!(single, t.project(t.word_vector("w1")));
    let twice = t.text_vector(&["w1", "w1"]).unwrap();
    for (a, b) in single.iter().zip(&twice) {
        assert!((a - b).abs() < 1e-6);
    }
    let ab = t.text_vector(&["w1", "w2", "w3"]).unwrap();
    let ba = t.text_vector(&["w3", "w1", "w2"]).unwrap();
    for (a, b) in ab.iter().zip(&ba) {
        assert!((a - b).abs() < 1e-6);
    }
    assert!(t.text_vector::<&str>(&[]).is_err());
    assert_eq!(t.word_vector("never-seen"), t.word_vector(UNK_WORD));
}

#[test]
fn nep_probability_examples() {
    let mut t = random_table(4, 3, 3, 2);
    let row: Vec<f32> = t.entity_vector(0).to_vec();
    t.entity_vecs[4..8].copy_from_slice(&row);
    let p = t.nep_probability(0, &["w1"], &[0, 1]).unwrap();
    assert!((p - 0.5).abs() < 1e-12);
    assert!(t.nep_probability(2, &["w1"], &[0, 1]).is_err());
}

#[test]
fn scaling_text_vector_sharpens() {
    let t = random_table(6, 4, 8, 3);
    let v = t.text_vector(&["w1", "w2"]).unwrap();
    let cands: Vec<usize> = (0..8).collect();
    let p = t.nep_distribution(&v, &cands);
    let scaled: Vec<f32> = v.iter().map(|x| x * 3.0).collect();
    let q = t.nep_distribution(&scaled, &cands);
    let argmax = |p: &[f64]| (0..p.len()).max_by(|&a, &b| p[a].total_cmp(&p[b])).unwrap();
    assert_eq!(argmax(&p), argmax(&q));
    assert!(q[argmax(&q)] >= p[argmax(&p)]);
}

#[test]
fn embed_entity_fallback() {
    let t = random_table(4, 4, 2, 4);
    let ctx = ["w1", "w2"];
    assert_eq!(t.embed_entity("e0", &ctx), t.entity_vector(0));
    let v_t = t.text_vector(&ctx).unwrap();
    assert_eq!(t.embed_entity("Unknown Person", &ctx), v_t);
    assert_eq!(t.embed_entity("Somebody Else", &ctx), v_t);
}

#[test]
fn mention_context_is_the_sentence() {
    let words = ["a", "b", ".", "c", "X", "d", ".", "e"];
    assert_eq!(mention_context(&words, 4, 5), ["c", "X", "d", "."]);
    let long: Vec<String> = (0..300).map(|i| format!("w{i}")).collect();
    let ctx = mention_context(&long, 150, 151);
    assert_eq!(ctx.len(), 2 * CONTEXT_RADIUS + 1);
    assert_eq!(ctx[0], "w100");
}

#[test]
fn nep_loss_gradient_matches_finite_differences() {
    let t = random_table(3, 4, 5, 5);
    let mut g = nep_loss_graph(&[1, 2, 2, 3], &[0, 3, 1]);
    let err = finite_difference_check(&mut g, &nep_bindings(&t), 1e-5).unwrap();
    assert!(err < 1e-6, "{err}");
}

#[test]
fn jgve_round_trip() {
    let t = random_table(3, 4, 2, 6);
    let back = EmbeddingTable::from_bytes(&t.to_bytes()).unwrap();
    assert_eq!(back, t);
    let mut bad = t.to_bytes();
    bad[0] = b'X';
    assert!(EmbeddingTable::from_bytes(&bad).is_err());
    assert!(EmbeddingTable::from_bytes(&t.to_bytes()[..20]).is_err());
}

#[test]
fn negatives_exclude_text_entities() {
    let kb = tiny_kb(1);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for doc in &kb.docs {
        let present = doc.entities();
        for _ in 0..20 {
            let negs = sample_negatives(kb.entities.len(), &present, 50, &mut rng);
            assert_eq!(negs.len(), kb.entities.len() - present.len());
            assert!(negs.iter().all(|n| !present.contains(n)));
            let distinct: BTreeSet<_> = negs.iter().collect();
            assert_eq!(distinct.len(), negs.len());
        }
    }
}

#[test]
fn training_learns_and_is_reproducible() {
    let kb = tiny_kb(10);
    let cfg = small_cfg();
    let a = train_embeddings(&kb, &cfg).unwrap();
    let b = train_embeddings(&kb, &cfg).unwrap();
    assert_eq!(a.table.to_bytes(), b.table.to_bytes());
    let first = a.epochs.first().unwrap().total();
    let last = a.epochs.last().unwrap().total();
    assert!(last <= first, "{first} -> {last}");
    let report = evaluate_nep(&kb, &a.table, cfg.negatives, 1).unwrap();
    assert!(report.top1 >= 0.9, "{report:?}");
    assert!(report.max_sum_error < 1e-6);
    let linked: f64 = kb
        .edges
        .iter()
        .map(|&(x, y)| cosine(a.table.entity_vector(x), a.table.entity_vector(y)))
        .sum::<f64>()
        / kb.edges.len() as f64;
    let mut all = 0.0;
    let mut n = 0.0;
    for x in 0..6 {
        for y in 0..6 {
            if x != y {
                all += cosine(a.table.entity_vector(x), a.table.entity_vector(y));
                n += 1.0;
            }
        }
    }
    assert!(linked > all / n, "linked {linked} vs all {}", all / n);
}

#[test]
fn empty_kb_is_rejected() {
    assert!(train_embeddings(&KnowledgeBase::default(), &small_cfg()).is_err());
}

proptest! {
    #[test]
    fn nep_normalises(seed in 0u64..1000, k in 1usize..8, dim in 1usize..6) {
        let t = random_table(dim, 3, 8, seed);
        let v = t.text_vector(&["w1", "w2"]).unwrap();
        let cands: Vec<usize> = (0..k).collect();
        let p = t.nep_distribution(&v, &cands);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }
}
