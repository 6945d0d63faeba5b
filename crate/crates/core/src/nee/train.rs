use std::collections::{BTreeMap, BTreeSet};

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::kb::KnowledgeBase;
use super::table::{EmbeddingTable, UNK_WORD};
use crate::error::{invalid, Result};
use crate::math::{init_uniform, sigmoid};

#[derive(Clone, Debug, PartialEq)]
pub struct NepConfig {
    pub dim: usize,
    /// Negative entities per entity-predictor example.
    pub negatives: usize,
    /// Negatives per skip-gram, link and anchor-context example.
    pub aux_negatives: usize,
    pub window: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Words seen fewer times share the unknown-word vector.
    pub min_count: usize,
}

impl Default for NepConfig {
    fn default() -> Self {
        Self {
            dim: 300,
            negatives: 50,
            aux_negatives: 5,
            window: 5,
            lr: 0.025,
            epochs: 10,
            seed: 0,
            min_count: 1,
        }
    }
}

/// Mean loss per objective over one epoch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct EpochLoss {
    pub skip_gram: f64,
    pub link: f64,
    pub anchor: f64,
    pub nep: f64,
}

impl EpochLoss {
    pub fn total(&self) -> f64 {
        self.skip_gram + self.link + self.anchor + self.nep
    }
}

#[derive(Clone, Debug)]
pub struct TrainedEmbeddings {
    pub table: EmbeddingTable,
    pub epochs: Vec<EpochLoss>,
}

/// Distinct entities outside `exclude`, at most `n`, in sampled order.
pub fn sample_negatives<R: Rng + ?Sized>(
    num_entities: usize,
    exclude: &BTreeSet<usize>,
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let pool: Vec<usize> = (0..num_entities).filter(|e| !exclude.contains(e)).collect();
    pool.choose_multiple(rng, n.min(pool.len())).copied().collect()
}

fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One negative-sampling update of input row `u` against output rows.
fn sgns_step(u: &mut [f32], out: &mut [f32], d: usize, pos: usize, negs: &[usize], lr: f32) -> f64 {
    let mut grad_u = vec![0.0f32; d];
    let mut loss = 0.0;
    let targets = std::iter::once((pos, 1.0f32)).chain(negs.iter().filter(|&&n| n != pos).map(|&n| (n, 0.0)));
    for (c, label) in targets {
        let row = &mut out[c * d..(c + 1) * d];
        let s = dot(u, row);
        loss += if label > 0.0 { softplus(-s as f64) } else { softplus(s as f64) };
        let g = sigmoid(s) - label;
        for k in 0..d {
            grad_u[k] += g * row[k];
            row[k] -= lr * g * u[k];
        }
    }
    for k in 0..d {
        u[k] -= lr * grad_u[k];
    }
    loss
}

struct State {
    d: usize,
    word_in: Vec<f32>,
    word_out: Vec<f32>,
    ent_in: Vec<f32>,
    ent_out: Vec<f32>,
    fc_w: Vec<f32>,
    fc_b: Vec<f32>,
}

impl State {
    fn row<'a>(m: &'a mut [f32], i: usize, d: usize) -> &'a mut [f32] {
        &mut m[i * d..(i + 1) * d]
    }

    /// Cross-entropy step of the entity predictor; `cands[0]` is the positive.
    fn nep_step(&mut self, word_ids: &[usize], cands: &[usize], lr: f32) -> f64 {
        let d = self.d;
        let n = word_ids.len() as f32;
        let mut mean = vec![0.0f32; d];
        for &w in word_ids {
            for (m, v) in mean.iter_mut().zip(&self.word_in[w * d..(w + 1) * d]) {
                *m += v / n;
            }
        }
        let mut v = self.fc_b.clone();
        for i in 0..d {
            let row = &self.fc_w[i * d..(i + 1) * d];
            for k in 0..d {
                v[k] += mean[i] * row[k];
            }
        }
        let logits: Vec<f64> = cands
            .iter()
            .map(|&e| dot(&self.ent_in[e * d..(e + 1) * d], &v) as f64)
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let loss = -(logits[0] - max - z.ln());
        let mut dv = vec![0.0f32; d];
        for (j, &e) in cands.iter().enumerate() {
            let p = ((logits[j] - max).exp() / z) as f32;
            let g = p - if j == 0 { 1.0 } else { 0.0 };
            let row = Self::row(&mut self.ent_in, e, d);
            for k in 0..d {
                dv[k] += g * row[k];
                row[k] -= lr * g * v[k];
            }
        }
        let mut dmean = vec![0.0f32; d];
        for i in 0..d {
            let row = &mut self.fc_w[i * d..(i + 1) * d];
            dmean[i] = dot(row, &dv);
            for k in 0..d {
                row[k] -= lr * mean[i] * dv[k];
            }
        }
        for k in 0..d {
            self.fc_b[k] -= lr * dv[k];
        }
        for &w in word_ids {
            let row = Self::row(&mut self.word_in, w, d);
            for k in 0..d {
                row[k] -= lr * dmean[k] / n;
            }
        }
        loss
    }
}

#[derive(Default)]
struct Mean {
    sum: f64,
    n: usize,
}

impl Mean {
    fn add(&mut self, x: f64) {
        self.sum += x;
        self.n += 1;
    }

    fn get(&self) -> f64 {
        if self.n == 0 {
            0.0
        } else {
            self.sum / self.n as f64
        }
    }
}

/// Word vocabulary of a KB: `<unk>` then lowercased words with at least
/// `min_count` occurrences, sorted, with their counts.
fn vocabulary(kb: &KnowledgeBase, min_count: usize) -> (Vec<String>, Vec<f64>) {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for d in &kb.docs {
        for w in &d.words {
            *counts.entry(w.to_lowercase()).or_default() += 1;
        }
    }
    let mut words = vec![UNK_WORD.to_string()];
    let mut freq = vec![0.0];
    let mut unk = 0;
    for (w, c) in counts {
        if c >= min_count.max(1) {
            words.push(w);
            freq.push(c as f64);
        } else {
            unk += c;
        }
    }
    freq[0] = unk as f64;
    (words, freq)
}

/// Joint skip-gram, entity-link, anchor-context and entity-predictor
/// training by plain SGD. The four objectives are summed unweighted.
pub fn train_embeddings(kb: &KnowledgeBase, cfg: &NepConfig) -> Result<TrainedEmbeddings> {
    if kb.entities.is_empty() || kb.docs.is_empty() || kb.edges.is_empty() {
        return invalid("knowledge base needs at least one entity, document and edge");
    }
    if cfg.negatives == 0 || cfg.dim == 0 {
        return invalid("negative count and dimension must be positive");
    }
    let d = cfg.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (words, freq) = vocabulary(kb, cfg.min_count);
    let index: std::collections::HashMap<&str, usize> =
        words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
    let docs: Vec<Vec<usize>> = kb
        .docs
        .iter()
        .map(|doc| {
            doc.words
                .iter()
                .map(|w| index.get(w.to_lowercase().as_str()).copied().unwrap_or(0))
                .collect()
        })
        .collect();
    let unigram = WeightedIndex::new(freq.iter().map(|f| f.powf(0.75)))
        .map_err(|e| crate::error::Error::Invalid(format!("word distribution: {e}")))?;
    let ne = kb.entities.len();
    let nw = words.len();
    let mut st = State {
        d,
        word_in: init_uniform(&[nw, d], d, &mut rng).into_data(),
        word_out: vec![0.0; nw * d],
        ent_in: init_uniform(&[ne, d], d, &mut rng).into_data(),
        ent_out: vec![0.0; ne * d],
        fc_w: init_uniform(&[d, d], d, &mut rng).into_data(),
        fc_b: vec![0.0; d],
    };
    let lr = cfg.lr as f32;
    let k = cfg.aux_negatives;
    let mut order: Vec<usize> = (0..kb.docs.len()).collect();
    let mut edges: Vec<(usize, usize)> = kb.edges.iter().flat_map(|&(a, b)| [(a, b), (b, a)]).collect();
    let mut log = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (mut sg, mut link, mut anchor, mut nep) = (Mean::default(), Mean::default(), Mean::default(), Mean::default());
        order.shuffle(&mut rng);
        for &di in &order {
            let ids = &docs[di];
            let doc = &kb.docs[di];
            for i in 0..ids.len() {
                let lo = i.saturating_sub(cfg.window);
                let hi = (i + cfg.window + 1).min(ids.len());
                for j in (lo..hi).filter(|&j| j != i) {
                    let negs: Vec<usize> = (0..k).map(|_| unigram.sample(&mut rng)).collect();
                    let mut u = State::row(&mut st.word_in, ids[i], d).to_vec();
                    sg.add(sgns_step(&mut u, &mut st.word_out, d, ids[j], &negs, lr));
                    State::row(&mut st.word_in, ids[i], d).copy_from_slice(&u);
                }
            }
            for a in &doc.anchors {
                let lo = a.start.saturating_sub(cfg.window);
                let hi = (a.end + cfg.window).min(ids.len());
                for j in (lo..a.start).chain(a.end..hi) {
                    let negs: Vec<usize> = (0..k).map(|_| unigram.sample(&mut rng)).collect();
                    let mut u = State::row(&mut st.ent_in, a.entity, d).to_vec();
                    anchor.add(sgns_step(&mut u, &mut st.word_out, d, ids[j], &negs, lr));
                    State::row(&mut st.ent_in, a.entity, d).copy_from_slice(&u);
                }
            }
            if !ids.is_empty() {
                let present = doc.entities();
                for &e in &present {
                    let mut cands = vec![e];
                    cands.extend(sample_negatives(ne, &present, cfg.negatives, &mut rng));
                    nep.add(st.nep_step(ids, &cands, lr));
                }
            }
        }
        edges.shuffle(&mut rng);
        for &(a, b) in &edges {
            let negs: Vec<usize> = (0..k).map(|_| rng.gen_range(0..ne)).collect();
            let mut u = State::row(&mut st.ent_in, a, d).to_vec();
            link.add(sgns_step(&mut u, &mut st.ent_out, d, b, &negs, lr));
            State::row(&mut st.ent_in, a, d).copy_from_slice(&u);
        }
        log.push(EpochLoss {
            skip_gram: sg.get(),
            link: link.get(),
            anchor: anchor.get(),
            nep: nep.get(),
        });
    }
    let table = EmbeddingTable::new(
        d,
        words,
        kb.entities.clone(),
        st.word_in,
        st.ent_in,
        st.fc_w,
        st.fc_b,
    )?;
    Ok(TrainedEmbeddings { table, epochs: log })
}

/// Entity-predictor evaluation over the anchored entities of every document.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NepReport {
    pub evaluations: usize,
    /// Share of evaluations where the anchored entity ranks first in E*.
    pub top1: f64,
    /// Largest `|Σ P - 1|` seen.
    pub max_sum_error: f64,
}

pub fn evaluate_nep(
    kb: &KnowledgeBase,
    table: &EmbeddingTable,
    negatives: usize,
    seed: u64,
) -> Result<NepReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut n, mut hits, mut worst) = (0usize, 0usize, 0.0f64);
    for doc in &kb.docs {
        if doc.words.is_empty() {
            continue;
        }
        let v_t = table.text_vector(&doc.words)?;
        let present = doc.entities();
        for &e in &present {
            let mut cands = vec![e];
            cands.extend(sample_negatives(kb.entities.len(), &present, negatives, &mut rng));
            let p = table.nep_distribution(&v_t, &cands);
            worst = worst.max((p.iter().sum::<f64>() - 1.0).abs());
            if p[1..].iter().all(|&q| q < p[0]) {
                hits += 1;
            }
            n += 1;
        }
    }
    if n == 0 {
        return invalid("no anchored documents to evaluate");
    }
    Ok(NepReport {
        evaluations: n,
        top1: hits as f64 / n as f64,
        max_sum_error: worst,
    })
}
