use std::collections::{BTreeMap, HashSet};

use super::{check_aligned, Tokens};
use crate::error::{invalid, Result};

/// Width of the gaussian length penalty.
pub const CIDER_SIGMA: f64 = 6.0;

type Vector<'a> = BTreeMap<&'a [String], f64>;

fn counts(tokens: &[String], n: usize) -> BTreeMap<&[String], f64> {
    let mut out = BTreeMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *out.entry(w).or_insert(0.0) += 1.0;
        }
    }
    out
}

fn tfidf<'a>(tokens: &'a [String], n: usize, df: &BTreeMap<&[String], usize>, log_docs: f64) -> (Vector<'a>, f64) {
    let mut v = counts(tokens, n);
    for (g, x) in v.iter_mut() {
        let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
        *x *= log_docs - d.ln();
    }
    let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
    (v, norm)
}

/// CIDEr-D with one reference per candidate.
///
/// Document frequencies come from the reference list, so at least two
/// references are required. For each n in 1..=4 the candidate and reference
/// tf-idf vectors are compared with the candidate weights clipped to the
/// reference, divided by both norms and damped by
/// `exp(-(len_c - len_r)² / 2σ²)`; the four values are averaged and scaled
/// by 10. An order whose vectors vanish contributes 0.
pub fn cider_d(candidates: &[Tokens], references: &[Tokens]) -> Result<f64> {
    check_aligned(candidates, references)?;
    if references.len() < 2 {
        return invalid("CIDEr-D needs at least two references for document frequencies");
    }
    let log_docs = (references.len() as f64).ln();
    let dfs: Vec<BTreeMap<&[String], usize>> = (1..=4)
        .map(|n| {
            let mut df = BTreeMap::new();
            for r in references {
                let seen: HashSet<&[String]> = if r.len() >= n { r.windows(n).collect() } else { HashSet::new() };
                for g in seen {
                    *df.entry(g).or_insert(0) += 1;
                }
            }
            df
        })
        .collect();
    let pairs: Vec<_> = candidates.iter().zip(references).collect();
    let scores = crate::par::map(&pairs, |(c, r)| {
        let delta = c.len() as f64 - r.len() as f64;
        let penalty = (-(delta * delta) / (2.0 * CIDER_SIGMA * CIDER_SIGMA)).exp();
        let mut total = 0.0;
        for n in 1..=4 {
            let (vc, nc) = tfidf(c, n, &dfs[n - 1], log_docs);
            let (vr, nr) = tfidf(r, n, &dfs[n - 1], log_docs);
            if nc == 0.0 || nr == 0.0 {
                continue;
            }
            let dot: f64 = vc
                .iter()
                .filter_map(|(g, &x)| vr.get(g).map(|&y| x.min(y) * y))
                .sum();
            total += penalty * dot / (nc * nr);
        }
        10.0 * total / 4.0
    });
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
