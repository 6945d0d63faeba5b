use std::collections::HashMap;

use super::{check_aligned, Tokens};
use crate::error::Result;

pub(crate) fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus BLEU-4 with uniform weights, one reference per candidate and no
/// smoothing: any n-gram order without a clipped match gives 0.
pub fn bleu4(candidates: &[Tokens], references: &[Tokens]) -> Result<f64> {
    check_aligned(candidates, references)?;
    let mut hits = [0usize; 4];
    let mut totals = [0usize; 4];
    let (mut cand_len, mut ref_len) = (0usize, 0usize);
    for (c, r) in candidates.iter().zip(references) {
        cand_len += c.len();
        ref_len += r.len();
        for n in 1..=4 {
            let rc = ngram_counts(r, n);
            for (g, k) in ngram_counts(c, n) {
                hits[n - 1] += k.min(rc.get(g).copied().unwrap_or(0));
                totals[n - 1] += k;
            }
        }
    }
    if hits.contains(&0) {
        return Ok(0.0);
    }
    let log_p: f64 = (0..4).map(|i| (hits[i] as f64 / totals[i] as f64).ln()).sum::<f64>() / 4.0;
    let bp = if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    };
    Ok(bp * log_p.exp())
}
