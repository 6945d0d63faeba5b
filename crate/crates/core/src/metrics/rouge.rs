use super::{check_aligned, Tokens};
use crate::error::Result;

/// Recall weight of the ROUGE-L F-measure.
pub const ROUGE_BETA: f64 = 1.2;

pub(crate) fn lcs(a: &[String], b: &[String]) -> usize {
    let mut row = vec![0usize; b.len() + 1];
    for x in a {
        let mut diag = 0;
        for (j, y) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if x == y { diag + 1 } else { up.max(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

fn pair_score(c: &[String], r: &[String]) -> f64 {
    let l = lcs(c, r);
    if l == 0 {
        return 0.0;
    }
    let p = l as f64 / c.len() as f64;
    let rec = l as f64 / r.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    (1.0 + b2) * p * rec / (rec + b2 * p)
}

/// Mean over pairs of the longest-common-subsequence F-measure.
pub fn rouge_l(candidates: &[Tokens], references: &[Tokens]) -> Result<f64> {
    check_aligned(candidates, references)?;
    let scores = crate::par::map(&candidates.iter().zip(references).collect::<Vec<_>>(), |(c, r)| {
        pair_score(c, r)
    });
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
