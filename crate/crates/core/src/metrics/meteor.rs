use super::{check_aligned, Tokens};
use crate::error::Result;

pub const METEOR_ALPHA: f64 = 0.9;
pub const METEOR_BETA: f64 = 3.0;
pub const METEOR_GAMMA: f64 = 0.5;

/// Aligns candidate positions to reference positions, first by exact token
/// and then by Porter stem. Within a stage each candidate word takes the
/// reference position right after the previous match when it fits, else the
/// leftmost free one, which keeps chunks few for in-order matches.
fn align(c: &[String], r: &[String]) -> Vec<Option<usize>> {
    let c_stem: Vec<String> = c.iter().map(|w| porter_stemmer::stem(w)).collect();
    let r_stem: Vec<String> = r.iter().map(|w| porter_stemmer::stem(w)).collect();
    let mut map = vec![None; c.len()];
    let mut used = vec![false; r.len()];
    for stage in 0..2 {
        let same = |i: usize, j: usize| {
            if stage == 0 {
                c[i] == r[j]
            } else {
                c_stem[i] == r_stem[j]
            }
        };
        let mut prev: Option<usize> = None;
        for i in 0..c.len() {
            if let Some(j) = map[i] {
                prev = Some(j);
                continue;
            }
            let next = prev.map(|p| p + 1).filter(|&j| j < r.len() && !used[j] && same(i, j));
            let pick = next.or_else(|| (0..r.len()).find(|&j| !used[j] && same(i, j)));
            if let Some(j) = pick {
                used[j] = true;
                map[i] = Some(j);
                prev = Some(j);
            }
        }
    }
    map
}

fn pair_score(c: &[String], r: &[String]) -> f64 {
    let map = align(c, r);
    let matched: Vec<usize> = map.iter().flatten().copied().collect();
    let m = matched.len();
    if m == 0 {
        return 0.0;
    }
    let mut chunks = 0;
    let mut last: Option<usize> = None;
    for slot in &map {
        match (*slot, last) {
            (Some(j), Some(p)) if j == p + 1 => {}
            (Some(_), _) => chunks += 1,
            (None, _) => {}
        }
        last = *slot;
    }
    let p = m as f64 / c.len() as f64;
    let rec = m as f64 / r.len() as f64;
    let f_mean = p * rec / (METEOR_ALPHA * p + (1.0 - METEOR_ALPHA) * rec);
    let penalty = METEOR_GAMMA * (chunks as f64 / m as f64).powf(METEOR_BETA);
    f_mean * (1.0 - penalty)
}

/// Mean over pairs of METEOR restricted to exact and stem matches.
pub fn meteor_lite(candidates: &[Tokens], references: &[Tokens]) -> Result<f64> {
    check_aligned(candidates, references)?;
    let scores = crate::par::map(&candidates.iter().zip(references).collect::<Vec<_>>(), |(c, r)| {
        pair_score(c, r)
    });
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}
