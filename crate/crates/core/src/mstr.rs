//! Multi-span reading of articles longer than one encoder window.
//!
//! An article is capped at `max_len` tokens (its head is kept) and read
//! as one window when it fits, otherwise as two windows anchored at the start
//! and end. Rows seen by both windows are averaged.

use crate::error::{invalid, Result};
use crate::math::{Graph, NodeId, Real, Tensor};

pub const WINDOW: usize = 512;
pub const MAX_LEN: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpanLayout {
    pub window: usize,
    pub max_len: usize,
    /// Covered length, `min(len, max_len)`.
    pub len: usize,
    pub spans: Vec<(usize, usize)>,
}

impl SpanLayout {
    /// Rows read by both windows; zero for a single span.
    pub fn overlap(&self) -> usize {
        match self.spans.as_slice() {
            [(_, a_end), (b_start, _)] => a_end.saturating_sub(*b_start),
            _ => 0,
        }
    }
}

pub fn split_spans(len: usize, window: usize, max_len: usize) -> Result<SpanLayout> {
    if len == 0 {
        return invalid("cannot split an empty article");
    }
    if window == 0 || max_len < window || max_len > 2 * window {
        return invalid(format!(
            "length cap {max_len} must lie between the window {window} and twice the window"
        ));
    }
    let len = len.min(max_len);
    let spans = if len <= window {
        vec![(0, len)]
    } else {
        vec![(0, window), (len - window, len)]
    };
    Ok(SpanLayout {
        window,
        max_len,
        len,
        spans,
    })
}

/// Row ranges of the merged output: `(out_start, out_end, sources)` where
/// each source is `(span index, first row in that span)`.
fn segments(layout: &SpanLayout) -> Vec<(usize, usize, Vec<(usize, usize)>)> {
    match layout.spans.as_slice() {
        [(0, end)] => vec![(0, *end, vec![(0, 0)])],
        [(0, w), (b, len)] => {
            let mut out = vec![(0, *b, vec![(0, 0)])];
            out.push((*b, *w, vec![(0, *b), (1, 0)]));
            out.push((*w, *len, vec![(1, w - b)]));
            out.retain(|s| s.0 < s.1);
            out
        }
        _ => unreachable!("layouts hold one or two spans"),
    }
}

fn check_reps<T: Real>(layout: &SpanLayout, reps: &[Tensor<T>]) -> Result<usize> {
    if reps.len() != layout.spans.len() {
        return invalid(format!(
            "{} span representations for {} spans",
            reps.len(),
            layout.spans.len()
        ));
    }
    let dim = reps[0].cols();
    for (r, (s, e)) in reps.iter().zip(&layout.spans) {
        if r.rows() != e - s {
            return invalid(format!("span [{s}, {e}) has {} rows", r.rows()));
        }
        if r.cols() != dim {
            return invalid(format!("feature dimension {} differs from {dim}", r.cols()));
        }
    }
    Ok(dim)
}

/// Per-token representation of the covered article.
pub fn merge_spans<T: Real>(layout: &SpanLayout, reps: &[Tensor<T>]) -> Result<Tensor<T>> {
    let dim = check_reps(layout, reps)?;
    let mut data = Vec::with_capacity(layout.len * dim);
    let half = T::of(0.5);
    for (start, end, sources) in segments(layout) {
        for i in 0..end - start {
            match sources.as_slice() {
                [(s, off)] => data.extend_from_slice(reps[*s].row_slice(off + i)),
                [(a, oa), (b, ob)] => {
                    let (ra, rb) = (reps[*a].row_slice(oa + i), reps[*b].row_slice(ob + i));
                    data.extend(ra.iter().zip(rb).map(|(x, y)| (*x + *y) * half));
                }
                _ => unreachable!(),
            }
        }
    }
    Tensor::new(vec![layout.len, dim], data)
}

/// [`merge_spans`] as graph nodes, so gradients reach every span.
pub fn merge_spans_node<T: Real>(g: &mut Graph<T>, layout: &SpanLayout, reps: &[NodeId]) -> NodeId {
    assert_eq!(reps.len(), layout.spans.len());
    if reps.len() == 1 {
        return reps[0];
    }
    let parts: Vec<NodeId> = segments(layout)
        .into_iter()
        .map(|(start, end, sources)| {
            let n = end - start;
            let mut rows: Vec<NodeId> = sources
                .iter()
                .map(|&(s, off)| g.slice_rows(reps[s], off, off + n))
                .collect();
            if rows.len() == 2 {
                let sum = g.add(rows[0], rows[1]);
                g.scale(sum, 0.5)
            } else {
                rows.remove(0)
            }
        })
        .collect();
    g.concat_rows(&parts)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::math::Bindings;

    #[test]
    fn layout_examples() {
        let l = split_spans(400, WINDOW, MAX_LEN).unwrap();
        assert_eq!(l.spans, [(0, 400)]);
        let l = split_spans(600, WINDOW, MAX_LEN).unwrap();
        assert_eq!(l.spans, [(0, 512), (88, 600)]);
        assert_eq!(l.overlap(), 424);
        assert_eq!(split_spans(1000, WINDOW, MAX_LEN).unwrap().overlap(), 24);
        assert_eq!(split_spans(513, WINDOW, MAX_LEN).unwrap().overlap(), 511);
        let l = split_spans(1500, WINDOW, MAX_LEN).unwrap();
        assert_eq!((l.len, l.spans.clone()), (1000, vec![(0, 512), (488, 1000)]));
        assert!(split_spans(0, WINDOW, MAX_LEN).is_err());
        assert!(split_spans(10, 8, 4).is_err());
        assert!(split_spans(10, 4, 9).is_err());
    }

    #[test]
    fn exhaustive_coverage() {
        for len in 1..=MAX_LEN {
            let l = split_spans(len, WINDOW, MAX_LEN).unwrap();
            let mut cover = vec![0u8; l.len];
            for &(s, e) in &l.spans {
                cover[s..e].iter_mut().for_each(|c| *c += 1);
            }
            assert!(cover.iter().all(|&c| (1..=2).contains(&c)), "len {len}");
            if len > WINDOW {
                assert_eq!(l.overlap(), 2 * WINDOW - len);
                assert!((24..=511).contains(&l.overlap()));
            } else {
                assert_eq!(l.spans.len(), 1);
            }
        }
    }

    fn rows(n: usize, dim: usize, f: impl Fn(usize, usize) -> f64) -> Tensor<f64> {
        let data = (0..n * dim).map(|i| f(i / dim, i % dim)).collect();
        Tensor::new(vec![n, dim], data).unwrap()
    }

    #[test]
    fn merge_examples() {
        let l = split_spans(5, 4, 8).unwrap();
        assert_eq!(l.spans, [(0, 4), (1, 5)]);
        let a = rows(4, 2, |i, j| (i * 10 + j) as f64);
        let b = rows(4, 2, |i, j| (100 + i * 10 + j) as f64);
        let m = merge_spans(&l, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(m.shape(), &[5, 2]);
        assert_eq!(m.row_slice(0), a.row_slice(0));
        assert_eq!(m.row_slice(1), &[(10.0 + 100.0) / 2.0, (11.0 + 101.0) / 2.0]);
        assert_eq!(m.row_slice(4), b.row_slice(3));
        let single = split_spans(3, 4, 8).unwrap();
        let x = rows(3, 2, |i, j| (i + j) as f64);
        assert_eq!(merge_spans(&single, std::slice::from_ref(&x)).unwrap(), x);
        assert!(merge_spans(&l, &[a, rows(4, 3, |_, _| 0.0)]).is_err());
    }

    proptest! {
        #[test]
        fn graph_merge_matches(len in 1usize..24, window in 1usize..12, extra in 0usize..12) {
            let max_len = window + extra.min(window);
            let l = split_spans(len, window, max_len).unwrap();
            let reps: Vec<Tensor<f64>> = l
                .spans
                .iter()
                .enumerate()
                .map(|(k, (s, e))| rows(e - s, 3, |i, j| (k * 1000 + i * 7 + j) as f64))
                .collect();
            let direct = merge_spans(&l, &reps).unwrap();
            let mut g = Graph::<f64>::new();
            let mut b = Bindings::new();
            let ids: Vec<NodeId> = reps
                .iter()
                .enumerate()
                .map(|(k, r)| {
                    b.insert(format!("r{k}"), r.clone());
                    g.input(&format!("r{k}"))
                })
                .collect();
            let out = merge_spans_node(&mut g, &l, &ids);
            g.set_root(out);
            prop_assert_eq!(g.evaluate(&b).unwrap(), &direct);
        }

        #[test]
        fn constant_preserving(len in 1usize..40, c in -5.0f64..5.0) {
            let l = split_spans(len, 16, 32).unwrap();
            let reps: Vec<Tensor<f64>> =
                l.spans.iter().map(|(s, e)| Tensor::full(&[e - s, 2], c)).collect();
            let m = merge_spans(&l, &reps).unwrap();
            prop_assert!(m.data().iter().all(|&v| v == c));
        }
    }
}
