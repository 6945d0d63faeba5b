use std::collections::BTreeSet;

use super::{check_aligned, ComponentReport, ComponentScore, PrScore};
use crate::annotate::{Annotation, Annotator};
use crate::error::Result;
use crate::template::{extract_components, Component, NUM_COMPONENTS};

/// Distinct lowercased entity surfaces of one caption.
pub fn entity_set(a: &Annotation) -> BTreeSet<String> {
    a.entities
        .iter()
        .map(|e| {
            let surface = if e.surface.is_empty() {
                a.words[e.start..e.end].join(" ")
            } else {
                e.surface.clone()
            };
            surface.to_lowercase()
        })
        .collect()
}

/// Micro-averaged entity precision and recall over exact surface matches.
pub fn entity_pr_annotated(generated: &[Annotation], references: &[Annotation]) -> Result<PrScore> {
    check_aligned(generated, references)?;
    let (mut hits, mut predicted, mut gold) = (0, 0, 0);
    for (g, r) in generated.iter().zip(references) {
        let (gs, rs) = (entity_set(g), entity_set(r));
        hits += gs.intersection(&rs).count();
        predicted += gs.len();
        gold += rs.len();
    }
    Ok(PrScore::from_counts(hits, predicted, gold))
}

pub fn entity_pr(generated: &[String], references: &[String], annotator: &Annotator) -> Result<PrScore> {
    let (g, r) = annotate_both(generated, references, annotator)?;
    entity_pr_annotated(&g, &r)
}

/// Caption-level precision and recall for each component, macro-averaged.
pub fn component_pr_annotated(generated: &[Annotation], references: &[Annotation]) -> Result<ComponentReport> {
    check_aligned(generated, references)?;
    let mut hits = [0usize; NUM_COMPONENTS];
    let mut predicted = [0usize; NUM_COMPONENTS];
    let mut gold = [0usize; NUM_COMPONENTS];
    for (g, r) in generated.iter().zip(references) {
        let gv = extract_components(&g.entities, &g.pos);
        let rv = extract_components(&r.entities, &r.pos);
        for c in 0..NUM_COMPONENTS {
            let (a, b) = (gv.alpha[c] == 1.0, rv.alpha[c] == 1.0);
            hits[c] += usize::from(a && b);
            predicted[c] += usize::from(a);
            gold[c] += usize::from(b);
        }
    }
    let components: Vec<ComponentScore> = Component::ALL
        .iter()
        .map(|&component| ComponentScore {
            component,
            score: PrScore::from_counts(
                hits[component.index()],
                predicted[component.index()],
                gold[component.index()],
            ),
        })
        .collect();
    let n = NUM_COMPONENTS as f64;
    Ok(ComponentReport {
        macro_precision: components.iter().map(|c| c.score.precision).sum::<f64>() / n,
        macro_recall: components.iter().map(|c| c.score.recall).sum::<f64>() / n,
        components,
    })
}

pub fn component_pr(generated: &[String], references: &[String], annotator: &Annotator) -> Result<ComponentReport> {
    let (g, r) = annotate_both(generated, references, annotator)?;
    component_pr_annotated(&g, &r)
}

fn annotate_both(
    generated: &[String],
    references: &[String],
    annotator: &Annotator,
) -> Result<(Vec<Annotation>, Vec<Annotation>)> {
    check_aligned(generated, references)?;
    Ok((
        crate::par::map(generated, |t| annotator.annotate(t)),
        crate::par::map(references, |t| annotator.annotate(t)),
    ))
}
