//! Caption, named-entity and template-component evaluation.
//!
//! Caption metrics work on lowercased word tokens (see [`caption_tokens`]);
//! every corpus function takes aligned candidate and reference lists and
//! returns an error when the lengths differ or the corpus is empty.

mod bleu;
mod cider;
mod meteor;
mod overlap;
mod rouge;

use serde::{Deserialize, Serialize};

pub use bleu::bleu4;
pub use cider::{cider_d, CIDER_SIGMA};
pub use meteor::{meteor_lite, METEOR_ALPHA, METEOR_BETA, METEOR_GAMMA};
pub use overlap::{component_pr, component_pr_annotated, entity_pr, entity_pr_annotated, entity_set};
pub use rouge::{rouge_l, ROUGE_BETA};

use crate::annotate::{split_words, Annotator};
use crate::error::{invalid, Result};
use crate::template::Component;

pub type Tokens = Vec<String>;

/// Lowercased words of `text` with punctuation-only tokens dropped.
pub fn caption_tokens(text: &str) -> Tokens {
    split_words(text)
        .into_iter()
        .filter(|w| w.chars().any(char::is_alphanumeric))
        .map(|w| w.to_lowercase())
        .collect()
}

pub(crate) fn check_aligned<A, B>(candidates: &[A], references: &[B]) -> Result<()> {
    if candidates.len() != references.len() {
        return invalid(format!(
            "{} candidates but {} references",
            candidates.len(),
            references.len()
        ));
    }
    if candidates.is_empty() {
        return invalid("cannot score an empty corpus");
    }
    Ok(())
}

/// Precision and recall where an empty denominator yields 0 and sets the flag.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrScore {
    pub precision: f64,
    pub recall: f64,
    pub precision_undefined: bool,
    pub recall_undefined: bool,
}

impl PrScore {
    pub fn from_counts(hits: usize, predicted: usize, gold: usize) -> Self {
        let ratio = |d: usize| if d == 0 { 0.0 } else { hits as f64 / d as f64 };
        Self {
            precision: ratio(predicted),
            recall: ratio(gold),
            precision_undefined: predicted == 0,
            recall_undefined: gold == 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentScore {
    pub component: Component,
    #[serde(flatten)]
    pub score: PrScore,
}

/// Per-component scores in who, when, where, misc, context order plus the
/// unweighted means over the five.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentReport {
    pub components: Vec<ComponentScore>,
    pub macro_precision: f64,
    pub macro_recall: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub captions: usize,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor_lite: f64,
    pub cider_d: f64,
    pub entity: PrScore,
    #[serde(flatten)]
    pub component: ComponentReport,
}

impl MetricReport {
    /// Pretty JSON with keys in declaration order.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scores generated captions against their references.
///
/// CIDEr-D needs at least two references; with fewer it is reported as 0.
pub fn evaluate(candidates: &[String], references: &[String], annotator: &Annotator) -> Result<MetricReport> {
    check_aligned(candidates, references)?;
    let cand: Vec<Tokens> = candidates.iter().map(|c| caption_tokens(c)).collect();
    let refs: Vec<Tokens> = references.iter().map(|r| caption_tokens(r)).collect();
    let gen_ann = crate::par::map(candidates, |c| annotator.annotate(c));
    let ref_ann = crate::par::map(references, |r| annotator.annotate(r));
    Ok(MetricReport {
        captions: candidates.len(),
        bleu4: bleu4(&cand, &refs)?,
        rouge_l: rouge_l(&cand, &refs)?,
        meteor_lite: meteor_lite(&cand, &refs)?,
        cider_d: if refs.len() >= 2 { cider_d(&cand, &refs)? } else { 0.0 },
        entity: entity_pr_annotated(&gen_ann, &ref_ann)?,
        component: component_pr_annotated(&gen_ann, &ref_ann)?,
    })
}

#[cfg(test)]
mod tests;
