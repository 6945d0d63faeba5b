//! Joint word and entity embeddings with the neural entity predictor.

mod kb;
mod table;
mod train;

pub use kb::{normalize_surface, Anchor, Document, KnowledgeBase};
pub use table::{cosine, nep_bindings, nep_loss_graph, EmbeddingTable, UNK_WORD};
pub use train::{
    evaluate_nep, sample_negatives, train_embeddings, EpochLoss, NepConfig, NepReport,
    TrainedEmbeddings,
};

/// Words on either side of a mention used when its context is a window.
pub const CONTEXT_RADIUS: usize = 50;

const SENTENCE_END: &[&str] = &[".", "!", "?"];

/// Context of the mention `words[start..end]` for the missing-entity
/// fallback: its sentence, cut to `CONTEXT_RADIUS` words either side.
pub fn mention_context<S: AsRef<str>>(words: &[S], start: usize, end: usize) -> &[S] {
    let is_end = |w: &S| SENTENCE_END.contains(&w.as_ref());
    let sent_start = words[..start]
        .iter()
        .rposition(is_end)
        .map_or(0, |i| i + 1);
    let sent_end = words[end..]
        .iter()
        .position(is_end)
        .map_or(words.len(), |i| end + i + 1);
    let lo = sent_start.max(start.saturating_sub(CONTEXT_RADIUS));
    let hi = sent_end.min(end + CONTEXT_RADIUS);
    &words[lo..hi]
}

#[cfg(test)]
mod tests;
