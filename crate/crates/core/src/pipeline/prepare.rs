use std::path::Path;

use super::dataset::DatasetRecord;
use super::features::FeatureStore;
use crate::annotate::{Annotation, Annotator};
use crate::error::{invalid, Result};
use crate::math::Tensor;
use crate::model::{ModelConfig, ModelInput};
use crate::nee::{mention_context, EmbeddingTable};
use crate::template::{extract_components, ComponentVector};
use crate::tokenize::Tokenizer;

pub const VOCAB_FILE: &str = "vocab.tsv";
pub const MERGES_FILE: &str = "merges.txt";

/// Loads `vocab.tsv` and `merges.txt` from a preprocessing output directory.
pub fn load_tokenizer(dir: &Path) -> Result<Tokenizer> {
    Tokenizer::load(&dir.join(VOCAB_FILE), &dir.join(MERGES_FILE))
}

/// Everything needed to turn dataset records into model inputs.
pub struct Resources {
    pub tokenizer: Tokenizer,
    pub annotator: Annotator,
    pub embeddings: Option<EmbeddingTable>,
    pub features: FeatureStore,
}

impl Resources {
    pub fn caption_annotation(&self, rec: &DatasetRecord) -> Annotation {
        rec.caption_annotation
            .clone()
            .unwrap_or_else(|| self.annotator.annotate(&rec.caption))
    }

    pub fn article_annotation(&self, rec: &DatasetRecord) -> Annotation {
        rec.article_annotation
            .clone()
            .unwrap_or_else(|| self.annotator.annotate_words(rec.article_words()))
    }

    /// Components of the gold caption.
    pub fn oracle(&self, rec: &DatasetRecord) -> ComponentVector {
        let a = self.caption_annotation(rec);
        extract_components(&a.entities, &a.pos)
    }

    /// One row per article entity mention: its KB vector when the mention
    /// resolves, else the text vector of its sentence. Without an embedding
    /// table the matrix has no rows.
    pub fn entity_features(&self, rec: &DatasetRecord, d_entity: usize) -> Result<Tensor<f32>> {
        let Some(table) = &self.embeddings else {
            return Ok(Tensor::zeros(&[0, d_entity]));
        };
        if table.dim != d_entity {
            return invalid(format!(
                "embedding table has dimension {} but the model expects {d_entity}",
                table.dim
            ));
        }
        let ann = self.article_annotation(rec);
        let rows: Vec<Vec<f32>> = ann
            .entities
            .iter()
            .map(|e| {
                let mention = ann.words[e.start..e.end].join(" ");
                table.embed_entity(&mention, mention_context(&ann.words, e.start, e.end))
            })
            .collect();
        Tensor::from_rows(&rows, d_entity)
    }

    pub fn input(&self, rec: &DatasetRecord, cfg: &ModelConfig) -> Result<ModelInput> {
        let image = self.features.load(&rec.image_feature)?;
        let encode = |s: &str| self.tokenizer.encode(s).into_iter().map(|t| t as usize).collect::<Vec<_>>();
        let input = ModelInput {
            image,
            article: encode(&rec.article_text()),
            entities: self.entity_features(rec, cfg.d_entity)?,
            caption: encode(&rec.caption),
            oracle: self.oracle(rec),
        };
        input
            .validate(cfg)
            .map_err(|e| crate::Error::Record { id: rec.id.clone(), msg: e.to_string() })?;
        Ok(input)
    }

    pub fn inputs(&self, records: &[DatasetRecord], cfg: &ModelConfig) -> Result<Vec<ModelInput>> {
        crate::par::try_map(records, |r| self.input(r, cfg))
    }
}
