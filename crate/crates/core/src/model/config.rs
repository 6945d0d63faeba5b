use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::mstr;

/// Network dimensions and training constants.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_image: usize,
    pub d_text: usize,
    pub d_entity: usize,
    pub d_model: usize,
    pub heads: usize,
    pub ff_dim: usize,
    pub text_layers: usize,
    pub blocks: usize,
    pub subblocks: usize,
    pub vocab_size: usize,
    /// Longest generated caption, in tokens, excluding BOS and EOS.
    pub max_len: usize,
    pub window: usize,
    pub max_article: usize,
    /// Weight of the component loss.
    pub lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_image: 64,
            d_text: 64,
            d_entity: 64,
            d_model: 64,
            heads: 4,
            ff_dim: 128,
            text_layers: 1,
            blocks: 4,
            subblocks: 5,
            vocab_size: crate::tokenize::DEFAULT_VOCAB_SIZE,
            max_len: 50,
            window: mstr::WINDOW,
            max_article: mstr::MAX_LEN,
            lambda: 1.0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return invalid(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            ));
        }
        if self.d_text != self.d_model {
            return invalid("the text encoder width must equal d_model");
        }
        if self.blocks != 4 || self.subblocks != 5 {
            return invalid("the decoder has exactly 4 blocks and 5 component subblocks");
        }
        if self.vocab_size < 5 || self.max_len == 0 || self.ff_dim == 0 {
            return invalid("vocabulary, caption length and feed-forward width must be positive");
        }
        if self.d_image == 0 || self.d_entity == 0 {
            return invalid("feature dimensions must be positive");
        }
        mstr::split_spans(1, self.window, self.max_article)?;
        Ok(())
    }

    /// Canonical JSON: fields in declaration order, no whitespace.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }
}
