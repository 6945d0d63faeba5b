//! Graph construction for the encoder, component head and hybrid decoder.

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::params::{block_prefixes, MEMORIES};
use crate::error::{invalid, Result};
use crate::math::{Graph, NodeId, Real, Tensor};
use crate::mstr::{merge_spans_node, split_spans};
use crate::template::ComponentVector;

/// One training or inference example in model terms.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelInput {
    /// `[regions, d_image]`.
    pub image: Tensor<f32>,
    /// Article token ids.
    pub article: Vec<usize>,
    /// `[mentions, d_entity]`; may have zero rows.
    pub entities: Tensor<f32>,
    /// Caption token ids without BOS/EOS.
    pub caption: Vec<usize>,
    pub oracle: ComponentVector,
}

impl ModelInput {
    pub fn validate(&self, cfg: &ModelConfig) -> Result<()> {
        if self.image.rows() == 0 || self.image.cols() != cfg.d_image {
            return invalid(format!(
                "image features {:?} do not match d_image {}",
                self.image.shape(),
                cfg.d_image
            ));
        }
        if self.entities.cols() != cfg.d_entity {
            return invalid(format!(
                "entity features {:?} do not match d_entity {}",
                self.entities.shape(),
                cfg.d_entity
            ));
        }
        if let Some(t) = self.article.iter().chain(&self.caption).find(|&&t| t >= cfg.vocab_size) {
            return invalid(format!("token id {t} outside vocabulary of {}", cfg.vocab_size));
        }
        Ok(())
    }

    /// Decoder input `[BOS, y…]` and targets `[y…, EOS]`, caption cut to `max_len`.
    pub fn teacher_forcing(&self, cfg: &ModelConfig) -> (Vec<usize>, Vec<usize>) {
        use crate::tokenize::{BOS, EOS};
        let cap = &self.caption[..self.caption.len().min(cfg.max_len)];
        let mut input = vec![BOS as usize];
        input.extend_from_slice(cap);
        let mut target = cap.to_vec();
        target.push(EOS as usize);
        (input, target)
    }
}

/// Which encoder features are replaced by zeros.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZeroOut {
    #[default]
    None,
    /// Article and entity features.
    Text,
    Image,
    All,
}

impl ZeroOut {
    pub fn text(self) -> bool {
        matches!(self, ZeroOut::Text | ZeroOut::All)
    }

    pub fn image(self) -> bool {
        matches!(self, ZeroOut::Image | ZeroOut::All)
    }
}

impl std::str::FromStr for ZeroOut {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(ZeroOut::None),
            "text" => Ok(ZeroOut::Text),
            "image" => Ok(ZeroOut::Image),
            "all" => Ok(ZeroOut::All),
            _ => invalid(format!("unknown zero-out mode `{s}`; use none, text, image or all")),
        }
    }
}

/// Encoder outputs `X^I`, `X^T`, `X^E`, each `[rows, d_model]`.
#[derive(Clone, Copy, Debug)]
pub struct Memories {
    pub image: NodeId,
    pub text: NodeId,
    pub entity: NodeId,
}

impl Memories {
    pub fn nodes(&self) -> [NodeId; 3] {
        [self.image, self.text, self.entity]
    }
}

/// Decoder nodes of interest.
#[derive(Clone, Debug)]
pub struct DecoderNodes {
    /// Outputs of the component subblocks, in component order.
    pub components: Vec<NodeId>,
    pub blended: NodeId,
    /// `[tokens, vocab]`.
    pub logits: NodeId,
}

pub struct Net<'g, T: Real> {
    pub g: &'g mut Graph<T>,
    pub cfg: &'g ModelConfig,
}

/// `Σ α_i · parts[i] / n`, the template-weighted mean of subblock outputs.
pub fn blend_components<T: Real>(g: &mut Graph<T>, alpha: NodeId, parts: &[NodeId]) -> NodeId {
    g.blend(alpha, parts, 1.0 / parts.len() as f64)
}

impl<'g, T: Real> Net<'g, T> {
    pub fn new(g: &'g mut Graph<T>, cfg: &'g ModelConfig) -> Self {
        Self { g, cfg }
    }

    fn linear(&mut self, name: &str, x: NodeId) -> NodeId {
        let w = self.g.param(&format!("{name}.w"));
        let b = self.g.param(&format!("{name}.b"));
        let y = self.g.matmul(x, w);
        self.g.add(y, b)
    }

    fn zeros(&mut self, rows: usize) -> NodeId {
        self.g.constant(Tensor::zeros(&[rows, self.cfg.d_model]))
    }

    fn residual_norm(&mut self, x: NodeId, y: NodeId) -> NodeId {
        let s = self.g.add(x, y);
        self.g.layer_norm(s)
    }

    fn feed_forward(&mut self, prefix: &str, x: NodeId) -> NodeId {
        let h = self.linear(&format!("{prefix}.ff1"), x);
        let h = self.g.gelu(h);
        self.linear(&format!("{prefix}.ff2"), h)
    }

    fn text_span(&mut self, ids: &[usize]) -> NodeId {
        let tok = self.g.param("enc.tok");
        let pos = self.g.param("enc.pos");
        let t = self.g.embedding(tok, ids);
        let positions: Vec<usize> = (0..ids.len()).collect();
        let p = self.g.embedding(pos, &positions);
        let mut x = self.g.add(t, p);
        for l in 0..self.cfg.text_layers {
            let q = self.linear(&format!("enc{l}.q"), x);
            let k = self.linear(&format!("enc{l}.k"), x);
            let v = self.linear(&format!("enc{l}.v"), x);
            let a = self.g.attention(q, k, v, self.cfg.heads, false);
            let a = self.linear(&format!("enc{l}.o"), a);
            x = self.residual_norm(x, a);
            let f = self.feed_forward(&format!("enc{l}"), x);
            x = self.residual_norm(x, f);
        }
        x
    }

    /// Per-token article representation; spans are encoded independently
    /// and merged.
    pub fn encode_text(&mut self, ids: &[usize]) -> Result<NodeId> {
        if ids.is_empty() {
            return Ok(self.zeros(0));
        }
        let layout = split_spans(ids.len(), self.cfg.window, self.cfg.max_article)?;
        let reps: Vec<NodeId> = layout
            .spans
            .iter()
            .map(|&(s, e)| self.text_span(&ids[s..e]))
            .collect();
        Ok(merge_spans_node(self.g, &layout, &reps))
    }

    pub fn encoder(&mut self, input: &ModelInput, zero: ZeroOut) -> Result<Memories> {
        let image = if zero.image() {
            self.zeros(input.image.rows())
        } else {
            let x = self.g.constant(input.image.cast());
            self.linear("proj.image", x)
        };
        let covered = input.article.len().min(self.cfg.max_article);
        let text = if zero.text() {
            self.zeros(covered)
        } else {
            self.encode_text(&input.article)?
        };
        let entity = if zero.text() {
            self.zeros(input.entities.rows())
        } else {
            let x = self.g.constant(input.entities.cast());
            self.linear("proj.entity", x)
        };
        Ok(Memories { image, text, entity })
    }

    /// Component logits `[1, 5]` from mean-pooled encoder features.
    pub fn head(&mut self, mem: &Memories) -> NodeId {
        let pooled: Vec<NodeId> = mem.nodes().iter().map(|&m| self.g.mean(m, 0)).collect();
        let x = self.g.concat(&pooled);
        let h = self.linear("head.1", x);
        let h = self.g.gelu(h);
        self.linear("head.2", h)
    }

    fn block(&mut self, prefix: &str, x: NodeId, mem: &Memories) -> NodeId {
        let heads = self.cfg.heads;
        let q = self.linear(&format!("{prefix}.self.q"), x);
        let k = self.linear(&format!("{prefix}.self.k"), x);
        let v = self.linear(&format!("{prefix}.self.v"), x);
        let a = self.g.attention(q, k, v, heads, true);
        let a = self.linear(&format!("{prefix}.self.o"), a);
        let h = self.residual_norm(x, a);
        let cross: Vec<NodeId> = MEMORIES
            .iter()
            .zip(mem.nodes())
            .map(|(name, m)| {
                let q = self.linear(&format!("{prefix}.{name}.q"), h);
                let k = self.linear(&format!("{prefix}.{name}.k"), m);
                let v = self.linear(&format!("{prefix}.{name}.v"), m);
                self.g.attention(q, k, v, heads, false)
            })
            .collect();
        let c = self.g.concat(&cross);
        let c = self.linear(&format!("{prefix}.mix"), c);
        let h = self.residual_norm(h, c);
        let f = self.feed_forward(prefix, h);
        self.residual_norm(h, f)
    }

    /// Runs the decoder over `tokens` (starting with BOS) conditioned on
    /// `alpha`, a `[1, 5]` node.
    pub fn decoder(&mut self, mem: &Memories, alpha: NodeId, tokens: &[usize]) -> DecoderNodes {
        let tok = self.g.param("dec.tok");
        let pos = self.g.param("dec.pos");
        let t = self.g.embedding(tok, tokens);
        let positions: Vec<usize> = (0..tokens.len()).collect();
        let p = self.g.embedding(pos, &positions);
        let mut x = self.g.add(t, p);
        let prefixes = block_prefixes(self.cfg);
        let (last, shared) = prefixes.split_last().expect("four blocks");
        for ps in shared {
            x = self.block(&ps[0], x, mem);
        }
        let components: Vec<NodeId> = last.iter().map(|p| self.block(p, x, mem)).collect();
        let blended = blend_components(self.g, alpha, &components);
        let h = self.linear("out.ff", blended);
        let h = self.g.gelu(h);
        let logits = self.linear("out.proj", h);
        DecoderNodes {
            components,
            blended,
            logits,
        }
    }
}

pub fn alpha_tensor<T: Real>(alpha: &ComponentVector) -> Tensor<T> {
    Tensor::row(&alpha.alpha.map(T::of))
}
