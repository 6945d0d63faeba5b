use serde::{Deserialize, Serialize};

use super::net::{alpha_tensor, ModelInput, Net, ZeroOut};
use super::params::ModelParams;
use crate::error::{invalid, Result};
use crate::math::{sigmoid, Graph, Tensor};
use crate::template::{ComponentVector, NUM_COMPONENTS};
use crate::tokenize::{BOS, EOS};

/// Where the decoder's component vector comes from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Predicted by the component head.
    Auto,
    /// Extracted from the gold caption.
    Oracle,
    /// Supplied by the caller.
    Manual(ComponentVector),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GenerateOptions {
    pub mode: Mode,
    pub zero: ZeroOut,
    /// Defaults to the configured maximum.
    pub max_len: Option<usize>,
    /// 1 means greedy decoding.
    pub beam: usize,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        Self {
            mode: Mode::Auto,
            zero: ZeroOut::None,
            max_len: None,
            beam: 1,
        }
    }
}

/// Encoder outputs of one document with the head's prediction.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedDocument {
    pub image: Tensor<f32>,
    pub text: Tensor<f32>,
    pub entity: Tensor<f32>,
    pub predicted: ComponentVector,
}

pub fn encode_document(params: &ModelParams, input: &ModelInput, zero: ZeroOut) -> Result<EncodedDocument> {
    let cfg = &params.config;
    input.validate(cfg)?;
    let mut g = Graph::<f32>::new();
    let (mem, head) = {
        let mut net = Net::new(&mut g, cfg);
        let mem = net.encoder(input, zero)?;
        let head = net.head(&mem);
        (mem, head)
    };
    g.set_root(head);
    g.evaluate(&params.tensors)?;
    let value = |id| g.value(id).expect("evaluated").clone();
    let logits = value(head);
    let mut alpha = [0.0; NUM_COMPONENTS];
    for (a, &l) in alpha.iter_mut().zip(logits.data()) {
        *a = sigmoid(l as f64);
    }
    Ok(EncodedDocument {
        image: value(mem.image),
        text: value(mem.text),
        entity: value(mem.entity),
        predicted: ComponentVector::auto(alpha)?,
    })
}

/// Component probabilities from the head.
pub fn predict_components(params: &ModelParams, input: &ModelInput) -> Result<ComponentVector> {
    Ok(encode_document(params, input, ZeroOut::None)?.predicted)
}

/// Decoder outputs at the last prefix position.
#[derive(Clone, Debug, PartialEq)]
pub struct StepOutput {
    /// Next-token distribution over the vocabulary.
    pub distribution: Vec<f64>,
    /// Last-position rows of the component subblock outputs.
    pub components: Vec<Vec<f32>>,
    /// Last-position row of the blended representation.
    pub blended: Vec<f32>,
}

/// Runs the decoder over `prefix` (which starts with BOS).
pub fn decode_step(
    params: &ModelParams,
    doc: &EncodedDocument,
    alpha: &ComponentVector,
    prefix: &[usize],
) -> Result<StepOutput> {
    let cfg = &params.config;
    if prefix.is_empty() || prefix.len() > cfg.max_len + 1 {
        return invalid(format!("prefix length {} outside [1, {}]", prefix.len(), cfg.max_len + 1));
    }
    let d = cfg.d_model;
    for (name, t) in [("image", &doc.image), ("text", &doc.text), ("entity", &doc.entity)] {
        if t.cols() != d {
            return invalid(format!("{name} features have width {}, expected {d}", t.cols()));
        }
    }
    let mut g = Graph::<f32>::new();
    let dec = {
        let mut net = Net::new(&mut g, cfg);
        let mem = super::net::Memories {
            image: net.g.constant(doc.image.clone()),
            text: net.g.constant(doc.text.clone()),
            entity: net.g.constant(doc.entity.clone()),
        };
        let a = net.g.constant(alpha_tensor(alpha));
        net.decoder(&mem, a, prefix)
    };
    g.set_root(dec.logits);
    g.evaluate(&params.tensors)?;
    let last = prefix.len() - 1;
    let row = |id| g.value(id).expect("evaluated").row_slice(last).to_vec();
    let logits = row(dec.logits);
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exp: Vec<f64> = logits.iter().map(|&l| (l as f64 - max).exp()).collect();
    let z: f64 = exp.iter().sum();
    Ok(StepOutput {
        distribution: exp.into_iter().map(|e| e / z).collect(),
        components: dec.components.iter().map(|&c| row(c)).collect(),
        blended: row(dec.blended),
    })
}

/// Resolves the component vector for a mode.
pub fn select_alpha(mode: &Mode, input: &ModelInput, doc: &EncodedDocument) -> Result<ComponentVector> {
    match mode {
        Mode::Auto => Ok(doc.predicted),
        Mode::Oracle => Ok(input.oracle),
        Mode::Manual(v) => {
            if v.alpha.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return invalid(format!("manual component vector {:?} outside [0, 1]", v.alpha));
            }
            Ok(*v)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generation {
    /// Caption token ids without BOS/EOS.
    pub tokens: Vec<usize>,
    pub alpha: ComponentVector,
}

fn argmax(p: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = i;
        }
    }
    best
}

pub fn generate(params: &ModelParams, input: &ModelInput, opts: &GenerateOptions) -> Result<Generation> {
    let doc = encode_document(params, input, opts.zero)?;
    let alpha = select_alpha(&opts.mode, input, &doc)?;
    let max_len = opts.max_len.unwrap_or(params.config.max_len).min(params.config.max_len);
    let tokens = if opts.beam <= 1 {
        greedy(params, &doc, &alpha, max_len)?
    } else {
        beam_search(params, &doc, &alpha, max_len, opts.beam)?
    };
    Ok(Generation { tokens, alpha })
}

fn greedy(params: &ModelParams, doc: &EncodedDocument, alpha: &ComponentVector, max_len: usize) -> Result<Vec<usize>> {
    let mut prefix = vec![BOS as usize];
    while prefix.len() <= max_len {
        let step = decode_step(params, doc, alpha, &prefix)?;
        let next = argmax(&step.distribution);
        if next == EOS as usize {
            break;
        }
        prefix.push(next);
    }
    Ok(prefix[1..].to_vec())
}

#[derive(Clone)]
struct Hyp {
    tokens: Vec<usize>,
    logp: f64,
}

/// Beam search ranked by log-probability divided by length (EOS counted).
fn beam_search(
    params: &ModelParams,
    doc: &EncodedDocument,
    alpha: &ComponentVector,
    max_len: usize,
    width: usize,
) -> Result<Vec<usize>> {
    let mut live = vec![Hyp {
        tokens: vec![BOS as usize],
        logp: 0.0,
    }];
    let mut done: Vec<(f64, Vec<usize>)> = Vec::new();
    let norm = |h: &Hyp, extra: usize| h.logp / (h.tokens.len() - 1 + extra).max(1) as f64;
    while !live.is_empty() && done.len() < width {
        let mut cands: Vec<Hyp> = Vec::new();
        for h in &live {
            if h.tokens.len() > max_len {
                done.push((norm(h, 0), h.tokens[1..].to_vec()));
                continue;
            }
            let p = decode_step(params, doc, alpha, &h.tokens)?.distribution;
            let mut ids: Vec<usize> = (0..p.len()).collect();
            ids.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
            for &t in ids.iter().take(width) {
                let mut tokens = h.tokens.clone();
                tokens.push(t);
                cands.push(Hyp {
                    tokens,
                    logp: h.logp + p[t].max(f64::MIN_POSITIVE).ln(),
                });
            }
        }
        cands.sort_by(|a, b| b.logp.total_cmp(&a.logp).then_with(|| a.tokens.cmp(&b.tokens)));
        live.clear();
        for c in cands.into_iter().take(width) {
            if *c.tokens.last().expect("non-empty") == EOS as usize {
                let body = c.tokens[1..c.tokens.len() - 1].to_vec();
                done.push((c.logp / (body.len() + 1) as f64, body));
            } else {
                live.push(c);
            }
        }
    }
    for h in &live {
        done.push((norm(h, 0), h.tokens[1..].to_vec()));
    }
    done.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    Ok(done.into_iter().next().map(|d| d.1).unwrap_or_default())
}
