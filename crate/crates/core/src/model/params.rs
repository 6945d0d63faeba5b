use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::error::Result;
use crate::math::{init_uniform, Bindings, Tensor};

pub const MEMORIES: [&str; 3] = ["image", "text", "entity"];

/// Prefix of decoder block `b` (0-based); the last block has one prefix
/// per component subblock.
pub fn block_prefixes(cfg: &ModelConfig) -> Vec<Vec<String>> {
    (0..cfg.blocks)
        .map(|b| {
            if b + 1 == cfg.blocks {
                (0..cfg.subblocks).map(|s| format!("dec{b}.{s}")).collect()
            } else {
                vec![format!("dec{b}")]
            }
        })
        .collect()
}

/// Every trainable tensor with its shape.
pub fn param_shapes(cfg: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = cfg.d_model;
    let mut out: Vec<(String, Vec<usize>)> = Vec::new();
    let linear = |out: &mut Vec<(String, Vec<usize>)>, name: &str, i: usize, o: usize| {
        out.push((format!("{name}.w"), vec![i, o]));
        out.push((format!("{name}.b"), vec![1, o]));
    };
    linear(&mut out, "proj.image", cfg.d_image, d);
    linear(&mut out, "proj.entity", cfg.d_entity, d);
    out.push(("enc.tok".into(), vec![cfg.vocab_size, d]));
    out.push(("enc.pos".into(), vec![cfg.window, d]));
    for l in 0..cfg.text_layers {
        for p in ["q", "k", "v", "o"] {
            linear(&mut out, &format!("enc{l}.{p}"), d, d);
        }
        linear(&mut out, &format!("enc{l}.ff1"), d, cfg.ff_dim);
        linear(&mut out, &format!("enc{l}.ff2"), cfg.ff_dim, d);
    }
    linear(&mut out, "head.1", 3 * d, d);
    linear(&mut out, "head.2", d, cfg.subblocks);
    out.push(("dec.tok".into(), vec![cfg.vocab_size, d]));
    out.push(("dec.pos".into(), vec![cfg.max_len + 1, d]));
    for prefixes in block_prefixes(cfg) {
        for p in prefixes {
            for s in ["q", "k", "v", "o"] {
                linear(&mut out, &format!("{p}.self.{s}"), d, d);
            }
            for m in MEMORIES {
                for s in ["q", "k", "v"] {
                    linear(&mut out, &format!("{p}.{m}.{s}"), d, d);
                }
            }
            linear(&mut out, &format!("{p}.mix"), 3 * d, d);
            linear(&mut out, &format!("{p}.ff1"), d, cfg.ff_dim);
            linear(&mut out, &format!("{p}.ff2"), cfg.ff_dim, d);
        }
    }
    linear(&mut out, "out.ff", d, d);
    linear(&mut out, "out.proj", d, cfg.vocab_size);
    out
}

/// Trainable tensors plus the seed they were drawn from.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub tensors: Bindings<f32>,
    pub seed: u64,
    pub step: u64,
}

impl ModelParams {
    /// Weights uniform in ±1/√fan_in, biases zero; embeddings use the model
    /// width as fan-in. Drawn in name order from one seeded generator.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut shapes = param_shapes(config);
        shapes.sort_by(|a, b| a.0.cmp(&b.0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = Bindings::new();
        for (name, shape) in shapes {
            let t = if name.ends_with(".b") {
                Tensor::zeros(&shape)
            } else if name.ends_with(".tok") || name.ends_with(".pos") {
                init_uniform(&shape, config.d_model, &mut rng)
            } else {
                init_uniform(&shape, shape[0], &mut rng)
            };
            tensors.insert(name, t);
        }
        Ok(Self {
            config: config.clone(),
            tensors,
            seed,
            step: 0,
        })
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.num_scalars()
    }

    /// Copies every parameter of subblock 0 into the others.
    pub fn tie_subblocks(&mut self) {
        let last = self.config.blocks - 1;
        let first = format!("dec{last}.0.");
        let names: Vec<String> = self.tensors.names().filter(|n| n.starts_with(&first)).cloned().collect();
        for name in names {
            let value = self.tensors.get(&name).expect("listed").clone();
            for s in 1..self.config.subblocks {
                let other = name.replacen(&first, &format!("dec{last}.{s}."), 1);
                self.tensors.insert(other, value.clone());
            }
        }
    }
}
