use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::net::{alpha_tensor, ModelInput, Net, ZeroOut};
use super::params::ModelParams;
use crate::error::{invalid, Result};
use crate::math::{clip_grad_norm, AdamState, Gradients, Graph, NodeId, Real, Tensor};
use crate::par;

/// Teacher-forced training graph of one record.
pub struct LossGraph<T: Real> {
    pub graph: Graph<T>,
    pub caption_loss: NodeId,
    pub component_loss: NodeId,
    pub logits: NodeId,
    pub targets: Vec<usize>,
}

/// Caption cross-entropy with the decoder conditioned on the oracle α, plus
/// `lambda` times the component-head binary cross-entropy.
pub fn loss_graph<T: Real>(params: &ModelParams, input: &ModelInput) -> Result<LossGraph<T>> {
    let cfg = &params.config;
    input.validate(cfg)?;
    let mut graph = Graph::new();
    let (tokens, targets) = input.teacher_forcing(cfg);
    let (caption_loss, component_loss, logits) = {
        let mut net = Net::new(&mut graph, cfg);
        let mem = net.encoder(input, ZeroOut::None)?;
        let head = net.head(&mem);
        let alpha = net.g.constant(alpha_tensor(&input.oracle));
        let dec = net.decoder(&mem, alpha, &tokens);
        let ce = net.g.cross_entropy(dec.logits, &targets);
        let target = net.g.constant(alpha_tensor(&input.oracle));
        let bce = net.g.bce_with_logits(head, target);
        (ce, bce, dec.logits)
    };
    let weighted = graph.scale(component_loss, cfg.lambda);
    let total = graph.add(caption_loss, weighted);
    graph.set_root(total);
    Ok(LossGraph {
        graph,
        caption_loss,
        component_loss,
        logits,
        targets,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct StepLoss {
    pub caption: f64,
    pub component: f64,
}

impl StepLoss {
    pub fn total(&self, lambda: f64) -> f64 {
        self.caption + lambda * self.component
    }
}

struct RecordResult {
    loss: StepLoss,
    grads: Gradients<f32>,
    correct: usize,
    tokens: usize,
}

fn argmax(row: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

fn run_record(params: &ModelParams, input: &ModelInput, backward: bool) -> Result<RecordResult> {
    let mut lg = loss_graph::<f32>(params, input)?;
    lg.graph.evaluate(&params.tensors)?;
    let value = |id| lg.graph.value(id).expect("evaluated").item() as f64;
    let loss = StepLoss {
        caption: value(lg.caption_loss),
        component: value(lg.component_loss),
    };
    let logits = lg.graph.value(lg.logits).expect("evaluated");
    let correct = lg
        .targets
        .iter()
        .enumerate()
        .filter(|&(i, &t)| argmax(logits.row_slice(i)) == t)
        .count();
    let grads = if backward {
        lg.graph.backward()?
    } else {
        Gradients::new()
    };
    Ok(RecordResult {
        loss,
        grads,
        correct,
        tokens: lg.targets.len(),
    })
}

/// Gradient of the mean batch loss; per-record work runs through [`par`]
/// and is summed in batch order.
pub fn batch_gradients(params: &ModelParams, batch: &[ModelInput]) -> Result<(StepLoss, Gradients<f32>)> {
    if batch.is_empty() {
        return invalid("training batch is empty");
    }
    let results = par::try_map(batch, |r| run_record(params, r, true))?;
    let n = batch.len() as f32;
    let mut total = Gradients::new();
    let mut loss = StepLoss::default();
    for r in results {
        loss.caption += r.loss.caption / batch.len() as f64;
        loss.component += r.loss.component / batch.len() as f64;
        for (name, g) in r.grads.iter() {
            match total.get_mut(name) {
                Some(acc) => {
                    for (a, v) in acc.data_mut().iter_mut().zip(g.data()) {
                        *a += v;
                    }
                }
                None => total.insert(name.clone(), g.clone()),
            }
        }
    }
    for (_, g) in total.iter_mut() {
        g.data_mut().iter_mut().for_each(|v| *v /= n);
    }
    Ok((loss, total))
}

/// One Adam update on the mean loss of `batch`. Returns the loss before the update.
pub fn train_step(
    params: &mut ModelParams,
    adam: &mut AdamState,
    batch: &[ModelInput],
    lr: f64,
    clip: Option<f64>,
) -> Result<StepLoss> {
    let (loss, mut grads) = batch_gradients(params, batch)?;
    if let Some(c) = clip {
        clip_grad_norm(&mut grads, c);
    }
    adam.step(&mut params.tensors, &grads, lr)?;
    params.step += 1;
    Ok(loss)
}

/// Share of caption tokens (EOS included) whose teacher-forced argmax is right.
pub fn teacher_forced_accuracy(params: &ModelParams, data: &[ModelInput]) -> Result<f64> {
    let results = par::try_map(data, |r| run_record(params, r, false))?;
    let (c, t) = results
        .iter()
        .fold((0, 0), |(c, t), r| (c + r.correct, t + r.tokens));
    Ok(if t == 0 { 0.0 } else { c as f64 / t as f64 })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub clip: Option<f64>,
    pub seed: u64,
    /// Stop once teacher-forced accuracy on the training data reaches this.
    pub target_accuracy: Option<f64>,
    /// Stop after the epoch during which this much wall time has passed.
    pub time_budget: Option<Duration>,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            lr: 1e-3,
            clip: Some(1.0),
            seed: 0,
            target_accuracy: None,
            time_budget: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EpochStat {
    pub epoch: usize,
    pub caption_loss: f64,
    pub component_loss: f64,
    pub accuracy: Option<f64>,
    pub seconds: f64,
}

/// Minibatch training over shuffled data, one seeded shuffle per epoch.
pub fn fit(
    params: &mut ModelParams,
    adam: &mut AdamState,
    data: &[ModelInput],
    cfg: &FitConfig,
    mut on_epoch: impl FnMut(&EpochStat),
) -> Result<Vec<EpochStat>> {
    if data.is_empty() {
        return invalid("no training records");
    }
    if cfg.batch_size == 0 {
        return invalid("batch size must be positive");
    }
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut stats = Vec::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = StepLoss::default();
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<ModelInput> = chunk.iter().map(|&i| data[i].clone()).collect();
            let l = train_step(params, adam, &batch, cfg.lr, cfg.clip)?;
            sums.caption += l.caption;
            sums.component += l.component;
            batches += 1;
        }
        let accuracy = match cfg.target_accuracy {
            Some(_) => Some(teacher_forced_accuracy(params, data)?),
            None => None,
        };
        let stat = EpochStat {
            epoch,
            caption_loss: sums.caption / batches as f64,
            component_loss: sums.component / batches as f64,
            accuracy,
            seconds: start.elapsed().as_secs_f64(),
        };
        on_epoch(&stat);
        stats.push(stat);
        let reached = matches!((cfg.target_accuracy, accuracy), (Some(t), Some(a)) if a >= t);
        let out_of_time = cfg.time_budget.is_some_and(|b| start.elapsed() >= b);
        if reached || out_of_time {
            break;
        }
    }
    Ok(stats)
}

/// Zero tensor helper for callers assembling inputs without entities.
pub fn no_entities(d_entity: usize) -> Tensor<f32> {
    Tensor::zeros(&[0, d_entity])
}
