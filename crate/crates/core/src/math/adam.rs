use super::graph::{Bindings, Gradients};
use super::tensor::{Real, Tensor};
use crate::error::{invalid, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.98;
pub const ADAM_EPS: f64 = 1e-6;

/// Adam moments for a set of named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub first: Bindings<f32>,
    pub second: Bindings<f32>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new()
    }
}

impl AdamState {
    pub fn new() -> Self {
        Self {
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            first: Bindings::new(),
            second: Bindings::new(),
        }
    }

    /// One bias-corrected Adam update of `params` in place.
    ///
    /// Parameters without a gradient entry are left untouched, as are their
    /// moments. Moments are created lazily on first use.
    pub fn step(
        &mut self,
        params: &mut Bindings<f32>,
        grads: &Gradients<f32>,
        lr: f64,
    ) -> Result<()> {
        for (name, g) in grads.iter() {
            let Some(p) = params.get(name) else {
                return invalid(format!("gradient for unknown parameter `{name}`"));
            };
            if p.shape() != g.shape() {
                return invalid(format!(
                    "gradient shape {:?} does not match parameter `{name}` {:?}",
                    g.shape(),
                    p.shape()
                ));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (lr / bc1) as f32;
        let bc2_sqrt = bc2.sqrt() as f32;
        let eps = self.eps as f32;
        for (name, g) in grads.iter() {
            let p = params.get_mut(name).expect("checked above");
            if !self.first.contains(name) {
                self.first.insert(name.clone(), Tensor::zeros(p.shape()));
                self.second.insert(name.clone(), Tensor::zeros(p.shape()));
            }
            let m = self.first.get_mut(name).expect("inserted");
            for (mv, &gv) in m.data_mut().iter_mut().zip(g.data()) {
                *mv = b1 * *mv + (1.0 - b1) * gv;
            }
            let v = self.second.get_mut(name).expect("inserted");
            for (vv, &gv) in v.data_mut().iter_mut().zip(g.data()) {
                *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            }
            let m = self.first.get(name).expect("inserted");
            let v = self.second.get(name).expect("inserted");
            for ((pv, &mv), &vv) in p.data_mut().iter_mut().zip(m.data()).zip(v.data()) {
                *pv -= step_size * mv / (vv.sqrt() / bc2_sqrt + eps);
            }
        }
        Ok(())
    }
}

/// Global L2 norm of a gradient set.
pub fn grad_norm<T: Real>(grads: &Gradients<T>) -> f64 {
    grads
        .iter()
        .flat_map(|(_, g)| g.data().iter())
        .map(|v| v.as_f64() * v.as_f64())
        .sum::<f64>()
        .sqrt()
}

/// Rescales `grads` so that their global norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut Gradients<f32>, max_norm: f64) -> f64 {
    let norm = grad_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = (max_norm / norm) as f32;
        for (_, g) in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}
