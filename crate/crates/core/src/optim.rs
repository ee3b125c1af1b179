//! Adam with bias correction.

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::tensor::{Scalar, Tensor};

/// Optimiser hyperparameters shared by every tensor of one model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub const DEFAULT_EPSILON: f64 = 1e-7;

    pub fn new(lr: f64, beta1: f64, beta2: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            epsilon: Self::DEFAULT_EPSILON,
        }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
    pub config: AdamConfig,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
            config,
        }
    }
}

/// One bias-corrected Adam step on `param` using its stored gradient.
///
/// The gradient slot is cleared afterwards.
pub fn adam_update<T: Scalar>(param: &mut Tensor<T>, state: &mut AdamState<T>) -> Result<()> {
    let grad = param
        .take_grad()
        .ok_or_else(|| Error::usage("adam_update called on a parameter without a gradient"))?;
    if state.m.len() != param.len() || state.v.len() != param.len() {
        return Err(Error::Shape {
            op: "adam_update",
            lhs: param.shape().to_vec(),
            rhs: vec![state.m.len()],
        });
    }
    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let b1 = T::from_f64_lossy(c.beta1);
    let b2 = T::from_f64_lossy(c.beta2);
    let one = T::one();
    let bc1 = T::from_f64_lossy(1.0 - c.beta1.powi(t));
    let bc2 = T::from_f64_lossy(1.0 - c.beta2.powi(t));
    let lr = T::from_f64_lossy(c.lr);
    let eps = T::from_f64_lossy(c.epsilon);
    for (((w, &g), m), v) in param
        .data_mut()
        .iter_mut()
        .zip(&grad)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / bc1;
        let v_hat = *v / bc2;
        *w = *w - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam states for a list of parameter tensors.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub states: Vec<AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor<T>>, config: AdamConfig) -> Self {
        Self {
            states: params
                .into_iter()
                .map(|p| AdamState::new(p.len(), config))
                .collect(),
        }
    }

    /// Copy tape gradients into `params` and step each one that received a
    /// gradient. `params`, `vars`, and the states must share one order.
    pub fn step<'a>(
        &mut self,
        g: &Graph<T>,
        params: impl IntoIterator<Item = &'a mut Tensor<T>>,
        vars: &[Var],
    ) -> Result<()> {
        let params: Vec<_> = params.into_iter().collect();
        if params.len() != vars.len() || params.len() != self.states.len() {
            return Err(Error::Internal(format!(
                "optimizer has {} states for {} params and {} vars",
                self.states.len(),
                params.len(),
                vars.len()
            )));
        }
        for ((p, &v), st) in params.into_iter().zip(vars).zip(&mut self.states) {
            if let Some(grad) = g.grad(v) {
                p.accumulate_grad(grad)?;
                adam_update(p, st)?;
            }
        }
        Ok(())
    }
}
