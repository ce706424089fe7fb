//! Mini-batch objective and its gradient, shared by the trainer and the
//! gradient checks.

use crate::error::{Error, Result};
use crate::nn::{mse, Network, ParamRole, Parameterized};
use crate::regularization::{total_cost, weight_decay, RegConfig};
use crate::tensor::Tensor;

/// Objective value of one batch, split into its parts.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchLoss {
    /// Mean of per-example MSE.
    pub predictive: f64,
    /// Predictive loss plus every penalty.
    pub total: f64,
}

/// `L = mean_b MSE(f(x_b), y_b) + activation penalties + weight decay` and
/// its gradient, accumulated into a fresh zeroed twin of `model`.
pub fn batch_gradient<M: Network>(
    model: &M,
    inputs: &[&Tensor],
    targets: &[&Tensor],
    reg: &RegConfig,
) -> Result<(BatchLoss, M)> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::Contract(format!(
            "batch has {} inputs and {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    let scale = 1.0 / inputs.len() as f64;
    let mut grads = model.zeroed();
    let mut predictive = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        let (pred, cache) = model.forward_cached(x)?;
        let (loss, g) = mse(&pred, y)?;
        predictive += loss * scale;
        model.backward(&cache, &g.scale(scale), &mut grads)?;
    }
    let total = add_penalty_gradients(model, &mut grads, predictive, reg)?;
    Ok((BatchLoss { predictive, total }, grads))
}

/// Adds activation-parameter penalties and weight decay to `grads` and
/// returns the penalized objective.
pub fn add_penalty_gradients<M: Parameterized>(model: &M, grads: &mut M, predictive: f64, reg: &RegConfig) -> Result<f64> {
    let cost = total_cost(predictive, &model.activations(), reg)?;
    for (g, r) in grads.activations_mut().into_iter().zip(&cost.grads) {
        for (a, b) in g.params_mut().iter_mut().zip(r) {
            *a += b;
        }
    }
    let mut total = cost.total;
    if reg.weight_decay != 0.0 {
        let wd = weight_decay(&model.gather(&[ParamRole::Weight]), reg.weight_decay);
        total += wd.value;
        let mut offset = 0;
        grads.visit_mut(&mut |role, vals| {
            if role == ParamRole::Weight {
                for (v, d) in vals.iter_mut().zip(&wd.grad[offset..]) {
                    *v += d;
                }
                offset += vals.len();
            }
        });
    }
    Ok(total)
}

/// Objective without gradients, for finite differences.
pub fn batch_objective<M: Network>(model: &M, inputs: &[&Tensor], targets: &[&Tensor], reg: &RegConfig) -> Result<BatchLoss> {
    let predictive = mean_mse(model, inputs, targets)?;
    let mut total = total_cost(predictive, &model.activations(), reg)?.total;
    if reg.weight_decay != 0.0 {
        total += weight_decay(&model.gather(&[ParamRole::Weight]), reg.weight_decay).value;
    }
    Ok(BatchLoss { predictive, total })
}

/// Mean of per-example MSE over a set of examples.
pub fn mean_mse<M: Network>(model: &M, inputs: &[&Tensor], targets: &[&Tensor]) -> Result<f64> {
    if inputs.len() != targets.len() || inputs.is_empty() {
        return Err(Error::InsufficientData("cannot evaluate on an empty split".into()));
    }
    let mut sum = 0.0;
    for (x, y) in inputs.iter().zip(targets) {
        sum += mse(&model.forward(x)?, y)?.0;
    }
    Ok(sum / inputs.len() as f64)
}
