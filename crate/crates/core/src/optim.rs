//! SGD and Adam over flat parameter groups.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{ParamRole, Parameterized};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimConfig {
    pub kind: OptimizerKind,
    pub lr: f64,
    /// Learning rate of the activation-parameter group; `lr` when absent.
    pub lr_activation: Option<f64>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::Adam,
            lr: 0.001,
            lr_activation: None,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl OptimConfig {
    pub fn activation_lr(&self) -> f64 {
        self.lr_activation.unwrap_or(self.lr)
    }

    pub fn validate(&self) -> Result<()> {
        let lrs = [self.lr, self.activation_lr()];
        if lrs.iter().any(|lr| !(lr.is_finite() && *lr >= 0.0)) {
            return Err(Error::Config(format!("learning rates must be finite and non-negative, got {lrs:?}")));
        }
        let betas_ok = (0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2);
        if !betas_ok || !(self.eps > 0.0) {
            return Err(Error::Config("Adam needs beta1, beta2 in [0, 1) and eps > 0".into()));
        }
        Ok(())
    }
}

/// Values, gradients and optimizer state of one named group.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGroup {
    pub id: String,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
    pub lr: f64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl ParamGroup {
    pub fn new(id: impl Into<String>, values: Vec<f64>, lr: f64) -> Self {
        let n = values.len();
        Self {
            id: id.into(),
            values,
            grads: vec![0.0; n],
            lr,
            m: vec![0.0; n],
            v: vec![0.0; n],
            step: 0,
        }
    }

    fn check(&self) -> Result<()> {
        let n = self.values.len();
        if self.grads.len() != n || self.m.len() != n || self.v.len() != n {
            return Err(Error::Contract(format!(
                "group `{}` has {} values but {} gradients",
                self.id,
                n,
                self.grads.len()
            )));
        }
        if let Some(index) = self.grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite {
                group: self.id.clone(),
                index,
            });
        }
        Ok(())
    }
}

/// `θ ← θ − γ·g`, then clears the gradients.
pub fn sgd_step(group: &mut ParamGroup) -> Result<()> {
    group.check()?;
    for (v, g) in group.values.iter_mut().zip(&mut group.grads) {
        *v -= group.lr * *g;
        *g = 0.0;
    }
    group.step += 1;
    Ok(())
}

/// Bias-corrected Adam step, then clears the gradients.
pub fn adam_step(group: &mut ParamGroup, beta1: f64, beta2: f64, eps: f64) -> Result<()> {
    group.check()?;
    group.step += 1;
    let t = group.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for i in 0..group.values.len() {
        let g = group.grads[i];
        group.m[i] = beta1 * group.m[i] + (1.0 - beta1) * g;
        group.v[i] = beta2 * group.v[i] + (1.0 - beta2) * g * g;
        let m_hat = group.m[i] / c1;
        let v_hat = group.v[i] / c2;
        group.values[i] -= group.lr * m_hat / (v_hat.sqrt() + eps);
        group.grads[i] = 0.0;
    }
    Ok(())
}

/// Two groups, `weights` (weights and biases) and `activation`, stepped
/// against a model's gradient twin.
#[derive(Clone, Debug)]
pub struct Optimizer {
    pub config: OptimConfig,
    pub weights: ParamGroup,
    pub activation: ParamGroup,
}

impl Optimizer {
    pub fn new(config: OptimConfig, model: &impl Parameterized) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            weights: ParamGroup::new("weights", model.gather(ParamRole::MODEL), config.lr),
            activation: ParamGroup::new("activation", model.gather(ParamRole::ACTIVATION), config.activation_lr()),
            config,
        })
    }

    fn step_group(&self, group: &mut ParamGroup) -> Result<()> {
        match self.config.kind {
            OptimizerKind::Sgd => sgd_step(group),
            OptimizerKind::Adam => adam_step(group, self.config.beta1, self.config.beta2, self.config.eps),
        }
    }

    /// Applies one update to `model` using the gradients held in `grads`
    /// (a model of the same shape), then projects activation parameters back
    /// into their domain.
    pub fn step<M: Parameterized>(&mut self, model: &mut M, grads: &M) -> Result<()> {
        self.weights.values = model.gather(ParamRole::MODEL);
        self.activation.values = model.gather(ParamRole::ACTIVATION);
        self.weights.grads = grads.gather(ParamRole::MODEL);
        self.activation.grads = grads.gather(ParamRole::ACTIVATION);

        let mut w = std::mem::replace(&mut self.weights, ParamGroup::new("", Vec::new(), 0.0));
        let mut a = std::mem::replace(&mut self.activation, ParamGroup::new("", Vec::new(), 0.0));
        let res = self.step_group(&mut w).and_then(|_| self.step_group(&mut a));
        self.weights = w;
        self.activation = a;
        res?;

        model.scatter(ParamRole::MODEL, &self.weights.values)?;
        model.scatter(ParamRole::ACTIVATION, &self.activation.values)?;
        model.project();
        Ok(())
    }
}
