//! Penalties on activation parameters.
//!
//! Three terms are added to the predictive loss `L0`:
//!
//! * towards-mean: `δ1 Σ_j (λ_j / m_j) Σ_i Σ_k (α_ijk − ᾱ_jk)²`, pulling every
//!   activation parameter of a layer toward that layer's mean;
//! * towards-default: `(δ2 / n) Σ (α_k0 − α_ijk)²` over combination weights,
//!   pulling them toward the coefficients of the activation being replaced;
//! * bound barrier: `(δ3 / n) Σ (ReLU(α − (1 − Δ))² + ReLU(−Δ − α)²)` over
//!   combination weights, a soft box constraint.
//!
//! `m_j` is the number of parameter blocks in layer `j` and `n` the number of
//! blocks in the whole network.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::activations::{default_combination_weights, ActivationKind, FlexActivation};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegConfig {
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    /// Layer weights `λ_j`; layers past the end of the list use 1.
    pub lambda: Vec<f64>,
    /// Barrier slack `Δ`.
    #[serde(rename = "Delta")]
    pub slack: f64,
    /// Overrides for the towards-default targets, one value per explicit
    /// combination weight of the kind.
    pub defaults: BTreeMap<ActivationKind, Vec<f64>>,
    /// Total unit count `n`; inferred from the model when absent.
    pub n_units: Option<usize>,
    /// L2 coefficient on model weights (not biases or activation parameters).
    pub weight_decay: f64,
}

impl Default for RegConfig {
    fn default() -> Self {
        Self {
            delta1: 0.025,
            delta2: 0.0,
            delta3: 1.0,
            lambda: Vec::new(),
            slack: 0.01,
            defaults: BTreeMap::new(),
            n_units: None,
            weight_decay: 0.0,
        }
    }
}

impl RegConfig {
    /// All penalties off.
    pub fn none() -> Self {
        Self {
            delta1: 0.0,
            delta3: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let coeffs = [
            ("delta1", self.delta1),
            ("delta2", self.delta2),
            ("delta3", self.delta3),
            ("weight_decay", self.weight_decay),
        ];
        for (name, v) in coeffs {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("reg.{name} must be a finite non-negative number, got {v}")));
            }
        }
        if let Some(bad) = self.lambda.iter().find(|l| !(**l >= 0.0 && l.is_finite())) {
            return Err(Error::Config(format!("reg.lambda entries must be non-negative, got {bad}")));
        }
        if !(self.slack > 0.0 && self.slack < 0.5) {
            return Err(Error::Config(format!("reg.Delta must lie in (0, 0.5), got {}", self.slack)));
        }
        if self.n_units == Some(0) {
            return Err(Error::Config("reg.n_units must be at least 1".into()));
        }
        Ok(())
    }

    pub fn lambda_for(&self, layer: usize) -> f64 {
        self.lambda.get(layer).copied().unwrap_or(1.0)
    }

    fn default_for(&self, kind: ActivationKind) -> Result<Vec<f64>> {
        let d = self
            .defaults
            .get(&kind)
            .cloned()
            .unwrap_or_else(|| default_combination_weights(kind));
        if d.len() != kind.combination_weight_indices().len() {
            return Err(Error::Config(format!(
                "reg.defaults for {kind} needs {} values, got {}",
                kind.combination_weight_indices().len(),
                d.len()
            )));
        }
        Ok(d)
    }
}

/// A penalty value and its gradient with respect to the penalized values.
#[derive(Clone, Debug, PartialEq)]
pub struct Penalty {
    pub value: f64,
    pub grad: Vec<f64>,
}

/// Towards-mean term for one layer (without `δ1`). `params` is block-major
/// with `param_count` values per block; each parameter index `k` is pulled
/// toward its own layer mean.
pub fn towards_mean(params: &[f64], param_count: usize, lambda: f64) -> Result<Penalty> {
    if param_count == 0 || params.is_empty() || params.len() % param_count != 0 {
        return Err(Error::Domain(format!(
            "towards-mean needs a non-empty layer of {param_count}-parameter blocks, got {} values",
            params.len()
        )));
    }
    let m = params.len() / param_count;
    let mut mean = vec![0.0; param_count];
    for block in params.chunks(param_count) {
        for (acc, v) in mean.iter_mut().zip(block) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|v| *v /= m as f64);

    let scale = lambda / m as f64;
    let mut value = 0.0;
    let grad = params
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let d = v - mean[i % param_count];
            value += d * d;
            scale * 2.0 * d
        })
        .collect();
    Ok(Penalty {
        value: scale * value,
        grad,
    })
}

/// Towards-default term (without `δ2`): `(1/n) Σ (default − w)²`.
pub fn towards_default(weights: &[f64], defaults: &[f64], n: usize) -> Result<Penalty> {
    if weights.len() != defaults.len() {
        return Err(Error::Config(format!(
            "towards-default has {} weights but {} defaults",
            weights.len(),
            defaults.len()
        )));
    }
    if n == 0 {
        return Err(Error::Domain("unit count n must be positive".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let grad = weights
        .iter()
        .zip(defaults)
        .map(|(&w, &d)| {
            value += (d - w) * (d - w);
            2.0 * inv_n * (w - d)
        })
        .collect();
    Ok(Penalty {
        value: inv_n * value,
        grad,
    })
}

/// Bound barrier (without `δ3`). Zero on `[−Δ, 1 − Δ]`, quadratic outside.
pub fn bound_barrier(weights: &[f64], slack: f64, n: usize) -> Result<Penalty> {
    if n == 0 {
        return Err(Error::Domain("unit count n must be positive".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mut value = 0.0;
    let grad = weights
        .iter()
        .map(|&w| {
            let hi = (w - (1.0 - slack)).max(0.0);
            let lo = (-slack - w).max(0.0);
            value += hi * hi + lo * lo;
            2.0 * inv_n * (hi - lo)
        })
        .collect();
    Ok(Penalty {
        value: inv_n * value,
        grad,
    })
}

/// Plain L2 weight decay `coeff · Σ w²`.
pub fn weight_decay(weights: &[f64], coeff: f64) -> Penalty {
    Penalty {
        value: coeff * weights.iter().map(|w| w * w).sum::<f64>(),
        grad: weights.iter().map(|w| 2.0 * coeff * w).collect(),
    }
}

/// Combination weights seen by the barrier for one block, each expressed as
/// `constant + Σ coeff · param`. P-E2-ReLU also bounds its implied third
/// weight `1 − α − β`.
fn barrier_terms(kind: ActivationKind) -> Vec<(f64, Vec<(usize, f64)>)> {
    let mut terms: Vec<(f64, Vec<(usize, f64)>)> = kind
        .combination_weight_indices()
        .iter()
        .map(|&i| (0.0, vec![(i, 1.0)]))
        .collect();
    if kind == ActivationKind::PE2Relu {
        terms.push((1.0, vec![(0, -1.0), (1, -1.0)]));
    }
    terms
}

/// Breakdown of [`total_cost`].
#[derive(Clone, Debug, PartialEq)]
pub struct CostBreakdown {
    pub total: f64,
    pub predictive: f64,
    /// Coefficient-weighted contributions.
    pub towards_mean: f64,
    pub towards_default: f64,
    pub barrier: f64,
    /// Regularization gradient for each layer, laid out like its parameters.
    pub grads: Vec<Vec<f64>>,
}

/// Number of parameter blocks carried by flexible layers.
pub fn unit_count(layers: &[&FlexActivation]) -> usize {
    layers
        .iter()
        .filter(|l| l.kind().is_flexible())
        .map(|l| l.blocks())
        .sum()
}

/// `L = L0 + δ1·Σ_j towards_mean_j + δ2·towards_default + δ3·barrier`, with the
/// matching gradient for every activation parameter. `layers[j]` is layer `j`
/// for the purpose of `λ_j`; fixed layers contribute nothing.
pub fn total_cost(predictive: f64, layers: &[&FlexActivation], config: &RegConfig) -> Result<CostBreakdown> {
    config.validate()?;
    let n = config.n_units.unwrap_or_else(|| unit_count(layers).max(1));
    let mut out = CostBreakdown {
        total: predictive,
        predictive,
        towards_mean: 0.0,
        towards_default: 0.0,
        barrier: 0.0,
        grads: layers.iter().map(|l| vec![0.0; l.params().len()]).collect(),
    };

    for (j, layer) in layers.iter().enumerate() {
        let kind = layer.kind();
        let p = kind.param_count();
        if p == 0 || layer.blocks() == 0 {
            continue;
        }
        let params = layer.params();
        let grad = &mut out.grads[j];

        if config.delta1 != 0.0 {
            let tm = towards_mean(params, p, config.lambda_for(j))?;
            out.towards_mean += config.delta1 * tm.value;
            for (g, d) in grad.iter_mut().zip(&tm.grad) {
                *g += config.delta1 * d;
            }
        }

        let idx = kind.combination_weight_indices();
        if config.delta2 != 0.0 && !idx.is_empty() {
            let defaults = config.default_for(kind)?;
            let weights: Vec<f64> = params.chunks(p).flat_map(|b| idx.iter().map(move |&i| b[i])).collect();
            let targets: Vec<f64> = (0..layer.blocks()).flat_map(|_| defaults.iter().copied()).collect();
            let td = towards_default(&weights, &targets, n)?;
            out.towards_default += config.delta2 * td.value;
            for (b, chunk) in td.grad.chunks(idx.len()).enumerate() {
                for (&i, d) in idx.iter().zip(chunk) {
                    grad[b * p + i] += config.delta2 * d;
                }
            }
        }

        let terms = barrier_terms(kind);
        if config.delta3 != 0.0 && !terms.is_empty() {
            let weights: Vec<f64> = params
                .chunks(p)
                .flat_map(|b| {
                    terms
                        .iter()
                        .map(move |(c, lin)| c + lin.iter().map(|&(i, a)| a * b[i]).sum::<f64>())
                })
                .collect();
            let bb = bound_barrier(&weights, config.slack, n)?;
            out.barrier += config.delta3 * bb.value;
            for (b, chunk) in bb.grad.chunks(terms.len()).enumerate() {
                for ((_, lin), d) in terms.iter().zip(chunk) {
                    for &(i, a) in lin {
                        grad[b * p + i] += config.delta3 * a * d;
                    }
                }
            }
        }
    }
    out.total = predictive + out.towards_mean + out.towards_default + out.barrier;
    Ok(out)
}
