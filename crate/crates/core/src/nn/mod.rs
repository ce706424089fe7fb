//! Trainable layers with hand-derived backward passes.
//!
//! Every model implements [`Network`]: a forward pass that records what the
//! backward pass needs, and a backward pass that accumulates parameter
//! gradients into a zeroed model of the same shape. Keeping gradients in a
//! twin model means [`Parameterized::gather`] walks values and gradients in
//! the same order, which is all the optimizer needs.

mod cae;
mod dense;
mod lstm;
mod spec;

pub use cae::{CaeCache, ConvAutoencoder, ConvLayer};
pub use dense::Dense;
pub use lstm::{lstm_cell_backward, lstm_cell_step, LstmCache, LstmCellParams, StackedLstm, StackedLstmCache, GATES};
pub use spec::{ConvStageSpec, ModelSpec, StageOp};

use rand::Rng;

use crate::activations::FlexActivation;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamRole {
    Weight,
    Bias,
    Activation,
}

impl ParamRole {
    /// Weights and biases: the parameters of the basic model.
    pub const MODEL: &'static [ParamRole] = &[ParamRole::Weight, ParamRole::Bias];
    pub const ACTIVATION: &'static [ParamRole] = &[ParamRole::Activation];
}

pub trait Parameterized {
    fn visit(&self, f: &mut dyn FnMut(ParamRole, &[f64]));

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut [f64]));

    /// Activation positions in a fixed order; the order defines the layer
    /// index used by towards-mean regularization.
    fn activations(&self) -> Vec<&FlexActivation>;

    fn activations_mut(&mut self) -> Vec<&mut FlexActivation>;

    fn gather(&self, roles: &[ParamRole]) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |role, vals| {
            if roles.contains(&role) {
                out.extend_from_slice(vals);
            }
        });
        out
    }

    fn scatter(&mut self, roles: &[ParamRole], values: &[f64]) -> Result<()> {
        let mut offset = 0;
        let mut overflow = false;
        self.visit_mut(&mut |role, vals| {
            if roles.contains(&role) {
                if offset + vals.len() <= values.len() {
                    vals.copy_from_slice(&values[offset..offset + vals.len()]);
                } else {
                    overflow = true;
                }
                offset += vals.len();
            }
        });
        if overflow || offset != values.len() {
            return Err(Error::Contract(format!(
                "scatter expected {offset} values, got {}",
                values.len()
            )));
        }
        Ok(())
    }

    fn count(&self, roles: &[ParamRole]) -> usize {
        let mut n = 0;
        self.visit(&mut |role, vals| {
            if roles.contains(&role) {
                n += vals.len();
            }
        });
        n
    }

    /// A copy with every parameter set to zero, used as a gradient buffer.
    fn zeroed(&self) -> Self
    where
        Self: Clone + Sized,
    {
        let mut z = self.clone();
        z.visit_mut(&mut |_, vals| vals.fill(0.0));
        z
    }

    /// Keeps activation parameters inside their admissible domain.
    fn project(&mut self) {
        for a in self.activations_mut() {
            a.project();
        }
    }
}

pub trait Network: Parameterized + Clone + Send + Sync {
    type Cache;

    fn forward(&self, input: &Tensor) -> Result<Tensor>;

    fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, Self::Cache)>;

    /// Accumulates `∂L/∂θ` into `grads` (a model of identical shape) given
    /// `∂L/∂output`.
    fn backward(&self, cache: &Self::Cache, grad_output: &Tensor, grads: &mut Self) -> Result<()>;
}

/// Mean squared error and its gradient with respect to `pred`.
pub fn mse(pred: &Tensor, target: &Tensor) -> Result<(f64, Tensor)> {
    if pred.len() != target.len() || pred.is_empty() {
        return Err(Error::dim("mse", pred.shape(), target.shape()));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, Tensor::new(pred.shape().to_vec(), grad)?))
}

/// Uniform `±1/sqrt(fan_in)` fill.
pub(crate) fn uniform_init(rng: &mut impl Rng, len: usize, fan_in: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    (0..len).map(|_| rng.random_range(-bound..bound)).collect()
}

/// A model built from a [`ModelSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Lstm(StackedLstm),
    Cae(ConvAutoencoder),
}

pub enum ModelCache {
    Lstm(StackedLstmCache),
    Cae(CaeCache),
}

impl Model {
    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        spec.validate()?;
        Ok(match spec {
            ModelSpec::StackedLstm { .. } => Model::Lstm(StackedLstm::init(spec, rng)?),
            ModelSpec::ConvAutoencoder { .. } => Model::Cae(ConvAutoencoder::init(spec, rng)?),
        })
    }
}

impl Parameterized for Model {
    fn visit(&self, f: &mut dyn FnMut(ParamRole, &[f64])) {
        match self {
            Model::Lstm(m) => m.visit(f),
            Model::Cae(m) => m.visit(f),
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut [f64])) {
        match self {
            Model::Lstm(m) => m.visit_mut(f),
            Model::Cae(m) => m.visit_mut(f),
        }
    }

    fn activations(&self) -> Vec<&FlexActivation> {
        match self {
            Model::Lstm(m) => m.activations(),
            Model::Cae(m) => m.activations(),
        }
    }

    fn activations_mut(&mut self) -> Vec<&mut FlexActivation> {
        match self {
            Model::Lstm(m) => m.activations_mut(),
            Model::Cae(m) => m.activations_mut(),
        }
    }
}

impl Network for Model {
    type Cache = ModelCache;

    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Model::Lstm(m) => m.forward(input),
            Model::Cae(m) => m.forward(input),
        }
    }

    fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, ModelCache)> {
        Ok(match self {
            Model::Lstm(m) => {
                let (y, c) = m.forward_cached(input)?;
                (y, ModelCache::Lstm(c))
            }
            Model::Cae(m) => {
                let (y, c) = m.forward_cached(input)?;
                (y, ModelCache::Cae(c))
            }
        })
    }

    fn backward(&self, cache: &ModelCache, grad_output: &Tensor, grads: &mut Self) -> Result<()> {
        match (self, cache, grads) {
            (Model::Lstm(m), ModelCache::Lstm(c), Model::Lstm(g)) => m.backward(c, grad_output, g),
            (Model::Cae(m), ModelCache::Cae(c), Model::Cae(g)) => m.backward(c, grad_output, g),
            _ => Err(Error::Contract("model, cache and gradient buffer disagree on model kind".into())),
        }
    }
}
