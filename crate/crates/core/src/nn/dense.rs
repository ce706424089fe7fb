use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{uniform_init, ParamRole};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Affine map `y = W x + b` with `W` stored `[out, in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn init(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Self {
            weight: Tensor::new(vec![outputs, inputs], uniform_init(rng, outputs * inputs, inputs)).unwrap(),
            bias: Tensor::vector(uniform_init(rng, outputs, inputs)),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(Error::dim("dense", self.weight.shape(), &[x.len()]));
        }
        let n = self.inputs();
        Ok(self
            .bias
            .data()
            .iter()
            .enumerate()
            .map(|(o, b)| b + dot(&self.weight.data()[o * n..(o + 1) * n], x))
            .collect())
    }

    /// Returns `∂L/∂x`, accumulating weight and bias gradients into `grads`.
    pub fn backward(&self, x: &[f64], grad_y: &[f64], grads: &mut Dense) -> Result<Vec<f64>> {
        if grad_y.len() != self.outputs() || x.len() != self.inputs() {
            return Err(Error::dim("dense backward", self.weight.shape(), &[grad_y.len(), x.len()]));
        }
        let n = self.inputs();
        let mut gx = vec![0.0; n];
        for (o, &g) in grad_y.iter().enumerate() {
            grads.bias.data_mut()[o] += g;
            let row = &self.weight.data()[o * n..(o + 1) * n];
            let grow = &mut grads.weight.data_mut()[o * n..(o + 1) * n];
            for i in 0..n {
                grow[i] += g * x[i];
                gx[i] += g * row[i];
            }
        }
        Ok(gx)
    }

    pub(crate) fn visit(&self, f: &mut dyn FnMut(ParamRole, &[f64])) {
        f(ParamRole::Weight, self.weight.data());
        f(ParamRole::Bias, self.bias.data());
    }

    pub(crate) fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut [f64])) {
        f(ParamRole::Weight, self.weight.data_mut());
        f(ParamRole::Bias, self.bias.data_mut());
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
