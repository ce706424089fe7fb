//! Convolutional autoencoder assembled from a [`ModelSpec`] stage list.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::spec::{ModelSpec, StageOp};
use super::{uniform_init, Network, ParamRole, Parameterized};
use crate::activations::FlexActivation;
use crate::error::{Error, Result};
use crate::tensor::{
    conv2d_backward, conv2d_padded, conv_transpose2d, conv_transpose2d_backward, maxpool2d, maxpool2d_backward,
    Tensor,
};

/// One stage. Pooling stages carry empty kernels and no activation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    pub op: StageOp,
    /// `[C_out, C_in, k, k]` for convolutions, `[C_in, C_out, k, k]` for
    /// transposed convolutions.
    pub kernels: Tensor,
    pub bias: Tensor,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    /// Channel-shared activation applied to the stage output.
    pub act: Option<FlexActivation>,
}

impl ConvLayer {
    fn weight_count(&self) -> usize {
        self.kernels.len() + self.bias.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvAutoencoder {
    pub input: [usize; 3],
    pub layers: Vec<ConvLayer>,
}

/// Per-stage inputs and pre-activations recorded by the forward pass.
pub struct CaeCache {
    pub inputs: Vec<Tensor>,
    pub pre: Vec<Tensor>,
    pub pool_indices: Vec<Vec<usize>>,
}

impl ConvAutoencoder {
    fn build(spec: &ModelSpec, mut fill: impl FnMut(usize, usize) -> Vec<f64>) -> Result<Self> {
        let ModelSpec::ConvAutoencoder { input, stages } = spec else {
            return Err(Error::Config("expected a convolutional autoencoder spec".into()));
        };
        spec.validate()?;
        let shapes = spec.stage_shapes()?;
        let mut layers = Vec::with_capacity(stages.len());
        for (s, in_shape) in stages.iter().zip(&shapes) {
            let c_in = in_shape[0];
            let k = s.kernel;
            let (kernels, bias, act) = match s.op {
                StageOp::MaxPool => (Tensor::zeros(&[0]), Tensor::zeros(&[0]), None),
                op => {
                    let c_out = s.out_channels;
                    let fan_in = c_in * k * k;
                    let shape = if op == StageOp::Conv {
                        [c_out, c_in, k, k]
                    } else {
                        [c_in, c_out, k, k]
                    };
                    let kernels = Tensor::new(shape.to_vec(), fill(c_in * c_out * k * k, fan_in))?;
                    let bias = Tensor::new(vec![c_out], fill(c_out, fan_in))?;
                    let act = s.activation.map(|kind| FlexActivation::new(kind, c_out, true));
                    (kernels, bias, act)
                }
            };
            layers.push(ConvLayer {
                op: s.op,
                kernels,
                bias,
                kernel: k,
                stride: s.stride,
                pad: s.padding,
                act,
            });
        }
        Ok(Self { input: *input, layers })
    }

    /// All kernels and biases zero, activations at their defaults.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        Self::build(spec, |n, _| vec![0.0; n])
    }

    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        Self::build(spec, |n, fan_in| uniform_init(rng, n, fan_in))
    }

    /// Kernel and bias count, the basic-model parameter total.
    pub fn weight_count(&self) -> usize {
        self.layers.iter().map(ConvLayer::weight_count).sum()
    }

    fn shaped_input(&self, input: &Tensor) -> Result<Tensor> {
        if input.len() != self.input.iter().product::<usize>() {
            return Err(Error::dim("cae_forward", input.shape(), &self.input));
        }
        input.clone().reshape(self.input.to_vec())
    }

    fn run(&self, input: &Tensor, mut cache: Option<&mut CaeCache>) -> Result<Tensor> {
        let mut x = self.shaped_input(input)?;
        for layer in &self.layers {
            let (z, idx) = match layer.op {
                StageOp::Conv => (conv2d_padded(&x, &layer.kernels, &layer.bias, layer.stride, layer.pad)?, Vec::new()),
                StageOp::ConvTranspose => (
                    conv_transpose2d(&x, &layer.kernels, &layer.bias, layer.stride, layer.pad)?,
                    Vec::new(),
                ),
                StageOp::MaxPool => maxpool2d(&x, layer.kernel, layer.stride)?,
            };
            let out = match &layer.act {
                Some(a) => a.apply(&z)?,
                None => z.clone(),
            };
            if let Some(c) = cache.as_deref_mut() {
                c.inputs.push(x);
                c.pre.push(z);
                c.pool_indices.push(idx);
            }
            x = out;
        }
        x.reshape(input.shape().to_vec())
    }
}

impl Parameterized for ConvAutoencoder {
    fn visit(&self, f: &mut dyn FnMut(ParamRole, &[f64])) {
        for l in &self.layers {
            f(ParamRole::Weight, l.kernels.data());
            f(ParamRole::Bias, l.bias.data());
            if let Some(a) = &l.act {
                f(ParamRole::Activation, a.params());
            }
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut [f64])) {
        for l in &mut self.layers {
            f(ParamRole::Weight, l.kernels.data_mut());
            f(ParamRole::Bias, l.bias.data_mut());
            if let Some(a) = &mut l.act {
                f(ParamRole::Activation, a.params_mut());
            }
        }
    }

    fn activations(&self) -> Vec<&FlexActivation> {
        self.layers.iter().filter_map(|l| l.act.as_ref()).collect()
    }

    fn activations_mut(&mut self) -> Vec<&mut FlexActivation> {
        self.layers.iter_mut().filter_map(|l| l.act.as_mut()).collect()
    }
}

impl Network for ConvAutoencoder {
    type Cache = CaeCache;

    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.run(input, None)
    }

    fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, CaeCache)> {
        let mut cache = CaeCache {
            inputs: Vec::with_capacity(self.layers.len()),
            pre: Vec::with_capacity(self.layers.len()),
            pool_indices: Vec::with_capacity(self.layers.len()),
        };
        let y = self.run(input, Some(&mut cache))?;
        Ok((y, cache))
    }

    fn backward(&self, cache: &CaeCache, grad_output: &Tensor, grads: &mut Self) -> Result<()> {
        let n = self.layers.len();
        if cache.inputs.len() != n || cache.pre.len() != n || grads.layers.len() != n {
            return Err(Error::Contract("autoencoder cache does not match the model".into()));
        }
        let last = &cache.pre[n - 1];
        if grad_output.len() != last.len() {
            return Err(Error::dim("cae_backward", grad_output.shape(), last.shape()));
        }
        let mut g = grad_output.clone().reshape(last.shape().to_vec())?;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[l];
            let z = &cache.pre[l];
            let gl = &mut grads.layers[l];
            if let Some(a) = &layer.act {
                let ag = a.backward(z.data(), g.data())?;
                if let Some(ga) = &mut gl.act {
                    for (d, s) in ga.params_mut().iter_mut().zip(&ag.d_params) {
                        *d += s;
                    }
                }
                g = Tensor::new(z.shape().to_vec(), ag.d_input)?;
            }
            let (gx, gk, gb) = match layer.op {
                StageOp::Conv => conv2d_backward(x, &layer.kernels, &g, layer.stride, layer.pad)?,
                StageOp::ConvTranspose => conv_transpose2d_backward(x, &layer.kernels, &g, layer.stride, layer.pad)?,
                StageOp::MaxPool => {
                    let gx = maxpool2d_backward(&g, &cache.pool_indices[l], x.shape())?;
                    g = gx;
                    continue;
                }
            };
            for (d, s) in gl.kernels.data_mut().iter_mut().zip(gk.data()) {
                *d += s;
            }
            for (d, s) in gl.bias.data_mut().iter_mut().zip(gb.data()) {
                *d += s;
            }
            g = gx;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::activations::ActivationKind;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn preset_weight_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for (spec, n) in [
            (ModelSpec::cae1(ActivationKind::Relu), 3401),
            (ModelSpec::cae2(ActivationKind::Relu), 5729),
            (ModelSpec::cae3(ActivationKind::Relu), 47355),
        ] {
            let m = ConvAutoencoder::init(&spec, &mut rng).unwrap();
            assert_eq!(m.weight_count(), n);
            assert_eq!(m.count(ParamRole::MODEL), n);
        }
    }

    #[test]
    fn cae1_flexible_channels() {
        let m = ConvAutoencoder::zeros(&ModelSpec::cae1(ActivationKind::PE2Relu)).unwrap();
        // Hidden positions only; the tanh head has no parameters.
        assert_eq!(m.count(ParamRole::ACTIVATION), 2 * (16 + 8));
    }

    #[test]
    fn zero_model_reconstructs_head_at_zero() {
        let m = ConvAutoencoder::zeros(&ModelSpec::cae1(ActivationKind::Relu)).unwrap();
        let x = Tensor::filled(&[1, 28, 28], 0.3);
        let y = m.forward(&x).unwrap();
        assert_eq!(y.shape(), &[1, 28, 28]);
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn output_keeps_input_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for spec in [ModelSpec::cae2(ActivationKind::Relu), ModelSpec::cae3(ActivationKind::Relu)] {
            let m = ConvAutoencoder::init(&spec, &mut rng).unwrap();
            let ModelSpec::ConvAutoencoder { input, .. } = spec else { unreachable!() };
            let x = Tensor::filled(&input, 0.5);
            assert_eq!(m.forward(&x).unwrap().shape(), &input);
            let flat = Tensor::filled(&[input.iter().product()], 0.5);
            assert_eq!(m.forward(&flat).unwrap().shape(), flat.shape());
        }
        let m = ConvAutoencoder::zeros(&ModelSpec::toy_cae(ActivationKind::Relu)).unwrap();
        assert!(m.forward(&Tensor::zeros(&[1, 9, 9])).is_err());
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let m = ConvAutoencoder::zeros(&ModelSpec::toy_cae(ActivationKind::Relu)).unwrap();
        let (y, mut cache) = m.forward_cached(&Tensor::zeros(&[1, 10, 10])).unwrap();
        cache.pre.pop();
        let mut g = m.zeroed();
        assert!(m.backward(&cache, &y, &mut g).is_err());
    }
}
