use serde::{Deserialize, Serialize};

use crate::activations::ActivationKind;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageOp {
    Conv,
    ConvTranspose,
    MaxPool,
}

/// One stage of a convolutional stack. `out_channels` and `activation` are
/// ignored for pooling stages.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvStageSpec {
    pub op: StageOp,
    #[serde(default)]
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    #[serde(default)]
    pub padding: usize,
    #[serde(default)]
    pub activation: Option<ActivationKind>,
}

impl ConvStageSpec {
    pub fn conv(out_channels: usize, kernel: usize, stride: usize, padding: usize, act: ActivationKind) -> Self {
        Self {
            op: StageOp::Conv,
            out_channels,
            kernel,
            stride,
            padding,
            activation: Some(act),
        }
    }

    pub fn deconv(out_channels: usize, kernel: usize, stride: usize, padding: usize, act: ActivationKind) -> Self {
        Self {
            op: StageOp::ConvTranspose,
            ..Self::conv(out_channels, kernel, stride, padding, act)
        }
    }

    pub fn pool(kernel: usize, stride: usize) -> Self {
        Self {
            op: StageOp::MaxPool,
            out_channels: 0,
            kernel,
            stride,
            padding: 0,
            activation: None,
        }
    }

    /// Output `[C, H, W]` for an input of shape `[c, h, w]`.
    pub fn output_shape(&self, [c, h, w]: [usize; 3]) -> Option<[usize; 3]> {
        let (k, s, p) = (self.kernel, self.stride, self.padding);
        if k == 0 || s == 0 {
            return None;
        }
        let down = |n: usize| (n + 2 * p >= k).then(|| (n + 2 * p - k) / s + 1);
        match self.op {
            StageOp::Conv => Some([self.out_channels, down(h)?, down(w)?]).filter(|_| self.out_channels > 0),
            StageOp::MaxPool if p != 0 => None,
            StageOp::MaxPool => Some([c, down(h)?, down(w)?]),
            StageOp::ConvTranspose => {
                let up = |n: usize| {
                    let full = (n.max(1) - 1) * s + k;
                    (n > 0 && full > 2 * p).then(|| full - 2 * p)
                };
                Some([self.out_channels, up(h)?, up(w)?]).filter(|_| self.out_channels > 0)
            }
        }
    }
}

/// Declarative model description, serializable into experiment configs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Stacked LSTM with a linear head producing a one-step-ahead forecast
    /// of the `layer_sizes[0]`-dimensional input.
    StackedLstm {
        layer_sizes: Vec<usize>,
        #[serde(default = "default_gate")]
        gate_activation: ActivationKind,
        #[serde(default = "default_tanh")]
        cell_activation: ActivationKind,
        #[serde(default = "default_tanh")]
        output_activation: ActivationKind,
    },
    ConvAutoencoder {
        input: [usize; 3],
        stages: Vec<ConvStageSpec>,
    },
}

fn default_gate() -> ActivationKind {
    ActivationKind::Sigmoid
}

fn default_tanh() -> ActivationKind {
    ActivationKind::Tanh
}

impl ModelSpec {
    pub fn lstm(layer_sizes: &[usize], gate_activation: ActivationKind) -> Self {
        ModelSpec::StackedLstm {
            layer_sizes: layer_sizes.to_vec(),
            gate_activation,
            cell_activation: ActivationKind::Tanh,
            output_activation: ActivationKind::Tanh,
        }
    }

    /// 28×28×1 → Conv(16,3,3) → MP(2,2) → ConvT(8,5,3) → ConvT(1,2,2) → tanh.
    pub fn cae1(hidden: ActivationKind) -> Self {
        ModelSpec::ConvAutoencoder {
            input: [1, 28, 28],
            stages: vec![
                ConvStageSpec::conv(16, 3, 3, 0, hidden),
                ConvStageSpec::pool(2, 2),
                ConvStageSpec::deconv(8, 5, 3, 0, hidden),
                ConvStageSpec::deconv(1, 2, 2, 0, ActivationKind::Tanh),
            ],
        }
    }

    /// 28×28×1 → Conv(16,3,3) → MP(2,2) → Conv(8,3,2) → MP(2,1) →
    /// ConvT(16,3,2) → ConvT(8,5,3) → ConvT(1,2,2) → tanh, with the
    /// one-pixel paddings needed for the 28×28 round trip.
    pub fn cae2(hidden: ActivationKind) -> Self {
        ModelSpec::ConvAutoencoder {
            input: [1, 28, 28],
            stages: vec![
                ConvStageSpec::conv(16, 3, 3, 1, hidden),
                ConvStageSpec::pool(2, 2),
                ConvStageSpec::conv(8, 3, 2, 1, hidden),
                ConvStageSpec::pool(2, 1),
                ConvStageSpec::deconv(16, 3, 2, 0, hidden),
                ConvStageSpec::deconv(8, 5, 3, 1, hidden),
                ConvStageSpec::deconv(1, 2, 2, 1, ActivationKind::Tanh),
            ],
        }
    }

    /// 32×32×3 → Conv(12,4,2) → Conv(24,4,2) → Conv(48,4,2) → ConvT(24,4,2)
    /// → ConvT(12,4,2) → ConvT(3,4,2) → ReLU, all with padding 1.
    pub fn cae3(hidden: ActivationKind) -> Self {
        ModelSpec::ConvAutoencoder {
            input: [3, 32, 32],
            stages: vec![
                ConvStageSpec::conv(12, 4, 2, 1, hidden),
                ConvStageSpec::conv(24, 4, 2, 1, hidden),
                ConvStageSpec::conv(48, 4, 2, 1, hidden),
                ConvStageSpec::deconv(24, 4, 2, 1, hidden),
                ConvStageSpec::deconv(12, 4, 2, 1, hidden),
                ConvStageSpec::deconv(3, 4, 2, 1, ActivationKind::Relu),
            ],
        }
    }

    /// Small 1×10×10 autoencoder for gradient checks.
    pub fn toy_cae(hidden: ActivationKind) -> Self {
        ModelSpec::ConvAutoencoder {
            input: [1, 10, 10],
            stages: vec![
                ConvStageSpec::conv(3, 3, 1, 1, hidden),
                ConvStageSpec::pool(2, 2),
                ConvStageSpec::deconv(2, 2, 2, 0, hidden),
                ConvStageSpec::conv(1, 3, 1, 1, ActivationKind::Tanh),
            ],
        }
    }

    /// Resolves a named preset (`cae1`, `cae2`, `cae3`, `toy`).
    pub fn cae_preset(name: &str, hidden: ActivationKind) -> Result<Self> {
        match name {
            "cae1" => Ok(Self::cae1(hidden)),
            "cae2" => Ok(Self::cae2(hidden)),
            "cae3" => Ok(Self::cae3(hidden)),
            "toy" => Ok(Self::toy_cae(hidden)),
            other => Err(Error::Config(format!("unknown autoencoder preset `{other}`"))),
        }
    }

    /// Shape of one input example: `[T, d]` sequences are accepted for any
    /// `T`, so only `d` is reported for LSTMs.
    pub fn input_width(&self) -> usize {
        match self {
            ModelSpec::StackedLstm { layer_sizes, .. } => layer_sizes.first().copied().unwrap_or(0),
            ModelSpec::ConvAutoencoder { input, .. } => input.iter().product(),
        }
    }

    /// Shapes after every stage, starting with the input.
    pub fn stage_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let ModelSpec::ConvAutoencoder { input, stages } = self else {
            return Err(Error::Config("stage shapes only exist for autoencoders".into()));
        };
        let mut shapes = vec![*input];
        for (i, s) in stages.iter().enumerate() {
            let prev = *shapes.last().unwrap();
            let next = s
                .output_shape(prev)
                .ok_or_else(|| Error::Config(format!("stage {i} ({:?}) cannot consume shape {prev:?}", s.op)))?;
            shapes.push(next);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            ModelSpec::StackedLstm { layer_sizes, .. } => {
                if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
                    return Err(Error::Config(format!(
                        "an LSTM stack needs an input size and at least one positive hidden size, got {layer_sizes:?}"
                    )));
                }
                Ok(())
            }
            ModelSpec::ConvAutoencoder { input, stages } => {
                if input.contains(&0) || stages.is_empty() {
                    return Err(Error::Config("autoencoder needs a positive input shape and at least one stage".into()));
                }
                let shapes = self.stage_shapes()?;
                let out = shapes.last().unwrap();
                if out != input {
                    return Err(Error::Config(format!(
                        "decoder output {out:?} does not match input {input:?}"
                    )));
                }
                Ok(())
            }
        }
    }
}
