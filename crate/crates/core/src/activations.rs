//! Fixed baseline activations and the flexible combined families.
//!
//! Each flexible family is a convex-style blend of cheap basic components,
//! `o(z) = Σ_k α_k f_k(z; β_k)`, whose combination weights `α` and inner
//! shape parameters `β` are trained by backpropagation next to the layer
//! weights. Every family exposes a closed-form value and closed-form partial
//! derivatives with respect to the input and to each of its parameters.
//!
//! Kink conventions: `ReLU'(0) = 0`, `ELU'(0) = 1`, and the ramp uses its
//! middle-branch slope on the closed interval `|z| <= 1/(2β)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Smallest admissible ramp slope. Below it the ramp plateaus move out to
/// effectively infinite `z`.
pub const BETA_MIN: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ActivationKind {
    #[serde(rename = "sigmoid")]
    Sigmoid,
    #[serde(rename = "tanh")]
    Tanh,
    #[serde(rename = "relu")]
    Relu,
    #[serde(rename = "elu")]
    Elu,
    #[serde(rename = "gelu")]
    Gelu,
    #[serde(rename = "prelu")]
    Prelu,
    #[serde(rename = "p-sig-ramp")]
    PSigRamp,
    #[serde(rename = "p-tanh-ramp")]
    PTanhRamp,
    #[serde(rename = "p-e2-relu")]
    PE2Relu,
    #[serde(rename = "p-e2-relu-1")]
    PE2Relu1,
    #[serde(rename = "p-e2-id")]
    PE2Id,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 11] = [
        Self::Sigmoid,
        Self::Tanh,
        Self::Relu,
        Self::Elu,
        Self::Gelu,
        Self::Prelu,
        Self::PSigRamp,
        Self::PTanhRamp,
        Self::PE2Relu,
        Self::PE2Relu1,
        Self::PE2Id,
    ];

    /// The trainable kinds, in the order the gradient suites walk them.
    pub const FLEXIBLE: [ActivationKind; 6] = [
        Self::PSigRamp,
        Self::PTanhRamp,
        Self::PE2Relu,
        Self::PE2Relu1,
        Self::PE2Id,
        Self::Prelu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sigmoid => "sigmoid",
            Self::Tanh => "tanh",
            Self::Relu => "relu",
            Self::Elu => "elu",
            Self::Gelu => "gelu",
            Self::Prelu => "prelu",
            Self::PSigRamp => "p-sig-ramp",
            Self::PTanhRamp => "p-tanh-ramp",
            Self::PE2Relu => "p-e2-relu",
            Self::PE2Relu1 => "p-e2-relu-1",
            Self::PE2Id => "p-e2-id",
        }
    }

    /// Trainable scalars per unit (or per channel).
    pub fn param_count(self) -> usize {
        match self {
            Self::PSigRamp | Self::PTanhRamp | Self::PE2Relu => 2,
            Self::PE2Relu1 | Self::PE2Id | Self::Prelu => 1,
            _ => 0,
        }
    }

    pub fn is_flexible(self) -> bool {
        self.param_count() > 0
    }

    /// Indices (within one parameter block) of the explicit combination
    /// weights. Inner shape parameters such as the ramp slope and the PReLU
    /// slope are excluded.
    pub fn combination_weight_indices(self) -> &'static [usize] {
        match self {
            Self::PSigRamp | Self::PTanhRamp | Self::PE2Relu1 | Self::PE2Id => &[0],
            Self::PE2Relu => &[0, 1],
            _ => &[],
        }
    }

    /// The fixed kind this family collapses to, with a parameter point at
    /// which the collapse is exact.
    pub fn baseline_point(self) -> Option<(ActivationKind, Vec<f64>)> {
        match self {
            Self::PSigRamp => Some((Self::Sigmoid, vec![1.0, 0.1])),
            Self::PTanhRamp => Some((Self::Tanh, vec![1.0, 0.1])),
            Self::PE2Relu => Some((Self::Relu, vec![1.0, 0.0])),
            Self::PE2Relu1 => Some((Self::Relu, vec![1.0])),
            Self::Prelu => Some((Self::Relu, vec![0.0])),
            _ => None,
        }
    }
}

impl fmt::Display for ActivationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown activation `{s}`")))
    }
}

pub fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn relu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

pub fn elu(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        z.exp_m1()
    }
}

fn elu_prime(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        z.exp()
    }
}

fn step(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

pub fn gelu(z: f64) -> f64 {
    0.5 * z * (1.0 + (GELU_C * (z + 0.044715 * z * z * z)).tanh())
}

fn gelu_prime(z: f64) -> f64 {
    let t = (GELU_C * (z + 0.044715 * z * z * z)).tanh();
    0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * z * z)
}

/// Value of a fixed baseline activation.
pub fn baseline_eval(kind: ActivationKind, z: f64) -> Result<f64> {
    if kind.is_flexible() {
        return Err(Error::WrongKind {
            kind,
            reason: "baseline evaluation needs a fixed activation",
        });
    }
    Ok(eval(kind, z, &[]))
}

/// Elementwise lift of [`baseline_eval`].
pub fn baseline_apply(kind: ActivationKind, z: &Tensor) -> Result<Tensor> {
    baseline_eval(kind, 0.0)?;
    Ok(z.map(|v| eval(kind, v, &[])))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta >= BETA_MIN && beta.is_finite() {
        Ok(())
    } else {
        Err(Error::ParamRange {
            name: "beta",
            value: beta,
            expected: ">= 1e-4",
        })
    }
}

#[inline]
fn ramp_raw(z: f64, beta: f64) -> (f64, bool) {
    let edge = 0.5 / beta;
    if z < -edge {
        (0.0, false)
    } else if z > edge {
        (1.0, false)
    } else {
        (beta * z + 0.5, true)
    }
}

/// Two-sided ramp clamped to `[0, 1]` with slope `beta` through `(0, 1/2)`.
pub fn ramp01(z: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(ramp_raw(z, beta).0)
}

/// Partial derivatives of one activation unit.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScalarGrad {
    pub d_input: f64,
    /// Sensitivities to the unit's parameters, in block order; entries past
    /// the kind's parameter count are zero.
    pub d_params: [f64; 2],
}

/// Unchecked value of any kind at `z` with parameter block `p`.
#[inline]
pub fn eval(kind: ActivationKind, z: f64, p: &[f64]) -> f64 {
    match kind {
        ActivationKind::Sigmoid => sigmoid(z),
        ActivationKind::Tanh => z.tanh(),
        ActivationKind::Relu => relu(z),
        ActivationKind::Elu => elu(z),
        ActivationKind::Gelu => gelu(z),
        ActivationKind::Prelu => {
            if z > 0.0 {
                z
            } else {
                p[0] * z
            }
        }
        ActivationKind::PSigRamp => {
            let a = p[0];
            a * sigmoid(z) + (1.0 - a) * ramp_raw(z, p[1]).0
        }
        ActivationKind::PTanhRamp => {
            let a = p[0];
            a * z.tanh() + (1.0 - a) * (2.0 * ramp_raw(z, p[1]).0 - 1.0)
        }
        ActivationKind::PE2Relu => {
            let (a, b) = (p[0], p[1]);
            a * relu(z) + b * elu(z) + (1.0 - a - b) * -elu(-z)
        }
        ActivationKind::PE2Relu1 => {
            let a = p[0];
            a * relu(z) + 0.5 * (1.0 - a) * (elu(z) - elu(-z))
        }
        ActivationKind::PE2Id => {
            let a = p[0];
            a * z + (1.0 - a) * (elu(z) - elu(-z))
        }
    }
}

/// Unchecked partial derivatives of any kind at `z`.
#[inline]
pub fn grad(kind: ActivationKind, z: f64, p: &[f64]) -> ScalarGrad {
    let (d_input, d_params) = match kind {
        ActivationKind::Sigmoid => {
            let s = sigmoid(z);
            (s * (1.0 - s), [0.0; 2])
        }
        ActivationKind::Tanh => {
            let t = z.tanh();
            (1.0 - t * t, [0.0; 2])
        }
        ActivationKind::Relu => (step(z), [0.0; 2]),
        ActivationKind::Elu => (elu_prime(z), [0.0; 2]),
        ActivationKind::Gelu => (gelu_prime(z), [0.0; 2]),
        ActivationKind::Prelu => {
            if z > 0.0 {
                (1.0, [0.0; 2])
            } else {
                (p[0], [z, 0.0])
            }
        }
        ActivationKind::PSigRamp => {
            let (a, b) = (p[0], p[1]);
            let s = sigmoid(z);
            let (r, mid) = ramp_raw(z, b);
            let (dr_dz, dr_db) = if mid { (b, z) } else { (0.0, 0.0) };
            (
                a * s * (1.0 - s) + (1.0 - a) * dr_dz,
                [s - r, (1.0 - a) * dr_db],
            )
        }
        ActivationKind::PTanhRamp => {
            let (a, b) = (p[0], p[1]);
            let t = z.tanh();
            let (r, mid) = ramp_raw(z, b);
            let (dr_dz, dr_db) = if mid { (b, z) } else { (0.0, 0.0) };
            (
                a * (1.0 - t * t) + (1.0 - a) * 2.0 * dr_dz,
                [t - (2.0 * r - 1.0), (1.0 - a) * 2.0 * dr_db],
            )
        }
        ActivationKind::PE2Relu => {
            let (a, b) = (p[0], p[1]);
            (
                a * step(z) + b * elu_prime(z) + (1.0 - a - b) * elu_prime(-z),
                [relu(z) + elu(-z), elu(z) + elu(-z)],
            )
        }
        ActivationKind::PE2Relu1 => {
            let a = p[0];
            (
                a * step(z) + 0.5 * (1.0 - a) * (elu_prime(z) + elu_prime(-z)),
                [relu(z) - 0.5 * (elu(z) - elu(-z)), 0.0],
            )
        }
        ActivationKind::PE2Id => {
            let a = p[0];
            (
                a + (1.0 - a) * (elu_prime(z) + elu_prime(-z)),
                [z - (elu(z) - elu(-z)), 0.0],
            )
        }
    };
    ScalarGrad { d_input, d_params }
}

fn check_block(kind: ActivationKind, params: &[f64]) -> Result<()> {
    if params.len() != kind.param_count() {
        return Err(Error::Parameter(format!(
            "{kind} expects {} parameters, got {}",
            kind.param_count(),
            params.len()
        )));
    }
    if matches!(kind, ActivationKind::PSigRamp | ActivationKind::PTanhRamp) {
        check_beta(params[1])?;
    }
    Ok(())
}

pub fn psig_ramp_eval(z: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(eval(ActivationKind::PSigRamp, z, &[alpha, beta]))
}

/// `(∂o/∂z, ∂o/∂α, ∂o/∂β)`.
pub fn psig_ramp_grad(z: f64, alpha: f64, beta: f64) -> Result<(f64, f64, f64)> {
    check_beta(beta)?;
    let g = grad(ActivationKind::PSigRamp, z, &[alpha, beta]);
    Ok((g.d_input, g.d_params[0], g.d_params[1]))
}

pub fn ptanh_ramp_eval(z: f64, alpha: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(eval(ActivationKind::PTanhRamp, z, &[alpha, beta]))
}

pub fn ptanh_ramp_grad(z: f64, alpha: f64, beta: f64) -> Result<(f64, f64, f64)> {
    check_beta(beta)?;
    let g = grad(ActivationKind::PTanhRamp, z, &[alpha, beta]);
    Ok((g.d_input, g.d_params[0], g.d_params[1]))
}

pub fn pe2_relu_eval(z: f64, alpha: f64, beta: f64) -> f64 {
    eval(ActivationKind::PE2Relu, z, &[alpha, beta])
}

pub fn pe2_relu_grad(z: f64, alpha: f64, beta: f64) -> (f64, f64, f64) {
    let g = grad(ActivationKind::PE2Relu, z, &[alpha, beta]);
    (g.d_input, g.d_params[0], g.d_params[1])
}

pub fn pe2_relu1_eval(z: f64, alpha: f64) -> f64 {
    eval(ActivationKind::PE2Relu1, z, &[alpha])
}

pub fn pe2_relu1_grad(z: f64, alpha: f64) -> (f64, f64) {
    let g = grad(ActivationKind::PE2Relu1, z, &[alpha]);
    (g.d_input, g.d_params[0])
}

pub fn pe2_id_eval(z: f64, alpha: f64) -> f64 {
    eval(ActivationKind::PE2Id, z, &[alpha])
}

pub fn pe2_id_grad(z: f64, alpha: f64) -> (f64, f64) {
    let g = grad(ActivationKind::PE2Id, z, &[alpha]);
    (g.d_input, g.d_params[0])
}

pub fn prelu_eval(z: f64, a: f64) -> f64 {
    eval(ActivationKind::Prelu, z, &[a])
}

pub fn prelu_grad(z: f64, a: f64) -> (f64, f64) {
    let g = grad(ActivationKind::Prelu, z, &[a]);
    (g.d_input, g.d_params[0])
}

/// Default parameter block: each family starts at (or near) the standard
/// activation it replaces.
pub fn init_params(kind: ActivationKind) -> Result<Vec<f64>> {
    match kind {
        ActivationKind::PSigRamp | ActivationKind::PTanhRamp => Ok(vec![1.0, 0.1]),
        ActivationKind::PE2Relu => Ok(vec![0.4, 0.3]),
        ActivationKind::PE2Relu1 | ActivationKind::PE2Id => Ok(vec![0.5]),
        ActivationKind::Prelu => Ok(vec![0.25]),
        _ => Err(Error::WrongKind {
            kind,
            reason: "fixed activations have no parameters",
        }),
    }
}

/// The combination weights of [`init_params`], used as the pull target of
/// towards-default regularization.
pub fn default_combination_weights(kind: ActivationKind) -> Vec<f64> {
    let init = init_params(kind).unwrap_or_default();
    kind.combination_weight_indices()
        .iter()
        .map(|&i| init[i])
        .collect()
}

/// Sensitivities returned by [`FlexActivation::backward`].
#[derive(Clone, Debug, PartialEq)]
pub struct ActivationGrad {
    /// `∂L/∂z`, same length as the input.
    pub d_input: Vec<f64>,
    /// `∂L/∂θ` for every trainable parameter, summed over the units that
    /// share it. Same layout as [`FlexActivation::params`].
    pub d_params: Vec<f64>,
}

/// One activation position in a network: a kind plus its parameter blocks.
///
/// Parameters are stored block-major (`block * param_count + j`). For dense
/// and recurrent layers there is one block per unit; for convolutional
/// layers one block per output channel, shared by every spatial position of
/// that channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlexActivation {
    kind: ActivationKind,
    params: Vec<f64>,
    blocks: usize,
    shared_per_channel: bool,
}

impl FlexActivation {
    /// `blocks` units (or channels) at the kind's default initialization.
    pub fn new(kind: ActivationKind, blocks: usize, shared_per_channel: bool) -> Self {
        let init = init_params(kind).unwrap_or_default();
        let params = (0..blocks).flat_map(|_| init.iter().copied()).collect();
        Self {
            kind,
            params,
            blocks,
            shared_per_channel,
        }
    }

    /// Every block set to the same `block` values.
    pub fn uniform(
        kind: ActivationKind,
        blocks: usize,
        shared_per_channel: bool,
        block: &[f64],
    ) -> Result<Self> {
        check_block(kind, block)?;
        let params = (0..blocks).flat_map(|_| block.iter().copied()).collect();
        Ok(Self {
            kind,
            params,
            blocks,
            shared_per_channel,
        })
    }

    pub fn with_params(
        kind: ActivationKind,
        blocks: usize,
        shared_per_channel: bool,
        params: Vec<f64>,
    ) -> Result<Self> {
        if params.len() != blocks * kind.param_count() {
            return Err(Error::Parameter(format!(
                "{kind} with {blocks} blocks needs {} parameters, got {}",
                blocks * kind.param_count(),
                params.len()
            )));
        }
        let act = Self {
            kind,
            params,
            blocks,
            shared_per_channel,
        };
        act.validate()?;
        Ok(act)
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    pub fn blocks(&self) -> usize {
        self.blocks
    }

    pub fn shared_per_channel(&self) -> bool {
        self.shared_per_channel
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn block(&self, i: usize) -> &[f64] {
        let p = self.kind.param_count();
        &self.params[i * p..(i + 1) * p]
    }

    pub fn validate(&self) -> Result<()> {
        let p = self.kind.param_count();
        if p == 0 {
            return Ok(());
        }
        self.params.chunks(p).try_for_each(|b| check_block(self.kind, b))
    }

    /// Projects inner slopes back above [`BETA_MIN`] after an optimizer step.
    pub fn project(&mut self) {
        if matches!(self.kind, ActivationKind::PSigRamp | ActivationKind::PTanhRamp) {
            for b in self.params.chunks_mut(2) {
                if !(b[1] >= BETA_MIN) {
                    b[1] = BETA_MIN;
                }
            }
        }
    }

    fn positions_per_block(&self, len: usize) -> Result<usize> {
        if self.blocks == 0 || len % self.blocks != 0 || (!self.shared_per_channel && len != self.blocks) {
            return Err(Error::dim("activation", &[len], &[self.blocks]));
        }
        Ok(len / self.blocks)
    }

    pub fn forward(&self, z: &[f64]) -> Result<Vec<f64>> {
        let per = self.positions_per_block(z.len())?;
        let p = self.kind.param_count();
        Ok(z.chunks(per)
            .enumerate()
            .flat_map(|(b, chunk)| {
                let block = &self.params[b * p..(b + 1) * p];
                chunk.iter().map(move |&v| eval(self.kind, v, block))
            })
            .collect())
    }

    /// Shape-preserving [`forward`](Self::forward) over a tensor.
    pub fn apply(&self, z: &Tensor) -> Result<Tensor> {
        Tensor::new(z.shape().to_vec(), self.forward(z.data())?)
    }

    /// Chain rule through the activation: given pre-activations `z` and the
    /// upstream `∂L/∂o`, returns `∂L/∂z` and the parameter sensitivities.
    pub fn backward(&self, z: &[f64], grad_out: &[f64]) -> Result<ActivationGrad> {
        if z.len() != grad_out.len() {
            return Err(Error::dim("activation backward", &[z.len()], &[grad_out.len()]));
        }
        let per = self.positions_per_block(z.len())?;
        let p = self.kind.param_count();
        let mut d_input = Vec::with_capacity(z.len());
        let mut d_params = vec![0.0; self.params.len()];
        for (b, (zc, gc)) in z.chunks(per).zip(grad_out.chunks(per)).enumerate() {
            let block = &self.params[b * p..(b + 1) * p];
            let acc = &mut d_params[b * p..(b + 1) * p];
            for (&zv, &gv) in zc.iter().zip(gc) {
                let g = grad(self.kind, zv, block);
                d_input.push(gv * g.d_input);
                for (a, dp) in acc.iter_mut().zip(g.d_params) {
                    *a += gv * dp;
                }
            }
        }
        Ok(ActivationGrad { d_input, d_params })
    }
}
