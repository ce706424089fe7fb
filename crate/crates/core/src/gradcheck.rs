//! Central finite-difference checks of the hand-derived gradients.
//!
//! Relative error is `|a − n| / max(|a|, |n|, FLOOR)`. The floor keeps
//! gradients that are numerically zero from dividing by noise; below it the
//! comparison is absolute at `FLOOR · tolerance`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::activations::{eval, grad, ActivationKind, FlexActivation};
use crate::error::Result;
use crate::nn::{ModelSpec, Network, ParamRole, Parameterized, StackedLstm};
use crate::nn::ConvAutoencoder;
use crate::regularization::RegConfig;
use crate::tensor::Tensor;
use crate::train::{batch_gradient, batch_objective};

pub const STEP: f64 = 1e-6;
pub const FLOOR: f64 = 1e-4;

pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub name: String,
    pub probes: usize,
    pub max_rel_error: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// Random parameter block inside the family's intended domain, away from
/// degenerate slopes.
pub fn random_block(kind: ActivationKind, rng: &mut impl Rng) -> Vec<f64> {
    match kind {
        ActivationKind::PSigRamp | ActivationKind::PTanhRamp => {
            vec![rng.random_range(0.05..0.95), rng.random_range(0.05..2.0)]
        }
        ActivationKind::PE2Relu => {
            let a: f64 = rng.random_range(0.05..0.9);
            vec![a, rng.random_range(0.05..(1.0 - a).max(0.06))]
        }
        ActivationKind::PE2Relu1 | ActivationKind::PE2Id => vec![rng.random_range(0.05..0.95)],
        ActivationKind::Prelu => vec![rng.random_range(0.0..0.5)],
        _ => Vec::new(),
    }
}

fn near_kink(kind: ActivationKind, z: f64, p: &[f64]) -> bool {
    let margin = 1e-3;
    if z.abs() <= margin {
        return true;
    }
    matches!(kind, ActivationKind::PSigRamp | ActivationKind::PTanhRamp)
        && ((z - 0.5 / p[1]).abs() <= margin || (z + 0.5 / p[1]).abs() <= margin)
}

/// Scalar partials of one family at `probes` random non-kink points.
pub fn check_family(kind: ActivationKind, probes: usize, seed: u64, tolerance: f64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut done = 0;
    while done < probes {
        let p = random_block(kind, &mut rng);
        let z = rng.random_range(-6.0..6.0);
        if near_kink(kind, z, &p) {
            continue;
        }
        let g = grad(kind, z, &p);
        let dz = (eval(kind, z + STEP, &p) - eval(kind, z - STEP, &p)) / (2.0 * STEP);
        worst = worst.max(rel_error(g.d_input, dz));
        for j in 0..p.len() {
            let (mut hi, mut lo) = (p.clone(), p.clone());
            hi[j] += STEP;
            lo[j] -= STEP;
            let dp = (eval(kind, z, &hi) - eval(kind, z, &lo)) / (2.0 * STEP);
            worst = worst.max(rel_error(g.d_params[j], dp));
        }
        done += 1;
    }
    GradCheckReport {
        name: kind.name().to_string(),
        probes,
        max_rel_error: worst,
        tolerance,
    }
}

/// Compares `∂L/∂θ` from the backward pass with central differences of the
/// batch objective at `probes` parameter coordinates. Half of the probes
/// target activation parameters when the model has any.
pub fn check_model<M: Network>(
    name: &str,
    model: &M,
    inputs: &[Tensor],
    targets: &[Tensor],
    reg: &RegConfig,
    probes: usize,
    seed: u64,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let xs: Vec<&Tensor> = inputs.iter().collect();
    let ys: Vec<&Tensor> = targets.iter().collect();
    let (_, grads) = batch_gradient(model, &xs, &ys, reg)?;

    let all = [ParamRole::Weight, ParamRole::Bias, ParamRole::Activation];
    let theta = model.gather(&all);
    let analytic = grads.gather(&all);
    let mut roles = Vec::with_capacity(theta.len());
    model.visit(&mut |role, vals| roles.extend(std::iter::repeat_n(role, vals.len())));
    let act_idx: Vec<usize> = (0..theta.len()).filter(|&i| roles[i] == ParamRole::Activation).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for k in 0..probes {
        let i = if k % 2 == 1 && !act_idx.is_empty() {
            act_idx[rng.random_range(0..act_idx.len())]
        } else {
            rng.random_range(0..theta.len())
        };
        let mut shifted = theta.clone();
        shifted[i] = theta[i] + STEP;
        probe.scatter(&all, &shifted)?;
        let up = batch_objective(&probe, &xs, &ys, reg)?.total;
        shifted[i] = theta[i] - STEP;
        probe.scatter(&all, &shifted)?;
        let down = batch_objective(&probe, &xs, &ys, reg)?.total;
        let numeric = (up - down) / (2.0 * STEP);
        worst = worst.max(rel_error(analytic[i], numeric));
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        probes,
        max_rel_error: worst,
        tolerance,
    })
}

/// Moves every activation block to a random interior point so that the
/// parameter gradients are generic (at the default point several vanish).
pub fn randomize_activations(model: &mut impl Parameterized, rng: &mut impl Rng) {
    for act in model.activations_mut() {
        randomize(act, rng);
    }
}

fn randomize(act: &mut FlexActivation, rng: &mut impl Rng) {
    let kind = act.kind();
    let p = kind.param_count();
    for b in 0..act.blocks() {
        let block = random_block(kind, rng);
        act.params_mut()[b * p..(b + 1) * p].copy_from_slice(&block);
    }
}

/// Regularization used by the end-to-end checks: every penalty switched on
/// so its gradient is exercised too.
pub fn check_reg() -> RegConfig {
    RegConfig {
        delta1: 0.05,
        delta2: 0.1,
        delta3: 1.0,
        weight_decay: 1e-3,
        ..RegConfig::default()
    }
}

/// End-to-end check of an LSTM `[3, 4]` with P-Sig-Ramp gates and
/// P-Tanh-Ramp candidate and output activations.
pub fn check_lstm(probes: usize, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ModelSpec::StackedLstm {
        layer_sizes: vec![3, 4],
        gate_activation: ActivationKind::PSigRamp,
        cell_activation: ActivationKind::PTanhRamp,
        output_activation: ActivationKind::PTanhRamp,
    };
    let mut model = StackedLstm::init(&spec, &mut rng)?;
    randomize_activations(&mut model, &mut rng);
    let inputs: Vec<Tensor> = (0..3)
        .map(|_| Tensor::new(vec![5, 3], (0..15).map(|_| rng.random_range(-1.5..1.5)).collect()))
        .collect::<Result<_>>()?;
    let targets: Vec<Tensor> = (0..3)
        .map(|_| Tensor::vector((0..3).map(|_| rng.random_range(-1.0..1.0)).collect()))
        .collect();
    check_model("lstm [3,4]", &model, &inputs, &targets, &check_reg(), probes, seed ^ 0x5eed, tolerance)
}

/// End-to-end check of the 1×10×10 toy autoencoder with P-E2-ReLU hidden
/// activations.
pub fn check_toy_cae(probes: usize, seed: u64, tolerance: f64) -> Result<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = ModelSpec::toy_cae(ActivationKind::PE2Relu);
    let mut model = ConvAutoencoder::init(&spec, &mut rng)?;
    randomize_activations(&mut model, &mut rng);
    let inputs: Vec<Tensor> = (0..2)
        .map(|_| Tensor::new(vec![1, 10, 10], (0..100).map(|_| rng.random_range(0.0..1.0)).collect()))
        .collect::<Result<_>>()?;
    check_model("toy cae", &model, &inputs, &inputs, &check_reg(), probes, seed ^ 0x5eed, tolerance)
}

/// The full suite: every flexible family plus both end-to-end models.
pub fn run_suite(probes: usize, seed: u64, tolerance: f64) -> Result<Vec<GradCheckReport>> {
    let mut out: Vec<GradCheckReport> = [
        ActivationKind::PSigRamp,
        ActivationKind::PTanhRamp,
        ActivationKind::PE2Relu,
        ActivationKind::PE2Relu1,
        ActivationKind::PE2Id,
        ActivationKind::Prelu,
    ]
    .into_iter()
    .map(|k| check_family(k, probes, seed, tolerance))
    .collect();
    out.push(check_lstm(probes, seed, tolerance)?);
    out.push(check_toy_cae(probes, seed, tolerance)?);
    Ok(out)
}
