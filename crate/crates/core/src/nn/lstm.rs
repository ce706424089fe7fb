//! LSTM cell with pluggable gate activations, and a stacked sequence model
//! with a linear one-step-ahead forecasting head.
//!
//! Cell equations, with `φ_f, φ_i, φ_o` the gate activations (sigmoid by
//! default), `ψ_g` the candidate activation and `ψ_c` the output squash
//! (tanh by default):
//!
//! ```text
//! f_t = φ_f(W_fx x_t + W_fh h_{t-1} + b_f)
//! i_t = φ_i(W_ix x_t + W_ih h_{t-1} + b_i)
//! o_t = φ_o(W_ox x_t + W_oh h_{t-1} + b_o)
//! g_t = ψ_g(W_gx x_t + W_gh h_{t-1} + b_g)
//! c_t = f_t * c_{t-1} + i_t * g_t
//! h_t = o_t * ψ_c(c_t)
//! ```
//!
//! The four input matrices are stacked row-wise into `w_x` in gate order
//! `f, i, o, g`; likewise `w_h` and `b`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dense::{dot, Dense};
use super::{uniform_init, Network, ParamRole, Parameterized};
use crate::activations::{ActivationKind, FlexActivation};
use crate::error::{Error, Result};
use crate::nn::spec::ModelSpec;
use crate::tensor::Tensor;

/// Row-block order of the stacked gate matrices.
pub const GATES: [&str; 4] = ["f", "i", "o", "g"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LstmCellParams {
    /// `[4·hidden, input]`.
    pub w_x: Tensor,
    /// `[4·hidden, hidden]`.
    pub w_h: Tensor,
    /// `[4·hidden]`.
    pub b: Tensor,
    /// Activations of the forget, input and output gates, one parameter
    /// block per hidden unit each.
    pub gate_acts: [FlexActivation; 3],
    /// Candidate activation `ψ_g`.
    pub cell_act: FlexActivation,
    /// Output squash `ψ_c`.
    pub out_act: FlexActivation,
}

impl LstmCellParams {
    pub fn zeros(input: usize, hidden: usize, gate: ActivationKind, cell: ActivationKind, out: ActivationKind) -> Self {
        let act = |k| FlexActivation::new(k, hidden, false);
        Self {
            w_x: Tensor::zeros(&[4 * hidden, input]),
            w_h: Tensor::zeros(&[4 * hidden, hidden]),
            b: Tensor::zeros(&[4 * hidden]),
            gate_acts: [act(gate), act(gate), act(gate)],
            cell_act: act(cell),
            out_act: act(out),
        }
    }

    pub fn init(
        input: usize,
        hidden: usize,
        gate: ActivationKind,
        cell: ActivationKind,
        out: ActivationKind,
        rng: &mut impl Rng,
    ) -> Self {
        let mut p = Self::zeros(input, hidden, gate, cell, out);
        let fan_in = input + hidden;
        p.w_x.data_mut().copy_from_slice(&uniform_init(rng, 4 * hidden * input, fan_in));
        p.w_h.data_mut().copy_from_slice(&uniform_init(rng, 4 * hidden * hidden, fan_in));
        p.b.data_mut().copy_from_slice(&uniform_init(rng, 4 * hidden, fan_in));
        p
    }

    pub fn input_size(&self) -> usize {
        self.w_x.shape()[1]
    }

    pub fn hidden_size(&self) -> usize {
        self.w_h.shape()[1]
    }

    fn visit(&self, f: &mut dyn FnMut(ParamRole, &[f64])) {
        f(ParamRole::Weight, self.w_x.data());
        f(ParamRole::Weight, self.w_h.data());
        f(ParamRole::Bias, self.b.data());
        for a in self.activations() {
            f(ParamRole::Activation, a.params());
        }
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut [f64])) {
        f(ParamRole::Weight, self.w_x.data_mut());
        f(ParamRole::Weight, self.w_h.data_mut());
        f(ParamRole::Bias, self.b.data_mut());
        for a in self.activations_mut() {
            f(ParamRole::Activation, a.params_mut());
        }
    }

    pub fn activations(&self) -> Vec<&FlexActivation> {
        let [f, i, o] = &self.gate_acts;
        vec![f, i, o, &self.cell_act, &self.out_act]
    }

    pub fn activations_mut(&mut self) -> Vec<&mut FlexActivation> {
        let [f, i, o] = &mut self.gate_acts;
        vec![f, i, o, &mut self.cell_act, &mut self.out_act]
    }
}

/// Everything one cell step needs to run backward.
#[derive(Clone, Debug, PartialEq)]
pub struct LstmCache {
    pub x: Vec<f64>,
    pub h_prev: Vec<f64>,
    pub c_prev: Vec<f64>,
    /// Gate pre-activations, `4·hidden`, gate order `f, i, o, g`.
    pub pre: Vec<f64>,
    /// Gate outputs, same layout as `pre`.
    pub gates: Vec<f64>,
    pub c: Vec<f64>,
    /// `ψ_c(c_t)`.
    pub squash: Vec<f64>,
}

pub fn lstm_cell_step(
    x: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
    p: &LstmCellParams,
) -> Result<(Vec<f64>, Vec<f64>, LstmCache)> {
    let (n_in, h) = (p.input_size(), p.hidden_size());
    if x.len() != n_in || h_prev.len() != h || c_prev.len() != h {
        return Err(Error::dim("lstm_cell_step", &[n_in, h, h], &[x.len(), h_prev.len(), c_prev.len()]));
    }
    let wx = p.w_x.data();
    let wh = p.w_h.data();
    let pre: Vec<f64> = (0..4 * h)
        .map(|r| p.b.data()[r] + dot(&wx[r * n_in..(r + 1) * n_in], x) + dot(&wh[r * h..(r + 1) * h], h_prev))
        .collect();

    let mut gates = Vec::with_capacity(4 * h);
    for (g, act) in p.gate_acts.iter().enumerate() {
        gates.extend(act.forward(&pre[g * h..(g + 1) * h])?);
    }
    gates.extend(p.cell_act.forward(&pre[3 * h..])?);

    let (f, rest) = gates.split_at(h);
    let (i, rest) = rest.split_at(h);
    let (o, g) = rest.split_at(h);
    let c: Vec<f64> = (0..h).map(|k| f[k] * c_prev[k] + i[k] * g[k]).collect();
    let squash = p.out_act.forward(&c)?;
    let h_t: Vec<f64> = o.iter().zip(&squash).map(|(o, s)| o * s).collect();

    let cache = LstmCache {
        x: x.to_vec(),
        h_prev: h_prev.to_vec(),
        c_prev: c_prev.to_vec(),
        pre,
        gates,
        c: c.clone(),
        squash,
    };
    Ok((h_t, c, cache))
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Reverse-mode step through one cell. Returns `(∂L/∂x, ∂L/∂h_prev,
/// ∂L/∂c_prev)` and accumulates every parameter gradient, activation
/// parameters included, into `grads`.
pub fn lstm_cell_backward(
    grad_h: &[f64],
    grad_c: &[f64],
    cache: &LstmCache,
    p: &LstmCellParams,
    grads: &mut LstmCellParams,
) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (n_in, h) = (p.input_size(), p.hidden_size());
    let consistent = cache.x.len() == n_in
        && cache.h_prev.len() == h
        && cache.c_prev.len() == h
        && cache.pre.len() == 4 * h
        && cache.gates.len() == 4 * h
        && cache.c.len() == h
        && cache.squash.len() == h;
    if !consistent {
        return Err(Error::Contract(format!(
            "LSTM cache does not match a cell with input {n_in} and hidden {h}"
        )));
    }
    if grad_h.len() != h || grad_c.len() != h || grads.hidden_size() != h || grads.input_size() != n_in {
        return Err(Error::dim("lstm_cell_backward", &[h, h], &[grad_h.len(), grad_c.len()]));
    }

    let gates = &cache.gates;
    let (f, i, o, g) = (&gates[..h], &gates[h..2 * h], &gates[2 * h..3 * h], &gates[3 * h..]);

    let d_squash: Vec<f64> = (0..h).map(|k| grad_h[k] * o[k]).collect();
    let out_grad = p.out_act.backward(&cache.c, &d_squash)?;
    add_into(grads.out_act.params_mut(), &out_grad.d_params);

    let dc: Vec<f64> = (0..h).map(|k| grad_c[k] + out_grad.d_input[k]).collect();
    let d_gate_out: Vec<f64> = (0..h)
        .map(|k| dc[k] * cache.c_prev[k])
        .chain((0..h).map(|k| dc[k] * g[k]))
        .chain((0..h).map(|k| grad_h[k] * cache.squash[k]))
        .chain((0..h).map(|k| dc[k] * i[k]))
        .collect();
    let grad_c_prev: Vec<f64> = (0..h).map(|k| dc[k] * f[k]).collect();

    let mut d_pre = Vec::with_capacity(4 * h);
    for gate in 0..3 {
        let r = gate * h..(gate + 1) * h;
        let ag = p.gate_acts[gate].backward(&cache.pre[r.clone()], &d_gate_out[r])?;
        add_into(grads.gate_acts[gate].params_mut(), &ag.d_params);
        d_pre.extend(ag.d_input);
    }
    let ag = p.cell_act.backward(&cache.pre[3 * h..], &d_gate_out[3 * h..])?;
    add_into(grads.cell_act.params_mut(), &ag.d_params);
    d_pre.extend(ag.d_input);

    let wx = p.w_x.data();
    let wh = p.w_h.data();
    let mut gx = vec![0.0; n_in];
    let mut gh = vec![0.0; h];
    for (r, &d) in d_pre.iter().enumerate() {
        if d == 0.0 {
            continue;
        }
        grads.b.data_mut()[r] += d;
        let gwx = &mut grads.w_x.data_mut()[r * n_in..(r + 1) * n_in];
        for (k, gw) in gwx.iter_mut().enumerate() {
            *gw += d * cache.x[k];
            gx[k] += d * wx[r * n_in + k];
        }
        let gwh = &mut grads.w_h.data_mut()[r * h..(r + 1) * h];
        for (k, gw) in gwh.iter_mut().enumerate() {
            *gw += d * cache.h_prev[k];
            gh[k] += d * wh[r * h + k];
        }
    }
    Ok((gx, gh, grad_c_prev))
}

/// Stacked LSTM over a `[T, d]` window followed by a linear head mapping
/// the last hidden state of the top layer to a `d`-dimensional forecast.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StackedLstm {
    pub layers: Vec<LstmCellParams>,
    pub head: Dense,
}

pub struct StackedLstmCache {
    /// `steps[layer][t]`.
    pub steps: Vec<Vec<LstmCache>>,
    pub last_h: Vec<f64>,
}

impl StackedLstm {
    fn build(spec: &ModelSpec, mut make: impl FnMut(usize, usize, ActivationKind, ActivationKind, ActivationKind) -> LstmCellParams, head: impl FnOnce(usize, usize) -> Dense) -> Result<Self> {
        let ModelSpec::StackedLstm {
            layer_sizes,
            gate_activation,
            cell_activation,
            output_activation,
        } = spec
        else {
            return Err(Error::Config("expected a stacked LSTM spec".into()));
        };
        spec.validate()?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| make(w[0], w[1], *gate_activation, *cell_activation, *output_activation))
            .collect();
        let top = *layer_sizes.last().unwrap();
        Ok(Self {
            layers,
            head: head(top, layer_sizes[0]),
        })
    }

    /// All weights and biases zero, activations at their default parameters.
    pub fn zeros(spec: &ModelSpec) -> Result<Self> {
        Self::build(spec, LstmCellParams::zeros, Dense::zeros)
    }

    pub fn init(spec: &ModelSpec, rng: &mut impl Rng) -> Result<Self> {
        let ModelSpec::StackedLstm { layer_sizes, .. } = spec else {
            return Err(Error::Config("expected a stacked LSTM spec".into()));
        };
        spec.validate()?;
        // Draw layer by layer so the head does not perturb earlier layers.
        let mut layers = Vec::new();
        let mut model = Self::zeros(spec)?;
        for (l, w) in layer_sizes.windows(2).enumerate() {
            let cell = &model.layers[l];
            let kinds = (cell.gate_acts[0].kind(), cell.cell_act.kind(), cell.out_act.kind());
            layers.push(LstmCellParams::init(w[0], w[1], kinds.0, kinds.1, kinds.2, rng));
        }
        model.layers = layers;
        model.head = Dense::init(*layer_sizes.last().unwrap(), layer_sizes[0], rng);
        Ok(model)
    }

    pub fn input_size(&self) -> usize {
        self.layers[0].input_size()
    }

    /// Weights and biases of the recurrent layers, excluding the head.
    pub fn recurrent_param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w_x.len() + l.w_h.len() + l.b.len())
            .sum()
    }

    fn check_input(&self, input: &Tensor) -> Result<usize> {
        match *input.shape() {
            [t, d] if t >= 1 && d == self.input_size() => Ok(t),
            _ => Err(Error::dim("stacked_lstm_forward", input.shape(), &[0, self.input_size()])),
        }
    }
}

impl Parameterized for StackedLstm {
    fn visit(&self, f: &mut dyn FnMut(ParamRole, &[f64])) {
        for l in &self.layers {
            l.visit(f);
        }
        self.head.visit(f);
    }

    fn visit_mut(&mut self, f: &mut dyn FnMut(ParamRole, &mut [f64])) {
        for l in &mut self.layers {
            l.visit_mut(f);
        }
        self.head.visit_mut(f);
    }

    fn activations(&self) -> Vec<&FlexActivation> {
        self.layers.iter().flat_map(|l| l.activations()).collect()
    }

    fn activations_mut(&mut self) -> Vec<&mut FlexActivation> {
        self.layers.iter_mut().flat_map(|l| l.activations_mut()).collect()
    }
}

impl Network for StackedLstm {
    type Cache = StackedLstmCache;

    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let t_len = self.check_input(input)?;
        let mut seq: Vec<Vec<f64>> = (0..t_len).map(|t| input.row(t).to_vec()).collect();
        for layer in &self.layers {
            let h = layer.hidden_size();
            let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
            for x in seq.iter_mut() {
                let (h_t, c_t, _) = lstm_cell_step(x, &hs, &cs, layer)?;
                hs = h_t;
                cs = c_t;
                *x = hs.clone();
            }
        }
        Ok(Tensor::vector(self.head.forward(seq.last().unwrap())?))
    }

    fn forward_cached(&self, input: &Tensor) -> Result<(Tensor, StackedLstmCache)> {
        let t_len = self.check_input(input)?;
        let mut seq: Vec<Vec<f64>> = (0..t_len).map(|t| input.row(t).to_vec()).collect();
        let mut steps = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let h = layer.hidden_size();
            let (mut hs, mut cs) = (vec![0.0; h], vec![0.0; h]);
            let mut caches = Vec::with_capacity(t_len);
            for x in seq.iter_mut() {
                let (h_t, c_t, cache) = lstm_cell_step(x, &hs, &cs, layer)?;
                caches.push(cache);
                hs = h_t;
                cs = c_t;
                *x = hs.clone();
            }
            steps.push(caches);
        }
        let last_h = seq.pop().unwrap();
        let y = Tensor::vector(self.head.forward(&last_h)?);
        Ok((y, StackedLstmCache { steps, last_h }))
    }

    fn backward(&self, cache: &StackedLstmCache, grad_output: &Tensor, grads: &mut Self) -> Result<()> {
        if cache.steps.len() != self.layers.len() || grads.layers.len() != self.layers.len() {
            return Err(Error::Contract("LSTM cache depth does not match the model".into()));
        }
        let t_len = cache.steps[0].len();
        let dh_last = self.head.backward(&cache.last_h, grad_output.data(), &mut grads.head)?;

        let top_h = self.layers.last().unwrap().hidden_size();
        let mut from_above: Vec<Vec<f64>> = vec![vec![0.0; top_h]; t_len];
        from_above[t_len - 1] = dh_last;

        for (l, layer) in self.layers.iter().enumerate().rev() {
            let h = layer.hidden_size();
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            let mut below = vec![Vec::new(); t_len];
            for t in (0..t_len).rev() {
                let dh: Vec<f64> = from_above[t].iter().zip(&dh_next).map(|(a, b)| a + b).collect();
                let (gx, gh, gc) = lstm_cell_backward(&dh, &dc_next, &cache.steps[l][t], layer, &mut grads.layers[l])?;
                below[t] = gx;
                dh_next = gh;
                dc_next = gc;
            }
            from_above = below;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cell(gate: ActivationKind) -> LstmCellParams {
        LstmCellParams::zeros(1, 1, gate, ActivationKind::Tanh, ActivationKind::Tanh)
    }

    #[test]
    fn zero_weights_zero_state() {
        let p = cell(ActivationKind::Sigmoid);
        let (h, c, cache) = lstm_cell_step(&[0.7], &[0.0], &[0.0], &p).unwrap();
        assert_eq!(&cache.gates, &[0.5, 0.5, 0.5, 0.0]);
        assert_eq!((h[0], c[0]), (0.0, 0.0));
    }

    #[test]
    fn zero_weights_unit_cell_state() {
        let p = cell(ActivationKind::Sigmoid);
        let (h, c, _) = lstm_cell_step(&[0.0], &[0.0], &[1.0], &p).unwrap();
        assert_eq!(c[0], 0.5);
        assert!((h[0] - 0.231_058_578_630_004_9).abs() < 1e-15);
    }

    #[test]
    fn flexible_gates_at_init_match_standard_cell() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let std = LstmCellParams::init(3, 4, ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Tanh, &mut rng);
        let mut flex = LstmCellParams::zeros(3, 4, ActivationKind::PSigRamp, ActivationKind::Tanh, ActivationKind::Tanh);
        flex.w_x = std.w_x.clone();
        flex.w_h = std.w_h.clone();
        flex.b = std.b.clone();
        let x = [0.3, -1.2, 0.8];
        let h0 = [0.1, -0.2, 0.05, 0.4];
        let c0 = [0.5, -0.5, 1.5, 0.0];
        let a = lstm_cell_step(&x, &h0, &c0, &std).unwrap();
        let b = lstm_cell_step(&x, &h0, &c0, &flex).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn backward_zero_upstream_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = LstmCellParams::init(2, 3, ActivationKind::PSigRamp, ActivationKind::Tanh, ActivationKind::Tanh, &mut rng);
        let (_, _, cache) = lstm_cell_step(&[0.2, 0.1], &[0.0; 3], &[0.3; 3], &p).unwrap();
        let mut g = p.zeroed_cell();
        let (gx, gh, gc) = lstm_cell_backward(&[0.0; 3], &[0.0; 3], &cache, &p, &mut g).unwrap();
        assert!(gx.iter().chain(&gh).chain(&gc).all(|&v| v == 0.0));
        let mut all_zero = true;
        g.visit(&mut |_, v| all_zero &= v.iter().all(|&x| x == 0.0));
        assert!(all_zero);
    }

    #[test]
    fn cell_gradient_path_is_forget_gate() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = LstmCellParams::init(2, 3, ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Tanh, &mut rng);
        let (_, _, cache) = lstm_cell_step(&[0.2, -0.4], &[0.1, 0.0, -0.3], &[0.3, 1.0, -2.0], &p).unwrap();
        let mut g = p.zeroed_cell();
        let (_, _, gc) = lstm_cell_backward(&[0.0; 3], &[1.0; 3], &cache, &p, &mut g).unwrap();
        assert_eq!(gc, cache.gates[..3].to_vec());
    }

    #[test]
    fn mismatched_cache_is_rejected() {
        let p = cell(ActivationKind::Sigmoid);
        let (_, _, mut cache) = lstm_cell_step(&[0.0], &[0.0], &[0.0], &p).unwrap();
        cache.pre.pop();
        let mut g = p.zeroed_cell();
        assert!(matches!(
            lstm_cell_backward(&[1.0], &[0.0], &cache, &p, &mut g),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn stacked_zero_model_forecasts_zero() {
        let spec = ModelSpec::lstm(&[3, 4, 2], ActivationKind::Sigmoid);
        let m = StackedLstm::zeros(&spec).unwrap();
        let y = m.forward(&Tensor::zeros(&[1, 3])).unwrap();
        assert_eq!(y.data(), &[0.0; 3]);
        assert!(m.forward(&Tensor::zeros(&[2, 4])).is_err());
    }

    #[test]
    fn recurrent_count_matches_table_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = StackedLstm::init(&ModelSpec::lstm(&[7, 10], ActivationKind::PSigRamp), &mut rng).unwrap();
        assert_eq!(m.recurrent_param_count(), 720);
        assert_eq!(m.count(ParamRole::ACTIVATION), 60);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let spec = ModelSpec::lstm(&[7, 10], ActivationKind::Sigmoid);
        let a = StackedLstm::init(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = StackedLstm::init(&spec, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        let x = Tensor::new(vec![10, 7], (0..70).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        assert_eq!(a.forward(&x).unwrap(), b.forward(&x).unwrap());
    }

    impl LstmCellParams {
        fn zeroed_cell(&self) -> Self {
            let mut z = self.clone();
            z.visit_mut(&mut |_, v| v.fill(0.0));
            z
        }
    }
}
