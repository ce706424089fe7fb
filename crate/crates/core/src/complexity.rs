//! Closed-form parameter counts and multiply-accumulate estimates.

use std::fmt::Write as _;

use serde::Serialize;

use crate::activations::ActivationKind;
use crate::error::{Error, Result};
use crate::nn::{ModelSpec, StageOp};

/// Fully connected network: `Σ n_i·n_{i+1} + Σ_{i≥1} n_i`.
pub fn ffnn_count(layer_sizes: &[usize]) -> Result<usize> {
    check_layers(layer_sizes)?;
    Ok(layer_sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum())
}

/// Recurrent stack with `g` weight blocks per cell (4 for LSTM, 3 for GRU,
/// 1 for a plain RNN): `g·Σ (n_{i+1}(n_{i+1} + n_i) + n_{i+1})`.
pub fn rnn_count(layer_sizes: &[usize], g: usize) -> Result<usize> {
    check_layers(layer_sizes)?;
    if !matches!(g, 1 | 3 | 4) {
        return Err(Error::Parameter(format!("gate multiplicity g must be 1, 3 or 4, got {g}")));
    }
    Ok(g * layer_sizes
        .windows(2)
        .map(|w| w[1] * (w[1] + w[0]) + w[1])
        .sum::<usize>())
}

/// `p·Σ s_i·n_i` over hidden layers, `s_i` flexible positions per unit.
pub fn rnn_flex_extra(layer_sizes: &[usize], s_per_layer: &[usize], params_per_act: usize) -> Result<usize> {
    check_layers(layer_sizes)?;
    let hidden = &layer_sizes[1..];
    if s_per_layer.len() != hidden.len() {
        return Err(Error::Parameter(format!(
            "{} hidden layers but {} placement counts",
            hidden.len(),
            s_per_layer.len()
        )));
    }
    Ok(params_per_act * hidden.iter().zip(s_per_layer).map(|(n, s)| n * s).sum::<usize>())
}

/// One convolutional layer for counting: `k` output channels, `n×n`
/// filters, `l` input channels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ConvCount {
    pub out_channels: usize,
    pub kernel: usize,
    pub in_channels: usize,
}

/// `Σ (n·n·l + 1)·k`.
pub fn conv_count(layers: &[ConvCount]) -> Result<usize> {
    layers
        .iter()
        .map(|c| {
            if c.out_channels == 0 || c.kernel == 0 || c.in_channels == 0 {
                Err(Error::Parameter(format!("non-positive dimension in {c:?}")))
            } else {
                Ok((c.kernel * c.kernel * c.in_channels + 1) * c.out_channels)
            }
        })
        .sum()
}

/// `p·Σ k` over the channel counts of the flexible positions.
pub fn conv_flex_extra(channel_placements: &[usize], p: usize) -> usize {
    p * channel_placements.iter().sum::<usize>()
}

/// Convolution and transposed-convolution layers of an autoencoder spec, in
/// stack order.
pub fn conv_layers(spec: &ModelSpec) -> Result<Vec<ConvCount>> {
    let ModelSpec::ConvAutoencoder { stages, .. } = spec else {
        return Err(Error::Config("conv layers only exist for autoencoder specs".into()));
    };
    let shapes = spec.stage_shapes()?;
    Ok(stages
        .iter()
        .zip(&shapes)
        .filter(|(s, _)| s.op != StageOp::MaxPool)
        .map(|(s, shape)| ConvCount {
            out_channels: s.out_channels,
            kernel: s.kernel,
            in_channels: shape[0],
        })
        .collect())
}

/// One layer of the time-complexity sum: `n_{l-1}` input channels, `s_l`
/// filter size, `n_l` output channels, `m_l` output feature-map size.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvTimeLayer {
    pub in_channels: usize,
    pub kernel: usize,
    pub out_channels: usize,
    pub map_size: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct TimeEstimate {
    /// `Σ_{l≥1} n_{l-1}·s_l²·n_l·m_l²`.
    pub baseline_term: u128,
    /// `Σ_{l≥2} n_{l-1}·s_l²`, the forward cost of flexible activations.
    pub flex_forward_term: u128,
    /// `Σ_{l≥1} (n_{l-1}·s_l² + n_{l-1})`, the backward cost.
    pub flex_backward_term: u128,
    /// Each term multiplied by `m · n_iter`.
    pub baseline_total: u128,
    pub flex_forward_total: u128,
    pub flex_backward_total: u128,
}

pub fn conv_time_estimate(layers: &[ConvTimeLayer], inputs: usize, iterations: usize) -> Result<TimeEstimate> {
    let mut baseline = 0u128;
    let mut fwd = 0u128;
    let mut bwd = 0u128;
    for (l, c) in layers.iter().enumerate() {
        let m = c
            .map_size
            .ok_or_else(|| Error::Parameter(format!("layer {} has no feature-map size", l + 1)))?;
        let (n0, s, n1, m) = (c.in_channels as u128, c.kernel as u128, c.out_channels as u128, m as u128);
        baseline += n0 * s * s * n1 * m * m;
        if l >= 1 {
            fwd += n0 * s * s;
        }
        bwd += n0 * s * s + n0;
    }
    let scale = inputs as u128 * iterations as u128;
    Ok(TimeEstimate {
        baseline_term: baseline,
        flex_forward_term: fwd,
        flex_backward_term: bwd,
        baseline_total: baseline * scale,
        flex_forward_total: fwd * scale,
        flex_backward_total: bwd * scale,
    })
}

fn check_layers(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Parameter(format!(
            "need at least an input and one further layer, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.contains(&0) {
        return Err(Error::Parameter(format!("layer sizes must be positive, got {layer_sizes:?}")));
    }
    Ok(())
}

/// `extra / basic` in percent, truncated (not rounded) to `decimals` places.
pub fn truncated_percent(extra: usize, basic: usize, decimals: u32) -> String {
    if basic == 0 {
        return "n/a".into();
    }
    let scale = 10u128.pow(decimals);
    let q = extra as u128 * 100 * scale / basic as u128;
    if decimals == 0 {
        format!("{q}%")
    } else {
        format!("{}.{:0width$}%", q / scale, q % scale, width = decimals as usize)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountRow {
    pub model: String,
    pub layer_size: String,
    pub basic: usize,
    pub extra: usize,
    pub ratio: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CountReport {
    pub title: String,
    pub rows: Vec<CountRow>,
}

impl CountReport {
    pub fn to_text(&self) -> String {
        let header = ["model", "layer size", "basic model", "flexible activation", "ratio of increase"];
        let cells: Vec<[String; 5]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.model.clone(),
                    r.layer_size.clone(),
                    r.basic.to_string(),
                    r.extra.to_string(),
                    r.ratio.clone(),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.len());
            }
        }
        let mut out = format!("{}\n", self.title);
        let line = |out: &mut String, row: &[&str]| {
            let parts: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  "));
        };
        line(&mut out, &header);
        for row in &cells {
            line(&mut out, &row.each_ref().map(String::as_str));
        }
        out
    }

    /// Rows as CSV with a leading `table` column.
    pub fn write_csv<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for r in &self.rows {
            w.write_record([
                self.title.as_str(),
                &r.model,
                &r.layer_size,
                &r.basic.to_string(),
                &r.extra.to_string(),
                &r.ratio,
            ])?;
        }
        Ok(())
    }
}

pub const CSV_HEADER: [&str; 6] = ["table", "model", "layer_size", "basic", "extra", "ratio"];

/// All reports as one CSV document with a [`CSV_HEADER`] row.
pub fn tables_csv(reports: &[CountReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in reports {
        r.write_csv(&mut w)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Contract(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Contract(e.to_string()))
}

/// Flexible-activation channel lists that reproduce the printed CAE extras.
pub const CAE_PLACEMENTS: [(&str, &[usize]); 3] =
    [("cae1", &[16, 8, 1]), ("cae2", &[16, 8, 8, 1]), ("cae3", &[12, 24, 48])];

fn lstm_table(title: &str, archs: &[&[usize]]) -> Result<CountReport> {
    let rows = archs
        .iter()
        .enumerate()
        .map(|(i, sizes)| {
            let basic = rnn_count(sizes, 4)?;
            let extra = rnn_flex_extra(sizes, &vec![3; sizes.len() - 1], 2)?;
            Ok(CountRow {
                model: (i + 1).to_string(),
                layer_size: format!("{sizes:?}"),
                basic,
                extra,
                ratio: truncated_percent(extra, basic, 1),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CountReport {
        title: title.into(),
        rows,
    })
}

fn cae_table(title: &str, p: usize) -> Result<CountReport> {
    let rows = CAE_PLACEMENTS
        .iter()
        .enumerate()
        .map(|(i, (name, placements))| {
            let spec = ModelSpec::cae_preset(name, ActivationKind::Relu)?;
            let basic = conv_count(&conv_layers(&spec)?)?;
            let extra = conv_flex_extra(placements, p);
            Ok(CountRow {
                model: (i + 1).to_string(),
                layer_size: format!("CAE {}", i + 1),
                basic,
                extra,
                ratio: truncated_percent(extra, basic, 2),
            })
        })
        .collect::<Result<_>>()?;
    Ok(CountReport {
        title: title.into(),
        rows,
    })
}

/// The four parameter-count tables: LSTM stacks on 5 and 7 series, and the
/// three autoencoders with two- and one-parameter flexible activations.
pub fn standard_tables() -> Result<Vec<CountReport>> {
    Ok(vec![
        lstm_table("LSTM models, 5 series", &[&[5, 8], &[5, 8, 8], &[5, 8, 8, 8], &[5, 16, 8]])?,
        lstm_table("LSTM models, 7 series", &[&[7, 10], &[7, 10, 10], &[7, 10, 10, 10], &[7, 20, 10]])?,
        cae_table("CAE models, P-E2-ReLU", 2)?,
        cae_table("CAE models, P-E2-ReLU-1 / P-E2-Id", 1)?,
    ])
}
