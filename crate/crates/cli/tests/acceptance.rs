//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits with
//! failure if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use flexact::activations::ActivationKind;
use flexact::data::{synth_images, write_idx_images};
use flexact::experiment::{run_experiment, write_outputs, DataSourceKind, ExperimentResult};
use flexact::gradcheck::{rel_error, run_suite};
use flexact::nn::{ConvAutoencoder, ModelSpec, Network, ParamRole, Parameterized, StackedLstm};
use flexact::optim::{adam_step, sgd_step, ParamGroup};
use flexact::regularization::{bound_barrier, total_cost, towards_default, towards_mean};
use flexact::stats::{mean, pooled_std_error, welch_ttest_onetail};
use flexact::train::mean_mse;
use flexact::{ExperimentConfig, FlexActivation, RegConfig, Tensor};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

const TABLE_ROWS: [(&str, &str, &str, &str); 14] = [
    ("[5, 8]", "448", "48", "10.7%"),
    ("[5, 8, 8]", "992", "96", "9.6%"),
    ("[5, 8, 8, 8]", "1536", "144", "9.3%"),
    ("[5, 16, 8]", "2208", "144", "6.5%"),
    ("[7, 10]", "720", "60", "8.3%"),
    ("[7, 10, 10]", "1560", "120", "7.6%"),
    ("[7, 10, 10, 10]", "2400", "180", "7.5%"),
    ("[7, 20, 10]", "3480", "180", "5.1%"),
    ("CAE 1", "3401", "50", "1.47%"),
    ("CAE 2", "5729", "66", "1.15%"),
    ("CAE 3", "47355", "168", "0.35%"),
    ("CAE 1", "3401", "25", "0.73%"),
    ("CAE 2", "5729", "33", "0.57%"),
    ("CAE 3", "47355", "84", "0.17%"),
];

fn table_reproduction() -> Outcome {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_flexact"))
        .args(["count", "--format", "csv"])
        .output()
        .map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).into_owned());
    }
    let text = String::from_utf8(out.stdout).map_err(err)?;
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let rows: Vec<[String; 4]> = reader
        .records()
        .map(|r| r.map(|r| [r[2].to_string(), r[3].to_string(), r[4].to_string(), r[5].to_string()]))
        .collect::<Result<_, _>>()
        .map_err(err)?;
    let expected: Vec<[String; 4]> = TABLE_ROWS
        .iter()
        .map(|(a, b, c, d)| [a.to_string(), b.to_string(), c.to_string(), d.to_string()])
        .collect();
    if rows != expected {
        return Err(format!("table mismatch: {rows:?}"));
    }
    check(secs < 1.0, format!("{} rows exact, {secs:.3}s", rows.len()))
}

fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let reports = run_suite(100, 0, 1e-5).map_err(err)?;
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<&str> = reports.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    let worst = reports.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
    check(
        failed.is_empty() && secs < 30.0 && reports.iter().all(|r| r.probes >= 100),
        format!("{} suites, worst rel err {worst:.2e}, failed {failed:?}, {secs:.2}s", reports.len()),
    )
}

/// Largest output and loss gap between two networks over `n` random inputs.
fn max_gap<A: Network, B: Network>(a: &A, b: &B, shape: &[usize], lo: f64, hi: f64, n: usize, rng: &mut ChaCha8Rng) -> Result<(f64, f64), String> {
    let len: usize = shape.iter().product();
    let (mut out_gap, mut loss_gap) = (0.0f64, 0.0f64);
    for _ in 0..n {
        let x = Tensor::new(shape.to_vec(), (0..len).map(|_| rng.random_range(lo..hi)).collect()).map_err(err)?;
        let ya = a.forward(&x).map_err(err)?;
        let yb = b.forward(&x).map_err(err)?;
        for (p, q) in ya.data().iter().zip(yb.data()) {
            out_gap = out_gap.max((p - q).abs());
        }
        let target = Tensor::new(ya.shape().to_vec(), (0..ya.len()).map(|_| rng.random_range(-1.0..1.0)).collect()).map_err(err)?;
        let la = mean_mse(a, &[&x], &[&target]).map_err(err)?;
        let lb = mean_mse(b, &[&x], &[&target]).map_err(err)?;
        loss_gap = loss_gap.max((la - lb).abs());
    }
    Ok((out_gap, loss_gap))
}

fn reduction_identities() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);

    let fixed_spec = ModelSpec::lstm(&[7, 10], ActivationKind::Sigmoid);
    let flex_spec = ModelSpec::lstm(&[7, 10], ActivationKind::PSigRamp);
    let fixed = StackedLstm::init(&fixed_spec, &mut rng).map_err(err)?;
    let mut flex = StackedLstm::zeros(&flex_spec).map_err(err)?;
    flex.scatter(ParamRole::MODEL, &fixed.gather(ParamRole::MODEL)).map_err(err)?;
    let (lstm_out, lstm_loss) = max_gap(&flex, &fixed, &[10, 7], -3.0, 3.0, 1000, &mut rng)?;

    let fixed_spec = ModelSpec::cae1(ActivationKind::Relu);
    let flex_spec = ModelSpec::cae1(ActivationKind::PE2Relu);
    let fixed = ConvAutoencoder::init(&fixed_spec, &mut rng).map_err(err)?;
    let mut flex = ConvAutoencoder::zeros(&flex_spec).map_err(err)?;
    flex.scatter(ParamRole::MODEL, &fixed.gather(ParamRole::MODEL)).map_err(err)?;
    let (_, base) = ActivationKind::PE2Relu.baseline_point().ok_or("no baseline")?;
    for a in flex.activations_mut() {
        for block in a.params_mut().chunks_mut(base.len()) {
            block.copy_from_slice(&base);
        }
    }
    let (cae_out, cae_loss) = max_gap(&flex, &fixed, &[1, 28, 28], 0.0, 1.0, 1000, &mut rng)?;

    let worst = lstm_out.max(lstm_loss).max(cae_out).max(cae_loss);
    check(
        worst <= 1e-12,
        format!("lstm out {lstm_out:.1e} loss {lstm_loss:.1e}, cae out {cae_out:.1e} loss {cae_loss:.1e} over 1000 inputs each"),
    )
}

fn regularizer_properties() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let params: Vec<f64> = (0..24).map(|_| rng.random_range(0.0..1.0)).collect();
    let tm = towards_mean(&params, 2, 1.3).map_err(err)?;
    let sum_gap = (0..2)
        .map(|k| tm.grad.iter().skip(k).step_by(2).sum::<f64>().abs())
        .fold(0.0, f64::max);

    let same: Vec<f64> = [0.7, 0.2].repeat(12);
    let zeros = [
        towards_mean(&same, 2, 1.0).map_err(err)?.value,
        towards_default(&[0.4, 0.3], &[0.4, 0.3], 5).map_err(err)?.value,
        bound_barrier(&[-0.01, 0.0, 0.5, 0.99], 0.01, 5).map_err(err)?.value,
    ];

    let reg = RegConfig {
        delta1: 0.3,
        delta2: 0.2,
        delta3: 0.5,
        ..RegConfig::default()
    };
    let layers = vec![
        FlexActivation::with_params(ActivationKind::PE2Relu, 4, false, vec![0.9, 0.3, 0.6, -0.1, 0.2, 0.5, 1.2, 0.4]).map_err(err)?,
        FlexActivation::with_params(ActivationKind::PSigRamp, 3, false, vec![0.2, 0.5, 1.1, 0.9, 0.6, 1.7]).map_err(err)?,
    ];
    let cost = |layers: &[FlexActivation]| -> Result<f64, String> {
        let refs: Vec<&FlexActivation> = layers.iter().collect();
        total_cost(0.0, &refs, &reg).map(|c| c.total).map_err(err)
    };
    let refs: Vec<&FlexActivation> = layers.iter().collect();
    let analytic = total_cost(0.0, &refs, &reg).map_err(err)?.grads;
    // Central differences are exact on quadratics; the probes avoid the barrier's knees.
    let h = 1e-4;
    let mut fd_worst = 0.0f64;
    for (l, layer) in layers.iter().enumerate() {
        for i in 0..layer.params().len() {
            let mut up = layers.clone();
            up[l].params_mut()[i] += h;
            let mut down = layers.clone();
            down[l].params_mut()[i] -= h;
            let numeric = (cost(&up)? - cost(&down)?) / (2.0 * h);
            fd_worst = fd_worst.max(rel_error(analytic[l][i], numeric));
        }
    }
    check(
        sum_gap <= 1e-12 && zeros.iter().all(|&z| z.abs() <= 1e-12) && fd_worst <= 1e-8,
        format!("towards-mean grad sum {sum_gap:.1e}, minimizer values {zeros:?}, fd rel err {fd_worst:.1e}"),
    )
}

fn optimizer_correctness() -> Outcome {
    let mut p = ParamGroup::new("w", vec![1.0], 1e-3);
    let expected = [0.99900000001, 0.9990526315884211];
    let mut adam_gap = 0.0f64;
    for (g, want) in [1.0, -1.0].into_iter().zip(expected) {
        p.grads[0] = g;
        adam_step(&mut p, 0.9, 0.999, 1e-8).map_err(err)?;
        adam_gap = adam_gap.max((p.values[0] - want).abs());
    }

    // Dyadic values keep every product and sum exact.
    let delta = |g: &[f64]| -> Result<Vec<f64>, String> {
        let mut q = ParamGroup::new("w", vec![1.0, -2.0, 0.5], 0.5);
        q.grads.copy_from_slice(g);
        sgd_step(&mut q).map_err(err)?;
        Ok(q.values.iter().zip([1.0, -2.0, 0.5]).map(|(v, v0)| v - v0).collect())
    };
    let (g1, g2) = ([0.25, -0.5, 1.0], [0.125, 2.0, -0.75]);
    let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
    let scaled: Vec<f64> = g1.iter().map(|a| 4.0 * a).collect();
    let (d1, d2, ds, dk) = (delta(&g1)?, delta(&g2)?, delta(&sum)?, delta(&scaled)?);
    let additive = ds.iter().zip(d1.iter().zip(&d2)).all(|(s, (a, b))| *s == a + b);
    let homogeneous = dk.iter().zip(&d1).all(|(k, a)| *k == 4.0 * a);
    check(
        adam_gap <= 1e-12 && additive && homogeneous,
        format!("adam gap {adam_gap:.1e}, sgd additive {additive}, homogeneous {homogeneous}"),
    )
}

fn smoke_config(gate: ActivationKind, n_trials: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(ModelSpec::lstm(&[7, 10], gate));
    cfg.epochs = 30;
    cfg.batch_size = 50;
    cfg.n_trials = n_trials;
    cfg.seed = 0;
    cfg.reg = RegConfig::none();
    cfg
}

fn training_smoke(result: &ExperimentResult, secs: f64) -> Outcome {
    let ratios: Vec<f64> = result
        .trials
        .iter()
        .map(|t| t.train_mse[t.train_mse.len() - 1] / t.train_mse[0])
        .collect();
    let worst = ratios.iter().copied().fold(0.0, f64::max);
    check(
        ratios.len() == 5 && worst <= 0.5 && secs < 300.0,
        format!("final/epoch-1 train MSE worst {worst:.3} over {} seeds, {secs:.1}s", ratios.len()),
    )
}

fn flexible_vs_fixed() -> Outcome {
    let fixed = run_experiment(&smoke_config(ActivationKind::Sigmoid, 10)).map_err(err)?;
    let mut cfg = smoke_config(ActivationKind::PSigRamp, 10);
    cfg.reg = RegConfig {
        delta1: 0.025,
        ..RegConfig::default()
    };
    let flex = run_experiment(&cfg).map_err(err)?;
    let (a, b) = (flex.min_val_mse(), fixed.min_val_mse());
    let se = pooled_std_error(&a, &b);
    let p = welch_ttest_onetail(&a, &b).map_err(err)?.p;
    check(
        mean(&a) <= mean(&b) + se,
        format!("min val MSE flexible {:.5} vs sigmoid {:.5} (pooled SE {se:.5}), one-tailed p = {p:.4}", mean(&a), mean(&b)),
    )
}

fn cae_smoke() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(err)?;
    let path = dir.path().join("images.idx");
    let images = synth_images(1000, 28, 28, &mut ChaCha8Rng::seed_from_u64(11));
    write_idx_images(&path, &images).map_err(err)?;

    let run = |hidden: ActivationKind| -> Result<ExperimentResult, String> {
        let mut cfg = ExperimentConfig::new(ModelSpec::cae1(hidden));
        cfg.data.source = DataSourceKind::Idx;
        cfg.data.path = Some(path.clone());
        cfg.data.limit = Some(1000);
        cfg.epochs = 20;
        cfg.n_trials = 5;
        cfg.seed = 0;
        run_experiment(&cfg).map_err(err)
    };
    let flex = run(ActivationKind::PE2Relu)?;
    let fixed = run(ActivationKind::Relu)?;
    let decreasing = flex
        .trials
        .iter()
        .chain(&fixed.trials)
        .all(|t| t.val_mse[t.val_mse.len() - 1] < t.val_mse[0]);
    let (a, b) = (flex.test_mse(), fixed.test_mse());
    let se = pooled_std_error(&a, &b);
    let secs = start.elapsed().as_secs_f64();
    check(
        decreasing && mean(&a) <= mean(&b) + se && secs < 600.0,
        format!(
            "val decreasing on every seed {decreasing}, test MSE P-E2-ReLU {:.5} vs ReLU {:.5} (pooled SE {se:.5}), {secs:.1}s",
            mean(&a),
            mean(&b)
        ),
    )
}

fn ttest_oracle() -> Outcome {
    let a = [0.212, 0.198, 0.231, 0.205, 0.219, 0.201, 0.227];
    let b = [0.224, 0.241, 0.219, 0.236, 0.248, 0.229];
    let r = welch_ttest_onetail(&a, &b).map_err(err)?;
    let (t_ref, p_ref) = (-2.9722779948212263, 0.006346789426807331);
    let gap = (r.t - t_ref).abs().max((r.p - p_ref).abs());
    let sep = welch_ttest_onetail(&[1.0, 1.1, 0.9, 1.05, 0.95], &[2.0, 2.1, 1.9, 2.05, 1.95]).map_err(err)?;
    check(
        gap <= 1e-9 && sep.p < 1e-3,
        format!("reference gap {gap:.1e}, separated fixture p = {:.2e}", sep.p),
    )
}

fn determinism(first: &ExperimentResult) -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let second = run_experiment(&smoke_config(ActivationKind::Sigmoid, 5)).map_err(err)?;
    write_outputs(first, dir.path().join("a")).map_err(err)?;
    write_outputs(&second, dir.path().join("b")).map_err(err)?;
    let mut files = Vec::new();
    for name in ["curves.csv", "trials.csv", "final.csv"] {
        let a = std::fs::read(dir.path().join("a").join(name)).map_err(err)?;
        let b = std::fs::read(dir.path().join("b").join(name)).map_err(err)?;
        if a != b {
            return Err(format!("{name} differs between runs"));
        }
        files.push(name);
    }
    Ok(format!("{files:?} byte-identical"))
}

fn main() -> ExitCode {
    let mut failures = 0;
    let mut report = |n: usize, name: &str, outcome: Outcome| {
        let (tag, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {n:>2} {name}: {detail}");
    };

    report(1, "table reproduction", table_reproduction());
    report(2, "gradient suite", gradient_suite());
    report(3, "reduction identities", reduction_identities());
    report(4, "regularizer properties", regularizer_properties());
    report(5, "optimizer correctness", optimizer_correctness());

    let start = Instant::now();
    let smoke = run_experiment(&smoke_config(ActivationKind::Sigmoid, 5));
    let secs = start.elapsed().as_secs_f64();
    match &smoke {
        Ok(r) => report(6, "training smoke", training_smoke(r, secs)),
        Err(e) => report(6, "training smoke", Err(e.to_string())),
    }
    report(7, "flexible vs fixed", flexible_vs_fixed());
    report(8, "autoencoder smoke", cae_smoke());
    report(9, "t-test oracle", ttest_oracle());
    match &smoke {
        Ok(r) => report(10, "determinism", determinism(r)),
        Err(e) => report(10, "determinism", Err(e.to_string())),
    }

    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failures} criterion(s) failed");
        ExitCode::FAILURE
    }
}
