//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line straight to stderr (bypassing the test harness capture) and then
//! asserts the same verdict.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use plent::data::{
    cifar10_bytes, idx_image_bytes, idx_label_bytes, load_cifar10, load_idx, parse_cifar10, parse_idx_images,
    parse_idx_labels, write_cifar10, write_idx,
};
use plent::entropic::{
    kernel, m_loss_with_draws, pla_loss_with_draws, plea_loss_with_draws, sample_displacements, Displacement,
    LossKind, Objective, SmoothingSpec, WeightMask,
};
use plent::nn::arch::{mlp, Activation};
use plent::nn::{cross_entropy, FlatGradient, LayerKind, LayerSpec, Network, Tensor};
use plent::telemetry::{detect_regimes, LayerSignalRecord, DEFAULT_TAU};
use plent::trainer::regularized_gradient;
use plent::{Dataset, Network64};
use plent_harness::runner::{self, RunResult};
use plent_harness::{plots, RunConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, name: &str, ok: bool, elapsed: Duration, budget: Option<Duration>, detail: &str) {
    let within = budget.is_none_or(|b| elapsed <= b);
    let verdict = if ok && within { "PASS" } else { "FAIL" };
    let budget = budget.map(|b| format!(" / budget {:.0}s", b.as_secs_f64())).unwrap_or_default();
    let line = format!("criterion {n}: {verdict}  {name}  [{:.2}s{budget}]  {detail}\n", elapsed.as_secs_f64());
    let _ = std::io::stderr().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} ({name}) failed: {detail}");
    assert!(within, "criterion {n} ({name}) exceeded its runtime budget: {:.1}s", elapsed.as_secs_f64());
}

fn data_root() -> PathBuf {
    runner::default_data_root()
}

fn artifacts(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// A random network of at most 300 parameters: a dense stack or a small
/// conv/pool/dense stack, with tanh or relu activations.
fn random_net(rng: &mut ChaCha8Rng) -> Network64 {
    loop {
        let act = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Relu };
        let (input, specs) = if rng.random_bool(0.6) {
            let depth = rng.random_range(1..=3);
            let mut widths = vec![rng.random_range(2..=8)];
            for _ in 1..depth {
                widths.push(rng.random_range(2..=10));
            }
            widths.push(rng.random_range(2..=5));
            (vec![widths[0]], mlp(&widths, act))
        } else {
            let cin = rng.random_range(1..=2);
            let c1 = rng.random_range(1..=3);
            let c2 = rng.random_range(1..=3);
            let classes = rng.random_range(2..=4);
            let act_kind = match act {
                Activation::Tanh => LayerKind::Tanh,
                Activation::Relu => LayerKind::Relu,
            };
            let s = |n: &str, k: LayerKind| LayerSpec::new(n, k);
            let specs = vec![
                s("conv1", LayerKind::Conv3x3 { in_channels: cin, out_channels: c1 }),
                s("act1", act_kind),
                s("pool1", LayerKind::MaxPool2x2),
                s("conv2", LayerKind::Conv3x3 { in_channels: c1, out_channels: c2 }),
                s("act2", act_kind),
                s("flatten", LayerKind::Flatten),
                s("fc1", LayerKind::Dense { inputs: c2 * 4, outputs: classes }),
            ];
            (vec![cin, 4, 4], specs)
        };
        let mut net = Network::new(input, &specs).unwrap();
        if net.param_count() > 300 {
            continue;
        }
        net.kaiming_init(rng);
        let mut biases = net.flat_biases();
        for b in &mut biases {
            *b = rng.random_range(-0.1..0.1);
        }
        net.set_flat_biases(&biases).unwrap();
        return net;
    }
}

fn random_batch(net: &Network64, n: usize, rng: &mut ChaCha8Rng) -> (Tensor<f64>, Vec<usize>) {
    let mut shape = vec![n];
    shape.extend_from_slice(net.input_shape());
    let len = shape.iter().product();
    let x = Tensor::new(shape, (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
    let labels = (0..n).map(|_| rng.random_range(0..net.classes())).collect();
    (x, labels)
}

/// Mask over a random nonempty subset of the synaptic layers.
fn random_mask(net: &Network64, rng: &mut ChaCha8Rng) -> WeightMask {
    let layers = net.param_layers();
    let mut chosen: Vec<usize> = layers.iter().copied().filter(|_| rng.random_bool(0.5)).collect();
    if chosen.is_empty() {
        chosen.push(layers[rng.random_range(0..layers.len())]);
    }
    WeightMask::from_layers(net, &chosen).unwrap()
}

#[test]
fn criterion_1_zero_samples_reduce_to_cross_entropy() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = Vec::new();
    for trial in 0..100 {
        let net = random_net(&mut rng);
        let n = rng.random_range(1..=6);
        let (x, y) = random_batch(&net, n, &mut rng);
        let mask = random_mask(&net, &mut rng);
        let r = rng.random_range(0.001..1.0);
        let (ce, g) = net.backward(&x, &y).unwrap();
        let objectives = [
            ("plea", Objective::smoothed(LossKind::Plea, SmoothingSpec::hypercube(r, 0), mask.clone()).unwrap()),
            ("pla", Objective::smoothed(LossKind::Pla, SmoothingSpec::hypercube(r, 0), mask.clone()).unwrap()),
            ("m", Objective::smoothed(LossKind::M, SmoothingSpec::sigmoid(r, 8.0, 0), mask.clone()).unwrap()),
        ];
        for (name, obj) in objectives {
            let (l, lg) = obj.evaluate(&net, &x, &y, &mut rng).unwrap();
            let same = l.to_bits() == ce.to_bits() && bits(&lg.wgrad) == bits(&g.wgrad) && bits(&lg.bgrad) == bits(&g.bgrad);
            if !same {
                mismatches.push(format!("trial {trial} {name}: {l} vs {ce}"));
            }
        }
        assert_eq!(ce.to_bits(), cross_entropy(&net.forward(&x).unwrap(), &y).unwrap().to_bits());
    }
    let detail = format!("300 comparisons (loss and gradient bits), {} mismatches {:?}", mismatches.len(), mismatches.first());
    report(1, "degeneracy at y=0", mismatches.is_empty(), t.elapsed(), Some(Duration::from_secs(10)), &detail);
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;

fn central_difference(net: &Network64, f: &dyn Fn(&Network64) -> f64) -> FlatGradient<f64> {
    let w = net.flat_weights();
    let b = net.flat_biases();
    let mut probe = net.clone();
    let mut g = FlatGradient::zeros(w.len(), b.len());
    let mut wp = w.clone();
    for i in 0..w.len() {
        wp[i] = w[i] + FD_STEP;
        probe.set_flat_weights(&wp).unwrap();
        let up = f(&probe);
        wp[i] = w[i] - FD_STEP;
        probe.set_flat_weights(&wp).unwrap();
        g.wgrad[i] = (up - f(&probe)) / (2.0 * FD_STEP);
        wp[i] = w[i];
    }
    probe.set_flat_weights(&w).unwrap();
    let mut bp = b.clone();
    for i in 0..b.len() {
        bp[i] = b[i] + FD_STEP;
        probe.set_flat_biases(&bp).unwrap();
        let up = f(&probe);
        bp[i] = b[i] - FD_STEP;
        probe.set_flat_biases(&bp).unwrap();
        g.bgrad[i] = (up - f(&probe)) / (2.0 * FD_STEP);
        bp[i] = b[i];
    }
    g
}

/// Worst elementwise relative error, and the number of components judged
/// against the central-difference roundoff floor `16 ε max(|L|, 1) / h`
/// because they are too small for a relative comparison to resolve.
fn fd_mismatch(loss: f64, a: &FlatGradient<f64>, n: &FlatGradient<f64>) -> (f64, bool, usize) {
    let floor = 16.0 * f64::EPSILON * loss.abs().max(1.0) / FD_STEP;
    let mut worst: f64 = 0.0;
    let mut ok = true;
    let mut tiny = 0;
    for (a, n) in a.wgrad.iter().zip(&n.wgrad).chain(a.bgrad.iter().zip(&n.bgrad)) {
        let diff = (a - n).abs();
        let scale = a.abs() + n.abs();
        if FD_TOL * scale < floor {
            tiny += 1;
            ok &= diff <= floor;
        } else {
            worst = worst.max(diff / scale);
            ok &= diff / scale < FD_TOL;
        }
    }
    (worst, ok, tiny)
}

#[test]
fn criterion_2_gradients_match_central_differences() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let nets = 100;
    let mut worst = (0.0f64, String::new());
    let mut failures = 0;
    let mut params = 0;
    let mut below_floor = 0;
    for trial in 0..nets {
        let net = random_net(&mut rng);
        params += net.param_count();
        let (x, y) = random_batch(&net, rng.random_range(1..=4), &mut rng);
        let mask = random_mask(&net, &mut rng);
        let samples = rng.random_range(1..=4);
        let r = rng.random_range(0.01..0.3);
        let cube = SmoothingSpec::hypercube(r, samples);
        let soft = SmoothingSpec::sigmoid(r, rng.random_range(2.0..16.0), samples);
        let cube_draws: Vec<Displacement<f64>> = sample_displacements(&mask, &cube, &mut rng);
        let soft_draws: Vec<Displacement<f64>> = sample_displacements(&mask, &soft, &mut rng);

        let checks: [(&str, Box<dyn Fn(&Network64) -> (f64, FlatGradient<f64>)>); 4] = [
            ("ce", Box::new(|n: &Network64| n.backward(&x, &y).unwrap())),
            ("pla", Box::new(|n: &Network64| pla_loss_with_draws(n, &x, &y, &mask, &cube_draws).unwrap())),
            ("plea", Box::new(|n: &Network64| plea_loss_with_draws(n, &x, &y, &mask, &cube_draws).unwrap())),
            ("m", Box::new(|n: &Network64| m_loss_with_draws(n, &x, &y, &mask, &soft, &soft_draws).unwrap())),
        ];
        for (name, f) in &checks {
            let (loss, analytic) = f(&net);
            let numeric = central_difference(&net, &|n| f(n).0);
            let (e, ok, tiny) = fd_mismatch(loss, &analytic, &numeric);
            below_floor += tiny;
            if !ok {
                failures += 1;
            }
            if e > worst.0 {
                worst = (e, format!("net {trial} ({} params) {name}", net.param_count()));
            }
        }
    }
    let detail = format!(
        "{nets} nets, {params} parameters, 4 losses each; worst relative error {:.2e} at {}; \
         {below_floor} components under the roundoff floor; {failures} failing checks",
        worst.0, worst.1
    );
    report(2, "finite-difference gradient oracle", failures == 0, t.elapsed(), Some(Duration::from_secs(60)), &detail);
}

#[test]
fn criterion_3_soft_kernel_approaches_the_indicator() {
    let t = Instant::now();
    let k = 1024.0;
    let mut sup: f64 = 0.0;
    let mut evaluated = 0;
    for r in [0.5, 1.0, 2.0] {
        let soft = SmoothingSpec::sigmoid(r, k, 0);
        let sharp = SmoothingSpec::hypercube(r, 0);
        let points = 20_001;
        for i in 0..points {
            let x = -2.0 * r + 4.0 * r * i as f64 / (points - 1) as f64;
            if (x.abs() - r).abs() <= 0.02 * r {
                continue;
            }
            let e = (kernel(&soft, &[x]) - kernel::<f64>(&sharp, &[x])).abs();
            sup = sup.max(e);
            evaluated += 1;
        }
        // Multi-coordinate displacements with every coordinate off the band.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..2000 {
            let d: Vec<f64> = (0..5)
                .map(|_| loop {
                    let v: f64 = rng.random_range(-2.0 * r..2.0 * r);
                    if (v.abs() - r).abs() > 0.02 * r {
                        break v;
                    }
                })
                .collect();
            sup = sup.max((kernel(&soft, &d) - kernel::<f64>(&sharp, &d)).abs());
            evaluated += 1;
        }
    }
    let out = artifacts("kernel");
    let path = plots::write_kernel_curves(&out, 1.0, &[4.0, 8.0, 16.0, 32.0], 401).unwrap();
    let rows = csv::Reader::from_path(&path).unwrap().records().count();
    let ok = sup < 1e-3 && rows == 4 * 401;
    let detail = format!("k=2^10 sup error {sup:.2e} over {evaluated} points; curves ({rows} rows) at {}", path.display());
    report(3, "kernel limit", ok, t.elapsed(), Some(Duration::from_secs(10)), &detail);
}

#[test]
fn criterion_4_plea_never_exceeds_pla() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let evaluations = 10_000;
    let mut violations = 0;
    let mut worst_gap = f64::NEG_INFINITY;
    for _ in 0..evaluations {
        let net = random_net(&mut rng);
        let (x, y) = random_batch(&net, rng.random_range(1..=4), &mut rng);
        let mask = random_mask(&net, &mut rng);
        let spec = SmoothingSpec::hypercube(10f64.powf(rng.random_range(-3.0..0.5)), rng.random_range(1..=8));
        let draws = sample_displacements(&mask, &spec, &mut rng);
        let (plea, _) = plea_loss_with_draws(&net, &x, &y, &mask, &draws).unwrap();
        let (pla, _) = pla_loss_with_draws(&net, &x, &y, &mask, &draws).unwrap();
        let gap = (plea - pla) / pla.abs().max(f64::MIN_POSITIVE);
        worst_gap = worst_gap.max(gap);
        if plea > pla + 1e-9 * pla.abs() {
            violations += 1;
        }
    }
    let detail = format!("{evaluations} shared-draw evaluations, {violations} violations, max (plea-pla)/pla {worst_gap:.2e}");
    report(4, "Jensen ordering", violations == 0, t.elapsed(), Some(Duration::from_secs(30)), &detail);
}

fn mnist_config(seed: u64, kind: &str, mask: &str, radius: f64, epochs: usize) -> RunConfig {
    let smoothing = if kind == "ce" { String::new() } else { format!("radius = {radius}\nsamples = 4\nmask = {mask}\n") };
    RunConfig::parse(&format!(
        r#"
seed = {seed}

[model]
arch = "mlp2"

[dataset]
name = "mnist"

[loss]
kind = "{kind}"
{smoothing}
[optimizer]
lr = 1e-4
momentum = 0.9

[schedule]
epochs = {epochs}
batch_size = 256
"#
    ))
    .unwrap()
}

fn all_finite(r: &RunResult) -> bool {
    let rep = &r.report;
    rep.step_loss.iter().chain(&rep.train_loss).chain(&rep.test_loss).all(|v| v.is_finite())
}

#[test]
fn criterion_5_desk_scale_mnist() {
    let t = Instant::now();
    let root = data_root();
    let seeds = [1u64, 2, 3];
    let arms = [
        ("ce", "[]", 0.0),
        ("pla", "[2]", 0.01),
        ("plea", "[2]", 0.01),
        ("pla", "[1, 2]", 0.001),
        ("pla", "[1, 2]", 0.1),
    ];
    let mut best = vec![Vec::new(); arms.len()];
    let mut finite = true;
    let mut table = String::new();
    for (a, &(kind, mask, r)) in arms.iter().enumerate() {
        for &seed in &seeds {
            let cfg = mnist_config(seed, kind, mask, r, 10);
            let res = runner::execute(&cfg, &root, &mut |_| {}).unwrap();
            assert_eq!(res.report.train_loss.len(), 10);
            finite &= all_finite(&res);
            best[a].push(res.report.best_acc);
        }
        table += &format!(" {kind}{mask}@{r}={:?}", best[a]);
    }
    let ce = median(best[0].clone());
    let partial = median(best[1].clone());
    let small = median(best[3].clone());
    let large = median(best[4].clone());
    let floor = partial >= ce - 0.005;
    let onset = large < small;
    let detail = format!(
        "(a) finite={finite} (b) median partial {partial:.4} vs CE {ce:.4} floor {:.4}: {floor} \
         (c) isotropic R=0.1 {large:.4} < R=0.001 {small:.4}: {onset};{table}",
        ce - 0.005
    );
    report(5, "desk-scale MNIST", finite && floor && onset, t.elapsed(), Some(Duration::from_secs(30 * 60)), &detail);
}

/// Signals `c_l g(t)` sharing one rise-then-decay profile.
fn common_decay_series() -> Vec<LayerSignalRecord> {
    let scales = [3.0, 1.0, 0.25, 0.07];
    let mut v = Vec::new();
    for t in 0..100usize {
        let g = if t < 10 { (t + 1) as f64 / 10.0 } else { (t as f64 - 8.0).powf(-0.5) };
        for (l, c) in scales.iter().enumerate() {
            v.push(LayerSignalRecord { step: 8 * (t + 1), layer: l, signal: c * g, noise: 0.1 * c * g, window: 8, noise_defined: true });
        }
    }
    v
}

#[test]
fn criterion_6_layer_telemetry() {
    let t = Instant::now();
    let root = data_root();
    let mut cfg = mnist_config(1, "ce", "[]", 0.0, 30);
    cfg.model.arch = "mlp4".into();
    cfg.telemetry = Some(plent_harness::config::TelemetryConfig { window: 8, export: "telemetry.csv".into() });
    let out = artifacts("telemetry");
    let (res, dir) = runner::run(&cfg, &root, &out, &mut |_| {}).unwrap();

    let regimes = detect_regimes(&res.telemetry, DEFAULT_TAU);
    let mut per_layer = String::new();
    let mut peaks_then_decay = false;
    if let Ok(rep) = &regimes {
        let last = res.telemetry.iter().map(|r| r.step).max().unwrap();
        peaks_then_decay = true;
        for &(layer, step) in &rep.peak_step {
            let series: Vec<&LayerSignalRecord> = res.telemetry.iter().filter(|r| r.layer == layer).collect();
            let peak = series.iter().map(|r| r.signal).fold(0.0, f64::max);
            let fin = series.iter().max_by_key(|r| r.step).unwrap().signal;
            let decays = 2 * step <= last && fin <= 0.8 * peak;
            peaks_then_decay &= decays;
            per_layer += &format!(" L{layer}: peak step {step} final/peak {:.2}", fin / peak);
        }
        per_layer += &format!("; boundaries {:?} of {}", rep.regime_boundaries, rep.end_step);
    }

    let synthetic = detect_regimes(&common_decay_series(), DEFAULT_TAU).unwrap();
    let worst_cv = synthetic.ratio_cv.iter().map(|p| p.ratio_cv).fold(0.0, f64::max);
    let synthetic_ok = worst_cv < 0.02 && synthetic.common_decay && synthetic.regime_boundaries[0] == 80;

    let plot_dir = out.join("plots");
    plots::emit_plot_data(&[dir], &plot_dir).unwrap();
    let mut rdr = csv::Reader::from_path(plot_dir.join(plots::TELEMETRY_FILE)).unwrap();
    let headers = rdr.headers().unwrap().clone();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    let ln_ok = headers.iter().any(|h| h == "ln_signal")
        && headers.iter().any(|h| h == "ln_noise")
        && rows.len() == res.telemetry.len()
        && rows.iter().zip(&res.telemetry).all(|(row, rec)| {
            let ln: f64 = row[3].parse().unwrap();
            (ln - rec.signal.ln()).abs() <= 1e-12 * ln.abs().max(1.0)
        });

    let ok = regimes.is_ok() && peaks_then_decay && synthetic_ok && ln_ok;
    let detail = format!(
        "{} windows, detection {}; peak then decay {peaks_then_decay}{per_layer}; synthetic ratio_cv {worst_cv:.1e}; \
         ln CSV {ln_ok}",
        res.telemetry.len() / 4,
        if regimes.is_ok() { "ok" } else { "failed" }
    );
    report(6, "telemetry", ok, t.elapsed(), Some(Duration::from_secs(20 * 60)), &detail);
}

#[test]
fn criterion_7_weight_decay() {
    let t = Instant::now();
    let root = data_root();
    let mut finals = Vec::new();
    let mut complete = true;
    for lambda in [0.01, 0.001, 0.0001] {
        let mut cfg = mnist_config(1, "ce", "[]", 0.0, 3);
        cfg.optimizer.weight_decay = lambda;
        cfg.dataset.train_subset = Some(2000);
        cfg.dataset.test_subset = Some(1000);
        let res = runner::execute(&cfg, &root, &mut |_| {}).unwrap();
        complete &= res.report.epochs_run == 3 && all_finite(&res) && res.report.weight_decay == lambda;
        finals.push(res.report.final_acc);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_ulps: f64 = 0.0;
    for _ in 0..20 {
        let net = random_net(&mut rng);
        let (x, y) = random_batch(&net, 3, &mut rng);
        let (_, g) = net.backward(&x, &y).unwrap();
        for lambda in [0.01, 0.001, 0.0001] {
            let r = regularized_gradient(&net, &g, lambda);
            let w = net.flat_weights();
            let b = net.flat_biases();
            let rows = r.wgrad.iter().zip(&g.wgrad).zip(&w).chain(r.bgrad.iter().zip(&g.bgrad).zip(&b));
            for ((total, base), p) in rows {
                let scale = total.abs().max(base.abs());
                if scale == 0.0 {
                    continue;
                }
                worst_ulps = worst_ulps.max(((total - base) - lambda * p).abs() / (f64::EPSILON * scale));
            }
        }
    }
    let exact = worst_ulps <= 4.0;
    let detail = format!("runs complete {complete} (final acc {finals:?}); decay term error {worst_ulps:.2} eps");
    report(7, "weight-decay baseline", complete && exact, t.elapsed(), Some(Duration::from_secs(5 * 60)), &detail);
}

fn random_images(n: usize, c: usize, h: usize, w: usize, rng: &mut ChaCha8Rng) -> Dataset {
    let images: Vec<f32> = (0..n * c * h * w).map(|_| rng.random::<u8>() as f32 / 255.0).collect();
    let labels = (0..n).map(|_| rng.random_range(0..10)).collect();
    Dataset::new(Tensor::new(vec![n, c, h, w], images).unwrap(), labels, "random").unwrap()
}

fn same_dataset(a: &Dataset, b: &Dataset) -> bool {
    a.labels() == b.labels()
        && a.images().shape() == b.images().shape()
        && a.images().data().iter().zip(b.images().data()).all(|(x, y)| x.to_bits() == y.to_bits())
}

#[test]
fn criterion_8_idx_and_cifar_ingestion() {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dir = tempfile::tempdir().unwrap();
    let mut checks: Vec<(&str, bool)> = Vec::new();

    let mono = random_images(37, 1, 28, 28, &mut rng);
    for ext in ["", ".gz"] {
        let ip = dir.path().join(format!("images{ext}"));
        let lp = dir.path().join(format!("labels{ext}"));
        write_idx(&mono, &ip, &lp).unwrap();
        checks.push(("idx file round trip", same_dataset(&mono, &load_idx(&ip, &lp).unwrap())));
    }
    let raw: Vec<u8> = (0..37 * 28 * 28).map(|_| rng.random()).collect();
    let raw_labels: Vec<u8> = (0..37).map(|_| rng.random_range(0..10)).collect();
    let ib = idx_image_bytes(37, 28, 28, &raw);
    let lb = idx_label_bytes(&raw_labels);
    let (n, rows, cols, px) = parse_idx_images(&ib, "images").unwrap();
    let labels = parse_idx_labels(&lb, "labels").unwrap();
    checks.push(("idx header", (n, rows, cols) == (37, 28, 28)));
    checks.push(("idx bytes bitwise", px == raw && labels.iter().map(|&l| l as u8).eq(raw_labels.iter().copied())));
    checks.push(("idx rebuild bitwise", idx_image_bytes(n, rows, cols, &px) == ib));

    let colour = random_images(5, 3, 32, 32, &mut rng);
    let cb = cifar10_bytes(&colour).unwrap();
    let (labels, px) = parse_cifar10(&cb, "batch").unwrap();
    let again = Dataset::new(
        Tensor::new(vec![5, 3, 32, 32], px.iter().map(|&v| v as f32 / 255.0).collect()).unwrap(),
        labels.iter().map(|&l| l as usize).collect(),
        "x",
    )
    .unwrap();
    checks.push(("cifar bytes bitwise", cifar10_bytes(&again).unwrap() == cb));
    let cp = dir.path().join("data_batch_1.bin");
    write_cifar10(&colour, &cp).unwrap();
    checks.push(("cifar file round trip", same_dataset(&colour, &load_cifar10(&[cp]).unwrap())));

    let rejects = |r: Result<(), plent::Error>, needle: &str| match r {
        Err(e) => e.to_string().contains(needle),
        Ok(()) => false,
    };
    let mut bad_magic = ib.clone();
    bad_magic[3] = 0x01;
    checks.push(("idx bad magic", rejects(parse_idx_images(&bad_magic, "images").map(|_| ()), "magic")));
    let mut bad_label_magic = lb.clone();
    bad_label_magic[2] = 0x09;
    checks.push(("idx label bad magic", rejects(parse_idx_labels(&bad_label_magic, "labels").map(|_| ()), "magic")));
    checks.push(("idx truncated", rejects(parse_idx_images(&ib[..ib.len() - 1], "images").map(|_| ()), "truncated")));
    let mut long = lb.clone();
    long.push(0);
    checks.push(("idx trailing", rejects(parse_idx_labels(&long, "labels").map(|_| ()), "trailing")));
    checks.push(("idx short header", rejects(parse_idx_images(&ib[..6], "images").map(|_| ()), "header")));
    let mut bad_label = lb.clone();
    bad_label[8] = 10;
    checks.push(("idx label range", rejects(parse_idx_labels(&bad_label, "labels").map(|_| ()), "label")));
    let short_labels = idx_label_bytes(&raw_labels[..36]);
    let ip = dir.path().join("mismatch-images");
    let lp = dir.path().join("mismatch-labels");
    std::fs::write(&ip, &ib).unwrap();
    std::fs::write(&lp, &short_labels).unwrap();
    checks.push(("idx count mismatch", rejects(load_idx(&ip, &lp).map(|_| ()), "count mismatch")));
    checks.push(("cifar length", rejects(parse_cifar10(&cb[..cb.len() - 7], "batch").map(|_| ()), "multiple")));
    let mut bad_cifar = cb.clone();
    bad_cifar[3073] = 200;
    checks.push(("cifar label", rejects(parse_cifar10(&bad_cifar, "batch").map(|_| ()), "record 1")));

    let failed: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = format!("{} checks, failed {failed:?}", checks.len());
    report(8, "data ingestion", failed.is_empty(), t.elapsed(), Some(Duration::from_secs(5)), &detail);
}

#[test]
fn criterion_9_same_seed_same_trajectory() {
    let t = Instant::now();
    let root = data_root();
    let mut mnist = mnist_config(5, "plea", "[1, 2]", 0.01, 2);
    mnist.dataset.train_subset = Some(1000);
    mnist.dataset.test_subset = Some(500);
    let augmented = RunConfig::parse(
        r#"
seed = 11

[model]
arch = "custom"
input_shape = [3, 8, 8]
precision = "f64"
layers = [
    { name = "conv1", kind = "conv3x3", in_channels = 3, out_channels = 4 },
    { name = "act1", kind = "relu" },
    { name = "pool1", kind = "max_pool2x2" },
    { name = "flatten", kind = "flatten" },
    { name = "fc1", kind = "dense", inputs = 64, outputs = 10 },
]

[dataset]
name = "synthetic"
augment = { crop_scale = [0.6, 1.0], aspect = [0.75, 1.3333333333333333], hflip_prob = 0.5, enabled = true }
synthetic = { train = 200, test = 100 }

[loss]
kind = "m"
radius = 0.05
sharpness = 8.0
samples = 3
mask = ["conv1"]

[optimizer]
lr = 0.01
momentum = 0.9
weight_decay = 0.0005

[schedule]
epochs = 3
batch_size = 32

[telemetry]
window = 4
"#,
    )
    .unwrap();

    let mut lines = Vec::new();
    let mut ok = true;
    for (name, cfg) in [("mnist plea", &mnist), ("synthetic m + augment", &augmented)] {
        let a = runner::execute(cfg, &root, &mut |_| {}).unwrap();
        let b = runner::execute(cfg, &root, &mut |_| {}).unwrap();
        let same = bits(&a.report.step_loss) == bits(&b.report.step_loss)
            && bits(&a.report.test_loss) == bits(&b.report.test_loss)
            && a.report == b.report
            && a.telemetry == b.telemetry;
        let mut other = cfg.clone();
        other.seed += 1;
        let c = runner::execute(&other, &root, &mut |_| {}).unwrap();
        let differs = bits(&a.report.step_loss) != bits(&c.report.step_loss);
        ok &= same && differs && !a.report.step_loss.is_empty();
        lines.push(format!("{name}: {} steps bitwise {same}, other seed differs {differs}", a.report.step_loss.len()));
    }
    report(9, "determinism", ok, t.elapsed(), None, &lines.join("; "));
}
