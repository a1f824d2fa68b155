//! Heavy-ball momentum SGD over any [`Objective`], with coupled weight decay,
//! per-epoch evaluation, early stopping and telemetry.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{augment, AugmentSpec, Dataset};
use crate::entropic::Objective;
use crate::error::{Error, Result};
use crate::nn::{FlatGradient, Network, Tensor};
use crate::scalar::Scalar;
use crate::telemetry::{LayerSignalRecord, SignalRecorder};

const EVAL_BATCH: usize = 500;

/// Momentum buffer and hyper-parameters. The velocity covers all weights
/// followed by all biases.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub velocity: Vec<T>,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(net: &Network<T>, lr: f64, momentum: f64, weight_decay: f64) -> Result<Self> {
        if !(lr > 0.0 && lr.is_finite()) {
            return Err(Error::Domain(format!("learning rate must be positive, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::Domain(format!("momentum must lie in [0, 1), got {momentum}")));
        }
        if !(weight_decay >= 0.0 && weight_decay.is_finite()) {
            return Err(Error::Domain(format!("weight decay must be nonnegative, got {weight_decay}")));
        }
        Ok(Self { velocity: vec![T::zero(); net.param_count()], lr, momentum, weight_decay, nesterov: false })
    }

    /// Applies `v ← μv − η(g + λp)`, `p ← p + v` given the loss gradient `grad`.
    pub fn apply(&mut self, net: &mut Network<T>, grad: &FlatGradient<T>) -> Result<()> {
        let nw = net.weight_count();
        if self.velocity.len() != net.param_count() {
            return Err(Error::Length { expected: net.param_count(), found: self.velocity.len() });
        }
        if grad.wgrad.len() != nw || grad.bgrad.len() != net.bias_count() {
            return Err(Error::Length { expected: net.param_count(), found: grad.wgrad.len() + grad.bgrad.len() });
        }
        let lr = T::from_f64_lossy(self.lr);
        let mu = T::from_f64_lossy(self.momentum);
        let lambda = T::from_f64_lossy(self.weight_decay);
        let (vw, vb) = self.velocity.split_at_mut(nw);
        net.for_each_weight_mut(|i, p| {
            vw[i] = mu * vw[i] - lr * decayed(grad.wgrad[i], *p, lambda);
            *p += vw[i];
        });
        net.for_each_bias_mut(|i, p| {
            vb[i] = mu * vb[i] - lr * decayed(grad.bgrad[i], *p, lambda);
            *p += vb[i];
        });
        Ok(())
    }

    /// Evaluates the objective on one batch and takes a step. Returns the
    /// pre-step loss and the loss gradient (without the decay term).
    pub fn step(
        &mut self,
        net: &mut Network<T>,
        objective: &Objective,
        batch: &Tensor<T>,
        labels: &[usize],
        rng: &mut ChaCha8Rng,
    ) -> Result<(T, FlatGradient<T>)> {
        let (loss, grad) = objective.evaluate(net, batch, labels, rng)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite(format!("loss {loss}")));
        }
        if !grad.all_finite() {
            return Err(Error::NonFinite("loss gradient".into()));
        }
        self.apply(net, &grad)?;
        Ok((loss, grad))
    }
}

#[inline]
fn decayed<T: Scalar>(g: T, p: T, lambda: T) -> T {
    g + lambda * p
}

/// Loss gradient plus the L2 term `λ·p` over every parameter.
pub fn regularized_gradient<T: Scalar>(net: &Network<T>, grad: &FlatGradient<T>, weight_decay: f64) -> FlatGradient<T> {
    let lambda = T::from_f64_lossy(weight_decay);
    let w = net.flat_weights();
    let b = net.flat_biases();
    FlatGradient {
        wgrad: grad.wgrad.iter().zip(&w).map(|(&g, &p)| decayed(g, p, lambda)).collect(),
        bgrad: grad.bgrad.iter().zip(&b).map(|(&g, &p)| decayed(g, p, lambda)).collect(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMetric {
    #[default]
    TestAcc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStop {
    #[serde(default)]
    pub metric: StopMetric,
    pub patience: usize,
}

impl Default for EarlyStop {
    fn default() -> Self {
        Self { metric: StopMetric::TestAcc, patience: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSchedule {
    pub epochs: usize,
    pub batch_size: usize,
    pub shuffle_seed: u64,
    #[serde(default = "one")]
    pub eval_every: usize,
    #[serde(default)]
    pub early_stop: Option<EarlyStop>,
}

fn one() -> usize {
    1
}

impl TrainSchedule {
    pub fn new(epochs: usize, batch_size: usize, shuffle_seed: u64) -> Self {
        Self { epochs, batch_size, shuffle_seed, eval_every: 1, early_stop: None }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Domain("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Domain("batch_size must be at least 1".into()));
        }
        if self.eval_every == 0 {
            return Err(Error::Domain("eval_every must be at least 1".into()));
        }
        if self.early_stop.as_ref().is_some_and(|e| e.patience == 0) {
            return Err(Error::Domain("early-stop patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Everything [`train`] needs besides the network and the data.
#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub objective: Objective,
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub schedule: TrainSchedule,
    /// Telemetry window in mini-batches; `None` disables telemetry.
    pub telemetry_window: Option<usize>,
    pub augment: Option<AugmentSpec>,
    /// Seeds the displacement and augmentation streams.
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub loss: f64,
    pub acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub run_id: String,
    pub config: serde_json::Value,
    pub initial: Evaluation,
    /// Mean training objective per completed epoch.
    pub train_loss: Vec<f64>,
    /// Epochs (1-based) at which the test set was evaluated.
    pub eval_epoch: Vec<usize>,
    pub test_loss: Vec<f64>,
    pub test_acc: Vec<f64>,
    /// Objective value of every optimizer step, in order.
    pub step_loss: Vec<f64>,
    pub best_acc: f64,
    /// 0 when no epoch beat the initial evaluation.
    pub best_epoch: usize,
    pub final_acc: f64,
    pub epochs_run: usize,
    pub early_stopped: bool,
    pub weight_decay: f64,
}

/// Result of [`train`]: the report and the telemetry series.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub telemetry: Vec<LayerSignalRecord>,
}

/// Returned to the per-epoch callback of [`train_observed`].
#[derive(Clone, Copy, Debug)]
pub struct EpochProgress {
    pub epoch: usize,
    pub train_loss: f64,
    pub test: Option<Evaluation>,
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Mean cross-entropy and argmax accuracy; ties go to the lowest class index.
pub fn evaluate<T: Scalar>(net: &Network<T>, dataset: &Dataset) -> Result<Evaluation> {
    if dataset.is_empty() {
        return Err(Error::Domain(format!("cannot evaluate on empty dataset {}", dataset.name())));
    }
    let mut loss = 0.0;
    let mut correct = 0usize;
    let idx: Vec<usize> = (0..dataset.len()).collect();
    for chunk in idx.chunks(EVAL_BATCH) {
        let (x, labels) = dataset.batch::<T>(chunk, net.input_shape())?;
        let logits = net.forward(&x)?;
        loss += crate::nn::cross_entropy(&logits, &labels)?.to_f64_lossy() * chunk.len() as f64;
        correct += accuracy_count(&logits, &labels);
    }
    let n = dataset.len() as f64;
    Ok(Evaluation { loss: loss / n, acc: correct as f64 / n })
}

/// Number of rows of `logits` whose argmax equals the label.
pub fn accuracy_count<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> usize {
    let classes = logits.shape()[1];
    logits.data().chunks_exact(classes).zip(labels).filter(|(row, &l)| argmax(row) == l).count()
}

fn make_batch<T: Scalar>(
    ds: &Dataset,
    indices: &[usize],
    input_shape: &[usize],
    augment_spec: Option<&AugmentSpec>,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor<T>, Vec<usize>)> {
    let Some(spec) = augment_spec else {
        return ds.batch(indices, input_shape);
    };
    let [c, h, w] = ds.image_shape();
    let (oh, ow) = match input_shape {
        [ic, oh, ow] if *ic == c => (*oh, *ow),
        _ => return Err(Error::Shape(format!("augmentation needs a C x H x W input, network takes {input_shape:?}"))),
    };
    let mut data = Vec::with_capacity(indices.len() * c * oh * ow);
    for &i in indices {
        data.extend(augment(ds.image(i), c, h, w, spec, oh, ow, rng).into_iter().map(|v| T::from_f64_lossy(v as f64)));
    }
    let labels = indices.iter().map(|&i| ds.labels()[i]).collect();
    Ok((Tensor::new(vec![indices.len(), c, oh, ow], data)?, labels))
}

fn seeded_stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn train<T: Scalar>(net: &mut Network<T>, train_set: &Dataset, test_set: &Dataset, opts: &TrainOptions) -> Result<TrainOutcome> {
    train_observed(net, train_set, test_set, opts, |_| {})
}

/// [`train`] with a callback after every epoch.
pub fn train_observed<T: Scalar>(
    net: &mut Network<T>,
    train_set: &Dataset,
    test_set: &Dataset,
    opts: &TrainOptions,
    mut on_epoch: impl FnMut(&EpochProgress),
) -> Result<TrainOutcome> {
    opts.objective.validate()?;
    let sched = &opts.schedule;
    if sched.epochs > 0 {
        sched.validate()?;
    }
    if let Some(a) = &opts.augment {
        a.validate()?;
    }
    if train_set.is_empty() {
        return Err(Error::Domain("training set is empty".into()));
    }
    if let Some((_, mask)) = &opts.objective.smoothing {
        if mask.len() != net.weight_count() {
            return Err(Error::Length { expected: net.weight_count(), found: mask.len() });
        }
    }

    let mut state = OptimizerState::new(net, opts.lr, opts.momentum, opts.weight_decay)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(sched.shuffle_seed);
    let mut draw_rng = seeded_stream(opts.seed, 1);
    let mut aug_rng = seeded_stream(opts.seed, 2);
    let mut recorder = opts.telemetry_window.map(|w| SignalRecorder::new(net, w));

    let initial = evaluate(net, test_set)?;
    let mut report = TrainReport {
        run_id: String::new(),
        config: serde_json::Value::Null,
        initial,
        train_loss: Vec::new(),
        eval_epoch: Vec::new(),
        test_loss: Vec::new(),
        test_acc: Vec::new(),
        step_loss: Vec::new(),
        best_acc: initial.acc,
        best_epoch: 0,
        final_acc: initial.acc,
        epochs_run: 0,
        early_stopped: false,
        weight_decay: opts.weight_decay,
    };
    let mut best_snapshot: Option<(Vec<T>, Vec<T>)> = None;
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut step = 0usize;

    for epoch in 1..=sched.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(sched.batch_size) {
            let (x, labels) = make_batch::<T>(train_set, chunk, net.input_shape(), opts.augment.as_ref(), &mut aug_rng)?;
            let (loss, grad) = state
                .step(net, &opts.objective, &x, &labels, &mut draw_rng)
                .map_err(|e| annotate(e, epoch, step))?;
            if let Some(r) = recorder.as_mut() {
                r.observe(step, &grad, net)?;
            }
            let loss = loss.to_f64_lossy();
            report.step_loss.push(loss);
            epoch_loss += loss;
            batches += 1;
            step += 1;
        }
        let train_loss = epoch_loss / batches as f64;
        report.train_loss.push(train_loss);
        report.epochs_run = epoch;

        let test = if epoch % sched.eval_every == 0 || epoch == sched.epochs {
            let ev = evaluate(net, test_set)?;
            report.eval_epoch.push(epoch);
            report.test_loss.push(ev.loss);
            report.test_acc.push(ev.acc);
            report.final_acc = ev.acc;
            if ev.acc > report.best_acc {
                report.best_acc = ev.acc;
                report.best_epoch = epoch;
                if sched.early_stop.is_some() {
                    best_snapshot = Some((net.flat_weights(), net.flat_biases()));
                }
            }
            Some(ev)
        } else {
            None
        };
        on_epoch(&EpochProgress { epoch, train_loss, test });
        if let Some(es) = &sched.early_stop {
            if epoch - report.best_epoch >= es.patience && epoch < sched.epochs {
                report.early_stopped = true;
                break;
            }
        }
    }
    if sched.early_stop.is_some() {
        if let Some((w, b)) = best_snapshot {
            net.set_flat_weights(&w)?;
            net.set_flat_biases(&b)?;
        }
    }
    let telemetry = recorder.map(|r| r.finish(step)).unwrap_or_default();
    Ok(TrainOutcome { report, telemetry })
}

fn annotate(e: Error, epoch: usize, step: usize) -> Error {
    match e {
        Error::NonFinite(m) => Error::NonFinite(format!("{m} at epoch {epoch}, step {step}")),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthetic;
    use crate::nn::arch::{mlp, Activation};

    fn net(widths: &[usize], seed: u64) -> Network<f64> {
        let mut n = Network::new(vec![widths[0]], &mlp(widths, Activation::Relu)).unwrap();
        n.kaiming_init(&mut ChaCha8Rng::seed_from_u64(seed));
        n
    }

    #[test]
    fn plain_sgd_moves_against_the_gradient() {
        let mut n = net(&[3, 2], 1);
        let before = n.flat_weights();
        let grad = FlatGradient { wgrad: vec![1.0, -2.0, 0.5, 0.0, 3.0, 1.0], bgrad: vec![0.1, 0.2] };
        let mut st = OptimizerState::new(&n, 0.1, 0.0, 0.0).unwrap();
        st.apply(&mut n, &grad).unwrap();
        for ((a, b), g) in n.flat_weights().iter().zip(&before).zip(&grad.wgrad) {
            assert!((a - (b - 0.1 * g)).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_alone_shrinks_geometrically() {
        let mut n = net(&[3, 2], 2);
        let before = n.flat_weights();
        let mut st = OptimizerState::new(&n, 0.5, 0.0, 0.1).unwrap();
        let zero = FlatGradient::zeros_like(&n);
        st.apply(&mut n, &zero).unwrap();
        for (a, b) in n.flat_weights().iter().zip(&before) {
            assert!((a - b * 0.95).abs() <= 1e-15 * b.abs().max(1.0));
        }
    }

    #[test]
    fn velocity_converges_to_geometric_limit() {
        let mut n = net(&[2, 2], 3);
        let g = FlatGradient { wgrad: vec![1.0; 4], bgrad: vec![1.0; 2] };
        let mut st = OptimizerState::new(&n, 0.01, 0.9, 0.0).unwrap();
        for _ in 0..400 {
            st.apply(&mut n, &g).unwrap();
        }
        assert!(st.velocity.iter().all(|v| (v + 0.1).abs() < 1e-12));
        assert!(!st.nesterov);
    }

    #[test]
    fn bad_hyper_parameters_are_rejected() {
        let n = net(&[2, 2], 3);
        assert!(OptimizerState::new(&n, 0.0, 0.9, 0.0).is_err());
        assert!(OptimizerState::new(&n, 0.1, 1.0, 0.0).is_err());
        assert!(OptimizerState::new(&n, 0.1, 0.5, -1.0).is_err());
    }

    #[test]
    fn non_finite_loss_aborts() {
        let mut n = net(&[2, 2], 3);
        n.for_each_weight_mut(|_, w| *w = f64::NAN);
        let x = Tensor::new(vec![1, 2], vec![1.0, 1.0]).unwrap();
        let mut st = OptimizerState::new(&n, 0.1, 0.0, 0.0).unwrap();
        let r = st.step(&mut n, &Objective::cross_entropy(), &x, &[0], &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn argmax_ties_go_low() {
        let logits = Tensor::new(vec![2, 3], vec![1.0f64, 1.0, 0.0, 0.0, 2.0, 2.0]).unwrap();
        assert_eq!(accuracy_count(&logits, &[0, 1]), 2);
        assert_eq!(accuracy_count(&logits, &[1, 2]), 0);
    }

    fn opts(epochs: usize) -> TrainOptions {
        TrainOptions {
            objective: Objective::cross_entropy(),
            lr: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            schedule: TrainSchedule::new(epochs, 16, 7),
            telemetry_window: Some(2),
            augment: None,
            seed: 11,
        }
    }

    #[test]
    fn zero_epochs_echo_initial_evaluation() {
        let ds = synthetic(40, [1, 2, 2], 3, 0.05, 1).unwrap();
        let mut n = net(&[4, 8, 3], 5);
        let before = n.clone();
        let out = train(&mut n, &ds, &ds, &opts(0)).unwrap();
        assert_eq!(out.report.initial, evaluate(&before, &ds).unwrap());
        assert_eq!(out.report.best_acc, out.report.initial.acc);
        assert!(out.report.step_loss.is_empty());
        assert_eq!(n.flat_weights(), before.flat_weights());
    }

    #[test]
    fn training_learns_and_records_telemetry() {
        let ds = synthetic(96, [1, 2, 2], 3, 0.05, 1).unwrap();
        let mut n = net(&[4, 8, 3], 5);
        let out = train(&mut n, &ds, &ds, &opts(20)).unwrap();
        assert_eq!(out.report.train_loss.len(), 20);
        assert_eq!(out.report.step_loss.len(), 20 * 6);
        assert!(out.report.best_acc > 0.9, "{}", out.report.best_acc);
        // Two synaptic layers, 120 steps in windows of 2.
        assert_eq!(out.telemetry.len(), 2 * 60);
    }

    #[test]
    fn early_stop_restores_best_snapshot() {
        let ds = synthetic(60, [1, 2, 2], 3, 0.05, 2).unwrap();
        let mut n = net(&[4, 8, 3], 6);
        let mut o = opts(200);
        o.schedule.early_stop = Some(EarlyStop { metric: StopMetric::TestAcc, patience: 3 });
        let out = train(&mut n, &ds, &ds, &o).unwrap();
        assert!(out.report.early_stopped);
        assert!(out.report.epochs_run < 200);
        let acc = evaluate(&n, &ds).unwrap().acc;
        assert_eq!(acc, out.report.best_acc);
    }
}
