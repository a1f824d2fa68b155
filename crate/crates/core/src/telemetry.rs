//! Layer temperature telemetry.
//!
//! The training signal of layer `I` is the mean absolute gradient over its
//! synaptic weights. Per-mini-batch signals are aggregated over windows into
//! a mean (the signal) and a sample standard deviation over time (the noise).

use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{FlatGradient, Network};
use crate::scalar::Scalar;

/// Default band width for the common-decay test, in natural-log units.
pub const DEFAULT_TAU: f64 = 0.2;

/// Aggregated signal of one layer over one window of mini-batches.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSignalRecord {
    /// Optimizer steps completed at the end of the window.
    pub step: usize,
    /// Layer position in the network.
    pub layer: usize,
    pub signal: f64,
    pub noise: f64,
    pub window: usize,
    /// Cleared when the window is too short for a standard deviation.
    #[serde(default = "yes")]
    pub noise_defined: bool,
}

fn yes() -> bool {
    true
}

/// Mean absolute gradient over the weights of the layer at position `layer`.
pub fn layer_signal<T: Scalar>(grad: &FlatGradient<T>, net: &Network<T>, layer: usize) -> Result<f64> {
    let range = net.weight_range(layer).ok_or_else(|| {
        Error::Domain(format!("layer {layer} has no synaptic weights, so no training signal"))
    })?;
    if grad.wgrad.len() != net.weight_count() {
        return Err(Error::Length { expected: net.weight_count(), found: grad.wgrad.len() });
    }
    let n = range.len() as f64;
    Ok(grad.wgrad[range].iter().map(|g| g.abs().to_f64_lossy()).sum::<f64>() / n)
}

/// Mean and `n-1` sample standard deviation of a window of per-batch signals.
/// With fewer than two values the noise is reported as zero and flagged.
pub fn accumulate_window(step: usize, layer: usize, values: &[f64]) -> LayerSignalRecord {
    let n = values.len();
    let mean = if n == 0 { 0.0 } else { values.iter().sum::<f64>() / n as f64 };
    let (noise, noise_defined) = if n < 2 {
        (0.0, false)
    } else {
        let ss = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        ((ss / (n - 1) as f64).sqrt(), true)
    };
    LayerSignalRecord { step, layer, signal: mean, noise, window: n.max(1), noise_defined }
}

/// Collects per-batch signals for every parameterized layer and emits one
/// record per layer each time a window fills.
#[derive(Clone, Debug)]
pub struct SignalRecorder {
    window: usize,
    layers: Vec<usize>,
    pending: Vec<Vec<f64>>,
    records: Vec<LayerSignalRecord>,
}

impl SignalRecorder {
    pub fn new<T: Scalar>(net: &Network<T>, window: usize) -> Self {
        let layers = net.param_layers();
        Self { window: window.max(1), pending: vec![Vec::new(); layers.len()], layers, records: Vec::new() }
    }

    pub fn window(&self) -> usize {
        self.window
    }

    /// Records the gradient of optimizer step `step` (zero-based).
    pub fn observe<T: Scalar>(&mut self, step: usize, grad: &FlatGradient<T>, net: &Network<T>) -> Result<()> {
        for (slot, &layer) in self.pending.iter_mut().zip(&self.layers) {
            slot.push(layer_signal(grad, net, layer)?);
        }
        if self.pending[0].len() >= self.window {
            self.flush(step + 1);
        }
        Ok(())
    }

    fn flush(&mut self, step: usize) {
        for (slot, &layer) in self.pending.iter_mut().zip(&self.layers) {
            if !slot.is_empty() {
                self.records.push(accumulate_window(step, layer, slot));
                slot.clear();
            }
        }
    }

    /// Flushes a trailing partial window, if any, and returns all records.
    pub fn finish(mut self, step: usize) -> Vec<LayerSignalRecord> {
        if self.pending.first().is_some_and(|p| !p.is_empty()) {
            self.flush(step);
        }
        self.records
    }

    pub fn records(&self) -> &[LayerSignalRecord] {
        &self.records
    }
}

/// Append-only record sink that can be shared between threads.
#[derive(Debug, Default)]
pub struct RecordSink {
    inner: Mutex<Vec<LayerSignalRecord>>,
}

impl RecordSink {
    pub fn append(&self, record: LayerSignalRecord) {
        self.inner.lock().expect("sink poisoned").push(record);
    }

    /// All records ordered by `(step, layer)`.
    pub fn into_sorted(self) -> Vec<LayerSignalRecord> {
        let mut v = self.inner.into_inner().expect("sink poisoned");
        v.sort_by_key(|r| (r.step, r.layer));
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRatio {
    pub layers: (usize, usize),
    /// Coefficient of variation of `s_I / s_J` over the final 20% of windows.
    pub ratio_cv: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeReport {
    /// `(layer, step of maximum signal)` for each layer.
    pub peak_step: Vec<(usize, usize)>,
    /// End of the signal-dominated regime (latest per-layer peak) and start
    /// of the common-decay regime. The second boundary equals `end_step` when
    /// no common regime is found.
    pub regime_boundaries: [usize; 2],
    /// One past the last recorded step.
    pub end_step: usize,
    pub common_decay: bool,
    pub ratio_cv: Vec<PairRatio>,
}

/// Length of the trailing segment used for the final-window statistics.
fn tail_len(n: usize) -> usize {
    ((n as f64 * 0.2).ceil() as usize).clamp(2, n)
}

/// Locates the peak and the onset of common decay in a telemetry series.
///
/// The common-decay boundary is the first window from which, for every
/// layer pair, `ln(s_I / s_J)` stays inside a band of width `tau` until the
/// end, provided that stretch spans at least the final 20% of windows.
pub fn detect_regimes(series: &[LayerSignalRecord], tau: f64) -> Result<RegimeReport> {
    let mut by_layer: BTreeMap<usize, Vec<&LayerSignalRecord>> = BTreeMap::new();
    for r in series {
        by_layer.entry(r.layer).or_default().push(r);
    }
    if by_layer.is_empty() {
        return Err(Error::Analysis("empty telemetry series".into()));
    }
    for recs in by_layer.values_mut() {
        recs.sort_by_key(|r| r.step);
    }
    let layers: Vec<usize> = by_layer.keys().copied().collect();
    let steps: Vec<usize> = by_layer[&layers[0]].iter().map(|r| r.step).collect();
    let n = steps.len();
    if n < 3 {
        return Err(Error::Analysis(format!("need at least 3 windows per layer, got {n}")));
    }
    for (l, recs) in &by_layer {
        if recs.iter().map(|r| r.step).ne(steps.iter().copied()) {
            return Err(Error::Analysis(format!("layer {l} windows are not aligned with layer {}", layers[0])));
        }
        if recs.iter().any(|r| !(r.signal > 0.0 && r.signal.is_finite())) {
            return Err(Error::Analysis(format!("layer {l} has a non-positive or non-finite signal")));
        }
    }

    let mut peak_step = Vec::new();
    for (&l, recs) in &by_layer {
        let mut best = 0;
        for (i, r) in recs.iter().enumerate() {
            if r.signal > recs[best].signal {
                best = i;
            }
        }
        peak_step.push((l, recs[best].step));
    }
    let boundary1 = peak_step.iter().map(|p| p.1).max().expect("nonempty");

    let end_step = steps[n - 1] + 1;
    let tail = tail_len(n);
    let mut onset = 0usize;
    let mut common = true;
    let mut ratio_cv = Vec::new();
    for (a, &li) in layers.iter().enumerate() {
        for &lj in &layers[a + 1..] {
            let log_ratio: Vec<f64> = by_layer[&li]
                .iter()
                .zip(&by_layer[&lj])
                .map(|(x, y)| x.signal.ln() - y.signal.ln())
                .collect();
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            let mut start = n;
            for i in (0..n).rev() {
                lo = lo.min(log_ratio[i]);
                hi = hi.max(log_ratio[i]);
                if hi - lo > tau {
                    break;
                }
                start = i;
            }
            if n - start < tail {
                common = false;
            } else {
                onset = onset.max(start);
            }

            let ratios: Vec<f64> = by_layer[&li][n - tail..]
                .iter()
                .zip(&by_layer[&lj][n - tail..])
                .map(|(x, y)| x.signal / y.signal)
                .collect();
            let rec = accumulate_window(0, 0, &ratios);
            ratio_cv.push(PairRatio { layers: (li, lj), ratio_cv: rec.noise / rec.signal });
        }
    }
    let boundary2 = if common { steps[onset].max(boundary1) } else { end_step };
    Ok(RegimeReport {
        peak_step,
        regime_boundaries: [boundary1, boundary2],
        end_step,
        common_decay: common,
        ratio_cv,
    })
}

/// Writes `step,layer,signal,noise,window` rows with a header.
pub fn write_csv<W: Write>(records: &[LayerSignalRecord], mut out: W) -> Result<()> {
    writeln!(out, "step,layer,signal,noise,window")?;
    for r in records {
        writeln!(out, "{},{},{:e},{:e},{}", r.step, r.layer, r.signal, r.noise, r.window)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::arch::{mlp, Activation};

    #[test]
    fn signal_is_mean_absolute_weight_gradient() {
        let net = Network::<f64>::new(vec![1], &mlp(&[1, 2], Activation::Relu)).unwrap();
        let grad = FlatGradient { wgrad: vec![0.3, -0.1], bgrad: vec![5.0, 5.0] };
        assert!((layer_signal(&grad, &net, 0).unwrap() - 0.2).abs() < 1e-15);
        let zero = FlatGradient::zeros(2, 2);
        assert_eq!(layer_signal(&zero, &net, 0).unwrap(), 0.0);
    }

    #[test]
    fn parameterless_layer_has_no_signal() {
        let net = Network::<f64>::new(vec![2], &mlp(&[2, 2, 2], Activation::Relu)).unwrap();
        let g = FlatGradient::zeros_like(&net);
        assert!(matches!(layer_signal(&g, &net, 1), Err(Error::Domain(_))));
    }

    #[test]
    fn window_statistics() {
        let r = accumulate_window(10, 0, &[1.0, 3.0]);
        assert_eq!(r.signal, 2.0);
        assert!((r.noise - 2f64.sqrt()).abs() < 1e-15);
        let c = accumulate_window(10, 0, &[0.5; 7]);
        assert_eq!(c.noise, 0.0);
        assert!(c.noise_defined);
        let one = accumulate_window(10, 0, &[0.4]);
        assert_eq!((one.noise, one.noise_defined, one.window), (0.0, false, 1));
    }

    fn series(cs: &[f64], f: impl Fn(usize) -> f64, n: usize) -> Vec<LayerSignalRecord> {
        let mut v = Vec::new();
        for t in 0..n {
            for (l, &c) in cs.iter().enumerate() {
                v.push(LayerSignalRecord {
                    step: (t + 1) * 10,
                    layer: 2 * l,
                    signal: c * f(t),
                    noise: 0.0,
                    window: 10,
                    noise_defined: true,
                });
            }
        }
        v
    }

    #[test]
    fn exact_common_decay_starts_at_first_window() {
        let s = series(&[1.0, 0.3, 2.5], |t| 1.0 / (1.0 + t as f64).sqrt(), 20);
        let rep = detect_regimes(&s, DEFAULT_TAU).unwrap();
        assert!(rep.common_decay);
        assert_eq!(rep.regime_boundaries, [10, 10]);
        assert!(rep.ratio_cv.iter().all(|p| p.ratio_cv < 1e-12));
        assert_eq!(rep.ratio_cv.len(), 3);
    }

    #[test]
    fn rise_then_decay_peaks_where_constructed() {
        // f rises linearly to t = 7, then decays.
        let f = |t: usize| if t <= 7 { 1.0 + t as f64 } else { 8.0 * (-(t as f64 - 7.0) * 0.3).exp() };
        let s = series(&[1.0, 0.5], f, 30);
        let rep = detect_regimes(&s, DEFAULT_TAU).unwrap();
        assert_eq!(rep.peak_step, vec![(0, 80), (2, 80)]);
        assert_eq!(rep.regime_boundaries[0], 80);
        assert!(rep.regime_boundaries[1] >= rep.regime_boundaries[0]);
    }

    #[test]
    fn diverging_layers_have_no_common_regime() {
        let mut s = series(&[1.0], |t| (-(t as f64) * 0.1).exp(), 25);
        s.extend(series(&[1.0], |t| (-(t as f64) * 0.5).exp(), 25).into_iter().map(|mut r| {
            r.layer = 4;
            r
        }));
        let rep = detect_regimes(&s, DEFAULT_TAU).unwrap();
        assert!(!rep.common_decay);
        assert_eq!(rep.regime_boundaries[1], rep.end_step);
        assert_eq!(rep.end_step, 251);
    }

    #[test]
    fn too_short_series_is_rejected() {
        let s = series(&[1.0, 2.0], |_| 1.0, 2);
        assert!(matches!(detect_regimes(&s, DEFAULT_TAU), Err(Error::Analysis(_))));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_csv(&[accumulate_window(5, 0, &[1.0, 2.0])], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("step,layer,signal,noise,window"));
        assert!(lines.next().unwrap().starts_with("5,0,1.5e0,"));
    }

    #[test]
    fn sink_restores_step_order() {
        let sink = RecordSink::default();
        std::thread::scope(|s| {
            for t in 0..4 {
                let sink = &sink;
                s.spawn(move || sink.append(accumulate_window(40 - 10 * t, 0, &[1.0, 2.0])));
            }
        });
        let steps: Vec<_> = sink.into_sorted().iter().map(|r| r.step).collect();
        assert_eq!(steps, vec![10, 20, 30, 40]);
    }
}
