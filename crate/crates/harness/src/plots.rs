//! Tidy CSV tables for plotting: accuracy against radius, log signal and
//! noise against step, and learning curves.

use std::fs;
use std::path::{Path, PathBuf};

use plent::entropic::soft_profile;
use plent::telemetry::LayerSignalRecord;
use plent::TrainReport;

use crate::config::RunConfig;
use crate::grid::{loss_label, mask_label};
use crate::runner::REPORT_FILE;
use crate::HarnessError;

pub const ACCURACY_FILE: &str = "accuracy_vs_radius.csv";
pub const TELEMETRY_FILE: &str = "telemetry_log.csv";
pub const CURVES_FILE: &str = "curves.csv";
pub const KERNEL_FILE: &str = "kernel_curves.csv";

/// A run directory that could be read.
#[derive(Clone, Debug)]
pub struct LoadedRun {
    pub dir: PathBuf,
    pub config: RunConfig,
    pub report: TrainReport,
    pub telemetry: Vec<LayerSignalRecord>,
}

#[derive(Clone, Debug, Default)]
pub struct EmitOutcome {
    pub files: Vec<PathBuf>,
    /// Directories skipped, with the reason.
    pub skipped: Vec<(PathBuf, String)>,
}

pub fn read_telemetry(path: &Path) -> Result<Vec<LayerSignalRecord>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let rec: TelemetryRow = row?;
        out.push(LayerSignalRecord {
            step: rec.step,
            layer: rec.layer,
            signal: rec.signal,
            noise: rec.noise,
            window: rec.window,
            noise_defined: rec.window >= 2,
        });
    }
    Ok(out)
}

#[derive(serde::Deserialize)]
struct TelemetryRow {
    step: usize,
    layer: usize,
    signal: f64,
    noise: f64,
    window: usize,
}

pub fn load_run(dir: &Path) -> Result<LoadedRun, HarnessError> {
    let text = fs::read_to_string(dir.join(REPORT_FILE))
        .map_err(|e| HarnessError::Runtime(format!("missing {REPORT_FILE}: {e}")))?;
    let report: TrainReport =
        serde_json::from_str(&text).map_err(|e| HarnessError::Runtime(format!("corrupt {REPORT_FILE}: {e}")))?;
    let config: RunConfig = serde_json::from_value(report.config.clone())
        .map_err(|e| HarnessError::Runtime(format!("report carries no readable config: {e}")))?;
    let telemetry = match &config.telemetry {
        Some(t) if dir.join(&t.export).is_file() => read_telemetry(&dir.join(&t.export))?,
        _ => Vec::new(),
    };
    Ok(LoadedRun { dir: dir.to_path_buf(), config, report, telemetry })
}

/// Accepts run directories and directories of runs (e.g. a sweep output).
fn expand(dirs: &[PathBuf]) -> Vec<PathBuf> {
    let mut out = Vec::new();
    for d in dirs {
        if d.join(REPORT_FILE).is_file() || !d.is_dir() {
            out.push(d.clone());
            continue;
        }
        let mut children: Vec<PathBuf> = fs::read_dir(d)
            .map(|rd| rd.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.join(REPORT_FILE).is_file()).collect())
            .unwrap_or_default();
        if children.is_empty() {
            out.push(d.clone());
        }
        children.sort();
        out.extend(children);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn ln_or_empty(v: f64) -> String {
    if v > 0.0 {
        v.ln().to_string()
    } else {
        String::new()
    }
}

/// Writes the three tables for every readable run. Unreadable directories
/// are listed in the outcome and skipped; with no readable run nothing is
/// written and an error is returned.
pub fn emit_plot_data(dirs: &[PathBuf], out: &Path) -> Result<EmitOutcome, HarnessError> {
    let mut outcome = EmitOutcome::default();
    let mut runs = Vec::new();
    for d in expand(dirs) {
        match load_run(&d) {
            Ok(r) => runs.push(r),
            Err(e) => outcome.skipped.push((d, e.to_string())),
        }
    }
    if runs.is_empty() {
        return Err(HarnessError::Runtime(format!("no readable run reports among {} inputs", dirs.len())));
    }
    fs::create_dir_all(out)?;

    let path = out.join(ACCURACY_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["run_id", "loss", "mask", "radius", "samples", "weight_decay", "seed", "best_acc", "final_acc"])?;
    for r in &runs {
        let c = &r.config;
        w.write_record([
            r.report.run_id.clone(),
            loss_label(c.loss.kind).to_string(),
            mask_label(&c.loss.mask),
            opt(c.loss.radius),
            c.loss.samples.map(|s| s.to_string()).unwrap_or_default(),
            c.optimizer.weight_decay.to_string(),
            c.seed.to_string(),
            r.report.best_acc.to_string(),
            r.report.final_acc.to_string(),
        ])?;
    }
    w.flush()?;
    outcome.files.push(path);

    let path = out.join(TELEMETRY_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["run_id", "step", "layer", "ln_signal", "ln_noise"])?;
    for r in &runs {
        for t in &r.telemetry {
            w.write_record([
                r.report.run_id.clone(),
                t.step.to_string(),
                t.layer.to_string(),
                ln_or_empty(t.signal),
                ln_or_empty(t.noise),
            ])?;
        }
    }
    w.flush()?;
    outcome.files.push(path);

    let path = out.join(CURVES_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["run_id", "epoch", "train_loss", "test_loss", "test_acc"])?;
    for r in &runs {
        let rep = &r.report;
        w.write_record([rep.run_id.clone(), "0".into(), String::new(), rep.initial.loss.to_string(), rep.initial.acc.to_string()])?;
        for (i, tl) in rep.train_loss.iter().enumerate() {
            let epoch = i + 1;
            let ev = rep.eval_epoch.iter().position(|&e| e == epoch);
            w.write_record([
                rep.run_id.clone(),
                epoch.to_string(),
                tl.to_string(),
                opt(ev.map(|j| rep.test_loss[j])),
                opt(ev.map(|j| rep.test_acc[j])),
            ])?;
        }
    }
    w.flush()?;
    outcome.files.push(path);
    Ok(outcome)
}

/// One-dimensional soft distance and kernel sections, one block per `k`.
pub fn write_kernel_curves(out: &Path, radius: f64, ks: &[f64], points: usize) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(out)?;
    let path = out.join(KERNEL_FILE);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["radius", "k", "delta", "distance", "kernel"])?;
    for &k in ks {
        for (x, d, kv) in soft_profile(radius, k, -2.0 * radius, 2.0 * radius, points) {
            w.write_record([radius.to_string(), k.to_string(), x.to_string(), d.to_string(), kv.to_string()])?;
        }
    }
    w.flush()?;
    Ok(path)
}
