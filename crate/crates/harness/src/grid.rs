//! Cartesian experiment grids over losses, masks, radii, sample counts,
//! weight decay and seeds.

use std::fs;
use std::path::{Path, PathBuf};

use plent::LossKind;
use serde::{Deserialize, Serialize};

use crate::config::{LayerRef, LossConfig, RunConfig};
use crate::runner;
use crate::HarnessError;

pub const SUMMARY_FILE: &str = "summary.csv";
pub const FAILURES_FILE: &str = "failures.csv";

/// `"all"` for every nonempty subset of the synaptic layers, or explicit sets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MaskSweep {
    All(String),
    Sets(Vec<Vec<LayerRef>>),
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweeps {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub kinds: Vec<LossKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masks: Option<MaskSweep>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub radius: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub samples: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub weight_decay: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub seeds: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGrid {
    pub base: RunConfig,
    #[serde(default)]
    pub sweep: Sweeps,
}

/// One expanded grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub index: usize,
    pub config: RunConfig,
}

fn or_base<T: Clone>(list: &[T], base: T) -> Vec<T> {
    if list.is_empty() {
        vec![base]
    } else {
        list.to_vec()
    }
}

/// Nonempty subsets of `{1..=n}` in increasing bitmask order.
pub fn all_subsets(n: usize) -> Vec<Vec<LayerRef>> {
    (1u64..(1 << n))
        .map(|bits| (0..n).filter(|i| bits >> i & 1 == 1).map(|i| LayerRef::Ordinal(i + 1)).collect())
        .collect()
}

impl ExperimentGrid {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| {
            HarnessError::Validation(vec![crate::config::FieldError { field: "grid".into(), message: e.to_string() }])
        })
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)?;
        Self::parse(&text)
    }

    fn mask_sets(&self) -> Result<Vec<Vec<LayerRef>>, HarnessError> {
        match &self.sweep.masks {
            None => Ok(vec![self.base.loss.mask.clone()]),
            Some(MaskSweep::Sets(s)) => Ok(s.clone()),
            Some(MaskSweep::All(word)) if word == "all" => {
                let net = self.base.network::<f32>()?;
                Ok(all_subsets(net.param_layers().len()))
            }
            Some(MaskSweep::All(other)) => Err(HarnessError::Validation(vec![crate::config::FieldError {
                field: "sweep.masks".into(),
                message: format!("expected \"all\" or a list of layer sets, got {other:?}"),
            }])),
        }
    }

    /// Deterministic expansion; cross-entropy cells ignore the smoothing axes.
    pub fn cells(&self) -> Result<Vec<Cell>, HarnessError> {
        let b = &self.base;
        let s = &self.sweep;
        let kinds = or_base(&s.kinds, b.loss.kind);
        let masks = self.mask_sets()?;
        let radii = or_base(&s.radius, b.loss.radius.unwrap_or(f64::NAN));
        let samples = or_base(&s.samples, b.loss.samples.unwrap_or(0));
        let decays = or_base(&s.weight_decay, b.optimizer.weight_decay);
        let seeds = or_base(&s.seeds, b.seed);

        let mut losses = Vec::new();
        for &kind in &kinds {
            if kind == LossKind::Ce {
                losses.push(LossConfig::cross_entropy());
                continue;
            }
            for mask in &masks {
                for &r in &radii {
                    for &y in &samples {
                        let mut l = b.loss.clone();
                        l.kind = kind;
                        l.mask = mask.clone();
                        l.radius = (!r.is_nan()).then_some(r);
                        l.samples = (y > 0 || b.loss.samples.is_some()).then_some(y);
                        losses.push(l);
                    }
                }
            }
        }
        let mut cells = Vec::new();
        for loss in &losses {
            for &wd in &decays {
                for &seed in &seeds {
                    let mut c = b.clone();
                    c.loss = loss.clone();
                    c.optimizer.weight_decay = wd;
                    c.seed = seed;
                    cells.push(Cell { index: cells.len(), config: c });
                }
            }
        }
        Ok(cells)
    }
}

/// Summary row of a finished cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub cell: usize,
    pub run_id: String,
    pub loss: String,
    pub mask: String,
    pub radius: Option<f64>,
    pub samples: Option<usize>,
    pub weight_decay: f64,
    pub seed: u64,
    pub best_acc: f64,
    pub best_epoch: usize,
    pub final_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FailureRow {
    pub cell: usize,
    pub run_id: String,
    pub error: String,
}

#[derive(Clone, Debug, Default)]
pub struct SweepOutcome {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<FailureRow>,
    pub run_dirs: Vec<PathBuf>,
}

pub fn mask_label(mask: &[LayerRef]) -> String {
    mask.iter().map(|r| r.to_string()).collect::<Vec<_>>().join("+")
}

pub fn loss_label(kind: LossKind) -> &'static str {
    match kind {
        LossKind::Ce => "ce",
        LossKind::Pla => "pla",
        LossKind::Plea => "plea",
        LossKind::M => "m",
        LossKind::Avg => "avg",
    }
}

/// Runs every cell in order, recording failures and continuing; writes
/// `summary.csv` and `failures.csv` under `out` once all cells are done.
pub fn sweep(
    grid: &ExperimentGrid,
    data_root: &Path,
    out: &Path,
    mut log: impl FnMut(&str),
) -> Result<SweepOutcome, HarnessError> {
    let cells = grid.cells()?;
    fs::create_dir_all(out)?;
    let mut outcome = SweepOutcome::default();
    for cell in &cells {
        let c = &cell.config;
        log(&format!("cell {}/{} run {}", cell.index + 1, cells.len(), c.run_id()));
        match runner::run(c, data_root, out, &mut |_| {}) {
            Ok((res, dir)) => {
                outcome.rows.push(SummaryRow {
                    cell: cell.index,
                    run_id: c.run_id(),
                    loss: loss_label(c.loss.kind).into(),
                    mask: mask_label(&c.loss.mask),
                    radius: c.loss.radius,
                    samples: c.loss.samples,
                    weight_decay: c.optimizer.weight_decay,
                    seed: c.seed,
                    best_acc: res.report.best_acc,
                    best_epoch: res.report.best_epoch,
                    final_acc: res.report.final_acc,
                });
                outcome.run_dirs.push(dir);
            }
            Err(e) => {
                log(&format!("cell {} failed: {e}", cell.index + 1));
                outcome.failures.push(FailureRow { cell: cell.index, run_id: c.run_id(), error: e.to_string() });
            }
        }
    }
    let mut w = csv::Writer::from_path(out.join(SUMMARY_FILE))?;
    if outcome.rows.is_empty() {
        w.write_record(["cell", "run_id", "loss", "mask", "radius", "samples", "weight_decay", "seed", "best_acc", "best_epoch", "final_acc"])?;
    }
    for r in &outcome.rows {
        w.serialize(r)?;
    }
    w.flush()?;
    let mut f = csv::Writer::from_path(out.join(FAILURES_FILE))?;
    f.write_record(["cell", "run_id", "error"])?;
    for r in &outcome.failures {
        f.write_record([r.cell.to_string(), r.run_id.clone(), r.error.clone()])?;
    }
    f.flush()?;
    Ok(outcome)
}
