//! Executes one [`RunConfig`] and persists its report and telemetry.

use std::fs;
use std::path::{Path, PathBuf};

use plent::data::{load_cifar10, load_idx, subset, synthetic};
use plent::telemetry::{write_csv, LayerSignalRecord};
use plent::trainer::{train_observed, EpochProgress, TrainOptions};
use plent::{Dataset, Scalar, TrainReport};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{Precision, RunConfig};
use crate::HarnessError;

pub const DATA_ROOT_ENV: &str = "PLENT_DATA_ROOT";
pub const REPORT_FILE: &str = "report.json";
pub const CONFIG_FILE: &str = "config.toml";

/// `$PLENT_DATA_ROOT`, or the `data/` directory of this workspace.
pub fn default_data_root() -> PathBuf {
    std::env::var_os(DATA_ROOT_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data"))
}

fn first_existing(dir: &Path, stems: &[&str]) -> Option<PathBuf> {
    stems.iter().flat_map(|s| [dir.join(format!("{s}.gz")), dir.join(s)]).find(|p| p.is_file())
}

fn idx_pair(dir: &Path, split: &str) -> Result<(PathBuf, PathBuf), HarnessError> {
    let img = [format!("{split}-images-idx3-ubyte"), format!("{split}-images.idx3-ubyte")];
    let lbl = [format!("{split}-labels-idx1-ubyte"), format!("{split}-labels.idx1-ubyte")];
    let find = |names: &[String; 2]| {
        first_existing(dir, &[names[0].as_str(), names[1].as_str()])
            .ok_or_else(|| HarnessError::Runtime(format!("no {} file under {}", names[0], dir.display())))
    };
    Ok((find(&img)?, find(&lbl)?))
}

/// Loads the train and test sets named by the config, applying subsets.
pub fn load_datasets(cfg: &RunConfig, data_root: &Path) -> Result<(Dataset, Dataset), HarnessError> {
    let d = &cfg.dataset;
    let dir = d.path.clone().unwrap_or_else(|| data_root.join(&d.name));
    let (train, test) = match d.name.as_str() {
        "mnist" | "fashion_mnist" => {
            let (ti, tl) = idx_pair(&dir, "train")?;
            let (vi, vl) = idx_pair(&dir, "t10k")?;
            (load_idx(&ti, &tl)?, load_idx(&vi, &vl)?)
        }
        "cifar10" => {
            let dir = if dir.join("cifar-10-batches-bin").is_dir() { dir.join("cifar-10-batches-bin") } else { dir };
            let batches: Vec<PathBuf> =
                (1..=5).filter_map(|i| first_existing(&dir, &[&format!("data_batch_{i}.bin")])).collect();
            let test = first_existing(&dir, &["test_batch.bin"])
                .ok_or_else(|| HarnessError::Runtime(format!("no test_batch.bin under {}", dir.display())))?;
            (load_cifar10(&batches)?, load_cifar10(&[test])?)
        }
        "synthetic" => {
            let s = d.synthetic.as_ref().ok_or_else(|| HarnessError::Runtime("missing dataset.synthetic".into()))?;
            let (shape, _) = cfg.layer_specs()?;
            let image = match shape.as_slice() {
                [c, h, w] => [*c, *h, *w],
                _ => [1, 1, shape.iter().product()],
            };
            let all = synthetic(s.train + s.test, image, s.classes, s.noise, d.subset_seed)?;
            let idx: Vec<usize> = (0..all.len()).collect();
            (all.select(&idx[..s.train])?, all.select(&idx[s.train..])?)
        }
        other => return Err(HarnessError::Runtime(format!("unknown dataset {other:?}"))),
    };
    let pick = |ds: Dataset, n: Option<usize>, seed: u64| -> Result<Dataset, HarnessError> {
        match n {
            Some(n) if n < ds.len() => Ok(subset(&ds, n, seed)?.0),
            Some(n) if n > ds.len() => {
                Err(HarnessError::Runtime(format!("{}: subset of {n} requested from {} items", ds.name(), ds.len())))
            }
            _ => Ok(ds),
        }
    };
    Ok((pick(train, d.train_subset, d.subset_seed)?, pick(test, d.test_subset, d.subset_seed.wrapping_add(1))?))
}

/// Report plus telemetry of a finished run.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub report: TrainReport,
    pub telemetry: Vec<LayerSignalRecord>,
}

fn fit<T: Scalar>(
    cfg: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    on_epoch: &mut dyn FnMut(&EpochProgress),
) -> Result<RunResult, HarnessError> {
    let mut net = cfg.network::<T>()?;
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    net.kaiming_init(&mut init_rng);
    let objective = cfg.objective(&net)?;

    // Image-shaped inputs smaller than the stored images are fed resized copies.
    let (train, test) = match net.input_shape() {
        [_, h, w] if [*h, *w] != test.image_shape()[1..] => {
            let tr = if cfg.dataset.augment.is_some() { train.clone() } else { train.resized(*h, *w)? };
            (tr, test.resized(*h, *w)?)
        }
        _ => (train.clone(), test.clone()),
    };
    let opts = TrainOptions {
        objective,
        lr: cfg.optimizer.lr,
        momentum: cfg.optimizer.momentum,
        weight_decay: cfg.optimizer.weight_decay,
        schedule: cfg.schedule(),
        telemetry_window: cfg.telemetry.as_ref().map(|t| t.window),
        augment: cfg.dataset.augment.clone(),
        seed: cfg.seed,
    };
    let out = train_observed(&mut net, &train, &test, &opts, on_epoch)?;
    let mut report = out.report;
    report.run_id = cfg.run_id();
    report.config = serde_json::to_value(cfg)?;
    Ok(RunResult { report, telemetry: out.telemetry })
}

/// Validates, loads data and trains, without touching the filesystem beyond reads.
pub fn execute(
    cfg: &RunConfig,
    data_root: &Path,
    on_epoch: &mut dyn FnMut(&EpochProgress),
) -> Result<RunResult, HarnessError> {
    cfg.validate().map_err(HarnessError::Validation)?;
    let (train, test) = load_datasets(cfg, data_root)?;
    match cfg.model.precision {
        Precision::F32 => fit::<f32>(cfg, &train, &test, on_epoch),
        Precision::F64 => fit::<f64>(cfg, &train, &test, on_epoch),
    }
}

/// Writes `report.json`, the canonical `config.toml` and the telemetry CSV
/// into `<out>/<run id>/`, replacing earlier contents.
pub fn persist(cfg: &RunConfig, result: &RunResult, out: &Path) -> Result<PathBuf, HarnessError> {
    let dir = out.join(cfg.run_id());
    fs::create_dir_all(&dir)?;
    fs::write(dir.join(CONFIG_FILE), cfg.canonical())?;
    fs::write(dir.join(REPORT_FILE), serde_json::to_string_pretty(&result.report)?)?;
    if let Some(t) = &cfg.telemetry {
        write_csv(&result.telemetry, fs::File::create(dir.join(&t.export))?)?;
    }
    Ok(dir)
}

/// [`execute`] followed by [`persist`].
pub fn run(
    cfg: &RunConfig,
    data_root: &Path,
    out: &Path,
    on_epoch: &mut dyn FnMut(&EpochProgress),
) -> Result<(RunResult, PathBuf), HarnessError> {
    let result = execute(cfg, data_root, on_epoch)?;
    let dir = persist(cfg, &result, out)?;
    Ok((result, dir))
}
