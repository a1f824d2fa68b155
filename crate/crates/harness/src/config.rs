//! Declarative run configuration (TOML), its validation, canonical form and
//! content-hash run id.

use std::path::{Path, PathBuf};

use plent::entropic::{KernelFamily, LossKind, Objective, SmoothingSpec, WeightMask};
use plent::nn::arch::{self, Activation};
use plent::nn::{LayerSpec, Network};
use plent::trainer::EarlyStop;
use plent::{AugmentSpec, Scalar, TrainSchedule};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::HarnessError;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// `mlp2`, `mlp3`, `mlp4`, `conv_cifar`, `conv_stl` or `custom`.
    pub arch: String,
    #[serde(default = "default_activation")]
    pub activation: Activation,
    /// Per-sample input shape; required for `custom`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_shape: Option<Vec<usize>>,
    /// Layer list for `custom`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<LayerSpec>,
    #[serde(default)]
    pub precision: Precision,
}

fn default_activation() -> Activation {
    Activation::Relu
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    /// `mnist`, `fashion_mnist`, `cifar10` or `synthetic`.
    pub name: String,
    /// Directory holding the files; defaults to `<data root>/<name>`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_subset: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_subset: Option<usize>,
    #[serde(default)]
    pub subset_seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub augment: Option<AugmentSpec>,
    /// Sizes of the generated sets when `name = "synthetic"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticConfig>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticConfig {
    pub train: usize,
    pub test: usize,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_classes")]
    pub classes: usize,
}

fn default_noise() -> f64 {
    0.3
}

fn default_classes() -> usize {
    10
}

/// A mask entry: 1-based ordinal among the synaptic layers, or a layer name.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LayerRef {
    Ordinal(usize),
    Name(String),
}

impl std::fmt::Display for LayerRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LayerRef::Ordinal(i) => write!(f, "{i}"),
            LayerRef::Name(n) => write!(f, "{n}"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Hypercube,
    Sigmoid,
    Gaussian,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    /// Sigmoid sharpness `k`; omitted means the sharp limit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sharpness: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Displaced points per step (`y`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mask: Vec<LayerRef>,
}

impl LossConfig {
    pub fn cross_entropy() -> Self {
        Self { kind: LossKind::Ce, family: None, radius: None, sharpness: None, gamma: None, samples: None, mask: vec![] }
    }

    fn uses_smoothing(&self) -> bool {
        self.family.is_some()
            || self.radius.is_some()
            || self.sharpness.is_some()
            || self.gamma.is_some()
            || self.samples.is_some()
            || !self.mask.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub lr: f64,
    #[serde(default)]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Defaults to the run seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shuffle_seed: Option<u64>,
    #[serde(default = "one")]
    pub eval_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<EarlyStop>,
}

fn one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryConfig {
    /// Window length in mini-batches.
    pub window: usize,
    #[serde(default = "default_export")]
    pub export: String,
}

fn default_export() -> String {
    "telemetry.csv".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub model: ModelConfig,
    pub dataset: DatasetConfig,
    pub loss: LossConfig,
    pub optimizer: OptimizerConfig,
    pub schedule: ScheduleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub telemetry: Option<TelemetryConfig>,
}

/// `field: message` diagnostics collected by [`RunConfig::validate`].
#[derive(Clone, Debug, PartialEq)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl std::fmt::Display for FieldError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn field(field: &str, message: impl Into<String>) -> FieldError {
    FieldError { field: field.into(), message: message.into() }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Validation(vec![field("config", e.to_string())]))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Validation(vec![field("config", format!("{}: {e}", path.display()))]))?;
        Self::parse(&text)
    }

    /// Sorted-key TOML; equal configs give equal text.
    pub fn canonical(&self) -> String {
        let value = toml::Value::try_from(self).expect("config serializes");
        toml::to_string(&value).expect("value serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical form.
    pub fn run_id(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn shuffle_seed(&self) -> u64 {
        self.schedule.shuffle_seed.unwrap_or(self.seed)
    }

    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            epochs: self.schedule.epochs,
            batch_size: self.schedule.batch_size,
            shuffle_seed: self.shuffle_seed(),
            eval_every: self.schedule.eval_every,
            early_stop: self.schedule.early_stop.clone(),
        }
    }

    pub fn layer_specs(&self) -> Result<(Vec<usize>, Vec<LayerSpec>), FieldError> {
        let m = &self.model;
        let act = m.activation;
        let built = match m.arch.as_str() {
            "mlp2" => (vec![784], arch::mlp2(act)),
            "mlp3" => (vec![784], arch::mlp3(act)),
            "mlp4" => (vec![784], arch::mlp(&[784, 784, 784, 784, 10], act)),
            "conv_cifar" => (vec![3, 16, 16], arch::conv_cifar(act)),
            "conv_stl" => (vec![3, 80, 80], arch::conv_stl(act)),
            "custom" => {
                let shape = m.input_shape.clone().ok_or_else(|| field("model.input_shape", "required for custom"))?;
                if m.layers.is_empty() {
                    return Err(field("model.layers", "required for custom"));
                }
                (shape, m.layers.clone())
            }
            other => return Err(field("model.arch", format!("unknown architecture {other:?}"))),
        };
        if m.arch != "custom" && (!m.layers.is_empty()) {
            return Err(field("model.layers", "only allowed with arch = \"custom\""));
        }
        if let (Some(shape), false) = (&m.input_shape, m.arch == "custom") {
            if shape != &built.0 {
                return Err(field("model.input_shape", format!("{} takes {:?}", m.arch, built.0)));
            }
        }
        Ok(built)
    }

    pub fn network<T: Scalar>(&self) -> Result<Network<T>, FieldError> {
        let (shape, specs) = self.layer_specs()?;
        Network::new(shape, &specs).map_err(|e| field("model", e.to_string()))
    }

    /// Resolves mask entries to layer positions in `net`.
    pub fn mask_positions<T: Scalar>(&self, net: &Network<T>) -> Result<Vec<usize>, FieldError> {
        let synaptic = net.param_layers();
        let mut out = Vec::new();
        for (i, r) in self.loss.mask.iter().enumerate() {
            let f = format!("loss.mask[{i}]");
            let pos = match r {
                LayerRef::Ordinal(k) => *synaptic.get(k.wrapping_sub(1)).ok_or_else(|| {
                    field(&f, format!("layer ordinal {k} out of 1..={} synaptic layers", synaptic.len()))
                })?,
                LayerRef::Name(n) => {
                    let p = net.position_of(n).ok_or_else(|| field(&f, format!("no layer named {n:?}")))?;
                    if !synaptic.contains(&p) {
                        return Err(field(&f, format!("layer {n:?} has no synaptic weights")));
                    }
                    p
                }
            };
            if out.contains(&pos) {
                return Err(field(&f, format!("layer {r} listed twice")));
            }
            out.push(pos);
        }
        Ok(out)
    }

    pub fn smoothing_spec(&self) -> Result<Option<SmoothingSpec>, FieldError> {
        let l = &self.loss;
        if l.kind == LossKind::Ce {
            return Ok(None);
        }
        let default_family = match l.kind {
            LossKind::Pla | LossKind::Plea => FamilyName::Hypercube,
            _ => FamilyName::Sigmoid,
        };
        let radius = l.radius.ok_or_else(|| field("loss.radius", "required for smoothed losses"))?;
        let samples = l.samples.ok_or_else(|| field("loss.samples", "required for smoothed losses"))?;
        let family = match l.family.unwrap_or(default_family) {
            FamilyName::Hypercube => KernelFamily::HypercubeSharp,
            FamilyName::Sigmoid => KernelFamily::SigmoidSoft,
            FamilyName::Gaussian => KernelFamily::Gaussian,
        };
        let spec = SmoothingSpec { family, radius, sharpness: l.sharpness, gamma: l.gamma.unwrap_or(1.0), samples };
        spec.validate().map_err(|e| field("loss", e.to_string()))?;
        Ok(Some(spec))
    }

    pub fn objective<T: Scalar>(&self, net: &Network<T>) -> Result<Objective, FieldError> {
        let Some(spec) = self.smoothing_spec()? else {
            return Ok(Objective::cross_entropy());
        };
        if self.loss.mask.is_empty() {
            return Err(field("loss.mask", "smoothed losses need at least one layer"));
        }
        let mask = WeightMask::from_layers(net, &self.mask_positions(net)?).map_err(|e| field("loss.mask", e.to_string()))?;
        Objective::smoothed(self.loss.kind, spec, mask).map_err(|e| field("loss.kind", e.to_string()))
    }

    /// Every field-level problem, or `Ok` when the config can run.
    pub fn validate(&self) -> Result<(), Vec<FieldError>> {
        let mut errs = Vec::new();
        match self.network::<f32>() {
            Ok(net) => {
                if let Err(e) = self.objective(&net) {
                    errs.push(e);
                }
                if let Some(aug) = &self.dataset.augment {
                    if net.input_shape().len() != 3 {
                        errs.push(field("dataset.augment", "needs an image-shaped (C x H x W) model input"));
                    }
                    if let Err(e) = aug.validate() {
                        errs.push(field("dataset.augment", e.to_string()));
                    }
                }
            }
            Err(e) => errs.push(e),
        }
        if self.loss.kind == LossKind::Ce && self.loss.uses_smoothing() {
            errs.push(field("loss", "cross-entropy takes no smoothing parameters or mask"));
        }
        if let Err(e) = self.schedule().validate() {
            errs.push(field("schedule", e.to_string()));
        }
        let o = &self.optimizer;
        if !(o.lr > 0.0 && o.lr.is_finite()) {
            errs.push(field("optimizer.lr", "must be positive"));
        }
        if !(0.0..1.0).contains(&o.momentum) {
            errs.push(field("optimizer.momentum", "must lie in [0, 1)"));
        }
        if !(o.weight_decay >= 0.0 && o.weight_decay.is_finite()) {
            errs.push(field("optimizer.weight_decay", "must be nonnegative"));
        }
        match self.dataset.name.as_str() {
            "mnist" | "fashion_mnist" | "cifar10" => {
                if self.dataset.synthetic.is_some() {
                    errs.push(field("dataset.synthetic", "only allowed with name = \"synthetic\""));
                }
            }
            "synthetic" => match &self.dataset.synthetic {
                None => errs.push(field("dataset.synthetic", "sizes required")),
                Some(s) if s.train == 0 || s.test == 0 => errs.push(field("dataset.synthetic", "sizes must be positive")),
                Some(s) if s.classes == 0 || s.classes > plent::data::CLASSES => {
                    errs.push(field("dataset.synthetic.classes", "must be in 1..=10"))
                }
                _ => {}
            },
            other => errs.push(field("dataset.name", format!("unknown dataset {other:?}"))),
        }
        for (name, v) in [("dataset.train_subset", self.dataset.train_subset), ("dataset.test_subset", self.dataset.test_subset)] {
            if v == Some(0) {
                errs.push(field(name, "must be positive"));
            }
        }
        if let Some(t) = &self.telemetry {
            if t.window == 0 {
                errs.push(field("telemetry.window", "must be positive"));
            }
            if t.export.is_empty() || t.export.contains(['/', '\\']) {
                errs.push(field("telemetry.export", "must be a plain file name"));
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}
