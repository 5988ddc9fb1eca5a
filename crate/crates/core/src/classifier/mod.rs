//! Spectrum classifiers behind one trait, selectable by name.

mod metrics;
mod mlp;
mod resnet;
mod svm;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sgda_neural::{
    adam_step, argmax, load_checkpoint, save_checkpoint, seeded_rng, AdamConfig, AdamState, Graph, ParamStore,
    Tensor, Var,
};

use crate::dataset::LabeledDataset;
use crate::error::{Result, SgdaError};
use crate::motor_model::FaultClass;
use crate::spectrum::SpectrumWindow;

pub use metrics::{evaluate, f1_scores, report_from_predictions, EvalReport, SeedStats};
pub use mlp::{Mlp, MlpConfig};
pub use resnet::{ResNet, ResNetConfig};
pub use svm::{LinearSvm, SvmConfig};

/// Per-window rescaling applied before a model sees the spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureScaling {
    Raw,
    /// Divide by the window maximum.
    MaxNorm,
    /// `ln(1 + m)` divided by its window maximum.
    LogMax,
}

impl FeatureScaling {
    pub fn apply(self, mags: &[f64]) -> Vec<f64> {
        let scaled: Vec<f64> = match self {
            FeatureScaling::Raw => return mags.to_vec(),
            FeatureScaling::MaxNorm => mags.to_vec(),
            FeatureScaling::LogMax => mags.iter().map(|m| m.ln_1p()).collect(),
        };
        let max = scaled.iter().copied().fold(0.0, f64::max);
        if max > 0.0 {
            scaled.into_iter().map(|v| v / max).collect()
        } else {
            scaled
        }
    }
}

/// Per-epoch training record.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub train_accuracy: Vec<f64>,
}

/// A trainable model mapping spectra to scores over a fixed class set.
pub trait Classifier {
    fn name(&self) -> &'static str;

    fn classes(&self) -> &[FaultClass];

    fn fit(&mut self, data: &LabeledDataset) -> Result<TrainHistory>;

    /// Class scores for every window, in [`Classifier::classes`] order.
    fn logits(&self, windows: &[&SpectrumWindow]) -> Result<Vec<Vec<f64>>>;

    /// Configuration stored next to the weights in a checkpoint.
    fn config_json(&self) -> serde_json::Value;

    fn params(&self) -> &ParamStore;

    fn predict(&self, windows: &[&SpectrumWindow]) -> Result<Vec<FaultClass>> {
        let classes = self.classes();
        Ok(self.logits(windows)?.iter().map(|l| classes[argmax(l)]).collect())
    }

    fn save(&self, path: &Path) -> Result<()> {
        let meta = CheckpointMeta {
            kind: self.name().to_string(),
            classes: self.classes().to_vec(),
            config: self.config_json(),
        };
        save_checkpoint(path, &serde_json::to_string(&meta)?, self.params())?;
        Ok(())
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointMeta {
    kind: String,
    classes: Vec<FaultClass>,
    config: serde_json::Value,
}

/// Settings for every registered model family; each factory reads its own.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub resnet: ResNetConfig,
    pub svm: SvmConfig,
    pub mlp: MlpConfig,
}

impl ClassifierConfig {
    /// Copy with every family's seed replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.resnet.seed = seed;
        c.svm.seed = seed;
        c.mlp.seed = seed;
        c
    }
}

pub type ClassifierFactory = fn(&ClassifierConfig, Vec<FaultClass>) -> Result<Box<dyn Classifier>>;
pub type ClassifierLoader = fn(serde_json::Value, Vec<FaultClass>, ParamStore) -> Result<Box<dyn Classifier>>;

/// Model families selectable by name.
pub struct ClassifierRegistry {
    entries: BTreeMap<&'static str, (ClassifierFactory, ClassifierLoader)>,
}

impl Default for ClassifierRegistry {
    fn default() -> Self {
        let mut r = Self {
            entries: BTreeMap::new(),
        };
        r.register(
            "resnet",
            |cfg, classes| Ok(Box::new(ResNet::new(&cfg.resnet, classes)?)),
            |cfg, classes, store| Ok(Box::new(ResNet::from_parts(serde_json::from_value(cfg)?, classes, store)?)),
        );
        r.register(
            "svm",
            |cfg, classes| Ok(Box::new(LinearSvm::new(&cfg.svm, classes)?)),
            |cfg, classes, store| Ok(Box::new(LinearSvm::from_parts(serde_json::from_value(cfg)?, classes, store)?)),
        );
        r.register(
            "mlp",
            |cfg, classes| Ok(Box::new(Mlp::new(&cfg.mlp, classes)?)),
            |cfg, classes, store| Ok(Box::new(Mlp::from_parts(serde_json::from_value(cfg)?, classes, store)?)),
        );
        r
    }
}

impl ClassifierRegistry {
    pub fn register(&mut self, name: &'static str, build: ClassifierFactory, load: ClassifierLoader) {
        self.entries.insert(name, (build, load));
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.keys().copied().collect()
    }

    fn entry(&self, name: &str) -> Result<&(ClassifierFactory, ClassifierLoader)> {
        self.entries.get(name).ok_or_else(|| {
            SgdaError::InvalidArgument(format!(
                "unknown classifier `{name}` (known: {})",
                self.names().join(", ")
            ))
        })
    }

    pub fn build(&self, name: &str, cfg: &ClassifierConfig, classes: Vec<FaultClass>) -> Result<Box<dyn Classifier>> {
        (self.entry(name)?.0)(cfg, classes)
    }

    pub fn load(&self, path: &Path) -> Result<Box<dyn Classifier>> {
        let (meta, store) = load_checkpoint(path)?;
        let meta: CheckpointMeta = serde_json::from_str(&meta)?;
        (self.entry(&meta.kind)?.1)(meta.config, meta.classes, store)
    }
}

pub(crate) fn validate_classes(classes: &[FaultClass]) -> Result<()> {
    if classes.len() < 2 {
        return Err(SgdaError::InvalidArgument(format!(
            "a classifier needs at least 2 classes, got {}",
            classes.len()
        )));
    }
    let mut sorted = classes.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != classes.len() {
        return Err(SgdaError::InvalidArgument("duplicate classes".into()));
    }
    Ok(())
}

pub(crate) fn class_index(classes: &[FaultClass], label: Option<FaultClass>) -> Result<usize> {
    let label = label.ok_or_else(|| SgdaError::UnknownLabel("unlabeled".into()))?;
    classes
        .iter()
        .position(|&c| c == label)
        .ok_or_else(|| SgdaError::UnknownLabel(label.to_string()))
}

/// Scaled features and class indices of a labeled dataset.
pub(crate) fn encode_dataset(
    data: &LabeledDataset,
    classes: &[FaultClass],
    scaling: FeatureScaling,
) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    if data.is_empty() {
        return Err(SgdaError::EmptyDataset("training set is empty".into()));
    }
    let n_bins = data.windows[0].n_bins();
    let mut xs = Vec::with_capacity(data.len());
    let mut ys = Vec::with_capacity(data.len());
    for w in &data.windows {
        if w.n_bins() != n_bins {
            return Err(SgdaError::InvalidArgument("windows differ in length".into()));
        }
        xs.push(scaling.apply(&w.magnitudes));
        ys.push(class_index(classes, w.label)?);
    }
    Ok((xs, ys))
}

/// Mini-batch settings shared by the gradient-trained networks.
#[derive(Debug, Clone, Copy)]
pub(crate) struct LoopConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

/// Shuffled mini-batch Adam on softmax cross-entropy. `forward` maps a batch
/// of feature rows to logits `[B, C]`.
pub(crate) fn train_softmax<F>(
    store: &mut ParamStore,
    xs: &[Vec<f64>],
    ys: &[usize],
    cfg: LoopConfig,
    forward: F,
) -> Result<TrainHistory>
where
    F: Fn(&mut Graph, &ParamStore, &[&[f64]]) -> Result<Var>,
{
    if cfg.epochs == 0 || cfg.batch_size == 0 {
        return Err(SgdaError::InvalidArgument("epochs and batch size must be positive".into()));
    }
    // stream 0 is spent on weight initialization
    let mut rng = seeded_rng(cfg.seed);
    rng.set_stream(1);
    let mut adam = AdamState::new(store, AdamConfig::with_lr(cfg.lr));
    let mut order: Vec<usize> = (0..xs.len()).collect();
    let mut history = TrainHistory::default();
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| xs[i].as_slice()).collect();
            let targets: Vec<usize> = chunk.iter().map(|&i| ys[i]).collect();
            let mut g = Graph::new();
            let logits = forward(&mut g, store, &batch)?;
            let loss = g.softmax_cross_entropy(logits, &targets)?;
            let lv = g.value(logits);
            let c = lv.shape()[1];
            correct += lv
                .data()
                .chunks(c)
                .zip(&targets)
                .filter(|(row, &t)| argmax(row) == t)
                .count();
            loss_sum += g.value(loss).data()[0] * chunk.len() as f64;
            g.backward(loss)?;
            store.zero_grad();
            g.accumulate_param_grads(store)?;
            adam_step(store, &mut adam)?;
        }
        history.loss.push(loss_sum / xs.len() as f64);
        history.train_accuracy.push(correct as f64 / xs.len() as f64);
    }
    Ok(history)
}

/// Logits in chunks so memory stays bounded on large test sets.
pub(crate) fn batched_logits<F>(
    store: &ParamStore,
    rows: Vec<Vec<f64>>,
    chunk: usize,
    forward: F,
) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&mut Graph, &ParamStore, &[&[f64]]) -> Result<Var>,
{
    let mut out = Vec::with_capacity(rows.len());
    for part in rows.chunks(chunk.max(1)) {
        let batch: Vec<&[f64]> = part.iter().map(|r| r.as_slice()).collect();
        let mut g = Graph::new();
        let logits = forward(&mut g, store, &batch)?;
        let v = g.value(logits);
        let c = v.shape()[1];
        out.extend(v.data().chunks(c).map(|r| r.to_vec()));
    }
    Ok(out)
}

pub(crate) fn batch_tensor(batch: &[&[f64]], shape: Vec<usize>) -> Result<Tensor> {
    let flat: Vec<f64> = batch.iter().flat_map(|r| r.iter().copied()).collect();
    Ok(Tensor::new(shape, flat)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaling_modes() {
        let m = [0.0, 1.0, 3.0];
        assert_eq!(FeatureScaling::Raw.apply(&m), m.to_vec());
        assert_eq!(FeatureScaling::MaxNorm.apply(&m), vec![0.0, 1.0 / 3.0, 1.0]);
        let l = FeatureScaling::LogMax.apply(&m);
        assert_eq!(l[2], 1.0);
        assert!((l[1] - 2f64.ln() / 4f64.ln()).abs() < 1e-15);
        assert_eq!(FeatureScaling::MaxNorm.apply(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn registry_names() {
        let r = ClassifierRegistry::default();
        assert_eq!(r.names(), vec!["mlp", "resnet", "svm"]);
        let e = r
            .build("forest", &ClassifierConfig::default(), vec![FaultClass::Healthy, FaultClass::RotorBar])
            .err()
            .unwrap();
        assert!(e.to_string().contains("forest"));
    }
}
