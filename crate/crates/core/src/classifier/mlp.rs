use serde::{Deserialize, Serialize};
use sgda_neural::{he_normal, seeded_rng, Graph, ParamId, ParamStore, Tensor, Var};

use super::{
    batch_tensor, batched_logits, encode_dataset, train_softmax, validate_classes, Classifier, FeatureScaling,
    LoopConfig, TrainHistory,
};
use crate::dataset::LabeledDataset;
use crate::error::{Result, SgdaError};
use crate::motor_model::FaultClass;
use crate::spectrum::{SpectrumWindow, SPECTRUM_BINS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    /// Empty reduces the model to multinomial logistic regression.
    pub hidden_dims: Vec<usize>,
    pub input_dim: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub leaky_alpha: f64,
    pub scaling: FeatureScaling,
}

impl Default for MlpConfig {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64, 32],
            input_dim: SPECTRUM_BINS,
            batch_size: 16,
            lr: 1e-3,
            epochs: 10,
            seed: 0,
            leaky_alpha: 0.01,
            scaling: FeatureScaling::Raw,
        }
    }
}

/// Dense layers with leaky ReLU between them.
#[derive(Debug, Clone)]
pub struct Mlp {
    config: MlpConfig,
    classes: Vec<FaultClass>,
    store: ParamStore,
    layers: Vec<(ParamId, ParamId)>,
}

impl Mlp {
    pub fn new(config: &MlpConfig, classes: Vec<FaultClass>) -> Result<Self> {
        validate_classes(&classes)?;
        if config.input_dim == 0 || config.hidden_dims.contains(&0) {
            return Err(SgdaError::InvalidArgument("mlp widths must be positive".into()));
        }
        let mut rng = seeded_rng(config.seed);
        let mut store = ParamStore::new();
        let mut dims = vec![config.input_dim];
        dims.extend(&config.hidden_dims);
        dims.push(classes.len());
        for (i, pair) in dims.windows(2).enumerate() {
            store.add(format!("layer{i}.w"), he_normal(vec![pair[1], pair[0]], pair[0], &mut rng));
            store.add(format!("layer{i}.b"), Tensor::zeros(vec![pair[1]]));
        }
        Self::from_parts(config.clone(), classes, store)
    }

    pub fn from_parts(config: MlpConfig, classes: Vec<FaultClass>, store: ParamStore) -> Result<Self> {
        validate_classes(&classes)?;
        if !(config.lr > 0.0) || !(config.leaky_alpha > 0.0) {
            return Err(SgdaError::InvalidArgument("lr and leaky slope must be positive".into()));
        }
        let layers = (0..=config.hidden_dims.len())
            .map(|i| {
                let get = |s: &str| {
                    store
                        .find(&format!("layer{i}.{s}"))
                        .ok_or_else(|| SgdaError::InvalidArgument(format!("checkpoint lacks layer{i}.{s}")))
                };
                Ok((get("w")?, get("b")?))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            config,
            classes,
            store,
            layers,
        })
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, batch: &[&[f64]]) -> Result<Var> {
        let dim = batch[0].len();
        if dim != self.config.input_dim {
            return Err(SgdaError::InvalidArgument(format!(
                "mlp expects {} features, got {dim}",
                self.config.input_dim
            )));
        }
        let mut h = g.input(batch_tensor(batch, vec![batch.len(), dim])?);
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let (w, b) = (g.param(store, w), g.param(store, b));
            h = g.dense(h, w, b)?;
            if i + 1 < self.layers.len() {
                h = g.leaky_relu(h, self.config.leaky_alpha)?;
            }
        }
        Ok(h)
    }
}

impl Classifier for Mlp {
    fn name(&self) -> &'static str {
        "mlp"
    }

    fn classes(&self) -> &[FaultClass] {
        &self.classes
    }

    fn fit(&mut self, data: &LabeledDataset) -> Result<TrainHistory> {
        let (xs, ys) = encode_dataset(data, &self.classes, self.config.scaling)?;
        let cfg = LoopConfig {
            epochs: self.config.epochs,
            batch_size: self.config.batch_size,
            lr: self.config.lr,
            seed: self.config.seed,
        };
        let mut store = std::mem::take(&mut self.store);
        let result = train_softmax(&mut store, &xs, &ys, cfg, |g, s, b| self.forward(g, s, b));
        self.store = store;
        result
    }

    fn logits(&self, windows: &[&SpectrumWindow]) -> Result<Vec<Vec<f64>>> {
        let rows = windows.iter().map(|w| self.config.scaling.apply(&w.magnitudes)).collect();
        batched_logits(&self.store, rows, 256, |g, s, b| self.forward(g, s, b))
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }
}
