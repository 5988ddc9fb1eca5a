use serde::{Deserialize, Serialize};
use sgda_neural::{he_normal, seeded_rng, Graph, ParamId, ParamStore, Tensor, Var};

use super::{
    batch_tensor, batched_logits, encode_dataset, train_softmax, validate_classes, Classifier, FeatureScaling,
    LoopConfig, TrainHistory,
};
use crate::dataset::LabeledDataset;
use crate::error::{Result, SgdaError};
use crate::motor_model::FaultClass;
use crate::spectrum::SpectrumWindow;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ResNetConfig {
    pub block_channels: Vec<usize>,
    pub kernel_size: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub epochs: usize,
    pub seed: u64,
    pub leaky_alpha: f64,
    pub scaling: FeatureScaling,
}

impl Default for ResNetConfig {
    fn default() -> Self {
        Self {
            block_channels: vec![64, 128, 256, 512],
            kernel_size: 7,
            batch_size: 16,
            lr: 1e-3,
            epochs: 10,
            seed: 0,
            leaky_alpha: 0.01,
            scaling: FeatureScaling::LogMax,
        }
    }
}

impl ResNetConfig {
    fn validate(&self) -> Result<()> {
        if self.block_channels.is_empty() || self.block_channels.contains(&0) {
            return Err(SgdaError::InvalidArgument("block channels must be positive".into()));
        }
        if self.kernel_size % 2 == 0 {
            return Err(SgdaError::InvalidArgument(format!(
                "kernel size must be odd for same padding, got {}",
                self.kernel_size
            )));
        }
        if !(self.lr > 0.0) || !(self.leaky_alpha > 0.0) {
            return Err(SgdaError::InvalidArgument("lr and leaky slope must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Conv {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct Block {
    conv1: Conv,
    conv2: Conv,
    proj: Option<Conv>,
    stride: usize,
}

/// Residual 1D CNN: blocks of two same-padded convolutions with a skip
/// connection, global average pooling and a dense head. Blocks after the
/// first halve the length with a stride-2 first convolution.
#[derive(Debug, Clone)]
pub struct ResNet {
    config: ResNetConfig,
    classes: Vec<FaultClass>,
    store: ParamStore,
    blocks: Vec<Block>,
    head_w: ParamId,
    head_b: ParamId,
}

fn find(store: &ParamStore, name: &str) -> Result<ParamId> {
    store
        .find(name)
        .ok_or_else(|| SgdaError::InvalidArgument(format!("checkpoint lacks parameter {name}")))
}

impl ResNet {
    pub fn new(config: &ResNetConfig, classes: Vec<FaultClass>) -> Result<Self> {
        config.validate()?;
        validate_classes(&classes)?;
        let mut rng = seeded_rng(config.seed);
        let k = config.kernel_size;
        let mut store = ParamStore::new();
        let mut c_in = 1;
        for (i, &c_out) in config.block_channels.iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            store.add(format!("block{i}.conv1.w"), he_normal(vec![c_out, c_in, k], c_in * k, &mut rng));
            store.add(format!("block{i}.conv1.b"), Tensor::zeros(vec![c_out]));
            store.add(format!("block{i}.conv2.w"), he_normal(vec![c_out, c_out, k], c_out * k, &mut rng));
            store.add(format!("block{i}.conv2.b"), Tensor::zeros(vec![c_out]));
            if c_in != c_out || stride != 1 {
                store.add(format!("block{i}.proj.w"), he_normal(vec![c_out, c_in, 1], c_in, &mut rng));
                store.add(format!("block{i}.proj.b"), Tensor::zeros(vec![c_out]));
            }
            c_in = c_out;
        }
        store.add("head.w", he_normal(vec![classes.len(), c_in], c_in, &mut rng));
        store.add("head.b", Tensor::zeros(vec![classes.len()]));
        Self::from_parts(config.clone(), classes, store)
    }

    /// Reassembles a model from stored parameters.
    pub fn from_parts(config: ResNetConfig, classes: Vec<FaultClass>, store: ParamStore) -> Result<Self> {
        config.validate()?;
        validate_classes(&classes)?;
        let conv = |prefix: String| -> Result<Conv> {
            Ok(Conv {
                w: find(&store, &format!("{prefix}.w"))?,
                b: find(&store, &format!("{prefix}.b"))?,
            })
        };
        let mut blocks = Vec::new();
        for i in 0..config.block_channels.len() {
            let proj = if store.find(&format!("block{i}.proj.w")).is_some() {
                Some(conv(format!("block{i}.proj"))?)
            } else {
                None
            };
            blocks.push(Block {
                conv1: conv(format!("block{i}.conv1"))?,
                conv2: conv(format!("block{i}.conv2"))?,
                proj,
                stride: if i == 0 { 1 } else { 2 },
            });
        }
        let head_w = find(&store, "head.w")?;
        let head_b = find(&store, "head.b")?;
        if store.get(head_w).shape()[0] != classes.len() {
            return Err(SgdaError::InvalidArgument("head width does not match class count".into()));
        }
        Ok(Self {
            config,
            classes,
            store,
            blocks,
            head_w,
            head_b,
        })
    }

    pub fn config(&self) -> &ResNetConfig {
        &self.config
    }

    pub fn n_params(&self) -> usize {
        self.store.numel()
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    fn forward(&self, g: &mut Graph, store: &ParamStore, batch: &[&[f64]]) -> Result<Var> {
        let len = batch[0].len();
        let alpha = self.config.leaky_alpha;
        let pad = self.config.kernel_size / 2;
        let conv = |g: &mut Graph, x: Var, c: Conv, stride: usize, pad: usize| -> Result<Var> {
            let w = g.param(store, c.w);
            let b = g.param(store, c.b);
            Ok(g.conv1d(x, w, b, stride, pad)?)
        };
        let mut h = g.input(batch_tensor(batch, vec![batch.len(), 1, len])?);
        for blk in &self.blocks {
            let y = conv(g, h, blk.conv1, blk.stride, pad)?;
            let y = g.leaky_relu(y, alpha)?;
            let y = conv(g, y, blk.conv2, 1, pad)?;
            let skip = match blk.proj {
                Some(p) => conv(g, h, p, blk.stride, 0)?,
                None => h,
            };
            let sum = g.residual_add(skip, y)?;
            h = g.leaky_relu(sum, alpha)?;
        }
        let pooled = g.global_avg_pool(h)?;
        let w = g.param(store, self.head_w);
        let b = g.param(store, self.head_b);
        Ok(g.dense(pooled, w, b)?)
    }
}

impl Classifier for ResNet {
    fn name(&self) -> &'static str {
        "resnet"
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
        batched_logits(&self.store, rows, 64, |g, s, b| self.forward(g, s, b))
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ResNetConfig {
        ResNetConfig {
            block_channels: vec![4, 8, 16, 32],
            ..ResNetConfig::default()
        }
    }

    fn window(m: Vec<f64>) -> SpectrumWindow {
        SpectrumWindow {
            magnitudes: m,
            bin_width_hz: 1.0,
            source_id: "t".into(),
            window_index: 0,
            label: None,
        }
    }

    #[test]
    fn shape_and_determinism() {
        let classes = vec![FaultClass::Healthy, FaultClass::RotorBar];
        let a = ResNet::new(&small(), classes.clone()).unwrap();
        let b = ResNet::new(&small(), classes.clone()).unwrap();
        assert_eq!(a.store, b.store);
        let w = window(vec![1.0; 250]);
        let l = a.logits(&[&w]).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(l[0].len(), 2);
        assert!(ResNet::new(&small(), vec![FaultClass::Healthy]).is_err());
    }

    #[test]
    fn zero_input_yields_head_bias() {
        let classes = vec![FaultClass::Healthy, FaultClass::RotorBar, FaultClass::BearingBall];
        let mut net = ResNet::new(&small(), classes).unwrap();
        let hb = net.head_b;
        net.params_mut().get_mut(hb).data_mut().copy_from_slice(&[0.25, -1.5, 3.0]);
        let l = net.logits(&[&window(vec![0.0; 250])]).unwrap();
        assert_eq!(l[0], vec![0.25, -1.5, 3.0]);
    }

    #[test]
    fn parameter_count_follows_config() {
        let cfg = small();
        let net = ResNet::new(&cfg, vec![FaultClass::Healthy, FaultClass::RotorBar]).unwrap();
        let k = 7;
        let mut expected = 0;
        let mut c_in = 1;
        for &c in &cfg.block_channels {
            expected += c * c_in * k + c + c * c * k + c + c * c_in + c;
            c_in = c;
        }
        expected += 2 * c_in + 2;
        assert_eq!(net.n_params(), expected);
    }
}
