use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use sgda_neural::{seeded_rng, ParamId, ParamStore, Tensor};

use super::{encode_dataset, validate_classes, Classifier, FeatureScaling, TrainHistory};
use crate::dataset::LabeledDataset;
use crate::error::{Result, SgdaError};
use crate::motor_model::FaultClass;
use crate::spectrum::SpectrumWindow;

/// Soft-margin linear SVM trained by Pegasos-style subgradient steps on the
/// primal hinge objective `λ/2 ‖w‖² + mean(max(0, 1 - y (w·x + b)))`, with
/// `λ = 1 / (C n)`.
///
/// Subgradient steps do not decrease the objective monotonically, so each
/// binary problem keeps its best iterate; the loss history records the
/// objective of the kept iterates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    /// Number of subgradient steps.
    pub epochs: usize,
    /// Examples per step; 0 uses the full training set.
    pub batch_size: usize,
    pub seed: u64,
    pub scaling: FeatureScaling,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 200,
            batch_size: 0,
            seed: 0,
            // subgradient steps ignore feature scale; unscaled magnitudes
            // near 4096 make the iterates overshoot by orders of magnitude
            scaling: FeatureScaling::MaxNorm,
        }
    }
}

/// One-vs-rest linear SVM; prediction is the argmax of per-class margins.
#[derive(Debug, Clone)]
pub struct LinearSvm {
    config: SvmConfig,
    classes: Vec<FaultClass>,
    store: ParamStore,
    w: ParamId,
    b: ParamId,
}

impl LinearSvm {
    pub fn new(config: &SvmConfig, classes: Vec<FaultClass>) -> Result<Self> {
        let mut store = ParamStore::new();
        store.add("w", Tensor::zeros(vec![classes.len(), 0]));
        store.add("b", Tensor::zeros(vec![classes.len()]));
        Self::from_parts(config.clone(), classes, store)
    }

    pub fn from_parts(config: SvmConfig, classes: Vec<FaultClass>, store: ParamStore) -> Result<Self> {
        if !(config.c > 0.0) || config.epochs == 0 {
            return Err(SgdaError::InvalidArgument("svm needs C > 0 and at least one step".into()));
        }
        validate_classes(&classes)?;
        let find = |n: &str| {
            store
                .find(n)
                .ok_or_else(|| SgdaError::InvalidArgument(format!("checkpoint lacks parameter {n}")))
        };
        let (w, b) = (find("w")?, find("b")?);
        Ok(Self {
            config,
            classes,
            store,
            w,
            b,
        })
    }

    fn margins(&self, x: &[f64]) -> Vec<f64> {
        let w = self.store.get(self.w);
        let dim = w.shape()[1];
        let b = self.store.get(self.b).data();
        w.data()
            .chunks(dim.max(1))
            .zip(b)
            .map(|(row, &bk)| if dim == 0 { bk } else { dot(row, x) + bk })
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hinge objective of one binary problem.
fn objective(w: &[f64], b: f64, xs: &[Vec<f64>], ys: &[f64], lambda: f64) -> f64 {
    let hinge: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, &y)| (1.0 - y * (dot(w, x) + b)).max(0.0))
        .sum();
    0.5 * lambda * dot(w, w) + hinge / xs.len() as f64
}

impl Classifier for LinearSvm {
    fn name(&self) -> &'static str {
        "svm"
    }

    fn classes(&self) -> &[FaultClass] {
        &self.classes
    }

    fn fit(&mut self, data: &LabeledDataset) -> Result<TrainHistory> {
        let (xs, ys) = encode_dataset(data, &self.classes, self.config.scaling)?;
        let mut present: Vec<usize> = ys.clone();
        present.sort_unstable();
        present.dedup();
        if present.len() < 2 {
            return Err(SgdaError::InvalidArgument("svm needs at least two classes in the training set".into()));
        }
        let n = xs.len();
        let dim = xs[0].len();
        let n_classes = self.classes.len();
        let lambda = 1.0 / (self.config.c * n as f64);
        let radius = 1.0 / lambda.sqrt();
        let batch = if self.config.batch_size == 0 {
            n
        } else {
            self.config.batch_size.min(n)
        };
        let mut rng = seeded_rng(self.config.seed);

        let targets: Vec<Vec<f64>> = (0..n_classes)
            .map(|k| ys.iter().map(|&y| if y == k { 1.0 } else { -1.0 }).collect())
            .collect();
        let mut w = vec![vec![0.0; dim]; n_classes];
        let mut b = vec![0.0; n_classes];
        let mut best_w = w.clone();
        let mut best_b = b.clone();
        let mut best_obj: Vec<f64> = (0..n_classes)
            .map(|k| objective(&w[k], b[k], &xs, &targets[k], lambda))
            .collect();
        let mut history = TrainHistory::default();
        let mut grad = vec![0.0; dim];
        for t in 1..=self.config.epochs {
            let eta = 1.0 / (lambda * t as f64);
            let idx: Vec<usize> = if batch == n {
                (0..n).collect()
            } else {
                sample(&mut rng, n, batch).into_vec()
            };
            for k in 0..n_classes {
                grad.iter_mut().for_each(|g| *g = 0.0);
                let mut gb = 0.0;
                for &i in &idx {
                    let y = targets[k][i];
                    if y * (dot(&w[k], &xs[i]) + b[k]) < 1.0 {
                        for (g, x) in grad.iter_mut().zip(&xs[i]) {
                            *g += y * x;
                        }
                        gb += y;
                    }
                }
                let step = eta / idx.len() as f64;
                let shrink = 1.0 - eta * lambda;
                for (wj, g) in w[k].iter_mut().zip(&grad) {
                    *wj = shrink * *wj + step * g;
                }
                b[k] += step * gb;
                let norm = dot(&w[k], &w[k]).sqrt();
                if norm > radius {
                    let s = radius / norm;
                    w[k].iter_mut().for_each(|v| *v *= s);
                }
                let obj = objective(&w[k], b[k], &xs, &targets[k], lambda);
                if obj < best_obj[k] {
                    best_obj[k] = obj;
                    best_w[k].clone_from(&w[k]);
                    best_b[k] = b[k];
                }
            }
            let loss: f64 = best_obj.iter().sum();
            let correct = xs
                .iter()
                .zip(&ys)
                .filter(|(x, &y)| {
                    let m: Vec<f64> = (0..n_classes).map(|k| dot(&best_w[k], x) + best_b[k]).collect();
                    sgda_neural::argmax(&m) == y
                })
                .count();
            history.loss.push(loss);
            history.train_accuracy.push(correct as f64 / n as f64);
        }
        *self.store.get_mut(self.w) = Tensor::new(vec![n_classes, dim], best_w.concat())?.with_requires_grad();
        *self.store.get_mut(self.b) = Tensor::new(vec![n_classes], best_b)?.with_requires_grad();
        Ok(history)
    }

    fn logits(&self, windows: &[&SpectrumWindow]) -> Result<Vec<Vec<f64>>> {
        let dim = self.store.get(self.w).shape()[1];
        windows
            .iter()
            .map(|win| {
                let x = self.config.scaling.apply(&win.magnitudes);
                if dim != 0 && x.len() != dim {
                    return Err(SgdaError::InvalidArgument(format!(
                        "svm expects {dim} features, got {}",
                        x.len()
                    )));
                }
                Ok(self.margins(&x))
            })
            .collect()
    }

    fn config_json(&self) -> serde_json::Value {
        serde_json::to_value(&self.config).expect("config serializes")
    }

    fn params(&self) -> &ParamStore {
        &self.store
    }
}
