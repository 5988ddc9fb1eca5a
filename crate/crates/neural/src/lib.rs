//! A small reverse-mode differentiable tensor engine.
//!
//! Values live in dense row-major `f64` [`Tensor`]s. A [`Graph`] records every
//! operation applied during a forward pass and replays them in reverse on
//! [`Graph::backward`]. Trainable tensors are owned by a [`ParamStore`]; graphs
//! read them by [`ParamId`] and the store collects their gradients afterwards.
//!
//! ```
//! use sgda_neural::{Graph, ParamStore, Tensor};
//!
//! let mut store = ParamStore::new();
//! let w = store.add("w", Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap());
//! let b = store.add("b", Tensor::zeros(vec![1]));
//!
//! let mut g = Graph::new();
//! let x = g.input(Tensor::from_vec(vec![3.0, 4.0]));
//! let (wv, bv) = (g.param(&store, w), g.param(&store, b));
//! let y = g.dense(x, wv, bv).unwrap();
//! assert_eq!(g.value(y).data(), &[11.0]);
//! ```

mod adam;
mod checkpoint;
mod error;
mod graph;
mod init;
mod linalg;
mod params;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use error::{NeuralError, Result};
pub use graph::{Graph, Var};
pub use init::{he_normal, seeded_rng, standard_normal, uniform};
pub use params::{ParamId, ParamStore};
pub use tensor::Tensor;

/// Numerically stable softmax of a logit vector.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest element; ties resolve to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
