//! Variational autoencoder over normalized 20-bin peak segments.
//!
//! Encoder `20 → hidden → (μ, log σ²)`, decoder `z → hidden → 20` with a
//! logistic output. The loss per segment is the summed squared
//! reconstruction error plus `KL(N(μ, σ²) ‖ N(0, I))`.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sgda_neural::{
    adam_step, he_normal, load_checkpoint, save_checkpoint, seeded_rng, AdamConfig, AdamState, Graph, ParamId,
    ParamStore, Tensor, Var,
};

use crate::augment::{extract_segment, segment_fits, PeakSegment, PeakSource, SEGMENT_LEN};
use crate::error::{Result, SgdaError};
use crate::motor_model::MotorParameters;
use crate::spectrum::{frequency_to_bin, SpectrumWindow};

/// Generated shapes must rise this far above their own median, as a
/// fraction of their range.
pub const MIN_PROMINENCE: f64 = 0.5;
/// Rejection budget per requested peak.
pub const DRAWS_PER_PEAK: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeConfig {
    pub latent_dim: usize,
    pub hidden_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub leaky_alpha: f64,
    pub seed: u64,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 4,
            hidden_dim: 16,
            epochs: 500,
            lr: 1e-3,
            batch_size: 16,
            leaky_alpha: 0.01,
            seed: 0,
        }
    }
}

impl VaeConfig {
    fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 || self.hidden_dim == 0 || self.batch_size == 0 || self.epochs == 0 {
            return Err(SgdaError::InvalidArgument(
                "vae dimensions, batch size and epochs must be positive".into(),
            ));
        }
        if !(self.lr > 0.0) || !(self.leaky_alpha > 0.0) {
            return Err(SgdaError::InvalidArgument("vae lr and leaky slope must be positive".into()));
        }
        Ok(())
    }
}

/// `Σ ½ (μ² + e^{logvar} − 1 − logvar)`.
pub fn kl_unit_gaussian(mu: &[f64], logvar: &[f64]) -> Result<f64> {
    if mu.len() != logvar.len() {
        return Err(SgdaError::InvalidArgument(format!(
            "kl needs equal lengths, got {} and {}",
            mu.len(),
            logvar.len()
        )));
    }
    if mu.iter().chain(logvar).any(|v| !v.is_finite()) {
        return Err(SgdaError::InvalidArgument("kl of non-finite input".into()));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .map(|(&m, &lv)| 0.5 * (m * m + lv.exp() - 1.0 - lv))
        .sum())
}

/// `z = μ + e^{logvar / 2} ⊙ ε`.
pub fn reparameterize(mu: &[f64], logvar: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != eps.len() {
        return Err(SgdaError::InvalidArgument("reparameterize needs equal lengths".into()));
    }
    Ok(mu
        .iter()
        .zip(logvar)
        .zip(eps)
        .map(|((&m, &lv), &e)| m + (0.5 * lv).exp() * e)
        .collect())
}

#[derive(Debug, Clone, Copy)]
struct Layer {
    w: ParamId,
    b: ParamId,
}

#[derive(Debug, Clone, Copy)]
struct VaeLayers {
    enc: Layer,
    mu: Layer,
    logvar: Layer,
    dec_hidden: Layer,
    dec_out: Layer,
}

const LAYER_NAMES: [&str; 5] = ["enc", "mu", "logvar", "dec_hidden", "dec_out"];

impl VaeLayers {
    fn find(store: &ParamStore) -> Result<Self> {
        let layer = |name: &str| -> Result<Layer> {
            let get = |suffix: &str| {
                store
                    .find(&format!("{name}.{suffix}"))
                    .ok_or_else(|| SgdaError::InvalidArgument(format!("checkpoint lacks {name}.{suffix}")))
            };
            Ok(Layer {
                w: get("w")?,
                b: get("b")?,
            })
        };
        Ok(Self {
            enc: layer(LAYER_NAMES[0])?,
            mu: layer(LAYER_NAMES[1])?,
            logvar: layer(LAYER_NAMES[2])?,
            dec_hidden: layer(LAYER_NAMES[3])?,
            dec_out: layer(LAYER_NAMES[4])?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct VaeModel {
    pub config: VaeConfig,
    pub store: ParamStore,
    /// Mean loss per segment for every epoch.
    pub loss_history: Vec<f64>,
    layers: VaeLayers,
}

struct Forward {
    mu: Var,
    logvar: Var,
}

impl VaeModel {
    /// Freshly initialized model: He-normal weights, zero biases.
    pub fn new(config: VaeConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let (h, z) = (config.hidden_dim, config.latent_dim);
        let mut store = ParamStore::new();
        let shapes = [(h, SEGMENT_LEN), (z, h), (z, h), (h, z), (SEGMENT_LEN, h)];
        for (name, (rows, cols)) in LAYER_NAMES.iter().zip(shapes) {
            store.add(format!("{name}.w"), he_normal(vec![rows, cols], cols, rng));
            store.add(format!("{name}.b"), Tensor::zeros(vec![rows]));
        }
        let layers = VaeLayers::find(&store)?;
        Ok(Self {
            config,
            store,
            loss_history: Vec::new(),
            layers,
        })
    }

    fn dense(&self, g: &mut Graph, x: Var, layer: Layer) -> Result<Var> {
        let w = g.param(&self.store, layer.w);
        let b = g.param(&self.store, layer.b);
        Ok(g.dense(x, w, b)?)
    }

    fn encode_graph(&self, g: &mut Graph, x: Var) -> Result<Forward> {
        let h = self.dense(g, x, self.layers.enc)?;
        let h = g.leaky_relu(h, self.config.leaky_alpha)?;
        Ok(Forward {
            mu: self.dense(g, h, self.layers.mu)?,
            logvar: self.dense(g, h, self.layers.logvar)?,
        })
    }

    fn decode_graph(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let h = self.dense(g, z, self.layers.dec_hidden)?;
        let h = g.leaky_relu(h, self.config.leaky_alpha)?;
        let out = self.dense(g, h, self.layers.dec_out)?;
        Ok(g.sigmoid(out))
    }

    /// Posterior mean and log-variance of one segment.
    pub fn encode(&self, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut g = Graph::new();
        let x = g.input(Tensor::from_vec(values.to_vec()));
        let f = self.encode_graph(&mut g, x)?;
        Ok((g.value(f.mu).data().to_vec(), g.value(f.logvar).data().to_vec()))
    }

    pub fn decode(&self, z: &[f64]) -> Result<Vec<f64>> {
        let mut g = Graph::new();
        let z = g.input(Tensor::from_vec(z.to_vec()));
        let out = self.decode_graph(&mut g, z)?;
        Ok(g.value(out).data().to_vec())
    }

    /// Decoder image of the posterior mean.
    pub fn reconstruct(&self, values: &[f64]) -> Result<Vec<f64>> {
        let (mu, _) = self.encode(values)?;
        self.decode(&mu)
    }

    /// Mean per-segment loss of one batch; gradients land in the store.
    fn batch_step(&mut self, batch: &[&[f64]], rng: &mut ChaCha8Rng) -> Result<f64> {
        let b = batch.len();
        let zdim = self.config.latent_dim;
        let flat: Vec<f64> = batch.iter().flat_map(|s| s.iter().copied()).collect();
        let eps: Vec<f64> = (0..b * zdim).map(|_| StandardNormal.sample(rng)).collect();

        let mut g = Graph::new();
        let x = g.input(Tensor::new(vec![b, SEGMENT_LEN], flat)?);
        let f = self.encode_graph(&mut g, x)?;
        let eps = g.input(Tensor::new(vec![b, zdim], eps)?);
        let half = g.scale(f.logvar, 0.5);
        let sigma = g.exp(half);
        let noise = g.mul(sigma, eps)?;
        let z = g.add(f.mu, noise)?;
        let xhat = self.decode_graph(&mut g, z)?;

        let diff = g.sub(xhat, x)?;
        let sq = g.square(diff);
        let recon = g.sum(sq);
        let mu2 = g.square(f.mu);
        let var = g.exp(f.logvar);
        let t = g.add(mu2, var)?;
        let t = g.sub(t, f.logvar)?;
        let t = g.sum(t);
        let t = g.scale(t, 0.5);
        let kl = g.add_scalar(t, -0.5 * (b * zdim) as f64);
        let total = g.add(recon, kl)?;
        let loss = g.scale(total, 1.0 / b as f64);

        g.backward(loss)?;
        self.store.zero_grad();
        g.accumulate_param_grads(&mut self.store)?;
        Ok(g.value(loss).data()[0])
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let meta = serde_json::to_string(&self.config)?;
        save_checkpoint(path, &meta, &self.store)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (meta, store) = load_checkpoint(path)?;
        let config: VaeConfig = serde_json::from_str(&meta)?;
        let layers = VaeLayers::find(&store)?;
        Ok(Self {
            config,
            store,
            loss_history: Vec::new(),
            layers,
        })
    }
}

/// Trains on the non-degenerate segments with shuffled mini-batch Adam.
pub fn train_vae(segments: &[PeakSegment], config: &VaeConfig) -> Result<VaeModel> {
    config.validate()?;
    let usable: Vec<&[f64]> = segments
        .iter()
        .filter(|s| !s.degenerate)
        .map(|s| s.values.as_slice())
        .collect();
    if usable.len() < config.batch_size {
        return Err(SgdaError::InvalidArgument(format!(
            "vae needs at least {} non-degenerate segments, got {}",
            config.batch_size,
            usable.len()
        )));
    }
    if let Some(s) = usable.iter().find(|s| s.len() != SEGMENT_LEN) {
        return Err(SgdaError::InvalidArgument(format!(
            "segments must hold {SEGMENT_LEN} values, got {}",
            s.len()
        )));
    }
    let mut rng = seeded_rng(config.seed);
    let mut model = VaeModel::new(config.clone(), &mut rng)?;
    let mut adam = AdamState::new(&model.store, AdamConfig::with_lr(config.lr));
    let mut order: Vec<usize> = (0..usable.len()).collect();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&[f64]> = chunk.iter().map(|&i| usable[i]).collect();
            total += model.batch_step(&batch, &mut rng)? * batch.len() as f64;
            adam_step(&mut model.store, &mut adam)?;
        }
        model.loss_history.push(total / usable.len() as f64);
    }
    Ok(model)
}

fn prominence(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    if max > min {
        (max - median) / (max - min)
    } else {
        0.0
    }
}

/// Draws `n` peak-shaped segments from the prior, rescaled to `[0, 1]`.
pub fn generate_peaks_with(model: &VaeModel, n: usize, rng: &mut ChaCha8Rng) -> Result<Vec<PeakSegment>> {
    let mut out = Vec::with_capacity(n);
    let budget = DRAWS_PER_PEAK * n;
    let mut draws = 0;
    while out.len() < n {
        if draws >= budget {
            return Err(SgdaError::DegenerateGenerator {
                requested: n,
                accepted: out.len(),
                draws,
            });
        }
        draws += 1;
        let z: Vec<f64> = (0..model.config.latent_dim).map(|_| StandardNormal.sample(rng)).collect();
        let values = model.decode(&z)?;
        if prominence(&values) >= MIN_PROMINENCE {
            out.push(PeakSegment::from_raw(&values, None));
        }
    }
    Ok(out)
}

pub fn generate_peaks(model: &VaeModel, n: usize, seed: u64) -> Result<Vec<PeakSegment>> {
    generate_peaks_with(model, n, &mut seeded_rng(seed))
}

/// Normalized segments around the supply fundamental and its odd harmonics.
pub fn healthy_peak_segments(healthy: &[SpectrumWindow], params: &MotorParameters) -> Vec<PeakSegment> {
    let mut out = Vec::new();
    for w in healthy {
        let mut h = 1;
        while let Ok(bin) = frequency_to_bin(h as f64 * params.supply_frequency_hz, w.bin_width_hz) {
            if segment_fits(bin, w.n_bins()) {
                if let Ok(seg) = extract_segment(w, bin) {
                    if !seg.degenerate {
                        out.push(seg);
                    }
                }
            }
            h += 2;
        }
    }
    out
}

/// Peak source backed by a trained VAE.
#[derive(Debug, Clone)]
pub struct VaePeakSource {
    pub model: VaeModel,
}

impl VaePeakSource {
    /// Trains on peaks already present in healthy spectra, so no fault data
    /// is ever required.
    pub fn fit_on_healthy(healthy: &[SpectrumWindow], params: &MotorParameters, config: &VaeConfig) -> Result<Self> {
        let segments = healthy_peak_segments(healthy, params);
        Ok(Self {
            model: train_vae(&segments, config)?,
        })
    }
}

impl PeakSource for VaePeakSource {
    fn name(&self) -> &'static str {
        "vae"
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<PeakSegment> {
        Ok(generate_peaks_with(&self.model, 1, rng)?.remove(0))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "config": self.model.config,
            "final_loss": self.model.loss_history.last(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::augment::gaussian_peak;
    use rand::Rng;

    /// Simpson's rule for `∫ P log(P / Q)` with `P = N(μ, σ²)`, `Q = N(0, 1)`.
    fn kl_quadrature(mu: f64, logvar: f64) -> f64 {
        let sigma = (0.5 * logvar).exp();
        let (lo, hi) = (mu - 14.0 * sigma, mu + 14.0 * sigma);
        let n = 20_000;
        let h = (hi - lo) / n as f64;
        let f = |x: f64| {
            let log_p = -0.5 * ((x - mu) / sigma).powi(2) - sigma.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
            let log_q = -0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln();
            log_p.exp() * (log_p - log_q)
        };
        let mut s = f(lo) + f(hi);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(lo + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn kl_closed_form() {
        assert_eq!(kl_unit_gaussian(&[0.0], &[0.0]).unwrap(), 0.0);
        assert_eq!(kl_unit_gaussian(&[1.0], &[0.0]).unwrap(), 0.5);
        assert!(kl_unit_gaussian(&[0.0, 1.0], &[0.0]).is_err());
        assert!(kl_unit_gaussian(&[f64::NAN], &[0.0]).is_err());
        let mut rng = seeded_rng(4);
        for _ in 0..50 {
            let mu: f64 = rng.gen_range(-3.0..3.0);
            let lv: f64 = rng.gen_range(-2.0..2.0);
            let closed = kl_unit_gaussian(&[mu], &[lv]).unwrap();
            assert!(closed >= 0.0);
            assert!((closed - kl_quadrature(mu, lv)).abs() < 1e-6, "{mu} {lv}");
        }
    }

    #[test]
    fn reparameterize_cases() {
        assert_eq!(reparameterize(&[1.5, -2.0], &[0.3, 0.1], &[0.0, 0.0]).unwrap(), vec![1.5, -2.0]);
        assert_eq!(reparameterize(&[1.5], &[0.0], &[1.0]).unwrap(), vec![2.5]);
        let mut rng = seeded_rng(8);
        let (mu, lv) = (0.7, 0.4f64);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                reparameterize(&[mu], &[lv], &[e]).unwrap()[0]
            })
            .sum::<f64>()
            / n as f64;
        let sigma = (0.5 * lv).exp();
        assert!((mean - mu).abs() < 3.0 * sigma / (n as f64).sqrt());
    }

    fn gaussian_corpus(n: usize, seed: u64) -> Vec<PeakSegment> {
        let mut rng = seeded_rng(seed);
        (0..n)
            .map(|_| gaussian_peak(rng.gen_range(0.5..2.0), 1.0).unwrap())
            .collect()
    }

    #[test]
    fn too_few_segments() {
        let e = train_vae(&gaussian_corpus(15, 0), &VaeConfig::default()).unwrap_err();
        assert!(e.to_string().contains("at least 16"), "{e}");
    }

    #[test]
    fn trains_generates_and_round_trips() {
        let cfg = VaeConfig {
            epochs: 40,
            seed: 3,
            ..VaeConfig::default()
        };
        let corpus = gaussian_corpus(200, 1);
        let model = train_vae(&corpus, &cfg).unwrap();
        assert!(model.loss_history.last() < model.loss_history.first());
        assert!(model.loss_history.iter().all(|l| l.is_finite()));

        let again = train_vae(&corpus, &cfg).unwrap();
        for ((_, a), (_, b)) in model.store.iter().zip(again.store.iter()) {
            assert_eq!(a.data(), b.data());
        }

        assert!(generate_peaks(&model, 0, 1).unwrap().is_empty());
        let peaks = generate_peaks(&model, 50, 1).unwrap();
        assert!(peaks.iter().flat_map(|p| &p.values).all(|v| (0.0..=1.0).contains(v)));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.ckpt");
        model.save(&path).unwrap();
        let loaded = VaeModel::load(&path).unwrap();
        let z = [0.3, -0.1, 0.8, 0.0];
        assert_eq!(model.decode(&z).unwrap(), loaded.decode(&z).unwrap());
    }

    #[test]
    fn healthy_corpus_uses_supply_harmonics() {
        let mut m = vec![0.01; 250];
        m[50] = 100.0;
        m[150] = 5.0;
        let w = SpectrumWindow {
            magnitudes: m,
            bin_width_hz: 1.0,
            source_id: "h".into(),
            window_index: 0,
            label: None,
        };
        let segs = healthy_peak_segments(&[w], &MotorParameters::default());
        let centers: Vec<_> = segs.iter().map(|s| s.center_bin).collect();
        assert_eq!(centers, vec![Some(50), Some(150)]);
    }
}
