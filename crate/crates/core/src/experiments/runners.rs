use crate::augment::{build_augmented_dataset, AugmentOptions, PeakSource, PeakSourceContext, PeakSourceRegistry};
use crate::classifier::{evaluate, Classifier, ClassifierRegistry, EvalReport};
use crate::dataset::LabeledDataset;
use crate::error::{Result, SgdaError};
use crate::motor_model::FaultClass;
use crate::signal_io::{DatasetManifest, DEFAULT_HOP, DEFAULT_WINDOW_LEN};
use crate::sim_oracle::{simulate, SimSpec};
use crate::spectrum::{recording_spectra, SpectrumWindow};

use super::config::{ExperimentConfig, ExperimentId};

/// Metrics of one trained model on one test set.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub model: String,
    pub severity_db: Option<f64>,
    pub count: Option<usize>,
    pub seed: u64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub config: ExperimentConfig,
    pub results: Vec<SeedResult>,
}

/// Fails when any recording contributes windows to both sets.
pub fn check_leakage(train: &LabeledDataset, test: &LabeledDataset) -> Result<()> {
    let train_ids = train.source_ids();
    match test.source_ids().into_iter().find(|id| train_ids.contains(id)) {
        Some(id) => Err(SgdaError::DataLeakage(id.to_string())),
        None => Ok(()),
    }
}

#[derive(Debug, Clone, Copy)]
enum Role {
    TrainHealthy = 0,
    TestHealthy = 1,
    TrainFault = 2,
    TestFault = 3,
}

/// Disjoint simulator seeds per experiment seed, role and class.
fn sim_seed(exp_seed: u64, role: Role, class_index: usize, i: usize) -> u64 {
    exp_seed * 100_000_000 + role as u64 * 10_000_000 + class_index as u64 * 1_000_000 + i as u64
}

fn simulated_windows(
    cfg: &ExperimentConfig,
    fault: FaultClass,
    fault_amp_db: f64,
    n: usize,
    exp_seed: u64,
    role: Role,
) -> Result<Vec<SpectrumWindow>> {
    let class_index = FaultClass::ALL.iter().position(|&c| c == fault).expect("known class");
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    while out.len() < n {
        let spec = SimSpec {
            params: cfg.motor.clone(),
            fundamental_amp: cfg.sim.fundamental_amp,
            harmonics: cfg.sim.harmonics.clone(),
            noise_std: cfg.sim.noise_std,
            fault,
            fault_amp_db,
            max_order: cfg.max_order,
            duration_s: cfg.sim.duration_s,
            sample_rate_hz: cfg.sim.sample_rate_hz,
            seed: sim_seed(exp_seed, role, class_index, i),
        };
        let rec = simulate(&spec)?;
        let windows = recording_spectra(&rec, DEFAULT_WINDOW_LEN, DEFAULT_HOP)?;
        if windows.is_empty() {
            return Err(SgdaError::RecordingTooShort {
                len: rec.samples.len(),
                window: DEFAULT_WINDOW_LEN,
            });
        }
        out.extend(windows.into_iter().take(n - out.len()));
        i += 1;
    }
    Ok(out)
}

/// Healthy train and test windows, from the manifest when one is set.
fn healthy_windows(cfg: &ExperimentConfig, seed: u64) -> Result<(Vec<SpectrumWindow>, Vec<SpectrumWindow>)> {
    let Some(path) = &cfg.healthy_manifest else {
        return Ok((
            simulated_windows(cfg, FaultClass::Healthy, 0.0, cfg.train_per_class, seed, Role::TrainHealthy)?,
            simulated_windows(cfg, FaultClass::Healthy, 0.0, cfg.test_per_class, seed, Role::TestHealthy)?,
        ));
    };
    let manifest = DatasetManifest::load(path)?;
    let mut recs: Vec<_> = manifest
        .load_recordings()?
        .into_iter()
        .filter(|r| r.label == Some(FaultClass::Healthy))
        .collect();
    recs.sort_by(|a, b| a.source_id.cmp(&b.source_id));
    if recs.len() < 2 {
        return Err(SgdaError::EmptyDataset(format!(
            "{} holds fewer than two healthy recordings",
            path.display()
        )));
    }
    // whole recordings go to one side: three quarters train, the rest test
    let n_train = (recs.len() * 3).div_ceil(4).min(recs.len() - 1);
    let mut train = Vec::new();
    for r in &recs[..n_train] {
        train.extend(recording_spectra(r, DEFAULT_WINDOW_LEN, DEFAULT_HOP)?);
    }
    let mut test = Vec::new();
    for r in &recs[n_train..] {
        test.extend(recording_spectra(r, DEFAULT_WINDOW_LEN, DEFAULT_HOP)?);
    }
    if test.len() < cfg.test_per_class {
        return Err(SgdaError::EmptyDataset(format!(
            "{} healthy test windows available, {} requested",
            test.len(),
            cfg.test_per_class
        )));
    }
    test.truncate(cfg.test_per_class);
    Ok((train, test))
}

fn class_list(cfg: &ExperimentConfig) -> Vec<FaultClass> {
    let mut classes: Vec<FaultClass> = std::iter::once(FaultClass::Healthy).chain(cfg.faults.iter().copied()).collect();
    classes.sort();
    classes
}

fn augment_options(cfg: &ExperimentConfig) -> AugmentOptions {
    AugmentOptions {
        max_order: cfg.max_order,
        amplitude: cfg.amplitude,
    }
}

/// Everything shared by the models of one seed.
struct SeedContext {
    seed: u64,
    healthy_train: Vec<SpectrumWindow>,
    healthy_test: Vec<SpectrumWindow>,
    generator: Box<dyn PeakSource>,
}

impl SeedContext {
    fn new(cfg: &ExperimentConfig, seed: u64) -> Result<Self> {
        let (healthy_train, healthy_test) = healthy_windows(cfg, seed)?;
        let ctx = PeakSourceContext {
            healthy: &healthy_train,
            params: &cfg.motor,
            seed,
            gaussian: cfg.gaussian,
            vae: cfg.vae.clone(),
        };
        let generator = PeakSourceRegistry::default().build(&cfg.generator, &ctx)?;
        Ok(Self {
            seed,
            healthy_train,
            healthy_test,
            generator,
        })
    }

    /// Healthy windows plus injected anomalies, optionally mixed with
    /// simulated ones.
    fn augmented(&self, cfg: &ExperimentConfig, healthy: &[SpectrumWindow], per_class: usize, stream: u64) -> Result<LabeledDataset> {
        let aug = build_augmented_dataset(
            healthy,
            &cfg.motor,
            &cfg.faults,
            self.generator.as_ref(),
            per_class,
            self.seed.wrapping_mul(4).wrapping_add(stream),
            &augment_options(cfg),
        )?;
        Ok(aug.dataset)
    }

    fn sgda_train_set(&self, cfg: &ExperimentConfig) -> Result<LabeledDataset> {
        let mut data = self.augmented(cfg, &self.healthy_train, cfg.train_per_class, 0)?;
        let n_real = (cfg.real_anomaly_fraction * cfg.train_per_class as f64).round() as usize;
        if n_real > 0 {
            for &fault in &cfg.faults {
                let real = simulated_windows(cfg, fault, cfg.severity_db[0], n_real, self.seed, Role::TrainFault)?;
                let slots: Vec<usize> = data
                    .windows
                    .iter()
                    .enumerate()
                    .filter(|(_, w)| w.label == Some(fault))
                    .map(|(i, _)| i)
                    .take(n_real)
                    .collect();
                for (slot, w) in slots.into_iter().zip(real) {
                    data.windows[slot] = w;
                }
            }
        }
        Ok(data)
    }

    /// Healthy windows plus injected anomalies at signature frequencies.
    fn synthetic_test_set(&self, cfg: &ExperimentConfig) -> Result<LabeledDataset> {
        self.augmented(cfg, &self.healthy_test, cfg.test_per_class, 1)
    }

    /// Held-out healthy windows plus simulated faults at one severity.
    fn simulated_test_set(&self, cfg: &ExperimentConfig, fault_amp_db: f64) -> Result<LabeledDataset> {
        let mut windows = self.healthy_test.clone();
        let n_synth = (cfg.test_synthetic_fraction * cfg.test_per_class as f64).round() as usize;
        let synthetic = if n_synth > 0 {
            self.augmented(cfg, &self.healthy_test, n_synth, 2)?.windows
        } else {
            Vec::new()
        };
        for &fault in &cfg.faults {
            windows.extend(simulated_windows(
                cfg,
                fault,
                fault_amp_db,
                cfg.test_per_class - n_synth,
                self.seed,
                Role::TestFault,
            )?);
            windows.extend(synthetic.iter().filter(|w| w.label == Some(fault)).cloned());
        }
        Ok(LabeledDataset::new(windows))
    }

    /// Healthy training windows plus `n` simulated windows per fault.
    fn baseline_train_set(&self, cfg: &ExperimentConfig, n: usize) -> Result<LabeledDataset> {
        let mut windows: Vec<SpectrumWindow> = self
            .healthy_train
            .iter()
            .take(cfg.train_per_class)
            .map(|w| w.clone().with_label(Some(FaultClass::Healthy)))
            .collect();
        for &fault in &cfg.faults {
            windows.extend(simulated_windows(cfg, fault, cfg.severity_db[0], n, self.seed, Role::TrainFault)?);
        }
        Ok(LabeledDataset::new(windows))
    }
}

fn fit(cfg: &ExperimentConfig, name: &str, seed: u64, train: &LabeledDataset) -> Result<Box<dyn Classifier>> {
    let mut model = ClassifierRegistry::default().build(name, &cfg.classifier.with_seed(seed), class_list(cfg))?;
    model.fit(train)?;
    Ok(model)
}

fn score(model: &dyn Classifier, train: &LabeledDataset, test: &LabeledDataset) -> Result<EvalReport> {
    check_leakage(train, test)?;
    evaluate(model, test)
}

fn sgda_label(cfg: &ExperimentConfig) -> String {
    format!("sgda-{}", cfg.model)
}

fn expect(cfg: &ExperimentConfig, ids: &[ExperimentId]) -> Result<()> {
    cfg.validate()?;
    if !ids.contains(&cfg.experiment) {
        return Err(SgdaError::Config(format!(
            "config is for {}, runner expects {}",
            cfg.experiment,
            ids.iter().map(|i| i.as_str()).collect::<Vec<_>>().join(" or ")
        )));
    }
    Ok(())
}

/// Synthetic-test protocols: train and test on healthy windows plus
/// injected anomalies.
fn run_synthetic(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let ctx = SeedContext::new(cfg, seed)?;
        let train = ctx.sgda_train_set(cfg)?;
        let test = ctx.synthetic_test_set(cfg)?;
        let model = fit(cfg, &cfg.model, seed, &train)?;
        results.push(SeedResult {
            model: sgda_label(cfg),
            severity_db: None,
            count: None,
            seed,
            report: score(model.as_ref(), &train, &test)?,
        });
        let base_train = ctx.baseline_train_set(cfg, cfg.baseline_anomalies_per_class)?;
        for name in &cfg.baselines {
            let model = fit(cfg, name, seed, &base_train)?;
            results.push(SeedResult {
                model: name.clone(),
                severity_db: None,
                count: None,
                seed,
                report: score(model.as_ref(), &base_train, &test)?,
            });
        }
    }
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        results,
    })
}

/// Simulated-test protocols: injected anomalies for training only, physical
/// sidebands for testing.
fn run_simulated(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let ctx = SeedContext::new(cfg, seed)?;
        let train = ctx.sgda_train_set(cfg)?;
        let model = fit(cfg, &cfg.model, seed, &train)?;
        let base_train = ctx.baseline_train_set(cfg, cfg.baseline_anomalies_per_class)?;
        let mut baselines = Vec::new();
        for name in &cfg.baselines {
            baselines.push((name.clone(), fit(cfg, name, seed, &base_train)?));
        }
        for &db in &cfg.severity_db {
            let test = ctx.simulated_test_set(cfg, db)?;
            results.push(SeedResult {
                model: sgda_label(cfg),
                severity_db: Some(db),
                count: None,
                seed,
                report: score(model.as_ref(), &train, &test)?,
            });
            for (name, m) in &baselines {
                results.push(SeedResult {
                    model: name.clone(),
                    severity_db: Some(db),
                    count: None,
                    seed,
                    report: score(m.as_ref(), &base_train, &test)?,
                });
            }
        }
    }
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        results,
    })
}

/// Binary classification on injected anomalies.
pub fn run_e1(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    expect(cfg, &[ExperimentId::E1])?;
    run_synthetic(cfg)
}

/// Multiclass classification on injected anomalies.
pub fn run_e2(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    expect(cfg, &[ExperimentId::E2])?;
    run_synthetic(cfg)
}

/// Binary classification of simulated faults.
pub fn run_e3(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    expect(cfg, &[ExperimentId::E3])?;
    run_simulated(cfg)
}

/// Multiclass classification of simulated faults.
pub fn run_e4(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    expect(cfg, &[ExperimentId::E4])?;
    run_simulated(cfg)
}

/// Accuracy against the number of simulated anomalies available for
/// training. The augmented model sees none, so it is trained once per seed.
pub fn run_epsilon(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    expect(cfg, &[ExperimentId::Epsilon])?;
    let pool = cfg.train_per_class;
    if let Some(&c) = cfg.counts.iter().find(|&&c| c > pool) {
        return Err(SgdaError::Config(format!(
            "count {c} exceeds the pool of {pool} anomalous windows"
        )));
    }
    let db = cfg.severity_db[0];
    let mut results = Vec::new();
    for &seed in &cfg.seeds {
        let ctx = SeedContext::new(cfg, seed)?;
        let test = ctx.simulated_test_set(cfg, db)?;
        let train = ctx.sgda_train_set(cfg)?;
        let model = fit(cfg, &cfg.model, seed, &train)?;
        let sgda = score(model.as_ref(), &train, &test)?;
        let full = ctx.baseline_train_set(cfg, pool)?;
        let n_healthy = cfg.train_per_class.min(ctx.healthy_train.len());
        for &count in &cfg.counts {
            results.push(SeedResult {
                model: sgda_label(cfg),
                severity_db: Some(db),
                count: Some(count),
                seed,
                report: sgda.clone(),
            });
            let base_train = LabeledDataset::new(full.windows[..n_healthy + count].to_vec());
            for name in &cfg.baselines {
                let m = fit(cfg, name, seed, &base_train)?;
                results.push(SeedResult {
                    model: name.clone(),
                    severity_db: Some(db),
                    count: Some(count),
                    seed,
                    report: score(m.as_ref(), &base_train, &test)?,
                });
            }
        }
    }
    Ok(ExperimentOutcome {
        config: cfg.clone(),
        results,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    match cfg.experiment {
        ExperimentId::E1 => run_e1(cfg),
        ExperimentId::E2 => run_e2(cfg),
        ExperimentId::E3 => run_e3(cfg),
        ExperimentId::E4 => run_e4(cfg),
        ExperimentId::Epsilon => run_epsilon(cfg),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn w(id: &str) -> SpectrumWindow {
        SpectrumWindow {
            magnitudes: vec![0.0; 250],
            bin_width_hz: 1.0,
            source_id: id.into(),
            window_index: 0,
            label: Some(FaultClass::Healthy),
        }
    }

    #[test]
    fn leakage_guard() {
        let train = LabeledDataset::new(vec![w("a"), w("b")]);
        let clean = LabeledDataset::new(vec![w("c")]);
        assert!(check_leakage(&train, &clean).is_ok());
        let leaky = LabeledDataset::new(vec![w("c"), w("b")]);
        let e = check_leakage(&train, &leaky).unwrap_err();
        assert!(e.to_string().starts_with("data leakage"), "{e}");
    }

    #[test]
    fn simulator_seeds_are_disjoint() {
        let mut seen = BTreeSet::new();
        for s in 0..5 {
            for role in [Role::TrainHealthy, Role::TestHealthy, Role::TrainFault, Role::TestFault] {
                for c in 0..8 {
                    for i in 0..200 {
                        assert!(seen.insert(sim_seed(s, role, c, i)));
                    }
                }
            }
        }
    }
}
