use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::augment::{AmplitudePolicy, GaussianKernelPeaks};
use crate::classifier::{ClassifierConfig, ResNetConfig};
use crate::error::{Result, SgdaError};
use crate::motor_model::{FaultClass, MotorParameters};
use crate::sim_oracle::SimSpec;
use crate::vae::VaeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ExperimentId {
    E1,
    E2,
    E3,
    E4,
    #[serde(rename = "epsilon", alias = "EPSILON")]
    Epsilon,
}

impl ExperimentId {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentId::E1 => "E1",
            ExperimentId::E2 => "E2",
            ExperimentId::E3 => "E3",
            ExperimentId::E4 => "E4",
            ExperimentId::Epsilon => "epsilon",
        }
    }
}

impl fmt::Display for ExperimentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentId {
    type Err = SgdaError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "e1" => Ok(ExperimentId::E1),
            "e2" => Ok(ExperimentId::E2),
            "e3" => Ok(ExperimentId::E3),
            "e4" => Ok(ExperimentId::E4),
            "epsilon" => Ok(ExperimentId::Epsilon),
            _ => Err(SgdaError::Config(format!("unknown experiment `{s}`"))),
        }
    }
}

/// One experiment run, read from a single TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    /// Peak generator name from the registry: `vae` or `gaussian`.
    pub generator: String,
    pub faults: Vec<FaultClass>,
    pub seeds: Vec<u64>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Sideband levels of simulated test faults, in dB below the fundamental.
    pub severity_db: Vec<f64>,
    pub max_order: u32,
    /// Share of training anomalies taken from simulated recordings instead
    /// of injection.
    pub real_anomaly_fraction: f64,
    /// Share of test anomalies produced by injection instead of simulation.
    pub test_synthetic_fraction: f64,
    /// Simulated fault windows per class given to baseline models.
    pub baseline_anomalies_per_class: usize,
    /// Anomalous training windows per epsilon-study column.
    pub counts: Vec<usize>,
    /// Model trained on augmented data.
    pub model: String,
    /// Comparators trained on healthy plus simulated fault windows.
    pub baselines: Vec<String>,
    /// Healthy recordings to use instead of the simulator.
    pub healthy_manifest: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub motor: MotorParameters,
    pub sim: SimDefaults,
    pub amplitude: AmplitudePolicy,
    pub gaussian: GaussianKernelPeaks,
    pub vae: VaeConfig,
    pub classifier: ClassifierConfig,
}

/// Simulator settings shared by every generated recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimDefaults {
    pub fundamental_amp: f64,
    pub noise_std: f64,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub harmonics: Vec<crate::sim_oracle::Harmonic>,
}

impl Default for SimDefaults {
    fn default() -> Self {
        let s = SimSpec::default();
        Self {
            fundamental_amp: s.fundamental_amp,
            noise_std: s.noise_std,
            duration_s: s.duration_s,
            sample_rate_hz: s.sample_rate_hz,
            harmonics: s.harmonics,
        }
    }
}

/// Desk-scale network widths; the full (64, 128, 256, 512) stack is
/// roughly 35 times slower per sample on one core.
pub const DESK_CHANNELS: [usize; 4] = [8, 16, 32, 64];

/// At 10 epochs the narrow stack sometimes misses injected peaks that are a
/// single bin wide; 20 settles them.
pub const DESK_RESNET_EPOCHS: usize = 20;

impl ExperimentConfig {
    /// Desk-scale defaults for one experiment.
    pub fn default_for(experiment: ExperimentId) -> Self {
        use FaultClass::*;
        let (generator, faults, baselines) = match experiment {
            ExperimentId::E1 | ExperimentId::E3 => ("vae", vec![InterTurnShort], vec!["svm"]),
            ExperimentId::E2 => ("gaussian", vec![RotorBar, InterTurnShort, BearingInnerRace, BearingBall], vec!["svm"]),
            ExperimentId::E4 => ("vae", vec![RotorBar, InterTurnShort], vec!["svm"]),
            ExperimentId::Epsilon => ("vae", vec![InterTurnShort], vec!["resnet", "svm", "mlp"]),
        };
        let mut classifier = ClassifierConfig::default();
        classifier.resnet = ResNetConfig {
            block_channels: DESK_CHANNELS.to_vec(),
            epochs: DESK_RESNET_EPOCHS,
            ..ResNetConfig::default()
        };
        Self {
            experiment,
            generator: generator.into(),
            faults,
            seeds: vec![0, 1, 2, 3, 4],
            train_per_class: 300,
            test_per_class: 100,
            severity_db: vec![-20.0],
            max_order: 1,
            real_anomaly_fraction: 0.0,
            test_synthetic_fraction: 0.0,
            baseline_anomalies_per_class: 1,
            counts: vec![1, 10, 25, 50, 100, 300],
            model: "resnet".into(),
            baselines: baselines.into_iter().map(String::from).collect(),
            healthy_manifest: None,
            output_dir: PathBuf::from("runs"),
            motor: MotorParameters::default(),
            sim: SimDefaults::default(),
            amplitude: AmplitudePolicy::default(),
            gaussian: GaussianKernelPeaks::default(),
            vae: VaeConfig {
                epochs: 100,
                ..VaeConfig::default()
            },
            classifier,
        }
    }

    /// Parses a config; omitted fields take the experiment's defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let raw: toml::Table = toml::from_str(text).map_err(|e| SgdaError::Config(e.to_string()))?;
        let id: ExperimentId = raw
            .get("experiment")
            .and_then(|v| v.as_str())
            .ok_or_else(|| SgdaError::Config("missing `experiment`".into()))?
            .parse()?;
        let mut merged = toml::Table::try_from(Self::default_for(id)).map_err(|e| SgdaError::Config(e.to_string()))?;
        merge(&mut merged, raw);
        let cfg: Self = merged.try_into().map_err(|e: toml::de::Error| SgdaError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => SgdaError::MissingFile(path.to_path_buf()),
            _ => e.into(),
        })?;
        let mut cfg = Self::from_toml(&text)?;
        // relative paths are taken from the config file's directory
        let base = path.parent().unwrap_or(Path::new(""));
        if let Some(m) = &cfg.healthy_manifest {
            if m.is_relative() {
                cfg.healthy_manifest = Some(base.join(m));
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    /// Canonical serialization: every field, fixed order.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical form with output paths removed, so moving
    /// a config does not change its identity.
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(c.canonical_toml().as_bytes()))
    }

    pub fn run_dir(&self) -> PathBuf {
        self.output_dir.join(&self.config_hash()[..16])
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: String| Err(SgdaError::Config(m));
        if self.seeds.is_empty() {
            return err("seeds must not be empty".into());
        }
        if self.faults.is_empty() || self.faults.contains(&FaultClass::Healthy) {
            return err("faults must list at least one anomalous class".into());
        }
        let mut uniq = self.faults.clone();
        uniq.sort();
        uniq.dedup();
        if uniq.len() != self.faults.len() {
            return err("faults must not repeat".into());
        }
        match self.experiment {
            ExperimentId::E2 if self.faults.len() < 4 => {
                return err(format!("E2 needs at least 4 anomalous classes, got {}", self.faults.len()))
            }
            ExperimentId::E4 if self.faults.len() < 2 => {
                return err(format!("E4 needs at least 2 anomalous classes, got {}", self.faults.len()))
            }
            ExperimentId::E1 | ExperimentId::E3 | ExperimentId::Epsilon if self.faults.len() != 1 => {
                return err(format!("{} is binary and takes one fault class", self.experiment))
            }
            _ => {}
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return err("per-class counts must be positive".into());
        }
        if self.severity_db.is_empty() || self.severity_db.iter().any(|d| !(*d <= 0.0)) {
            return err("severity grid must hold levels at or below 0 dB".into());
        }
        for f in [self.real_anomaly_fraction, self.test_synthetic_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return err(format!("fractions must lie in [0, 1], got {f}"));
            }
        }
        if self.experiment == ExperimentId::Epsilon && (self.counts.is_empty() || self.counts.contains(&0)) {
            return err("epsilon counts must be positive".into());
        }
        self.motor.validate()?;
        Ok(())
    }
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}
