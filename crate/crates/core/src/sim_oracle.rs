//! Synthetic stator-current recordings with physical fault sidebands.
//!
//! `i(t) = A sin(2π f_s t + φ) + Σ_h A a_h sin(2π h f_s t + φ_h)
//!       + Σ_k A 10^(L/20) sin(2π f_k t + φ_k) + n(t)`
//!
//! with `f_k` the fault's signature frequencies and `n` white Gaussian noise.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SgdaError};
use crate::motor_model::{signature_frequencies, FaultClass, MotorParameters};
use crate::signal_io::{save_recording, CurrentRecording, DatasetManifest, ManifestEntry, DEFAULT_SAMPLE_RATE_HZ};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Harmonic {
    pub order: u32,
    /// Amplitude relative to the fundamental.
    pub relative_amp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpec {
    pub params: MotorParameters,
    pub fundamental_amp: f64,
    pub harmonics: Vec<Harmonic>,
    pub noise_std: f64,
    pub fault: FaultClass,
    /// Sideband level relative to the fundamental.
    pub fault_amp_db: f64,
    /// Highest signature order placed in the signal.
    pub max_order: u32,
    pub duration_s: f64,
    pub sample_rate_hz: f64,
    pub seed: u64,
}

impl Default for SimSpec {
    fn default() -> Self {
        Self {
            params: MotorParameters::default(),
            fundamental_amp: 1.0,
            harmonics: vec![
                Harmonic {
                    order: 3,
                    relative_amp: 0.05,
                },
                Harmonic {
                    order: 5,
                    relative_amp: 0.02,
                },
            ],
            noise_std: 0.005,
            fault: FaultClass::Healthy,
            fault_amp_db: -20.0,
            max_order: 1,
            duration_s: 2.0,
            sample_rate_hz: DEFAULT_SAMPLE_RATE_HZ,
            seed: 0,
        }
    }
}

impl SimSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |m: String| Err(SgdaError::InvalidArgument(m));
        if !(self.fundamental_amp > 0.0) {
            return bad(format!("fundamental amplitude must be positive, got {}", self.fundamental_amp));
        }
        if !(self.noise_std >= 0.0) {
            return bad(format!("noise std must be non-negative, got {}", self.noise_std));
        }
        if !(self.fault_amp_db <= 0.0) {
            return bad(format!("fault level must be at most 0 dB, got {}", self.fault_amp_db));
        }
        if !(self.duration_s > 0.0 && self.sample_rate_hz > 0.0) {
            return bad("duration and sample rate must be positive".into());
        }
        if self.max_order == 0 {
            return bad("max_order must be at least 1".into());
        }
        if self.harmonics.iter().any(|h| h.order < 2 || !h.relative_amp.is_finite()) {
            return bad("harmonic orders start at 2 with finite amplitudes".into());
        }
        Ok(())
    }

    pub fn source_id(&self) -> String {
        format!("sim-{}-{}", self.fault, self.seed)
    }

    pub fn n_samples(&self) -> usize {
        (self.duration_s * self.sample_rate_hz).round() as usize
    }

    /// Sideband frequencies placed for this spec.
    pub fn fault_frequencies(&self) -> Result<Vec<f64>> {
        if self.fault == FaultClass::Healthy {
            return Ok(Vec::new());
        }
        let set = signature_frequencies(&self.params, self.fault, self.max_order, f64::INFINITY)?;
        let nyquist = self.sample_rate_hz / 2.0;
        if let Some(&f) = set.frequencies_hz.iter().find(|&&f| f >= nyquist) {
            return Err(SgdaError::AboveNyquist {
                freq_hz: f,
                nyquist_hz: nyquist,
            });
        }
        Ok(set.frequencies_hz)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Renders one recording. Supply, fault and noise components draw from
/// separate substreams, so a healthy and a faulty spec with equal seeds share
/// every non-fault component exactly.
pub fn simulate(spec: &SimSpec) -> Result<CurrentRecording> {
    spec.validate()?;
    let nyquist = spec.sample_rate_hz / 2.0;
    let fs = spec.params.supply_frequency_hz;
    let a = spec.fundamental_amp;

    let mut tones: Vec<(f64, f64, f64)> = Vec::new();
    let mut supply_rng = stream(spec.seed, 0);
    let two_pi = 2.0 * std::f64::consts::PI;
    tones.push((fs, a, supply_rng.gen_range(0.0..two_pi)));
    for h in &spec.harmonics {
        let f = h.order as f64 * fs;
        let phase = supply_rng.gen_range(0.0..two_pi);
        if f < nyquist {
            tones.push((f, a * h.relative_amp, phase));
        }
    }
    let side_amp = a * 10f64.powf(spec.fault_amp_db / 20.0);
    let mut fault_rng = stream(spec.seed, 1);
    for f in spec.fault_frequencies()? {
        tones.push((f, side_amp, fault_rng.gen_range(0.0..two_pi)));
    }

    let n = spec.n_samples();
    let dt = 1.0 / spec.sample_rate_hz;
    let mut samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 * dt;
            tones.iter().map(|&(f, amp, ph)| amp * (two_pi * f * t + ph).sin()).sum()
        })
        .collect();
    if spec.noise_std > 0.0 {
        let noise = Normal::new(0.0, spec.noise_std).expect("validated std");
        let mut noise_rng = stream(spec.seed, 2);
        for s in &mut samples {
            *s += noise.sample(&mut noise_rng);
        }
    }
    Ok(CurrentRecording {
        sample_rate_hz: spec.sample_rate_hz,
        samples,
        source_id: spec.source_id(),
        label: Some(spec.fault),
    })
}

/// Specs for `count` recordings of one class from the default corpus, with
/// seeds `seed_base..seed_base + count`.
pub fn corpus_specs(fault: FaultClass, fault_amp_db: f64, count: usize, seed_base: u64) -> Vec<SimSpec> {
    (0..count as u64)
        .map(|i| SimSpec {
            fault,
            fault_amp_db,
            seed: seed_base + i,
            ..SimSpec::default()
        })
        .collect()
}

/// Writes recordings, their specs and a manifest into `dir`; returns the
/// manifest path.
pub fn write_corpus(dir: impl AsRef<Path>, specs: &[SimSpec]) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let rate = specs.first().map_or(DEFAULT_SAMPLE_RATE_HZ, |s| s.sample_rate_hz);
    let mut entries = Vec::with_capacity(specs.len());
    for spec in specs {
        if spec.sample_rate_hz != rate {
            return Err(SgdaError::InvalidArgument(
                "all recordings in one corpus must share a sample rate".into(),
            ));
        }
        let rec = simulate(spec)?;
        let stem = rec.source_id.clone();
        let motor = PathBuf::from(format!("{stem}.motor.toml"));
        spec.params.save(dir.join(&motor))?;
        fs::write(dir.join(format!("{stem}.sim.json")), serde_json::to_string_pretty(spec)?)?;
        let path = PathBuf::from(format!("{stem}.csv"));
        save_recording(dir.join(&path), &rec)?;
        entries.push(ManifestEntry {
            path,
            label: rec.label,
            motor_config: motor,
        });
    }
    let manifest = DatasetManifest::new(rate, entries);
    let path = dir.join("manifest.txt");
    manifest.save(&path)?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::{frequency_to_bin, window_spectrum};

    fn spectrum(spec: &SimSpec) -> Vec<f64> {
        let rec = simulate(spec).unwrap();
        window_spectrum(&rec.samples[..8192], rec.sample_rate_hz, "x", 0, None)
            .unwrap()
            .magnitudes
    }

    #[test]
    fn pure_tone_has_one_bin() {
        let spec = SimSpec {
            harmonics: vec![],
            noise_std: 0.0,
            ..SimSpec::default()
        };
        let m = spectrum(&spec);
        let peak = m[50];
        for (i, v) in m.iter().enumerate() {
            if i != 50 {
                assert!(*v < 1e-6 * peak, "bin {i}: {v}");
            }
        }
    }

    #[test]
    fn rotor_bar_sidebands_at_minus_20_db() {
        let spec = SimSpec {
            fault: FaultClass::RotorBar,
            harmonics: vec![],
            noise_std: 0.0,
            ..SimSpec::default()
        };
        let m = spectrum(&spec);
        for b in [46, 54] {
            let ratio = m[b] / m[50];
            assert!((ratio - 0.1).abs() <= 0.002, "bin {b}: {ratio}");
        }
    }

    #[test]
    fn deterministic() {
        let spec = SimSpec {
            fault: FaultClass::BearingBall,
            seed: 17,
            ..SimSpec::default()
        };
        assert_eq!(simulate(&spec).unwrap(), simulate(&spec).unwrap());
    }

    #[test]
    fn above_nyquist_is_rejected() {
        let spec = SimSpec {
            fault: FaultClass::InterTurnShort,
            sample_rate_hz: 400.0,
            ..SimSpec::default()
        };
        assert!(matches!(simulate(&spec), Err(SgdaError::AboveNyquist { .. })));
        let loud = SimSpec {
            fault_amp_db: 3.0,
            ..SimSpec::default()
        };
        assert!(simulate(&loud).is_err());
    }

    #[test]
    fn faults_only_change_spectrum_near_signatures() {
        let healthy = SimSpec {
            noise_std: 0.0,
            ..SimSpec::default()
        };
        let h_rec = simulate(&healthy).unwrap();
        let h = spectrum(&healthy);
        for fault in FaultClass::ALL.into_iter().filter(|f| f.is_anomalous()) {
            if fault == FaultClass::MechanicalOther {
                continue;
            }
            let spec = SimSpec { fault, ..healthy.clone() };
            let freqs = spec.fault_frequencies().unwrap();
            let on_bin = freqs.iter().all(|f| f.fract().abs() < 1e-9);
            let m = spectrum(&spec);
            // the fault-only part of the signal, isolated in the time domain
            let rec = simulate(&spec).unwrap();
            let diff: Vec<f64> = rec.samples.iter().zip(&h_rec.samples).map(|(a, b)| a - b).collect();
            let d = window_spectrum(&diff[..8192], 8192.0, "d", 0, None).unwrap().magnitudes;
            let bins: Vec<usize> = freqs.iter().filter_map(|&f| frequency_to_bin(f, 1.0).ok()).collect();
            for i in 0..h.len() {
                assert!((m[i] - h[i]).abs() <= d[i] + 1e-9, "{fault} bin {i}");
                if on_bin && bins.iter().all(|&c| i.abs_diff(c) > 3) {
                    assert!((m[i] - h[i]).abs() < 1e-6, "{fault} bin {i}: {} vs {}", h[i], m[i]);
                }
            }
        }
    }

    #[test]
    fn corpus_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let specs = corpus_specs(FaultClass::RotorBar, -30.0, 2, 5);
        let path = write_corpus(dir.path(), &specs).unwrap();
        let manifest = DatasetManifest::load(&path).unwrap();
        let recs = manifest.load_recordings().unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].label, Some(FaultClass::RotorBar));
        assert_eq!(recs[0].source_id, "sim-rotor_bar-5");
        let direct = simulate(&specs[0]).unwrap();
        for (a, b) in recs[0].samples.iter().zip(&direct.samples) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
}
