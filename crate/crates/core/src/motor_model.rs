//! Machine constants and the fault-frequency formulas derived from them.
//!
//! Supply-side signatures follow the usual motor current signature analysis
//! set:
//!
//! | fault              | frequencies                                   |
//! |--------------------|-----------------------------------------------|
//! | rotor bar          | `f_s (1 ± 2ks)`                               |
//! | eccentricity       | `f_s (1 ± k (1 - s) / p)`                     |
//! | inter-turn short   | `f_s (k (1 - s) / p ± m)`, `m ∈ {1, 3, 5}`     |
//! | bearing            | `|f_s ± m f_c|`, `f_c ∈ {BPFO, BPFI, BSF}`     |
//!
//! Negative values fold to their absolute value.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SgdaError};

/// Frequencies closer than this are treated as one.
pub const DEDUP_TOLERANCE_HZ: f64 = 1e-9;
/// Signatures within this distance of the supply frequency are flagged.
pub const NEAR_FUNDAMENTAL_HZ: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParameters {
    pub supply_frequency_hz: f64,
    pub pole_pairs: u32,
    pub slip: f64,
    pub n_balls: u32,
    pub ball_diameter_mm: f64,
    pub pitch_diameter_mm: f64,
    pub contact_angle_rad: f64,
    /// Frequencies attributed to unclassified mechanical defects.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mechanical_frequencies_hz: Vec<f64>,
}

impl Default for MotorParameters {
    /// 50 Hz, two pole pairs, 4% slip, nine-ball bearing with d/D = 0.3.
    fn default() -> Self {
        Self {
            supply_frequency_hz: 50.0,
            pole_pairs: 2,
            slip: 0.04,
            n_balls: 9,
            ball_diameter_mm: 7.5,
            pitch_diameter_mm: 25.0,
            contact_angle_rad: 0.0,
            mechanical_frequencies_hz: Vec::new(),
        }
    }
}

impl MotorParameters {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(SgdaError::InvalidMotor(m));
        if !(self.supply_frequency_hz > 0.0 && self.supply_frequency_hz.is_finite()) {
            return bad(format!(
                "supply_frequency_hz must be positive, got {}",
                self.supply_frequency_hz
            ));
        }
        if self.pole_pairs == 0 {
            return bad("pole_pairs must be positive".into());
        }
        if !(0.0..1.0).contains(&self.slip) {
            return bad(format!("slip must lie in [0, 1), got {}", self.slip));
        }
        if self.n_balls == 0 {
            return bad("n_balls must be positive".into());
        }
        if !(self.ball_diameter_mm > 0.0) {
            return bad("ball_diameter_mm must be positive".into());
        }
        if !(self.ball_diameter_mm < self.pitch_diameter_mm) {
            return bad(format!(
                "ball_diameter_mm ({}) must be below pitch_diameter_mm ({})",
                self.ball_diameter_mm, self.pitch_diameter_mm
            ));
        }
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&self.contact_angle_rad) {
            return bad(format!(
                "contact_angle_rad must lie in [0, pi/2), got {}",
                self.contact_angle_rad
            ));
        }
        if self.mechanical_frequencies_hz.iter().any(|f| !(*f > 0.0)) {
            return bad("mechanical_frequencies_hz must all be positive".into());
        }
        Ok(())
    }

    /// Parses the `key = value` configuration format.
    pub fn from_config_str(text: &str) -> Result<Self> {
        let params: Self = toml::from_str(text).map_err(|e| SgdaError::Config(e.to_string()))?;
        params.validate()?;
        Ok(params)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(SgdaError::MissingFile(path.to_path_buf()));
        }
        Self::from_config_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        toml::to_string(self).expect("motor parameters serialize")
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_config_string())?;
        Ok(())
    }

    fn diameter_ratio_cos(&self) -> f64 {
        self.ball_diameter_mm / self.pitch_diameter_mm * self.contact_angle_rad.cos()
    }

    /// Ball-pass frequency, outer race.
    pub fn bpfo(&self) -> f64 {
        self.n_balls as f64 / 2.0 * rotor_frequency(self) * (1.0 - self.diameter_ratio_cos())
    }

    /// Ball-pass frequency, inner race.
    pub fn bpfi(&self) -> f64 {
        self.n_balls as f64 / 2.0 * rotor_frequency(self) * (1.0 + self.diameter_ratio_cos())
    }

    /// Ball spin frequency.
    pub fn bsf(&self) -> f64 {
        let r = self.diameter_ratio_cos();
        self.pitch_diameter_mm / (2.0 * self.ball_diameter_mm) * rotor_frequency(self) * (1.0 - r * r)
    }
}

/// Mechanical rotor frequency `f_s (1 - s) / p`.
pub fn rotor_frequency(params: &MotorParameters) -> f64 {
    params.supply_frequency_hz * (1.0 - params.slip) / params.pole_pairs as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultClass {
    Healthy,
    RotorBar,
    Eccentricity,
    InterTurnShort,
    BearingOuterRace,
    BearingInnerRace,
    BearingBall,
    MechanicalOther,
}

impl FaultClass {
    pub const ALL: [FaultClass; 8] = [
        FaultClass::Healthy,
        FaultClass::RotorBar,
        FaultClass::Eccentricity,
        FaultClass::InterTurnShort,
        FaultClass::BearingOuterRace,
        FaultClass::BearingInnerRace,
        FaultClass::BearingBall,
        FaultClass::MechanicalOther,
    ];

    pub fn is_anomalous(self) -> bool {
        self != FaultClass::Healthy
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FaultClass::Healthy => "healthy",
            FaultClass::RotorBar => "rotor_bar",
            FaultClass::Eccentricity => "eccentricity",
            FaultClass::InterTurnShort => "inter_turn_short",
            FaultClass::BearingOuterRace => "bearing_outer_race",
            FaultClass::BearingInnerRace => "bearing_inner_race",
            FaultClass::BearingBall => "bearing_ball",
            FaultClass::MechanicalOther => "mechanical_other",
        }
    }
}

impl fmt::Display for FaultClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FaultClass {
    type Err = SgdaError;

    fn from_str(s: &str) -> Result<Self> {
        FaultClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| SgdaError::InvalidArgument(format!("unknown fault class `{s}`")))
    }
}

/// Frequencies at which one fault is expected to show up, ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignatureFrequencySet {
    pub fault: FaultClass,
    pub frequencies_hz: Vec<f64>,
    /// `(k, m)` per frequency: harmonic order and signed secondary index.
    pub harmonic_orders: Vec<(i32, i32)>,
    /// Set where a frequency sits within [`NEAR_FUNDAMENTAL_HZ`] of `f_s`.
    pub near_fundamental: Vec<bool>,
}

impl SignatureFrequencySet {
    pub fn len(&self) -> usize {
        self.frequencies_hz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frequencies_hz.is_empty()
    }
}

/// All formula-generated frequencies of `fault` with order up to `max_order`
/// inside `(0, band_limit_hz)`, sorted and deduplicated.
pub fn signature_frequencies(
    params: &MotorParameters,
    fault: FaultClass,
    max_order: u32,
    band_limit_hz: f64,
) -> Result<SignatureFrequencySet> {
    params.validate()?;
    if max_order == 0 {
        return Err(SgdaError::InvalidArgument("max_order must be at least 1".into()));
    }
    let fs = params.supply_frequency_hz;
    let s = params.slip;
    let p = params.pole_pairs as f64;
    let orders = 1..=max_order as i32;
    let mut raw: Vec<(f64, (i32, i32))> = Vec::new();
    let mut sidebands = |center: f64, offset: f64, k: i32| {
        raw.push((center - offset, (k, -1)));
        raw.push((center + offset, (k, 1)));
    };
    match fault {
        FaultClass::Healthy => return Err(SgdaError::HealthyHasNoSignature),
        FaultClass::RotorBar => {
            for k in orders {
                sidebands(fs, fs * 2.0 * k as f64 * s, k);
            }
        }
        FaultClass::Eccentricity => {
            for k in orders {
                sidebands(fs, fs * k as f64 * (1.0 - s) / p, k);
            }
        }
        FaultClass::InterTurnShort => {
            for k in orders {
                let base = k as f64 * (1.0 - s) / p;
                for m in [1, 3, 5] {
                    raw.push((fs * (base - m as f64), (k, -m)));
                    raw.push((fs * (base + m as f64), (k, m)));
                }
            }
        }
        FaultClass::BearingOuterRace | FaultClass::BearingInnerRace | FaultClass::BearingBall => {
            let fc = match fault {
                FaultClass::BearingOuterRace => params.bpfo(),
                FaultClass::BearingInnerRace => params.bpfi(),
                _ => params.bsf(),
            };
            for m in orders {
                sidebands(fs, m as f64 * fc, m);
            }
        }
        FaultClass::MechanicalOther => {
            if params.mechanical_frequencies_hz.is_empty() {
                return Err(SgdaError::RequiresExplicitFrequencies(fault));
            }
            for (i, &f) in params.mechanical_frequencies_hz.iter().enumerate() {
                raw.push((f, (0, i as i32 + 1)));
            }
        }
    }

    let mut folded: Vec<(f64, (i32, i32))> = raw
        .into_iter()
        .map(|(f, o)| (f.abs(), o))
        .filter(|(f, _)| *f > 0.0 && *f < band_limit_hz)
        .collect();
    folded.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out = SignatureFrequencySet {
        fault,
        frequencies_hz: Vec::new(),
        harmonic_orders: Vec::new(),
        near_fundamental: Vec::new(),
    };
    for (f, o) in folded {
        if let Some(&last) = out.frequencies_hz.last() {
            if f - last <= DEDUP_TOLERANCE_HZ {
                continue;
            }
        }
        out.frequencies_hz.push(f);
        out.harmonic_orders.push(o);
        out.near_fundamental.push((f - fs).abs() <= NEAR_FUNDAMENTAL_HZ);
    }
    Ok(out)
}
