//! Labeled collections of spectrum windows and their CSV form.
//!
//! One row per window: `source_id,window,label,bin_width_hz,b0,...,b249`.
//! Values are written in shortest round-trip form, so a save/load cycle is
//! bit-exact.

use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Result, SgdaError};
use crate::motor_model::FaultClass;
use crate::signal_io::{label_str, parse_label, Label};
use crate::spectrum::{SpectrumWindow, SPECTRUM_BINS};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabeledDataset {
    pub windows: Vec<SpectrumWindow>,
}

impl LabeledDataset {
    pub fn new(windows: Vec<SpectrumWindow>) -> Self {
        Self { windows }
    }

    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    pub fn extend(&mut self, other: LabeledDataset) {
        self.windows.extend(other.windows);
    }

    pub fn class_counts(&self) -> BTreeMap<Label, usize> {
        let mut counts = BTreeMap::new();
        for w in &self.windows {
            *counts.entry(w.label).or_insert(0) += 1;
        }
        counts
    }

    /// Distinct labelled classes, in enum order.
    pub fn classes(&self) -> Vec<FaultClass> {
        self.class_counts().keys().filter_map(|l| *l).collect()
    }

    pub fn is_balanced(&self) -> bool {
        let counts = self.class_counts();
        let mut it = counts.values();
        match it.next() {
            Some(first) => it.all(|c| c == first),
            None => true,
        }
    }

    pub fn source_ids(&self) -> std::collections::BTreeSet<&str> {
        self.windows.iter().map(|w| w.source_id.as_str()).collect()
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        self.write_to(&mut w)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        self.write_to(&mut w)?;
        let bytes = w.into_inner().map_err(|e| SgdaError::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }

    fn write_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        let mut header = vec![
            "source_id".to_string(),
            "window".into(),
            "label".into(),
            "bin_width_hz".into(),
        ];
        header.extend((0..SPECTRUM_BINS).map(|i| format!("b{i}")));
        w.write_record(&header)?;
        for win in &self.windows {
            let mut row = vec![
                win.source_id.clone(),
                win.window_index.to_string(),
                label_str(win.label).to_string(),
                win.bin_width_hz.to_string(),
            ];
            row.extend(win.magnitudes.iter().map(f64::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(SgdaError::MissingFile(path.to_path_buf()));
        }
        let mut reader = csv::Reader::from_path(path)?;
        let mut windows = Vec::new();
        for rec in reader.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            let bad = |m: String| SgdaError::Parse {
                path: path.display().to_string(),
                line,
                message: m,
            };
            if rec.len() != 4 + SPECTRUM_BINS {
                return Err(bad(format!("expected {} fields, got {}", 4 + SPECTRUM_BINS, rec.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("malformed number `{s}`")));
            let window = SpectrumWindow {
                source_id: rec[0].to_string(),
                window_index: rec[1].parse().map_err(|_| bad("malformed window index".into()))?,
                label: parse_label(&rec[2]).map_err(|e| bad(e.to_string()))?,
                bin_width_hz: num(&rec[3])?,
                magnitudes: rec.iter().skip(4).map(num).collect::<Result<_>>()?,
            };
            window.validate().map_err(|e| bad(e.to_string()))?;
            windows.push(window);
        }
        Ok(Self { windows })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn csv_round_trip_preserves_values(mags in prop::collection::vec(0.0f64..1e5, SPECTRUM_BINS)) {
            let ds = LabeledDataset::new(vec![SpectrumWindow {
                magnitudes: mags,
                bin_width_hz: 1.0,
                source_id: "rec-1".into(),
                window_index: 3,
                label: Some(FaultClass::BearingBall),
            }]);
            let dir = tempfile::tempdir().unwrap();
            let p = dir.path().join("d.csv");
            ds.write_csv(&p).unwrap();
            prop_assert_eq!(LabeledDataset::read_csv(&p).unwrap(), ds);
        }
    }

    #[test]
    fn balance_check() {
        let w = |l| SpectrumWindow {
            magnitudes: vec![0.0; SPECTRUM_BINS],
            bin_width_hz: 1.0,
            source_id: String::new(),
            window_index: 0,
            label: Some(l),
        };
        let mut ds = LabeledDataset::new(vec![w(FaultClass::Healthy), w(FaultClass::RotorBar)]);
        assert!(ds.is_balanced());
        ds.windows.push(w(FaultClass::RotorBar));
        assert!(!ds.is_balanced());
        assert_eq!(ds.classes(), vec![FaultClass::Healthy, FaultClass::RotorBar]);
    }
}
