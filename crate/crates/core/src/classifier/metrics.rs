use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{class_index, Classifier};
use crate::dataset::LabeledDataset;
use crate::error::{Result, SgdaError};
use crate::motor_model::FaultClass;

/// Mean and sample standard deviation of one metric across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedStats {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl SeedStats {
    /// `std` is the `n - 1` estimate, and 0 for a single value.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(SgdaError::InvalidArgument("no values to summarize".into()));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self { mean, std, n })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<FaultClass>,
    pub accuracy: f64,
    /// Unweighted mean over classes that occur in the truth or predictions.
    pub macro_f1: f64,
    pub per_class_f1: BTreeMap<FaultClass, f64>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub n_test: usize,
}

/// F1 of every class from a confusion matrix; `None` for classes that
/// neither occur nor get predicted.
pub fn f1_scores(confusion: &[Vec<usize>]) -> Vec<Option<f64>> {
    let n = confusion.len();
    (0..n)
        .map(|k| {
            let tp = confusion[k][k] as f64;
            let support: usize = confusion[k].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[k]).sum();
            if support == 0 && predicted == 0 {
                return None;
            }
            let denom = (support + predicted) as f64;
            Some(2.0 * tp / denom)
        })
        .collect()
}

pub fn report_from_predictions(classes: &[FaultClass], truth: &[usize], pred: &[usize]) -> Result<EvalReport> {
    if truth.is_empty() {
        return Err(SgdaError::EmptyDataset("test set is empty".into()));
    }
    if truth.len() != pred.len() {
        return Err(SgdaError::InvalidArgument("truth and predictions differ in length".into()));
    }
    let n = classes.len();
    let mut confusion = vec![vec![0usize; n]; n];
    for (&t, &p) in truth.iter().zip(pred) {
        if t >= n || p >= n {
            return Err(SgdaError::InvalidArgument("class index out of range".into()));
        }
        confusion[t][p] += 1;
    }
    let correct: usize = (0..n).map(|k| confusion[k][k]).sum();
    let f1 = f1_scores(&confusion);
    let present: Vec<f64> = f1.iter().flatten().copied().collect();
    let per_class_f1 = classes
        .iter()
        .zip(&f1)
        .filter_map(|(&c, f)| f.map(|v| (c, v)))
        .collect();
    Ok(EvalReport {
        classes: classes.to_vec(),
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: present.iter().sum::<f64>() / present.len() as f64,
        per_class_f1,
        confusion,
        n_test: truth.len(),
    })
}

pub fn evaluate(model: &dyn Classifier, test: &LabeledDataset) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(SgdaError::EmptyDataset("test set is empty".into()));
    }
    let classes = model.classes();
    let truth = test
        .windows
        .iter()
        .map(|w| class_index(classes, w.label))
        .collect::<Result<Vec<_>>>()?;
    let windows: Vec<_> = test.windows.iter().collect();
    let pred: Vec<usize> = model
        .logits(&windows)?
        .iter()
        .map(|l| sgda_neural::argmax(l))
        .collect();
    report_from_predictions(classes, &truth, &pred)
}

#[cfg(test)]
mod tests {
    use super::*;

    const BIN: [FaultClass; 2] = [FaultClass::Healthy, FaultClass::RotorBar];

    #[test]
    fn perfect() {
        let r = report_from_predictions(&BIN, &[0, 1, 1, 0], &[0, 1, 1, 0]).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 2]]);
    }

    #[test]
    fn constant_predictor() {
        let r = report_from_predictions(&BIN, &[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!((r.per_class_f1[&FaultClass::Healthy] - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_class_f1[&FaultClass::RotorBar], 0.0);
        assert!((r.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn absent_classes_are_skipped() {
        let classes = [FaultClass::Healthy, FaultClass::RotorBar, FaultClass::BearingBall];
        let r = report_from_predictions(&classes, &[0, 1], &[0, 1]).unwrap();
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.per_class_f1.len(), 2);
        assert_eq!(r.confusion[2], vec![0, 0, 0]);
    }

    #[test]
    fn empty_is_error() {
        assert!(report_from_predictions(&BIN, &[], &[]).is_err());
    }

    #[test]
    fn seed_stats() {
        let s = SeedStats::from_values(&[0.9]).unwrap();
        assert_eq!((s.mean, s.std), (0.9, 0.0));
        let s = SeedStats::from_values(&[1.0, 2.0, 3.0]).unwrap();
        assert_eq!((s.mean, s.std), (2.0, 1.0));
    }
}
