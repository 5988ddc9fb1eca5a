use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::SeedStats;
use crate::error::{Result, SgdaError};

use super::runners::ExperimentOutcome;

/// Mean and spread of one model's metrics over seeds, with provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub experiment: String,
    pub model: String,
    pub severity_db: Option<f64>,
    pub count: Option<usize>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
    pub n_seeds: usize,
    pub seeds: String,
    pub generator: String,
    pub severity_grid: String,
    pub config_hash: String,
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(";")
}

/// Aggregates per-seed results, keeping first-appearance order of
/// `(model, severity, count)` groups.
pub fn summarize(outcome: &ExperimentOutcome) -> Result<Vec<ReportRow>> {
    let cfg = &outcome.config;
    let mut keys: Vec<(String, Option<u64>, Option<usize>)> = Vec::new();
    for r in &outcome.results {
        let key = (r.model.clone(), r.severity_db.map(f64::to_bits), r.count);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    let hash = cfg.config_hash();
    keys.into_iter()
        .map(|(model, sev, count)| {
            let group: Vec<_> = outcome
                .results
                .iter()
                .filter(|r| r.model == model && r.severity_db.map(f64::to_bits) == sev && r.count == count)
                .collect();
            let acc = SeedStats::from_values(&group.iter().map(|r| r.report.accuracy).collect::<Vec<_>>())?;
            let f1 = SeedStats::from_values(&group.iter().map(|r| r.report.macro_f1).collect::<Vec<_>>())?;
            Ok(ReportRow {
                experiment: cfg.experiment.to_string(),
                model,
                severity_db: sev.map(f64::from_bits),
                count,
                accuracy_mean: acc.mean,
                accuracy_std: acc.std,
                f1_mean: f1.mean,
                f1_std: f1.std,
                n_seeds: acc.n,
                seeds: join(&group.iter().map(|r| r.seed).collect::<Vec<_>>()),
                generator: cfg.generator.clone(),
                severity_grid: join(&cfg.severity_db),
                config_hash: hash.clone(),
            })
        })
        .collect()
}

pub fn rows_to_csv(rows: &[ReportRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| SgdaError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_from_csv(path: impl AsRef<Path>) -> Result<Vec<ReportRow>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(SgdaError::MissingFile(path.to_path_buf()));
    }
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<ReportRow>, _>>()?)
}

/// One line per seed and model with the full per-class breakdown.
pub fn per_seed_csv(outcome: &ExperimentOutcome) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["experiment", "model", "severity_db", "count", "seed", "accuracy", "macro_f1", "n_test", "confusion"])?;
    for r in &outcome.results {
        let confusion = r
            .report
            .confusion
            .iter()
            .map(|row| join(row))
            .collect::<Vec<_>>()
            .join("|");
        w.write_record([
            outcome.config.experiment.to_string(),
            r.model.clone(),
            r.severity_db.map(|d| d.to_string()).unwrap_or_default(),
            r.count.map(|c| c.to_string()).unwrap_or_default(),
            r.seed.to_string(),
            r.report.accuracy.to_string(),
            r.report.macro_f1.to_string(),
            r.report.n_test.to_string(),
            confusion,
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| SgdaError::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn pct(mean: f64, std: f64) -> String {
    format!("{:6.2} ± {:5.2}", 100.0 * mean, 100.0 * std)
}

/// Plain-text table: one line per row, or a model × count grid when rows
/// carry counts.
pub fn render_table(rows: &[ReportRow]) -> String {
    let mut out = String::new();
    if rows.is_empty() {
        return out;
    }
    if rows.iter().all(|r| r.count.is_some()) {
        let mut counts: Vec<usize> = rows.iter().filter_map(|r| r.count).collect();
        counts.sort_unstable();
        counts.dedup();
        let mut models: Vec<&str> = Vec::new();
        for r in rows {
            if !models.contains(&r.model.as_str()) {
                models.push(&r.model);
            }
        }
        let _ = write!(out, "{:<14}", "model \\ count");
        for c in &counts {
            let _ = write!(out, " | {:>15}", c);
        }
        out.push('\n');
        for m in models {
            let _ = write!(out, "{m:<14}");
            for c in &counts {
                let cell = rows
                    .iter()
                    .find(|r| r.model == m && r.count == Some(*c))
                    .map(|r| pct(r.accuracy_mean, r.accuracy_std))
                    .unwrap_or_default();
                let _ = write!(out, " | {cell:>15}");
            }
            out.push('\n');
        }
    } else {
        let _ = writeln!(out, "{:<14} | {:>8} | {:>15} | {:>13}", "model", "severity", "accuracy (%)", "macro F1");
        for r in rows {
            let sev = r.severity_db.map(|d| format!("{d} dB")).unwrap_or_else(|| "-".into());
            let _ = writeln!(
                out,
                "{:<14} | {:>8} | {:>15} | {:.2} ± {:.2}",
                r.model,
                sev,
                pct(r.accuracy_mean, r.accuracy_std),
                r.f1_mean,
                r.f1_std
            );
        }
    }
    if let Some(r) = rows.first() {
        let _ = writeln!(
            out,
            "{} | generator {} | seeds {} | severity {} | config {}",
            r.experiment,
            r.generator,
            r.seeds,
            r.severity_grid,
            &r.config_hash[..16.min(r.config_hash.len())]
        );
    }
    out
}

/// Writes config, summary CSV, per-seed CSV and the text table into the
/// run directory; returns that directory.
pub fn write_run(outcome: &ExperimentOutcome) -> Result<PathBuf> {
    let dir = outcome.config.run_dir();
    fs::create_dir_all(&dir)?;
    let rows = summarize(outcome)?;
    fs::write(dir.join("config.toml"), outcome.config.canonical_toml())?;
    fs::write(dir.join("report.csv"), rows_to_csv(&rows)?)?;
    fs::write(dir.join("per_seed.csv"), per_seed_csv(outcome)?)?;
    fs::write(dir.join("report.txt"), render_table(&rows))?;
    Ok(dir)
}
