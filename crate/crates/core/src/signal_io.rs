//! Current recordings on disk, fixed-length windowing, and dataset manifests.
//!
//! Recording CSV:
//!
//! ```text
//! # optional comment lines
//! time_s,current_a[,current_b,...]
//! 0.0,1.0
//! ```
//!
//! The sample rate is never inferred from the time column; it comes from the
//! manifest that references the file.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, SgdaError};
use crate::motor_model::{FaultClass, MotorParameters};

pub const DEFAULT_SAMPLE_RATE_HZ: f64 = 8192.0;
pub const DEFAULT_WINDOW_LEN: usize = 8192;
pub const DEFAULT_HOP: usize = DEFAULT_WINDOW_LEN / 2;
pub const MANIFEST_VERSION: u32 = 1;

/// `None` is the unlabeled state.
pub type Label = Option<FaultClass>;

pub fn label_str(label: Label) -> &'static str {
    label.map_or("unlabeled", FaultClass::as_str)
}

pub fn parse_label(s: &str) -> Result<Label> {
    if s == "unlabeled" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

/// One phase of stator current sampled at a fixed rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CurrentRecording {
    pub sample_rate_hz: f64,
    pub samples: Vec<f64>,
    pub source_id: String,
    pub label: Label,
}

impl CurrentRecording {
    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(SgdaError::NoSamples(self.source_id.clone()));
        }
        if !(self.sample_rate_hz > 0.0) {
            return Err(SgdaError::InvalidArgument(format!(
                "sample rate must be positive, got {}",
                self.sample_rate_hz
            )));
        }
        if let Some(v) = self.samples.iter().find(|v| !v.is_finite()) {
            return Err(SgdaError::InvalidArgument(format!(
                "non-finite sample {v} in {}",
                self.source_id
            )));
        }
        Ok(())
    }

    /// Checks the Nyquist condition for a downstream band limit.
    pub fn supports_band(&self, band_limit_hz: f64) -> Result<()> {
        if self.sample_rate_hz < 2.0 * band_limit_hz {
            return Err(SgdaError::InvalidArgument(format!(
                "sample rate {} Hz cannot resolve a {} Hz band",
                self.sample_rate_hz, band_limit_hz
            )));
        }
        Ok(())
    }
}

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> SgdaError {
    SgdaError::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Loads every phase column of a recording CSV, one recording per column.
///
/// Source ids are the file stem, suffixed with the column name when the file
/// holds more than one phase.
pub fn load_recording_phases(
    path: impl AsRef<Path>,
    sample_rate_hz: f64,
    label: Label,
) -> Result<Vec<CurrentRecording>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(SgdaError::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers = reader.headers()?.clone();
    let header_line = headers.position().map_or(1, |p| p.line());
    if headers.len() < 2 || &headers[0] != "time_s" || !headers.iter().skip(1).all(|h| h.starts_with("current_")) {
        return Err(parse_err(
            path,
            header_line,
            format!("expected header `time_s,current_a`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let n_phases = headers.len() - 1;
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); n_phases];
    for record in reader.records() {
        let record = match record {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                return Err(parse_err(path, line, format!("malformed row: {e}")));
            }
        };
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(parse_err(path, line, format!("expected {} fields", headers.len())));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(path, line, format!("malformed number `{field}`")))?;
            if !v.is_finite() {
                return Err(parse_err(path, line, format!("non-finite value `{field}`")));
            }
            if col > 0 {
                columns[col - 1].push(v);
            }
        }
    }
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let mut out = Vec::with_capacity(n_phases);
    for (samples, name) in columns.into_iter().zip(headers.iter().skip(1)) {
        if samples.is_empty() {
            return Err(SgdaError::NoSamples(path.display().to_string()));
        }
        let source_id = if n_phases == 1 {
            stem.clone()
        } else {
            format!("{stem}:{name}")
        };
        let rec = CurrentRecording {
            sample_rate_hz,
            samples,
            source_id,
            label,
        };
        rec.validate()?;
        out.push(rec);
    }
    Ok(out)
}

/// Loads the first phase of a recording CSV.
pub fn load_recording(path: impl AsRef<Path>, sample_rate_hz: f64, label: Label) -> Result<CurrentRecording> {
    Ok(load_recording_phases(path, sample_rate_hz, label)?.swap_remove(0))
}

pub fn save_recording(path: impl AsRef<Path>, rec: &CurrentRecording) -> Result<()> {
    rec.validate()?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# source_id: {}", rec.source_id)?;
    writeln!(w, "# label: {}", label_str(rec.label))?;
    writeln!(w, "# sample_rate_hz: {}", rec.sample_rate_hz)?;
    writeln!(w, "time_s,current_a")?;
    for (i, v) in rec.samples.iter().enumerate() {
        writeln!(w, "{},{}", i as f64 / rec.sample_rate_hz, v)?;
    }
    w.flush()?;
    Ok(())
}

/// Consecutive windows of `window_len` samples stepping by `hop`; the
/// trailing remainder is dropped.
pub fn split_windows(rec: &CurrentRecording, window_len: usize, hop: usize) -> Result<Vec<&[f64]>> {
    if window_len == 0 || hop == 0 {
        return Err(SgdaError::InvalidArgument("window length and hop must be positive".into()));
    }
    let len = rec.samples.len();
    if window_len > len {
        return Err(SgdaError::RecordingTooShort {
            len,
            window: window_len,
        });
    }
    let count = (len - window_len) / hop + 1;
    Ok((0..count)
        .map(|i| &rec.samples[i * hop..i * hop + window_len])
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManifestEntry {
    /// Relative paths resolve against the manifest's directory.
    pub path: PathBuf,
    pub label: Label,
    pub motor_config: PathBuf,
}

/// Index of recordings with their labels and motor configurations.
///
/// ```text
/// format_version=1
/// sample_rate_hz=8192
/// path,label,motor_config
/// healthy_000.csv,healthy,motor.toml
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub sample_rate_hz: f64,
    pub entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl DatasetManifest {
    pub fn new(sample_rate_hz: f64, entries: Vec<ManifestEntry>) -> Self {
        Self {
            format_version: MANIFEST_VERSION,
            sample_rate_hz,
            entries,
            base_dir: PathBuf::new(),
        }
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "format_version={}\nsample_rate_hz={}\npath,label,motor_config\n",
            self.format_version, self.sample_rate_hz
        );
        for e in &self.entries {
            s.push_str(&format!(
                "{},{},{}\n",
                e.path.display(),
                label_str(e.label),
                e.motor_config.display()
            ));
        }
        s
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Parses a manifest and checks that every referenced file exists.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(SgdaError::MissingFile(path.to_path_buf()));
        }
        let text = std::fs::read_to_string(path)?;
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i as u64 + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut field = |key: &str| -> Result<(u64, String)> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| parse_err(path, 0, format!("missing `{key}`")))?;
            match l.split_once('=') {
                Some((k, v)) if k.trim() == key => Ok((n, v.trim().to_string())),
                _ => Err(parse_err(path, n, format!("expected `{key}=...`"))),
            }
        };
        let (n, version) = field("format_version")?;
        let format_version: u32 = version
            .parse()
            .map_err(|_| parse_err(path, n, "format_version must be an integer"))?;
        if format_version != MANIFEST_VERSION {
            return Err(parse_err(path, n, format!("unsupported manifest version {format_version}")));
        }
        let (n, rate) = field("sample_rate_hz")?;
        let sample_rate_hz: f64 = rate
            .parse()
            .map_err(|_| parse_err(path, n, "sample_rate_hz must be a number"))?;
        match lines.next() {
            Some((_, "path,label,motor_config")) => {}
            Some((n, _)) => return Err(parse_err(path, n, "expected header `path,label,motor_config`")),
            None => return Err(parse_err(path, 0, "missing entry header")),
        }
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let mut entries = Vec::new();
        for (n, l) in lines {
            let parts: Vec<&str> = l.split(',').map(str::trim).collect();
            let [p, label, motor] = parts[..] else {
                return Err(parse_err(path, n, "expected `path,label,motor_config`"));
            };
            let label = parse_label(label).map_err(|e| parse_err(path, n, e.to_string()))?;
            entries.push(ManifestEntry {
                path: PathBuf::from(p),
                label,
                motor_config: PathBuf::from(motor),
            });
        }
        let manifest = Self {
            format_version,
            sample_rate_hz,
            entries,
            base_dir,
        };
        for e in &manifest.entries {
            for p in [&e.path, &e.motor_config] {
                let full = manifest.resolve(p);
                if !full.exists() {
                    return Err(SgdaError::MissingFile(full));
                }
            }
        }
        Ok(manifest)
    }

    /// Loads every recording (all phases) referenced by the manifest.
    pub fn load_recordings(&self) -> Result<Vec<CurrentRecording>> {
        let mut out = Vec::new();
        for e in &self.entries {
            out.extend(load_recording_phases(self.resolve(&e.path), self.sample_rate_hz, e.label)?);
        }
        Ok(out)
    }

    /// Distinct motor configurations referenced, parsed.
    pub fn motors(&self) -> Result<Vec<(PathBuf, MotorParameters)>> {
        let paths: BTreeSet<&PathBuf> = self.entries.iter().map(|e| &e.motor_config).collect();
        paths
            .into_iter()
            .map(|p| Ok((p.clone(), MotorParameters::load(self.resolve(p))?)))
            .collect()
    }
}
