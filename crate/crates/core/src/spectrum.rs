//! Magnitude spectra of current windows, truncated to the diagnostic band.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Result, SgdaError};
use crate::signal_io::{split_windows, CurrentRecording, Label};

/// Number of low-frequency bins kept from every spectrum.
pub const SPECTRUM_BINS: usize = 250;

/// A truncated one-sided magnitude spectrum of one time window.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumWindow {
    pub magnitudes: Vec<f64>,
    pub bin_width_hz: f64,
    pub source_id: String,
    pub window_index: usize,
    pub label: Label,
}

impl SpectrumWindow {
    pub fn n_bins(&self) -> usize {
        self.magnitudes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.magnitudes.len() != SPECTRUM_BINS {
            return Err(SgdaError::InvalidArgument(format!(
                "spectrum window must hold {SPECTRUM_BINS} bins, got {}",
                self.magnitudes.len()
            )));
        }
        if let Some(v) = self.magnitudes.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(SgdaError::InvalidArgument(format!("invalid magnitude {v}")));
        }
        Ok(())
    }

    pub fn with_label(mut self, label: Label) -> Self {
        self.label = label;
        self
    }
}

/// In-place iterative radix-2 complex FFT; `buf.len()` must be a power of two.
fn fft_in_place(buf: &mut [Complex64]) {
    let n = buf.len();
    if n <= 1 {
        return;
    }
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let step = Complex64::from_polar(1.0, -2.0 * PI / size as f64);
        for start in (0..n).step_by(size) {
            let mut w = Complex64::new(1.0, 0.0);
            for k in 0..half {
                // recompute the twiddle periodically to bound drift
                if k % 64 == 0 {
                    w = Complex64::from_polar(1.0, -2.0 * PI * k as f64 / size as f64);
                }
                let a = buf[start + k];
                let b = buf[start + k + half] * w;
                buf[start + k] = a + b;
                buf[start + k + half] = a - b;
                w *= step;
            }
        }
        size *= 2;
    }
}

/// One-sided DFT `X_0 ..= X_{N/2}` of a real signal using a half-length
/// complex transform.
pub fn real_fft(x: &[f64]) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n < 2 || !n.is_power_of_two() {
        return Err(SgdaError::InvalidArgument(format!(
            "FFT length must be a power of two >= 2, got {n}"
        )));
    }
    if let Some(v) = x.iter().find(|v| !v.is_finite()) {
        return Err(SgdaError::InvalidArgument(format!("non-finite FFT input {v}")));
    }
    let h = n / 2;
    let mut z: Vec<Complex64> = (0..h).map(|i| Complex64::new(x[2 * i], x[2 * i + 1])).collect();
    fft_in_place(&mut z);
    let mut out = Vec::with_capacity(h + 1);
    for k in 0..=h {
        let zk = z[k % h];
        let zc = z[(h - k) % h].conj();
        let even = (zk + zc) * 0.5;
        let odd = (zk - zc) * Complex64::new(0.0, -0.5);
        let tw = Complex64::from_polar(1.0, -2.0 * PI * k as f64 / n as f64);
        out.push(even + tw * odd);
    }
    Ok(out)
}

/// Unnormalized one-sided magnitude spectrum `|Σ x_t e^{-i2πkt/N}|`,
/// `N/2 + 1` bins with DC first.
pub fn fft_magnitude(window: &[f64]) -> Result<Vec<f64>> {
    Ok(real_fft(window)?.into_iter().map(|c| c.norm()).collect())
}

/// Zero-pads `samples` to the next power of two and returns the magnitude
/// spectrum with its bin width.
pub fn padded_magnitude(samples: &[f64], sample_rate_hz: f64) -> Result<(Vec<f64>, f64)> {
    let n = samples.len().max(2).next_power_of_two();
    let mut buf = samples.to_vec();
    buf.resize(n, 0.0);
    Ok((fft_magnitude(&buf)?, sample_rate_hz / n as f64))
}

/// Keeps the first `n_bins` bins of a magnitude spectrum.
pub fn truncate_spectrum(mags: &[f64], bin_width_hz: f64, n_bins: usize) -> Result<SpectrumWindow> {
    if mags.len() < n_bins {
        return Err(SgdaError::TruncationTooShort {
            len: mags.len(),
            needed: n_bins,
        });
    }
    if !(bin_width_hz > 0.0) {
        return Err(SgdaError::InvalidArgument(format!(
            "bin width must be positive, got {bin_width_hz}"
        )));
    }
    Ok(SpectrumWindow {
        magnitudes: mags[..n_bins].to_vec(),
        bin_width_hz,
        source_id: String::new(),
        window_index: 0,
        label: None,
    })
}

/// Spectrum of one time window, truncated to [`SPECTRUM_BINS`].
pub fn window_spectrum(
    samples: &[f64],
    sample_rate_hz: f64,
    source_id: &str,
    window_index: usize,
    label: Label,
) -> Result<SpectrumWindow> {
    let (mags, width) = padded_magnitude(samples, sample_rate_hz)?;
    let mut w = truncate_spectrum(&mags, width, SPECTRUM_BINS)?;
    w.source_id = source_id.to_string();
    w.window_index = window_index;
    w.label = label;
    Ok(w)
}

/// Nearest bin (ties to even) of `f_hz`, which must land inside the band.
pub fn frequency_to_bin(f_hz: f64, bin_width_hz: f64) -> Result<usize> {
    if !(f_hz >= 0.0) || !(bin_width_hz > 0.0) {
        return Err(SgdaError::InvalidArgument(format!(
            "cannot map {f_hz} Hz at {bin_width_hz} Hz/bin"
        )));
    }
    let bin = (f_hz / bin_width_hz).round_ties_even();
    if bin >= SPECTRUM_BINS as f64 {
        return Err(SgdaError::OutsideBand {
            freq_hz: f_hz,
            bin: bin as usize,
        });
    }
    Ok(bin as usize)
}

/// Spectra of every window of a recording, labeled with the recording.
pub fn recording_spectra(rec: &CurrentRecording, window_len: usize, hop: usize) -> Result<Vec<SpectrumWindow>> {
    split_windows(rec, window_len, hop)?
        .into_iter()
        .enumerate()
        .map(|(i, w)| window_spectrum(w, rec.sample_rate_hz, &rec.source_id, i, rec.label))
        .collect()
}
