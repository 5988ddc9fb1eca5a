//! Synthetic fault injection into healthy spectra.
//!
//! A fault is fabricated by placing one peak, 20 bins wide, at one of the
//! fault's signature frequencies. Peak shapes come from a [`PeakSource`]; the
//! shape is rescaled into the target window's own amplitude range and merged
//! with an element-wise maximum, so bins outside the segment never change.

use std::collections::BTreeMap;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Result, SgdaError};
use crate::motor_model::{signature_frequencies, FaultClass, MotorParameters};
use crate::spectrum::{frequency_to_bin, SpectrumWindow};
use crate::vae::{VaeConfig, VaePeakSource};

pub const SEGMENT_LEN: usize = 20;
/// Bins left of the center bin; the segment spans `[c - 10, c + 9]`.
pub const SEGMENT_LEFT: usize = 10;

/// A min-max normalized 20-bin slice of a spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakSegment {
    pub values: Vec<f64>,
    /// Spectrum bin the segment was cut around; `None` for generated shapes.
    pub center_bin: Option<usize>,
    pub seg_min: f64,
    pub seg_max: f64,
    /// Zero-range input; values are all zero.
    pub degenerate: bool,
}

impl PeakSegment {
    /// Normalizes raw values to `[0, 1]`, remembering the original range.
    pub fn from_raw(raw: &[f64], center_bin: Option<usize>) -> Self {
        let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
        let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        let degenerate = !(range > 0.0);
        let values = if degenerate {
            vec![0.0; raw.len()]
        } else {
            raw.iter().map(|v| (v - min) / range).collect()
        };
        Self {
            values,
            center_bin,
            seg_min: min,
            seg_max: max,
            degenerate,
        }
    }
}

fn segment_range(center: usize, n_bins: usize) -> Result<Range<usize>> {
    if center < SEGMENT_LEFT || center + SEGMENT_LEN - SEGMENT_LEFT > n_bins {
        return Err(SgdaError::SegmentOutOfBand { center, n_bins });
    }
    Ok(center - SEGMENT_LEFT..center - SEGMENT_LEFT + SEGMENT_LEN)
}

/// Whether a 20-bin segment around `center` fits inside `n_bins`.
pub fn segment_fits(center: usize, n_bins: usize) -> bool {
    segment_range(center, n_bins).is_ok()
}

pub fn extract_segment(spec: &SpectrumWindow, center_bin: usize) -> Result<PeakSegment> {
    let r = segment_range(center_bin, spec.n_bins())?;
    Ok(PeakSegment::from_raw(&spec.magnitudes[r], Some(center_bin)))
}

/// Unit impulse at the segment center smoothed by a Gaussian kernel of
/// standard deviation `width_bins`, scaled to peak at `amplitude`.
pub fn gaussian_peak(width_bins: f64, amplitude: f64) -> Result<PeakSegment> {
    if !(width_bins > 0.0) {
        return Err(SgdaError::InvalidArgument(format!(
            "gaussian width must be positive, got {width_bins}"
        )));
    }
    if !(amplitude > 0.0 && amplitude <= 1.0) {
        return Err(SgdaError::InvalidArgument(format!(
            "gaussian amplitude must lie in (0, 1], got {amplitude}"
        )));
    }
    // kernel evaluated at integer offsets from the impulse; the impulse sits
    // on the center bin so the maximum is the kernel's own peak
    let values: Vec<f64> = (0..SEGMENT_LEN)
        .map(|i| {
            let d = i as f64 - SEGMENT_LEFT as f64;
            amplitude * (-d * d / (2.0 * width_bins * width_bins)).exp()
        })
        .collect();
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(PeakSegment {
        values,
        center_bin: None,
        seg_min: min,
        seg_max: amplitude,
        degenerate: false,
    })
}

/// Affine map of normalized values onto `[target_min, target_max]`.
pub fn denormalize(seg: &PeakSegment, target_min: f64, target_max: f64) -> Result<Vec<f64>> {
    if !(target_max >= target_min) {
        return Err(SgdaError::InvalidArgument(format!(
            "denormalize range [{target_min}, {target_max}] is inverted"
        )));
    }
    let span = target_max - target_min;
    Ok(seg.values.iter().map(|v| target_min + v * span).collect())
}

/// Merges `segment` into `spec` around `center_bin` by element-wise maximum
/// and relabels the window.
pub fn insert_peak(
    spec: &SpectrumWindow,
    segment: &[f64],
    center_bin: usize,
    label: FaultClass,
) -> Result<SpectrumWindow> {
    if segment.len() != SEGMENT_LEN {
        return Err(SgdaError::InvalidArgument(format!(
            "peak segment must hold {SEGMENT_LEN} values, got {}",
            segment.len()
        )));
    }
    let r = segment_range(center_bin, spec.n_bins())?;
    let mut out = spec.clone();
    for (bin, &v) in out.magnitudes[r].iter_mut().zip(segment) {
        *bin = bin.max(v);
    }
    out.label = Some(label);
    Ok(out)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Source of normalized peak shapes.
pub trait PeakSource {
    fn name(&self) -> &'static str;

    /// One peak shape with values in `[0, 1]` and its maximum near the
    /// segment center.
    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<PeakSegment>;

    /// Parameters recorded alongside augmented datasets.
    fn describe(&self) -> serde_json::Value;
}

/// Gaussian-kernel peaks with a width drawn per sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianKernelPeaks {
    pub sigma_min_bins: f64,
    pub sigma_max_bins: f64,
}

impl Default for GaussianKernelPeaks {
    fn default() -> Self {
        Self {
            sigma_min_bins: 0.5,
            sigma_max_bins: 2.0,
        }
    }
}

impl PeakSource for GaussianKernelPeaks {
    fn name(&self) -> &'static str {
        "gaussian"
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Result<PeakSegment> {
        let sigma = rng.gen_range(self.sigma_min_bins..=self.sigma_max_bins);
        gaussian_peak(sigma, 1.0)
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "sigma_min_bins": self.sigma_min_bins,
            "sigma_max_bins": self.sigma_max_bins,
        })
    }
}

/// Inputs a generator factory may draw on.
pub struct PeakSourceContext<'a> {
    pub healthy: &'a [SpectrumWindow],
    pub params: &'a MotorParameters,
    pub seed: u64,
    pub gaussian: GaussianKernelPeaks,
    pub vae: VaeConfig,
}

pub type PeakSourceFactory = fn(&PeakSourceContext<'_>) -> Result<Box<dyn PeakSource>>;

/// Peak generators selectable by name.
pub struct PeakSourceRegistry {
    factories: BTreeMap<&'static str, PeakSourceFactory>,
}

impl Default for PeakSourceRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register("gaussian", |ctx| Ok(Box::new(ctx.gaussian)));
        r.register("vae", |ctx| {
            let cfg = VaeConfig {
                seed: ctx.seed,
                ..ctx.vae.clone()
            };
            Ok(Box::new(VaePeakSource::fit_on_healthy(ctx.healthy, ctx.params, &cfg)?))
        });
        r
    }
}

impl PeakSourceRegistry {
    pub fn register(&mut self, name: &'static str, factory: PeakSourceFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.factories.keys().copied().collect()
    }

    pub fn build(&self, name: &str, ctx: &PeakSourceContext<'_>) -> Result<Box<dyn PeakSource>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            SgdaError::InvalidArgument(format!(
                "unknown peak generator `{name}` (known: {})",
                self.names().join(", ")
            ))
        })?;
        factory(ctx)
    }
}

/// Peak height relative to the window: `baseline + U[lo, hi] (max - baseline)`
/// with `baseline` the median of the original segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmplitudePolicy {
    pub min_fraction: f64,
    pub max_fraction: f64,
}

impl Default for AmplitudePolicy {
    fn default() -> Self {
        Self {
            min_fraction: 0.3,
            max_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentOptions {
    pub max_order: u32,
    pub amplitude: AmplitudePolicy,
}

impl Default for AugmentOptions {
    fn default() -> Self {
        Self {
            max_order: 1,
            amplitude: AmplitudePolicy::default(),
        }
    }
}

/// Where and how one synthetic fault was placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Injection {
    pub output_index: usize,
    pub source_index: usize,
    pub fault: FaultClass,
    pub center_bin: usize,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub dataset: LabeledDataset,
    pub injections: Vec<Injection>,
}

/// Sidecar record of how a dataset was generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentMetadata {
    pub seed: u64,
    pub generator: String,
    pub generator_params: serde_json::Value,
    pub per_class: usize,
    pub faults: Vec<FaultClass>,
    pub options: AugmentOptions,
}

/// Signature bins of `fault` whose 20-bin segment fits in the band.
pub fn usable_signature_bins(
    params: &MotorParameters,
    fault: FaultClass,
    max_order: u32,
    bin_width_hz: f64,
    n_bins: usize,
) -> Result<Vec<usize>> {
    let band = bin_width_hz * n_bins as f64;
    let set = signature_frequencies(params, fault, max_order, band)?;
    let mut bins: Vec<usize> = set
        .frequencies_hz
        .iter()
        .filter_map(|&f| frequency_to_bin(f, bin_width_hz).ok())
        .filter(|&b| segment_fits(b, n_bins))
        .collect();
    bins.dedup();
    if bins.is_empty() {
        return Err(SgdaError::SignatureOutOfBand(fault));
    }
    Ok(bins)
}

/// Random substream for output window `index`.
fn substream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Places one synthetic peak into a copy of `source`.
pub fn inject_one(
    source: &SpectrumWindow,
    bins: &[usize],
    fault: FaultClass,
    generator: &dyn PeakSource,
    policy: &AmplitudePolicy,
    rng: &mut ChaCha8Rng,
) -> Result<(SpectrumWindow, usize, f64)> {
    let center = *bins.choose(rng).expect("bins non-empty");
    let original = extract_segment(source, center)?;
    let raw = &source.magnitudes[center - SEGMENT_LEFT..center - SEGMENT_LEFT + SEGMENT_LEN];
    let baseline = median(raw);
    let global_max = source.magnitudes.iter().copied().fold(0.0, f64::max);
    let fraction = rng.gen_range(policy.min_fraction..=policy.max_fraction);
    let amplitude = baseline + fraction * (global_max - baseline);
    let shape = generator.sample(rng)?;
    let values = denormalize(&shape, original.seg_min, amplitude.max(original.seg_min))?;
    Ok((insert_peak(source, &values, center, fault)?, center, amplitude))
}

/// `per_class` untouched healthy windows followed by `per_class` injected
/// windows per fault, deterministic in `seed`.
///
/// Every output window draws from its own substream of `seed`, so windows can
/// be built in any order with identical results.
pub fn build_augmented_dataset(
    healthy: &[SpectrumWindow],
    params: &MotorParameters,
    faults: &[FaultClass],
    generator: &dyn PeakSource,
    per_class: usize,
    seed: u64,
    options: &AugmentOptions,
) -> Result<AugmentedDataset> {
    if healthy.is_empty() {
        return Err(SgdaError::EmptyDataset("no healthy windows to augment".into()));
    }
    if faults.is_empty() {
        return Err(SgdaError::InvalidArgument("no fault classes to inject".into()));
    }
    if per_class == 0 {
        return Err(SgdaError::InvalidArgument("per_class must be positive".into()));
    }
    if faults.contains(&FaultClass::Healthy) {
        return Err(SgdaError::HealthyHasNoSignature);
    }
    let bin_width = healthy[0].bin_width_hz;
    let n_bins = healthy[0].n_bins();
    let fault_bins = faults
        .iter()
        .map(|&f| usable_signature_bins(params, f, options.max_order, bin_width, n_bins))
        .collect::<Result<Vec<_>>>()?;

    let mut order: Vec<usize> = (0..healthy.len()).collect();
    order.shuffle(&mut substream(seed, u64::MAX));
    let mut windows = Vec::with_capacity(per_class * (faults.len() + 1));
    for i in 0..per_class {
        let w = healthy[order[i % order.len()]].clone();
        windows.push(w.with_label(Some(FaultClass::Healthy)));
    }
    let mut injections = Vec::with_capacity(per_class * faults.len());
    for (fi, (&fault, bins)) in faults.iter().zip(&fault_bins).enumerate() {
        for j in 0..per_class {
            let output_index = windows.len();
            let mut rng = substream(seed, (fi * per_class + j) as u64);
            let source_index = rng.gen_range(0..healthy.len());
            let (w, center_bin, amplitude) = inject_one(
                &healthy[source_index],
                bins,
                fault,
                generator,
                &options.amplitude,
                &mut rng,
            )?;
            windows.push(w);
            injections.push(Injection {
                output_index,
                source_index,
                fault,
                center_bin,
                amplitude,
            });
        }
    }
    Ok(AugmentedDataset {
        dataset: LabeledDataset::new(windows),
        injections,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectrum::SPECTRUM_BINS;

    fn window(mags: Vec<f64>) -> SpectrumWindow {
        SpectrumWindow {
            magnitudes: mags,
            bin_width_hz: 1.0,
            source_id: "s".into(),
            window_index: 0,
            label: Some(FaultClass::Healthy),
        }
    }

    fn noisy_healthy(seed: u64, n: usize) -> Vec<SpectrumWindow> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|i| {
                let mut m: Vec<f64> = (0..SPECTRUM_BINS).map(|_| rng.gen_range(0.1..1.0)).collect();
                m[50] = 4096.0;
                m[150] = 200.0;
                SpectrumWindow {
                    window_index: i,
                    source_id: format!("h{i}"),
                    ..window(m)
                }
            })
            .collect()
    }

    #[test]
    fn ramp_segment_normalizes() {
        let mut m = vec![0.0; SPECTRUM_BINS];
        for i in 0..20 {
            m[90 + i] = i as f64;
        }
        let seg = extract_segment(&window(m), 100).unwrap();
        assert_eq!(seg.seg_min, 0.0);
        assert_eq!(seg.seg_max, 19.0);
        for (i, v) in seg.values.iter().enumerate() {
            assert!((v - i as f64 / 19.0).abs() < 1e-15);
        }
        assert!(!seg.degenerate);
    }

    #[test]
    fn constant_segment_is_degenerate() {
        let seg = extract_segment(&window(vec![5.0; SPECTRUM_BINS]), 100).unwrap();
        assert!(seg.degenerate);
        assert!(seg.values.iter().all(|&v| v == 0.0));
        assert_eq!((seg.seg_min, seg.seg_max), (5.0, 5.0));
    }

    #[test]
    fn segment_bounds() {
        let w = window(vec![1.0; SPECTRUM_BINS]);
        assert!(extract_segment(&w, 5).is_err());
        assert!(extract_segment(&w, 10).is_ok());
        assert!(extract_segment(&w, 240).is_ok());
        assert!(extract_segment(&w, 241).is_err());
    }

    #[test]
    fn gaussian_shapes() {
        let narrow = gaussian_peak(0.05, 1.0).unwrap();
        assert!((narrow.values[SEGMENT_LEFT] - 1.0).abs() < 1e-12);
        assert!(narrow.values[SEGMENT_LEFT - 1] < 1e-12);
        assert!(narrow.values[SEGMENT_LEFT + 1] < 1e-12);

        let unit = gaussian_peak(1.0, 1.0).unwrap();
        assert_eq!(unit.values[SEGMENT_LEFT], 1.0);
        assert!((unit.values[SEGMENT_LEFT + 1] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((unit.values[SEGMENT_LEFT - 1] - 0.6065306597126334).abs() < 1e-15);

        let half = gaussian_peak(2.0, 0.5).unwrap();
        let max = half.values.iter().copied().fold(0.0, f64::max);
        assert_eq!(max, 0.5);
        assert!(gaussian_peak(0.0, 1.0).is_err());
    }

    #[test]
    fn denormalize_cases() {
        let seg = PeakSegment::from_raw(&(0..20).map(f64::from).collect::<Vec<_>>(), None);
        let d = denormalize(&seg, 2.0, 4.0).unwrap();
        assert_eq!(d[0], 2.0);
        assert_eq!(d[19], 4.0);
        assert!(denormalize(&seg, 3.0, 3.0).unwrap().iter().all(|&v| v == 3.0));

        let m: Vec<f64> = (0..SPECTRUM_BINS).map(|i| ((i * 37) % 11) as f64 + 0.5).collect();
        let w = window(m.clone());
        let seg = extract_segment(&w, 77).unwrap();
        let back = denormalize(&seg, seg.seg_min, seg.seg_max).unwrap();
        for (a, b) in back.iter().zip(&m[67..87]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalizing_a_normalized_segment_is_identity() {
        let mut raw: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64 / 19.0).collect();
        raw[3] = 0.0;
        raw[8] = 1.0;
        let once = PeakSegment::from_raw(&raw, None);
        let twice = PeakSegment::from_raw(&once.values, None);
        assert_eq!(once.values, twice.values);
    }

    #[test]
    fn insertion_rules() {
        let w = window(vec![10.0; SPECTRUM_BINS]);
        let low = vec![1.0; SEGMENT_LEN];
        let out = insert_peak(&w, &low, 60, FaultClass::RotorBar).unwrap();
        assert_eq!(out.magnitudes, w.magnitudes);
        assert_eq!(out.label, Some(FaultClass::RotorBar));

        let mut seg = vec![0.0; SEGMENT_LEN];
        seg[SEGMENT_LEFT] = 100.0;
        seg[SEGMENT_LEFT + 1] = 12.0;
        let once = insert_peak(&w, &seg, 60, FaultClass::RotorBar).unwrap();
        assert_eq!(once.magnitudes[60], 100.0);
        assert_eq!(once.magnitudes[61], 12.0);
        assert_eq!(once.magnitudes[59], 10.0);
        let twice = insert_peak(&once, &seg, 60, FaultClass::RotorBar).unwrap();
        assert_eq!(once, twice);

        assert!(insert_peak(&w, &seg[..19], 60, FaultClass::RotorBar).is_err());
    }

    #[test]
    fn counts_and_determinism() {
        let healthy = noisy_healthy(3, 40);
        let params = MotorParameters::default();
        let gen = GaussianKernelPeaks::default();
        let opts = AugmentOptions::default();
        let a = build_augmented_dataset(&healthy, &params, &[FaultClass::RotorBar], &gen, 10, 9, &opts).unwrap();
        assert_eq!(a.dataset.len(), 20);
        assert!(a.dataset.is_balanced());

        let faults = [
            FaultClass::RotorBar,
            FaultClass::InterTurnShort,
            FaultClass::BearingInnerRace,
            FaultClass::BearingBall,
            FaultClass::Eccentricity,
        ];
        let b = build_augmented_dataset(&healthy, &params, &faults, &gen, 100, 9, &opts).unwrap();
        assert_eq!(b.dataset.len(), 600);
        assert!(b.dataset.class_counts().values().all(|&c| c == 100));

        let c = build_augmented_dataset(&healthy, &params, &faults, &gen, 100, 9, &opts).unwrap();
        assert_eq!(b, c);
    }

    #[test]
    fn out_of_band_fault_is_named() {
        let healthy = noisy_healthy(3, 4);
        let params = MotorParameters {
            supply_frequency_hz: 400.0,
            ..MotorParameters::default()
        };
        let e = build_augmented_dataset(
            &healthy,
            &params,
            &[FaultClass::RotorBar],
            &GaussianKernelPeaks::default(),
            2,
            0,
            &AugmentOptions::default(),
        )
        .unwrap_err();
        assert!(e.to_string().contains("rotor_bar"), "{e}");
    }

    #[test]
    fn injection_is_local_and_detectable() {
        let healthy = noisy_healthy(5, 30);
        let faults = [FaultClass::RotorBar, FaultClass::InterTurnShort, FaultClass::BearingBall];
        let aug = build_augmented_dataset(
            &healthy,
            &MotorParameters::default(),
            &faults,
            &GaussianKernelPeaks::default(),
            200,
            1,
            &AugmentOptions::default(),
        )
        .unwrap();
        let mut detectable = 0;
        for inj in &aug.injections {
            let out = &aug.dataset.windows[inj.output_index];
            let src = &healthy[inj.source_index];
            let seg = inj.center_bin - SEGMENT_LEFT..inj.center_bin - SEGMENT_LEFT + SEGMENT_LEN;
            for b in 0..SPECTRUM_BINS {
                if !seg.contains(&b) {
                    assert_eq!(out.magnitudes[b].to_bits(), src.magnitudes[b].to_bits());
                }
            }
            let center = inj.center_bin - 2..=inj.center_bin + 2;
            let before = center.clone().map(|b| src.magnitudes[b]).fold(0.0, f64::max);
            let after = center.map(|b| out.magnitudes[b]).fold(0.0, f64::max);
            if after > before {
                detectable += 1;
            }
        }
        assert!(detectable as f64 >= 0.99 * aug.injections.len() as f64);
    }

    #[test]
    fn registry_knows_builtin_generators() {
        let r = PeakSourceRegistry::default();
        assert_eq!(r.names(), vec!["gaussian", "vae"]);
        let healthy = noisy_healthy(1, 2);
        let params = MotorParameters::default();
        let ctx = PeakSourceContext {
            healthy: &healthy,
            params: &params,
            seed: 0,
            gaussian: GaussianKernelPeaks::default(),
            vae: VaeConfig::default(),
        };
        assert_eq!(r.build("gaussian", &ctx).unwrap().name(), "gaussian");
        assert!(r.build("nope", &ctx).is_err());
    }
}
