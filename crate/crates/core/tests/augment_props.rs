use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sgda_core::augment::{
    denormalize, extract_segment, inject_one, insert_peak, AmplitudePolicy, GaussianKernelPeaks, PeakSegment,
    SEGMENT_LEFT, SEGMENT_LEN,
};
use sgda_core::motor_model::FaultClass;
use sgda_core::spectrum::{SpectrumWindow, SPECTRUM_BINS};

fn window(m: Vec<f64>) -> SpectrumWindow {
    SpectrumWindow {
        magnitudes: m,
        bin_width_hz: 1.0,
        source_id: "p".into(),
        window_index: 0,
        label: Some(FaultClass::Healthy),
    }
}

fn spectrum() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1e4, SPECTRUM_BINS)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn insertion_is_local_and_monotone(m in spectrum(), seg in prop::collection::vec(0.0f64..2e4, SEGMENT_LEN), c in 10usize..=240) {
        let w = window(m);
        let out = insert_peak(&w, &seg, c, FaultClass::BearingBall).unwrap();
        for i in 0..SPECTRUM_BINS {
            if i + SEGMENT_LEFT < c || i >= c - SEGMENT_LEFT + SEGMENT_LEN {
                prop_assert_eq!(out.magnitudes[i].to_bits(), w.magnitudes[i].to_bits());
            } else {
                prop_assert!(out.magnitudes[i] >= w.magnitudes[i]);
            }
        }
        prop_assert_eq!(insert_peak(&out, &seg, c, FaultClass::BearingBall).unwrap(), out);
    }

    #[test]
    fn normalization_range_and_idempotence(raw in prop::collection::vec(-1e3f64..1e3, SEGMENT_LEN)) {
        let seg = PeakSegment::from_raw(&raw, None);
        prop_assert!(seg.values.iter().all(|v| (0.0..=1.0).contains(v)));
        if !seg.degenerate {
            let again = PeakSegment::from_raw(&seg.values, None);
            for (a, b) in again.values.iter().zip(&seg.values) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            let back = denormalize(&seg, seg.seg_min, seg.seg_max).unwrap();
            for (a, b) in back.iter().zip(&raw) {
                prop_assert!((a - b).abs() <= 1e-9 * (1.0 + b.abs()));
            }
        }
    }

    #[test]
    fn injected_window_stays_valid(m in spectrum(), seed in 0u64..1000) {
        let w = window(m);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (out, center, amp) = inject_one(
            &w,
            &[46, 54],
            FaultClass::RotorBar,
            &GaussianKernelPeaks::default(),
            &AmplitudePolicy::default(),
            &mut rng,
        ).unwrap();
        out.validate().unwrap();
        prop_assert!(center == 46 || center == 54);
        let seg = extract_segment(&w, center).unwrap();
        let max = w.magnitudes.iter().copied().fold(0.0, f64::max);
        prop_assert!(amp <= max + 1e-9);
        prop_assert!(out.magnitudes[center] >= amp.max(seg.seg_min) - 1e-9);
    }
}
