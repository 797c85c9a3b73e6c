use anc_core::anc::mu_effective;
use anc_core::metrics::{
    convergence_curve, iterations_to_threshold, noise_reduction_db, MetricSeries, PointStatus,
};
use anc_core::paths::FirFilter;
use anc_core::signals::{load_wav, save_wav, SignalBuffer};
use anc_core::wavelet::{
    dwt, effective_lambda, idwt, threshold_hard, threshold_soft, Adaptation, ThresholdKind,
    ThresholdPolicy, WaveletFamily, WaveletSpec,
};
use proptest::prelude::*;

fn buffer(v: Vec<f64>) -> SignalBuffer {
    SignalBuffer::new(v, 8000.0).unwrap()
}

fn samples(len: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, len)
}

proptest! {
    #[test]
    fn soft_threshold_is_odd_and_shrinks(y in -50.0f64..50.0, lambda in 0.0f64..20.0) {
        let s = threshold_soft(y, lambda);
        prop_assert_eq!(threshold_soft(-y, lambda), -s);
        prop_assert!(s.abs() <= y.abs());
        prop_assert!(s == 0.0 || s.signum() == y.signum());
    }

    #[test]
    fn hard_threshold_is_idempotent(y in -50.0f64..50.0, lambda in 0.0f64..20.0) {
        let h = threshold_hard(y, lambda);
        prop_assert_eq!(threshold_hard(h, lambda), h);
        prop_assert!(h == 0.0 || h == y);
    }

    #[test]
    fn soft_threshold_is_monotone_in_lambda(y in -50.0f64..50.0, a in 0.0f64..20.0, b in 0.0f64..20.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(threshold_soft(y, hi).abs() <= threshold_soft(y, lo).abs());
    }

    #[test]
    fn variable_lambda_is_monotone_and_capped(
        base in 0.01f64..2.0, e1 in -2.0f64..2.0, e2 in -2.0f64..2.0,
    ) {
        let p = ThresholdPolicy::new(ThresholdKind::Soft, base, Adaptation::Variable);
        let (small, large) = if e1.abs() <= e2.abs() { (e1, e2) } else { (e2, e1) };
        let l_small = effective_lambda(&p, small);
        let l_large = effective_lambda(&p, large);
        prop_assert!(l_small <= l_large);
        prop_assert!(l_large <= p.lambda_max);
        prop_assert!(l_small >= base);
        let fixed = ThresholdPolicy::new(ThresholdKind::Soft, base, Adaptation::Fixed);
        prop_assert_eq!(effective_lambda(&fixed, large), base);
    }

    #[test]
    fn variable_mu_is_monotone_and_capped(e1 in -2.0f64..2.0, e2 in -2.0f64..2.0) {
        let (small, large) = if e1.abs() <= e2.abs() { (e1, e2) } else { (e2, e1) };
        let a = mu_effective(0.01, small, 0.95, 0.2);
        let b = mu_effective(0.01, large, 0.95, 0.2);
        prop_assert!(a <= b && b <= 0.2 && a >= 0.01);
    }

    #[test]
    fn filter_is_linear(
        taps in prop::collection::vec(-2.0f64..2.0, 1..12),
        x1 in samples(1..64),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        seed_shift in 0usize..7,
    ) {
        let f = FirFilter::new(taps, "t").unwrap();
        let n = x1.len();
        let x2: Vec<f64> = (0..n).map(|k| x1[(k + seed_shift) % n] * 0.5 - 1.0).collect();
        let mix: Vec<f64> = (0..n).map(|k| a * x1[k] + b * x2[k]).collect();
        let y1 = f.filter_buffer(&buffer(x1)).unwrap();
        let y2 = f.filter_buffer(&buffer(x2)).unwrap();
        let ym = f.filter_buffer(&buffer(mix)).unwrap();
        for k in 0..n {
            let expect = a * y1.samples()[k] + b * y2.samples()[k];
            prop_assert!((ym.samples()[k] - expect).abs() <= 1e-9 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn filter_is_time_invariant(
        taps in prop::collection::vec(-2.0f64..2.0, 1..12),
        x in samples(1..64),
        shift in 0usize..10,
    ) {
        let f = FirFilter::new(taps, "t").unwrap();
        let mut delayed = vec![0.0; shift];
        delayed.extend_from_slice(&x);
        let y = f.filter_buffer(&buffer(x.clone())).unwrap();
        let yd = f.filter_buffer(&buffer(delayed)).unwrap();
        for k in 0..shift {
            prop_assert_eq!(yd.samples()[k], 0.0);
        }
        for k in 0..x.len() {
            prop_assert_eq!(yd.samples()[k + shift], y.samples()[k]);
        }
    }

    #[test]
    fn noise_reduction_ignores_common_scale(
        d in prop::collection::vec(0.1f64..5.0, 40),
        e in prop::collection::vec(-5.0f64..5.0, 40),
        c in prop_oneof![-100.0f64..-0.01, 0.01f64..100.0],
    ) {
        let r = noise_reduction_db(&e, &d, 10).unwrap();
        let es: Vec<f64> = e.iter().map(|v| v * c).collect();
        let ds: Vec<f64> = d.iter().map(|v| v * c).collect();
        let rs = noise_reduction_db(&es, &ds, 10).unwrap();
        for (a, b) in r.series.values.iter().zip(&rs.series.values) {
            prop_assert!((a - b).abs() < 1e-9 || (a.is_nan() && b.is_nan()));
        }
        prop_assert!((r.whole_run.db - rs.whole_run.db).abs() < 1e-9);
    }

    #[test]
    fn convergence_curve_shifts_by_gain(
        e in prop::collection::vec(0.01f64..5.0, 1..200),
        c in 0.01f64..100.0,
        negative in any::<bool>(),
        smoothing in 1usize..40,
    ) {
        let c = if negative { -c } else { c };
        let base = convergence_curve(&e, smoothing).unwrap();
        let scaled: Vec<f64> = e.iter().map(|v| v * c).collect();
        let shifted = convergence_curve(&scaled, smoothing).unwrap();
        let offset = 20.0 * c.abs().log10();
        for (a, b) in base.values.iter().zip(&shifted.values) {
            prop_assert!((b - a - offset).abs() < 1e-9);
        }
    }

    #[test]
    fn raising_the_target_never_settles_earlier(
        values in prop::collection::vec(-30.0f64..30.0, 1..60),
        t1 in -30.0f64..30.0,
        t2 in -30.0f64..30.0,
    ) {
        let s = MetricSeries {
            name: "s".into(),
            status: vec![PointStatus::Defined; values.len()],
            values,
            window: 1,
            stride: 1,
        };
        let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
        match (iterations_to_threshold(&s, lo), iterations_to_threshold(&s, hi)) {
            (Some(a), Some(b)) => prop_assert!(a <= b),
            (None, Some(_)) => prop_assert!(false, "higher target settled, lower did not"),
            _ => {}
        }
    }

    #[test]
    fn dwt_round_trips(
        family in prop_oneof![Just(WaveletFamily::Haar), Just(WaveletFamily::Db2), Just(WaveletFamily::Db4)],
        log_len in 3u32..8,
        level_pick in 0usize..8,
        seed in any::<u64>(),
    ) {
        let n = 1usize << log_len;
        let levels = 1 + level_pick % log_len as usize;
        let spec = WaveletSpec::new(family, levels, n).unwrap();
        let block = anc_core::signals::white_noise(1.0, seed, n);
        let c = dwt(&block, &spec).unwrap();
        let energy_in: f64 = block.iter().map(|v| v * v).sum();
        let energy_c: f64 = c.approximation.iter().chain(c.details.iter().flatten()).map(|v| v * v).sum();
        prop_assert!((energy_in - energy_c).abs() <= 1e-9 * energy_in.max(1.0));
        let back = idwt(&c, &spec).unwrap();
        for (a, b) in block.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn wav_round_trip_within_one_lsb(v in prop::collection::vec(-1.0f64..1.0, 1..400)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        let clipped = save_wav(&buffer(v.clone()), &path).unwrap();
        prop_assert_eq!(clipped, 0);
        let back = load_wav(&path).unwrap();
        prop_assert_eq!(back.len(), v.len());
        prop_assert_eq!(back.sample_rate_hz(), 8000.0);
        for (a, b) in v.iter().zip(back.samples()) {
            // rounding to the nearest step; the top step clips at 32767
            prop_assert!((a - b).abs() <= 1.0 / 32768.0 + 1e-12);
        }
    }
}
