use anc_core::anc::{
    Algorithm, Controller, ControllerKind, ControllerParams, ControllerSpec, Features, Scenario,
    SecondaryModel, Simulation, SimulationError,
};
use anc_core::paths::FirFilter;
use anc_core::signals::{white_noise, SignalBuffer, SourceSpec};
use anc_core::AncError;

fn white_scenario(iterations: usize) -> Scenario {
    Scenario {
        name: "white".into(),
        sample_rate_hz: 8000.0,
        source: SourceSpec::white_noise(1.0, 21, iterations),
        primary: FirFilter::builtin("default-primary").unwrap(),
        secondary: FirFilter::builtin("default-secondary").unwrap(),
        secondary_model: SecondaryModel::Perfect,
        path_noise_variance: 0.0,
        path_noise_seed: 0,
        iterations,
    }
}

fn fxlms(mu: f64) -> ControllerSpec {
    ControllerSpec::new(
        ControllerKind::new(Algorithm::Fxlms),
        ControllerParams {
            mu_base: mu,
            mu_max: mu.max(0.2),
            ..Default::default()
        },
    )
}

#[test]
fn zero_step_leaves_the_disturbance_untouched() {
    let sim = Simulation::prepare(&white_scenario(2000)).unwrap();
    for alg in Algorithm::ALL {
        let spec = ControllerSpec::new(
            ControllerKind::new(alg),
            ControllerParams {
                mu_base: 0.0,
                ..Default::default()
            },
        );
        let mut spec = spec;
        // the variable step would scale 0, so it stays 0 as well
        spec.kind = spec.kind.with_features(Features {
            use_wavelet_threshold: false,
            ..spec.kind.features
        });
        let t = sim.run(&spec).unwrap();
        assert_eq!(t.e, t.d, "{alg}");
        assert!(t.final_taps.iter().all(|&w| w == 0.0));
    }
}

/// Classic FxLMS is exactly covariant under x, d -> c x, c d with mu -> mu / c^2.
#[test]
fn fxlms_is_scale_covariant() {
    let n = 3000;
    let x = white_noise(1.0, 5, n);
    let p = FirFilter::builtin("default-primary").unwrap();
    let s = FirFilter::builtin("default-secondary").unwrap();
    let d = p
        .filter_buffer(&SignalBuffer::new(x.clone(), 8000.0).unwrap())
        .unwrap();
    let c = 4.0;
    let run = |scale: f64, mu: f64| {
        let xs: Vec<f64> = x.iter().map(|v| v * scale).collect();
        let ds: Vec<f64> = d.samples().iter().map(|v| v * scale).collect();
        let sim = Simulation::from_signals(
            "scale",
            SignalBuffer::new(xs, 8000.0).unwrap(),
            SignalBuffer::new(ds, 8000.0).unwrap(),
            s.clone(),
            s.clone(),
        )
        .unwrap();
        sim.run(&fxlms(mu)).unwrap()
    };
    let a = run(1.0, 0.005);
    let b = run(c, 0.005 / (c * c));
    for (ea, eb) in a.e.iter().zip(&b.e) {
        assert!((eb - c * ea).abs() <= 1e-9 * (1.0 + eb.abs()), "{ea} {eb}");
    }
    for (wa, wb) in a.final_taps.iter().zip(&b.final_taps) {
        assert!((wa - wb).abs() < 1e-9);
    }
}

#[test]
fn default_step_is_stable_and_large_steps_are_caught() {
    let sim = Simulation::prepare(&white_scenario(50_000)).unwrap();
    let t = sim.run(&fxlms(0.01)).unwrap();
    let tail = &t.e[45_000..];
    let d_tail = &t.d[45_000..];
    let r = anc_core::metrics::reduction_db(tail, d_tail);
    assert!(
        r.db > 20.0,
        "default step should cancel the realizable part, got {}",
        r.db
    );

    let short = Simulation::prepare(&white_scenario(5000)).unwrap();
    let mut mu = 0.01;
    let diverged_at = loop {
        match short.run(&fxlms(mu)) {
            Ok(_) => mu *= 2.0,
            Err(SimulationError::Diverged {
                iteration, partial, ..
            }) => {
                assert_eq!(partial.len(), iteration);
                break mu;
            }
            Err(e) => panic!("{e}"),
        }
        assert!(mu < 100.0, "no divergence detected up to mu = {mu}");
    };
    assert!(diverged_at > 0.01);
}

#[test]
fn divergence_is_reported_as_error_variant() {
    let s = FirFilter::identity();
    let mut c = Controller::new(
        ControllerKind::new(Algorithm::Fxlms),
        ControllerParams {
            mu_base: 10.0,
            mu_max: 10.0,
            taps: 4,
            divergence_bound: Some(1e3),
            ..Default::default()
        },
        &s,
        &s,
    )
    .unwrap();
    let x = white_noise(1.0, 1, 500);
    let err = x
        .iter()
        .find_map(|&xn| c.step(xn, xn, &s, &s).err())
        .expect("mu = 10 must blow up");
    assert!(matches!(err, AncError::Divergence { .. }));
}

#[test]
fn disabled_threshold_makes_fixed_variant_classic() {
    let mut sc = white_scenario(5000);
    sc.path_noise_variance = 0.01;
    sc.path_noise_seed = 4;
    let sim = Simulation::prepare(&sc).unwrap();
    let classic = sim.run(&fxlms(0.005)).unwrap();
    let mut spec = fxlms(0.005);
    spec.kind = ControllerKind::new(Algorithm::FxlmsFixedThreshold).with_features(Features::NONE);
    let off = sim.run(&spec).unwrap();
    assert_eq!(classic.e, off.e);
    assert_eq!(classic.final_taps, off.final_taps);
}

#[test]
fn variable_step_alone_changes_only_mu() {
    // quiet enough that |e| stays well below the clamp
    let mut sc = white_scenario(3000);
    sc.source = SourceSpec::white_noise(0.01, 21, 3000);
    let sim = Simulation::prepare(&sc).unwrap();
    let mut spec = fxlms(0.005);
    spec.kind = ControllerKind::new(Algorithm::FxlmsVariable).with_features(Features {
        variable_step: true,
        ..Features::NONE
    });
    let t = sim.run(&spec).unwrap();
    assert!(t.lambda_eff.iter().all(|&l| l == 0.0));
    assert_eq!(t.mu_eff[0], 0.005);
    for n in 1..t.len() {
        let expect = anc_core::anc::mu_effective(0.005, t.e[n - 1], 0.95, 0.2);
        assert_eq!(t.mu_eff[n], expect);
    }
}

#[test]
fn identified_model_tracks_the_true_path() {
    let mut sc = white_scenario(20_000);
    sc.secondary_model = SecondaryModel::Identified {
        order: 16,
        excitation_length: 20_000,
        step_size: 0.01,
        seed: 9,
    };
    let sim = Simulation::prepare(&sc).unwrap();
    let truth = FirFilter::builtin("default-secondary").unwrap();
    for (a, b) in sim.secondary_model().taps().iter().zip(truth.taps()) {
        assert!((a - b).abs() < 1e-6);
    }
    let t = sim.run(&fxlms(0.01)).unwrap();
    let r = anc_core::metrics::final_noise_reduction_db(&t.e, &t.d, 2000).unwrap();
    assert!(r.db > 20.0, "{}", r.db);
}
