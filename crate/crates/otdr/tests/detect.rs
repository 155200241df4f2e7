//! Whole-trace detection with the checked-in reference model.

use std::path::Path;
use std::sync::OnceLock;

use otdr::detect::{detect_events, DetectOptions};
use otdr::model_file::{read_model, SavedModel};
use otdr_core::trace_sim::{synthesize_trace, AcquisitionConfig, OtdrTrace};

/// Reference model: `otdr train --seed 1` with the default configuration
/// (its manifest sits next to it).
fn model() -> &'static SavedModel {
    static MODEL: OnceLock<SavedModel> = OnceLock::new();
    MODEL.get_or_init(|| {
        let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/reference.otdrm");
        read_model(&path).unwrap()
    })
}

/// Peak 1e-4 against noise 1e-4 / sqrt(n_avg): n_avg = 10^4 gives 20 dB.
fn trace(events: &[(f64, f64)], seed: u64) -> OtdrTrace {
    let cfg = AcquisitionConfig {
        n_avg: 10_000,
        seed,
        ..Default::default()
    };
    synthesize_trace(&cfg, events).unwrap()
}

#[test]
fn one_event_at_8785_m() {
    for seed in 1..=3 {
        let t = trace(&[(8785.0, -40.0)], seed);
        assert!((t.snr_db[0] - 20.0).abs() < 0.5);
        let r = detect_events(model(), &t, &DetectOptions::default()).unwrap();
        assert_eq!(r.n_events, 1, "seed {seed}: {:?}", r.events);
        assert!((r.events[0].position_m - 8785.0).abs() <= 2.0, "{:?}", r.events[0]);
    }
}

#[test]
fn event_free_trace_reports_nothing() {
    for seed in 1..=3 {
        let r = detect_events(model(), &trace(&[], seed), &DetectOptions::default()).unwrap();
        assert_eq!(r.n_events, 0, "seed {seed}: {:?}", r.events);
    }
}

#[test]
fn reflector_passes_integrity_and_is_not_an_event() {
    let t = trace(&[(8785.0, -40.0)], 4);
    let opts = DetectOptions {
        reflector_pos_m: Some(8785.0),
        full_analysis: true,
        ..Default::default()
    };
    let r = detect_events(model(), &t, &opts).unwrap();
    assert!(r.integrity.as_ref().unwrap().passed);
    assert!(r.analysed);
    assert_eq!(r.n_events, 0, "{:?}", r.events);

    // without --full a passing check skips the scan
    let quick = detect_events(model(), &t, &DetectOptions { full_analysis: false, ..opts }).unwrap();
    assert!(!quick.analysed);

    // a missing reflector fails the check and triggers the full scan
    let broken = trace(&[], 4);
    let r = detect_events(model(), &broken, &DetectOptions { full_analysis: false, ..opts }).unwrap();
    assert!(!r.integrity.unwrap().passed);
    assert!(r.analysed);
}

#[test]
fn two_events_nine_meters_apart() {
    let t = trace(&[(5000.0, -40.0), (5009.0, -40.0)], 5);
    let r = detect_events(model(), &t, &DetectOptions::default()).unwrap();
    assert_eq!(r.n_events, 2, "{:?}", r.events);
    assert!((r.events[0].position_m - 5000.0).abs() <= 2.0);
    assert!((r.events[1].position_m - 5009.0).abs() <= 2.0);
    let pw = t.config.pulse_width_samples as f64;
    assert!(r.events[1].position_index - r.events[0].position_index > pw);
}

#[test]
fn window_length_must_match_the_model() {
    let opts = DetectOptions {
        window_len: Some(50),
        ..Default::default()
    };
    let err = detect_events(model(), &trace(&[], 1), &opts).unwrap_err();
    assert!(matches!(err, otdr::Error::Core(otdr_core::Error::InvalidArgument(_))), "{err}");
}

#[test]
fn reference_model_matches_its_manifest() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let bytes = std::fs::read(dir.join("reference.otdrm")).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("reference.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["outputs"]["model.otdrm"], otdr::fsio::sha256_hex(&bytes));
}
