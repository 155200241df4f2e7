//! End-to-end runs of the `otdr` binary on small configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otdr::error::exit;

const TINY: &str = r#"{
  "acquisition": { "fiber_length_m": 400.0, "seed": 5 },
  "events": [ { "position_m": 200.0, "reflectance_db": -30.0 } ],
  "grid": { "n_traces": 80, "fiber_length_m": 200.0, "noise_tail_samples": 50 },
  "arch": { "n_c": 4, "tower_width": 3 },
  "train": { "max_epochs": 3 },
  "study": { "model_seeds": [1], "sweep_traces": 40 }
}"#;

fn otdr(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otdr"))
        .args(args)
        .env("OTDR_OUTPUT_ROOT", out)
        .output()
        .expect("binary runs")
}

fn ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stdout),
        String::from_utf8_lossy(&o.stderr)
    );
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(dir: &Path) -> PathBuf {
    let p = dir.join("tiny.json");
    fs::write(&p, TINY).unwrap();
    p
}

#[test]
fn simulate_is_reproducible_and_loads_back() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&otdr(&["simulate", "--config", cfg], &a));
    ok(&otdr(&["simulate", "--config", cfg, "--format", "csv"], &b));
    let bin = otdr::trace_file::read_trace(&a.join("trace.otdr")).unwrap();
    let csv = otdr::trace_file::read_trace(&b.join("trace.csv")).unwrap();
    assert_eq!(bin, csv);
    assert_eq!(bin.samples.len(), 500);
    assert_eq!(bin.events[0].position_index, 250);

    ok(&otdr(&["simulate", "--config", cfg], &b));
    assert_eq!(fs::read(a.join("trace.otdr")).unwrap(), fs::read(b.join("trace.otdr")).unwrap());
}

#[test]
fn override_is_echoed_into_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&otdr(&["simulate", "--set", "n_avg=128", "--set", "fiber_length_m=100", "--set", "events=[]"], dir.path()));
    let m: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("simulate.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["config"]["effective"]["acquisition"]["n_avg"], 128);
    assert_eq!(m["config"]["overrides"][0], "n_avg=128");
    assert_eq!(m["tool_version"], otdr::TOOL_VERSION);
    assert!(m["outputs"]["trace.otdr"].is_string());
}

#[test]
fn configuration_errors_exit_with_the_config_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = otdr(&["simulate", "--set", "n_avg=0"], dir.path());
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(stderr(&o).contains("n_avg must be >= 1"), "{}", stderr(&o));

    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{ \"train\": { \"learning_rat\": 0.1 } }").unwrap();
    let o = otdr(&["train", "--config", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(stderr(&o).contains("did you mean `learning_rate`"), "{}", stderr(&o));

    let o = otdr(&["study", "--kind", "snr_sweep"], dir.path());
    assert_eq!(o.status.code(), Some(exit::CONFIG));
    assert!(stderr(&o).contains("--model"), "{}", stderr(&o));
}

#[test]
fn broken_model_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(&otdr(&["simulate", "--set", "fiber_length_m=100", "--set", "events=[]"], dir.path()));
    let model = dir.path().join("junk.otdrm");
    fs::write(&model, b"OTDRLSTM\x01\x00\x00\x00garbage").unwrap();
    let trace = dir.path().join("trace.otdr");
    let o = otdr(
        &["detect", "--model", model.to_str().unwrap(), "--trace", trace.to_str().unwrap()],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(stderr(&o).contains("checksum"), "{}", stderr(&o));
}

#[test]
fn pipeline_runs_end_to_end_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));

    ok(&otdr(&["build-corpus", "--config", cfg], &a));
    let corpus = a.join("corpus");
    ok(&otdr(&["train", "--config", cfg, "--corpus", corpus.to_str().unwrap()], &a));
    // training from the config alone builds the same corpus
    ok(&otdr(&["train", "--config", cfg], &b));
    for f in ["model.otdrm", "train.manifest.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let model = a.join("model.otdrm");
    let model = model.to_str().unwrap();
    ok(&otdr(&["evaluate", "--config", cfg, "--model", model], &a));
    ok(&otdr(&["study", "--config", cfg, "--kind", "snr_sweep", "--model", model], &a));
    ok(&otdr(&["study", "--config", cfg, "--kind", "snr_sweep", "--model", model], &b));
    let reports: Vec<_> = fs::read_dir(&a)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .filter(|n| n.starts_with("snr_sweep-"))
        .collect();
    assert_eq!(reports.len(), 2, "{reports:?}");
    for r in &reports {
        assert_eq!(fs::read(a.join(r)).unwrap(), fs::read(b.join(r)).unwrap(), "{r}");
    }
    let csv = fs::read_to_string(a.join(reports.iter().find(|r| r.ends_with(".csv")).unwrap())).unwrap();
    assert!(csv.starts_with("study,axis_name,axis_value,label,metric,value,lower,upper\n"));

    ok(&otdr(&["simulate", "--config", cfg], &a));
    let trace = a.join("trace.otdr");
    let trace = trace.to_str().unwrap();
    let o = otdr(&["detect", "--config", cfg, "--model", model, "--trace", trace], &a);
    ok(&o);
    let o = otdr(
        &["detect", "--config", cfg, "--model", model, "--trace", trace, "--window-len", "20"],
        &a,
    );
    assert_eq!(o.status.code(), Some(exit::DATA));
    assert!(stderr(&o).contains("does not match"), "{}", stderr(&o));
}

#[test]
fn defaults_command_prints_the_shipped_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = otdr(&["defaults"], dir.path());
    ok(&o);
    let shipped = fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.json")).unwrap();
    assert_eq!(String::from_utf8(o.stdout).unwrap(), shipped);
}
