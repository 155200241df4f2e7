//! The subcommands. Each one loads the effective configuration, does its
//! work, writes its outputs atomically and leaves a manifest next to them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use otdr_core::dataset::{build_corpus, Corpus, CorpusOptions, SimulationGrid, Split};
use otdr_core::eval::{
    averaging_time_curve, calibrate_detectors, compare_detectors, default_scenarios, evaluate, feature_ablation,
    robustness, sequence_length, single_vs_multi, snr_sweep, EvalOptions, StudyKind, StudyReport,
};
use otdr_core::nn::{train_model_observed, ModelParams};
use otdr_core::trace_sim::synthesize_trace;
use serde_json::{json, Value};

use crate::config::{load_config, LoadedConfig};
use crate::corpus_dir::{self, encode_samples};
use crate::detect::{detect_events, DetectOptions};
use crate::error::{Error, Result};
use crate::fsio;
use crate::model_file::{self, ModelMeta, SavedModel};
use crate::reports::{write_report, Provenance};
use crate::trace_file::{self, TraceEncoding};

pub const DEFAULT_OUTPUT_ROOT: &str = "otdr-out";
pub const MODEL_FILE: &str = "model.otdrm";

#[derive(Debug, Parser)]
#[command(name = "otdr", version, about = "Reflective event detection on OTDR traces")]
pub struct Cli {
    /// JSON configuration file; every key has a default.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, by dotted path or unique leaf name.
    #[arg(long = "set", short = 's', global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, env = "OTDR_OUTPUT_ROOT")]
    pub out: Option<PathBuf>,
    /// Seed for every stage of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize one trace from `acquisition` and `events`.
    Simulate {
        #[arg(long, value_enum)]
        format: Option<TraceEncoding>,
    },
    /// Build a windowed corpus from `grid` and `corpus`.
    BuildCorpus,
    /// Train a model on a corpus directory, or on a freshly built corpus.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Score a model on the test split of a corpus.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Run one study.
    Study {
        #[arg(long)]
        kind: StudyKind,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
    /// Find events in a trace file.
    Detect {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        /// Reference reflector position in meters, checked first.
        #[arg(long)]
        reflector_pos: Option<f64>,
        #[arg(long)]
        stride: Option<usize>,
        #[arg(long)]
        threshold: Option<f64>,
        /// Amplitude floor in dB over the tail noise; negative disables it.
        #[arg(long)]
        min_snr: Option<f64>,
        #[arg(long)]
        window_len: Option<usize>,
        /// Analyse the whole trace even when the reflector check passes.
        #[arg(long)]
        full: bool,
    },
    /// Compare the model with the classical detectors at a fixed false-alarm rate.
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        pfa: Option<f64>,
    },
    /// Print the default configuration.
    Defaults,
}

impl Command {
    /// Sections searched first when an override names a bare leaf.
    fn sections(&self) -> &'static [&'static str] {
        match self {
            Command::Simulate { .. } => &["acquisition", "events"],
            Command::BuildCorpus => &["grid", "corpus"],
            Command::Train { .. } => &["train", "arch", "loss_weights", "corpus", "grid"],
            Command::Evaluate { .. } => &["study", "corpus", "grid"],
            Command::Study { .. } => &["study", "train", "arch", "corpus", "grid"],
            Command::Detect { .. } => &["detect"],
            Command::Compare { .. } => &["compare", "averaging"],
            Command::Defaults => &[],
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::BuildCorpus => "build-corpus",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Study { .. } => "study",
            Command::Detect { .. } => "detect",
            Command::Compare { .. } => "compare",
            Command::Defaults => "defaults",
        }
    }
}

struct Ctx {
    cfg: LoadedConfig,
    out: PathBuf,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl Ctx {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.out.join(name);
        fsio::write_atomic(&path, bytes)?;
        self.outputs.insert(name.into(), fsio::sha256_hex(bytes));
        Ok(path)
    }

    fn input_file(&mut self, label: &str, path: &Path) -> Result<String> {
        let hash = fsio::sha256_hex(&fsio::read(path)?);
        self.inputs.insert(label.into(), hash.clone());
        Ok(hash)
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            config: self.cfg.manifest_value(),
            inputs: self.inputs.clone(),
        }
    }

    fn report(&mut self, report: &StudyReport, input_hash: &str) -> Result<()> {
        let w = write_report(&self.out, report, input_hash, &self.provenance())?;
        for p in [&w.csv, &w.manifest] {
            let name = p.file_name().unwrap().to_string_lossy().to_string();
            self.outputs.insert(name, fsio::sha256_hex(&fsio::read(p)?));
            println!("wrote {}", p.display());
        }
        Ok(())
    }

    /// `<command>.manifest.json`: config, input and output hashes, tool version.
    fn finish(self, command: &str, extra: Value) -> Result<()> {
        let manifest = json!({
            "command": command,
            "config": self.cfg.manifest_value(),
            "inputs": self.inputs,
            "outputs": self.outputs,
            "result": extra,
            "tool_version": crate::TOOL_VERSION,
        });
        let path = self.out.join(format!("{command}.manifest.json"));
        fsio::write_json(&path, &manifest)?;
        println!("wrote {}", path.display());
        Ok(())
    }
}

pub fn run(cli: Cli) -> Result<()> {
    if let Command::Defaults = cli.command {
        print!("{}", crate::config::defaults_json());
        return Ok(());
    }
    let cfg = load_config(cli.config.as_deref(), &cli.overrides, cli.seed, cli.command.sections())?;
    let mut ctx = Ctx {
        cfg,
        out: cli.out.unwrap_or_else(|| PathBuf::from(DEFAULT_OUTPUT_ROOT)),
        inputs: BTreeMap::new(),
        outputs: BTreeMap::new(),
    };
    if let Some(p) = &ctx.cfg.source {
        let p = p.clone();
        ctx.input_file("config", &p)?;
    }
    let name = cli.command.name();
    let extra = match cli.command {
        Command::Simulate { format } => simulate(&mut ctx, format)?,
        Command::BuildCorpus => build(&mut ctx)?,
        Command::Train { corpus } => train(&mut ctx, corpus.as_deref())?,
        Command::Evaluate { model, corpus } => evaluate_cmd(&mut ctx, &model, corpus.as_deref())?,
        Command::Study { kind, model, corpus } => study(&mut ctx, kind, model.as_deref(), corpus.as_deref())?,
        Command::Detect {
            model,
            trace,
            reflector_pos,
            stride,
            threshold,
            min_snr,
            window_len,
            full,
        } => {
            let d = &ctx.cfg.config.detect;
            let opts = DetectOptions {
                stride: stride.or(d.stride),
                threshold: threshold.unwrap_or(d.threshold),
                min_window_snr_db: match min_snr {
                    Some(m) if m < 0.0 => None,
                    Some(m) => Some(m),
                    None => d.min_window_snr_db,
                },
                window_len,
                reflector_pos_m: reflector_pos,
                full_analysis: full || d.full_analysis,
            };
            detect_cmd(&mut ctx, &model, &trace, &opts)?
        }
        Command::Compare { model, pfa } => compare(&mut ctx, &model, pfa)?,
        Command::Defaults => unreachable!(),
    };
    ctx.finish(name, extra)
}

fn simulate(ctx: &mut Ctx, format: Option<TraceEncoding>) -> Result<Value> {
    let c = &ctx.cfg.config;
    let events: Vec<(f64, f64)> = c.events.iter().map(|e| (e.position_m, e.reflectance_db)).collect();
    let trace = synthesize_trace(&c.acquisition, &events)?;
    let enc = format.unwrap_or(c.trace_encoding);
    let name = format!("trace.{}", enc.extension());
    let path = ctx.write(&name, &trace_file::encode_trace(&trace, enc))?;
    println!("wrote {}", path.display());
    Ok(json!({ "n_samples": trace.samples.len(), "snr_db": trace.snr_db, "events": trace.events }))
}

fn generator(grid: &SimulationGrid, opts: &CorpusOptions, seed: u64) -> Value {
    json!({ "grid": grid, "corpus": opts, "seed": seed })
}

fn build(ctx: &mut Ctx) -> Result<Value> {
    let c = &ctx.cfg.config;
    let corpus = build_corpus(&c.grid, &c.corpus, c.corpus_seed)?;
    let dir = ctx.out.join("corpus");
    let m = corpus_dir::write_corpus(&dir, &corpus, Some(generator(&c.grid, &c.corpus, c.corpus_seed)))?;
    ctx.outputs.insert("corpus/samples.csv".into(), m.samples_sha256.clone());
    println!("wrote {}", dir.display());
    Ok(json!({ "n_windows": m.n_windows, "split_counts": m.split_counts }))
}

/// A corpus from a directory, or built from the configuration; returns it
/// with the hash of its samples.
fn obtain_corpus(ctx: &mut Ctx, dir: Option<&Path>, opts: Option<CorpusOptions>) -> Result<(Corpus, String)> {
    let (corpus, hash) = match dir {
        Some(d) => {
            let (corpus, m) = corpus_dir::read_corpus(d)?;
            (corpus, m.samples_sha256)
        }
        None => {
            let c = &ctx.cfg.config;
            let opts = opts.unwrap_or_else(|| c.corpus.clone());
            let corpus = build_corpus(&c.grid, &opts, c.corpus_seed)?;
            let hash = fsio::sha256_hex(encode_samples(&corpus)?.as_bytes());
            (corpus, hash)
        }
    };
    ctx.inputs.insert("corpus".into(), hash.clone());
    Ok((corpus, hash))
}

/// The corpus options that match a trained model.
fn options_for(ctx: &Ctx, params: &ModelParams, reflectance_range: (f64, f64)) -> CorpusOptions {
    CorpusOptions {
        window_len: params.window_len,
        feature_set: params.feature_set.clone(),
        reflectance_range,
        ..ctx.cfg.config.corpus.clone()
    }
}

fn load_model(ctx: &mut Ctx, path: &Path) -> Result<(SavedModel, String)> {
    let model = model_file::read_model(path)?;
    let hash = ctx.input_file("model", path)?;
    Ok((model, hash))
}

fn eval_options(threshold: f64, corpus: &Corpus) -> EvalOptions {
    EvalOptions {
        threshold,
        sampling_interval_m: corpus.sampling_interval_m,
        reflectance_range: corpus.reflectance_range,
    }
}

fn train(ctx: &mut Ctx, corpus_dir: Option<&Path>) -> Result<Value> {
    let (corpus, hash) = obtain_corpus(ctx, corpus_dir, None)?;
    let c = ctx.cfg.config.clone();
    let arch = otdr_core::nn::ArchSpec {
        n_aux: corpus.feature_set.len(),
        ..c.arch.clone()
    };
    let init = ModelParams::init(arch, corpus.feature_set.clone(), c.loss_weights, corpus.window_len, c.train.seed)?;
    let outcome = train_model_observed(&corpus, init, &c.train, |r| {
        eprintln!("epoch {:>3}  train {:.5}  val {:.5}", r.epoch, r.train_loss, r.val_loss);
    })?;
    let test = evaluate(&outcome.params, corpus.split(Split::Test), &eval_options(c.study.threshold, &corpus))?;
    let meta = ModelMeta {
        reflectance_range: corpus.reflectance_range,
        sampling_interval_m: corpus.sampling_interval_m,
        pulse_width_samples: corpus.pulse_width_samples,
        aux_source: c.corpus.aux_source,
        provenance: BTreeMap::from([
            ("corpus_sha256".to_string(), json!(hash)),
            ("train".to_string(), json!(c.train)),
            ("best_epoch".to_string(), json!(outcome.best_epoch)),
            ("epochs_run".to_string(), json!(outcome.curve.len())),
            ("tool_version".to_string(), json!(crate::TOOL_VERSION)),
        ]),
    };
    let model = SavedModel {
        params: outcome.params,
        meta,
    };
    let path = ctx.write(MODEL_FILE, &model_file::encode_model(&model))?;
    println!("wrote {}", path.display());
    let mut curve = String::from("epoch,train_loss,val_loss\n");
    for r in &outcome.curve {
        curve.push_str(&format!("{},{},{}\n", r.epoch, r.train_loss, r.val_loss));
    }
    let name = format!("train-curve-{}.csv", fsio::short_hash(&hash));
    let path = ctx.write(&name, curve.as_bytes())?;
    println!("wrote {}", path.display());
    println!(
        "test accuracy {}  position rmse {} m  reflectance rmse {} dB",
        fmt(test.accuracy),
        fmt(test.rmse_position_m),
        fmt(test.rmse_reflectance_db)
    );
    Ok(json!({
        "best_epoch": outcome.best_epoch,
        "epochs_run": outcome.curve.len(),
        "stopped_early": outcome.stopped_early,
        "test_metrics": test,
    }))
}

fn fmt(v: Option<f64>) -> String {
    v.map_or("n/a".into(), |x| format!("{x:.4}"))
}

fn evaluate_cmd(ctx: &mut Ctx, model: &Path, corpus_dir: Option<&Path>) -> Result<Value> {
    let (model, _) = load_model(ctx, model)?;
    let opts = options_for(ctx, &model.params, model.meta.reflectance_range);
    let (corpus, hash) = obtain_corpus(ctx, corpus_dir, Some(opts))?;
    let m = evaluate(&model.params, corpus.split(Split::Test), &eval_options(ctx.cfg.config.study.threshold, &corpus))?;
    let mut report = StudyReport::new(StudyKind::Evaluate, "split");
    report.push_metrics(0.0, "test", &m);
    report.set("threshold", ctx.cfg.config.study.threshold);
    ctx.report(&report, &hash)?;
    Ok(json!({ "test_metrics": m }))
}

fn plan_hash(value: &Value) -> String {
    fsio::sha256_hex(value.to_string().as_bytes())
}

fn need_model(kind: StudyKind, model: Option<&Path>) -> Result<&Path> {
    model.ok_or_else(|| Error::Config(format!("study {} needs a trained model (--model)", kind.name())))
}

fn study(ctx: &mut Ctx, kind: StudyKind, model: Option<&Path>, corpus_dir: Option<&Path>) -> Result<Value> {
    let c = ctx.cfg.config.clone();
    let plan = c.study_plan();
    let mut progress = |msg: &str| eprintln!("{msg}");
    let (report, hash) = match kind {
        StudyKind::Evaluate => return evaluate_cmd(ctx, need_model(kind, model)?, corpus_dir),
        StudyKind::CompareDetectors | StudyKind::AveragingTime => {
            return compare(ctx, need_model(kind, model)?, None);
        }
        StudyKind::SnrSweep => {
            let (saved, _) = load_model(ctx, need_model(kind, model)?)?;
            let (corpus, hash) = match corpus_dir {
                Some(_) => obtain_corpus(ctx, corpus_dir, None)?,
                None => {
                    let (corpus, hash) = sweep_corpus(&c, &options_for(ctx, &saved.params, saved.meta.reflectance_range))?;
                    ctx.inputs.insert("corpus".into(), hash.clone());
                    (corpus, hash)
                }
            };
            let mut report = snr_sweep(&saved.params, &corpus, &eval_options(c.study.threshold, &corpus))?;
            report.note("bins are round(snr_db) of the source trace's event");
            (report, hash)
        }
        StudyKind::FeatureAblation => {
            let report = feature_ablation(&plan, &c.study.feature_sets, &mut progress)?;
            (report, plan_hash(&json!({ "plan": plan, "sets": c.study.feature_sets })))
        }
        StudyKind::SequenceLength => {
            let report = sequence_length(&plan, &c.study.window_lens, &mut progress)?;
            (report, plan_hash(&json!({ "plan": plan, "lens": c.study.window_lens })))
        }
        StudyKind::Robustness => {
            let (saved, mhash) = load_model(ctx, need_model(kind, model)?)?;
            let scenarios = default_scenarios(&plan.grid);
            let report = robustness(&saved.params, &plan, &scenarios)?;
            (report, plan_hash(&json!({ "plan": plan, "model": mhash })))
        }
        StudyKind::SingleVsMulti => {
            let report = single_vs_multi(&plan, &mut progress)?;
            (report, plan_hash(&json!({ "plan": plan })))
        }
    };
    ctx.report(&report, &hash)?;
    Ok(json!({ "study": kind.name(), "rows": report.rows.len() }))
}

/// Stratified corpus scored by the SNR sweep, all windows in the test split.
pub fn sweep_corpus(c: &crate::config::RunConfig, opts: &CorpusOptions) -> Result<(Corpus, String)> {
    let grid = SimulationGrid {
        n_traces: c.study.sweep_traces,
        stratified_snr: true,
        ..c.grid.clone()
    };
    let mut corpus = build_corpus(&grid, opts, c.corpus_seed ^ 0x5EE9)?;
    corpus.tag_all(Split::Test);
    let hash = fsio::sha256_hex(encode_samples(&corpus)?.as_bytes());
    Ok((corpus, hash))
}

fn compare(ctx: &mut Ctx, model: &Path, pfa: Option<f64>) -> Result<Value> {
    let (saved, mhash) = load_model(ctx, model)?;
    let mut spec = ctx.cfg.config.compare.clone();
    if let Some(p) = pfa {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Config("--pfa must lie in (0, 1)".into()));
        }
        spec.target_pfa = p;
    }
    let averaging = ctx.cfg.config.averaging.clone();
    let hash = plan_hash(&json!({ "model": mhash, "compare": spec, "averaging": averaging }));
    let cal = calibrate_detectors(&saved.params, &spec)?;
    let cmp = compare_detectors(&saved.params, &spec, &cal)?;
    ctx.report(&cmp.report, &hash)?;
    let curve = averaging_time_curve(&saved.params, &averaging, &cal)?;
    ctx.report(&curve, &hash)?;
    for (k, v) in &cmp.held_out_pfa {
        println!("held-out false-alarm rate {k}: {v:.4}");
    }
    Ok(json!({ "calibration": cal, "held_out_pfa": cmp.held_out_pfa }))
}

fn detect_cmd(ctx: &mut Ctx, model: &Path, trace_path: &Path, opts: &DetectOptions) -> Result<Value> {
    let (saved, _) = load_model(ctx, model)?;
    let trace = trace_file::read_trace(trace_path)?;
    let thash = ctx.input_file("trace", trace_path)?;
    let report = detect_events(&saved, &trace, opts)?;
    let stem = format!("detect-{}", fsio::short_hash(&thash));
    let mut csv = String::from("position_m,position_index,reflectance_db,p_event,window_origin\n");
    for e in &report.events {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            e.position_m,
            e.position_index,
            e.reflectance_db.map(|r| r.to_string()).unwrap_or_default(),
            e.p_event,
            e.window_origin
        ));
    }
    ctx.write(&format!("{stem}.csv"), csv.as_bytes())?;
    let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
    text.push('\n');
    let path = ctx.write(&format!("{stem}.json"), text.as_bytes())?;
    if let Some(chk) = &report.integrity {
        println!(
            "link integrity at {} m: {} (p_event {:.3})",
            chk.reflector_pos_m,
            if chk.passed { "pass" } else { "FAIL" },
            chk.p_event
        );
    }
    if report.analysed {
        println!("{} event(s)", report.n_events);
        for e in &report.events {
            println!(
                "  {:>10.2} m  {:>8} dB  p={:.3}",
                e.position_m,
                e.reflectance_db.map_or("n/a".into(), |r| format!("{r:.1}")),
                e.p_event
            );
        }
    }
    println!("wrote {}", path.display());
    Ok(json!({ "n_events": report.n_events, "integrity": report.integrity }))
}
