use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, improvement_delta, score_windows, summarize, EvalOptions, Metrics, WindowScore};
use super::report::{StudyKind, StudyReport};
use crate::dataset::{build_corpus, scenarios, Corpus, CorpusOptions, FeatureSet, SimulationGrid, Split};
use crate::error::{Error, Result};
use crate::math;
use crate::nn::{train_model, ArchSpec, LossWeights, ModelParams, Task, TrainConfig};

/// Everything needed to train and evaluate the models of a study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudyPlan {
    pub grid: SimulationGrid,
    pub corpus: CorpusOptions,
    pub corpus_seed: u64,
    /// Template; `n_aux` and `tasks` are set per model.
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub loss_weights: LossWeights,
    /// One trained model per seed and configuration.
    pub model_seeds: Vec<u64>,
    pub threshold: f64,
}

impl Default for StudyPlan {
    fn default() -> Self {
        StudyPlan {
            grid: SimulationGrid::default(),
            corpus: CorpusOptions::default(),
            corpus_seed: 1,
            arch: ArchSpec::default(),
            train: TrainConfig::default(),
            loss_weights: LossWeights::default(),
            model_seeds: alloc::vec![1, 2, 3, 4, 5],
            threshold: 0.5,
        }
    }
}

impl StudyPlan {
    pub fn eval_options(&self, corpus: &Corpus) -> EvalOptions {
        EvalOptions {
            threshold: self.threshold,
            sampling_interval_m: corpus.sampling_interval_m,
            reflectance_range: corpus.reflectance_range,
        }
    }

    fn check(&self) -> Result<()> {
        if self.model_seeds.is_empty() {
            return Err(Error::Configuration("study plan lists no model seeds".into()));
        }
        self.grid.validate()?;
        self.train.validate()
    }
}

/// Initializes with `seed` and trains on `corpus` (training shuffles also use `seed`).
pub fn train_seeded(
    corpus: &Corpus,
    arch: &ArchSpec,
    loss_weights: LossWeights,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<ModelParams> {
    let arch = ArchSpec {
        n_aux: corpus.feature_set.len(),
        ..arch.clone()
    };
    let init = ModelParams::init(arch, corpus.feature_set.clone(), loss_weights, corpus.window_len, seed)?;
    let cfg = TrainConfig { seed, ..cfg.clone() };
    Ok(train_model(corpus, init, &cfg)?.params)
}

/// Integer-dB bin of an SNR value (bins are centred on integers).
pub fn snr_bin(snr_db: f64) -> i64 {
    math::round(snr_db) as i64
}

/// Metrics per integer-dB SNR bin of the windows' ground-truth SNR.
pub fn snr_sweep_scores(scores: &[WindowScore]) -> Vec<(i64, Metrics)> {
    let mut bins: Vec<i64> = scores.iter().filter(|s| s.snr_db.is_finite()).map(|s| snr_bin(s.snr_db)).collect();
    bins.sort_unstable();
    bins.dedup();
    bins.into_iter()
        .map(|b| {
            let m = summarize(scores.iter().filter(|s| s.snr_db.is_finite() && snr_bin(s.snr_db) == b));
            (b, m)
        })
        .collect()
}

/// SNR sweep of a trained model over the test split of `corpus`.
pub fn snr_sweep(params: &ModelParams, corpus: &Corpus, opts: &EvalOptions) -> Result<StudyReport> {
    let scores = score_windows(params, corpus.split(Split::Test), opts)?;
    let mut report = StudyReport::new(StudyKind::SnrSweep, "snr_db");
    for (bin, m) in snr_sweep_scores(&scores) {
        report.push_metrics(bin as f64, "", &m);
    }
    report.set("threshold", opts.threshold);
    report.set("feature_set", &params.feature_set);
    report.set("window_len", params.window_len);
    Ok(report)
}

struct SeedMetrics {
    accuracy: Vec<f64>,
    rmse_position_m: Vec<f64>,
    rmse_reflectance_db: Vec<f64>,
    mae_position_m: Vec<f64>,
    mae_reflectance_db: Vec<f64>,
    f1: Vec<f64>,
    precision: Vec<f64>,
    recall: Vec<f64>,
}

impl SeedMetrics {
    fn new() -> Self {
        SeedMetrics {
            accuracy: Vec::new(),
            rmse_position_m: Vec::new(),
            rmse_reflectance_db: Vec::new(),
            mae_position_m: Vec::new(),
            mae_reflectance_db: Vec::new(),
            f1: Vec::new(),
            precision: Vec::new(),
            recall: Vec::new(),
        }
    }

    fn add(&mut self, m: &Metrics) {
        self.accuracy.extend(m.accuracy);
        self.precision.extend(m.precision);
        self.recall.extend(m.recall);
        self.f1.extend(m.f1);
        self.rmse_position_m.extend(m.rmse_position_m);
        self.mae_position_m.extend(m.mae_position_m);
        self.rmse_reflectance_db.extend(m.rmse_reflectance_db);
        self.mae_reflectance_db.extend(m.mae_reflectance_db);
    }

    fn push(&self, report: &mut StudyReport, axis: f64, label: &str) {
        for (name, values) in [
            ("accuracy", &self.accuracy),
            ("precision", &self.precision),
            ("recall", &self.recall),
            ("f1", &self.f1),
            ("rmse_position_m", &self.rmse_position_m),
            ("mae_position_m", &self.mae_position_m),
            ("rmse_reflectance_db", &self.rmse_reflectance_db),
            ("mae_reflectance_db", &self.mae_reflectance_db),
        ] {
            if !values.is_empty() {
                report.push_seed_summary(axis, label, name, values);
            }
        }
    }

    /// Mean of each metric, for the delta computation.
    fn means(&self) -> Metrics {
        let avg = |v: &Vec<f64>| (!v.is_empty()).then(|| math::mean(v));
        Metrics {
            counts: Default::default(),
            accuracy: avg(&self.accuracy),
            accuracy_interval: None,
            precision: avg(&self.precision),
            recall: avg(&self.recall),
            f1: avg(&self.f1),
            rmse_position_m: avg(&self.rmse_position_m),
            mae_position_m: avg(&self.mae_position_m),
            rmse_reflectance_db: avg(&self.rmse_reflectance_db),
            mae_reflectance_db: avg(&self.mae_reflectance_db),
            n_positive: 0,
        }
    }
}

fn train_and_score(
    plan: &StudyPlan,
    corpus: &Corpus,
    arch: &ArchSpec,
    progress: &mut dyn FnMut(&str),
    what: &str,
) -> Result<SeedMetrics> {
    let mut out = SeedMetrics::new();
    let opts = plan.eval_options(corpus);
    for &seed in &plan.model_seeds {
        progress(&format!("training {what} (seed {seed})"));
        let params = train_seeded(corpus, arch, plan.loss_weights, &plan.train, seed)?;
        out.add(&evaluate(&params, corpus.split(Split::Test), &opts)?);
    }
    Ok(out)
}

fn provenance(report: &mut StudyReport, plan: &StudyPlan) {
    report.set("corpus_seed", plan.corpus_seed);
    report.set("model_seeds", format!("{:?}", plan.model_seeds));
    report.set("n_traces", plan.grid.n_traces);
    report.set("window_len", plan.corpus.window_len);
    report.set("max_epochs", plan.train.max_epochs);
    report.set("threshold", plan.threshold);
    report.note("values are means over model seeds; bounds are mean ± population std across seeds");
}

/// Trains one model per feature set and seed on otherwise identical corpora.
pub fn feature_ablation(
    plan: &StudyPlan,
    sets: &[FeatureSet],
    progress: &mut dyn FnMut(&str),
) -> Result<StudyReport> {
    plan.check()?;
    let mut report = StudyReport::new(StudyKind::FeatureAblation, "feature_set_index");
    for (i, fs) in sets.iter().enumerate() {
        let opts = CorpusOptions {
            feature_set: fs.clone(),
            ..plan.corpus.clone()
        };
        let corpus = build_corpus(&plan.grid, &opts, plan.corpus_seed)?;
        let m = train_and_score(plan, &corpus, &plan.arch, progress, &format!("feature set {fs}"))?;
        m.push(&mut report, i as f64, &String::from(fs.clone()));
    }
    provenance(&mut report, plan);
    Ok(report)
}

/// Retrains at each window length.
pub fn sequence_length(
    plan: &StudyPlan,
    lengths: &[usize],
    progress: &mut dyn FnMut(&str),
) -> Result<StudyReport> {
    plan.check()?;
    let mut sorted = lengths.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let mut report = StudyReport::new(StudyKind::SequenceLength, "window_len");
    for &len in &sorted {
        let opts = CorpusOptions {
            window_len: len,
            ..plan.corpus.clone()
        };
        let corpus = build_corpus(&plan.grid, &opts, plan.corpus_seed)?;
        let m = train_and_score(plan, &corpus, &plan.arch, progress, &format!("window length {len}"))?;
        m.push(&mut report, len as f64, "");
    }
    provenance(&mut report, plan);
    Ok(report)
}

/// A named evaluation-only grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub grid: SimulationGrid,
}

/// The three robustness scenarios derived from a training grid.
pub fn default_scenarios(base: &SimulationGrid) -> Vec<Scenario> {
    alloc::vec![
        Scenario { name: "high_snr".into(), grid: scenarios::high_snr(base) },
        Scenario { name: "low_reflectance".into(), grid: scenarios::low_reflectance(base) },
        Scenario { name: "two_event".into(), grid: scenarios::two_event(base) },
    ]
}

/// Evaluates a trained model on every scenario corpus (all windows scored).
pub fn robustness(
    params: &ModelParams,
    plan: &StudyPlan,
    scenarios: &[Scenario],
) -> Result<StudyReport> {
    let mut report = StudyReport::new(StudyKind::Robustness, "scenario_index");
    let opts = CorpusOptions {
        window_len: params.window_len,
        feature_set: params.feature_set.clone(),
        ..plan.corpus.clone()
    };
    for (i, s) in scenarios.iter().enumerate() {
        let mut corpus = build_corpus(&s.grid, &opts, plan.corpus_seed ^ 0x5CE0)?;
        corpus.tag_all(Split::Test);
        let m = evaluate(params, &corpus.samples, &plan.eval_options(&corpus))?;
        report.push_metrics(i as f64, &s.name, &m);
    }
    report.set("corpus_seed", plan.corpus_seed ^ 0x5CE0);
    report.set("threshold", plan.threshold);
    report.note("two-event windows score position against the nearest true event");
    Ok(report)
}

/// Multitask model against one single-head model per task, matched width,
/// same corpus and seeds. Axis 0 is the multitask model, 1..=3 the single
/// task models, 4 the improvement of multitask over the single-task models.
pub fn single_vs_multi(plan: &StudyPlan, progress: &mut dyn FnMut(&str)) -> Result<StudyReport> {
    plan.check()?;
    let corpus = build_corpus(&plan.grid, &plan.corpus, plan.corpus_seed)?;
    let mut report = StudyReport::new(StudyKind::SingleVsMulti, "model_index");
    let multi_arch = ArchSpec {
        tasks: Task::ALL.to_vec(),
        ..plan.arch.clone()
    };
    let multi = train_and_score(plan, &corpus, &multi_arch, progress, "multitask")?;
    multi.push(&mut report, 0.0, "multitask");
    let mut single = SeedMetrics::new();
    for (k, task) in Task::ALL.into_iter().enumerate() {
        let arch = ArchSpec {
            tasks: alloc::vec![task],
            ..plan.arch.clone()
        };
        let m = train_and_score(plan, &corpus, &arch, progress, &format!("single-task {}", task.name()))?;
        m.push(&mut report, (k + 1) as f64, &format!("single_{}", task.name()));
        match task {
            Task::Detection => {
                single.accuracy = m.accuracy;
                single.precision = m.precision;
                single.recall = m.recall;
                single.f1 = m.f1;
            }
            Task::Position => {
                single.rmse_position_m = m.rmse_position_m;
                single.mae_position_m = m.mae_position_m;
            }
            Task::Reflectance => {
                single.rmse_reflectance_db = m.rmse_reflectance_db;
                single.mae_reflectance_db = m.mae_reflectance_db;
            }
        }
    }
    for d in improvement_delta(&multi.means(), &single.means()) {
        report.push(4.0, "delta", d.metric, d.delta);
    }
    provenance(&mut report, plan);
    report.note("delta: classification metrics as multi - single, error metrics as 1 - multi/single");
    Ok(report)
}
