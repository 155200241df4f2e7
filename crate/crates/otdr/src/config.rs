//! Run configuration: one JSON document with a section per stage. Every
//! field has a default, unknown keys are rejected, and `key=value`
//! overrides may name a key by its dotted path or by its leaf name.

use std::path::{Path, PathBuf};

use otdr_core::dataset::{CorpusOptions, FeatureSet, SimulationGrid};
use otdr_core::eval::{AveragingSpec, CompareSpec, StudyPlan};
use otdr_core::nn::{ArchSpec, LossWeights, TrainConfig};
use otdr_core::trace_sim::AcquisitionConfig;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::fsio;
use crate::trace_file::TraceEncoding;

/// A reflective event placed by `simulate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventSpec {
    pub position_m: f64,
    pub reflectance_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StudySettings {
    /// One model is trained per seed for every configuration.
    pub model_seeds: Vec<u64>,
    pub threshold: f64,
    pub feature_sets: Vec<FeatureSet>,
    pub window_lens: Vec<usize>,
    /// Traces of the stratified corpus scored by the SNR sweep.
    pub sweep_traces: usize,
}

impl Default for StudySettings {
    fn default() -> Self {
        StudySettings {
            model_seeds: vec![1, 2, 3, 4, 5],
            threshold: 0.5,
            feature_sets: FeatureSet::ablation_sets().to_vec(),
            window_lens: vec![35, 75, 100, 150, 200],
            sweep_traces: 5800,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectSettings {
    /// Defaults to half the window length.
    pub stride: Option<usize>,
    pub threshold: f64,
    /// Amplitude floor for candidates; `null` disables it.
    pub min_window_snr_db: Option<f64>,
    /// Run the full analysis even when the reflector check passes.
    pub full_analysis: bool,
}

impl Default for DetectSettings {
    fn default() -> Self {
        DetectSettings {
            stride: None,
            threshold: 0.5,
            min_window_snr_db: Some(crate::detect::DEFAULT_MIN_WINDOW_SNR_DB),
            full_analysis: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, replaces the seed of every stage.
    pub seed: Option<u64>,
    pub acquisition: AcquisitionConfig,
    pub events: Vec<EventSpec>,
    pub trace_encoding: TraceEncoding,
    pub grid: SimulationGrid,
    pub corpus: CorpusOptions,
    pub corpus_seed: u64,
    /// `n_aux` follows the corpus feature set.
    pub arch: ArchSpec,
    pub train: TrainConfig,
    pub loss_weights: LossWeights,
    pub study: StudySettings,
    pub compare: CompareSpec,
    pub averaging: AveragingSpec,
    pub detect: DetectSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            acquisition: AcquisitionConfig::default(),
            events: vec![EventSpec {
                position_m: 8785.0,
                reflectance_db: -40.0,
            }],
            trace_encoding: TraceEncoding::Binary,
            grid: SimulationGrid::default(),
            corpus: CorpusOptions::default(),
            corpus_seed: 1,
            arch: ArchSpec::default(),
            train: TrainConfig::default(),
            loss_weights: LossWeights::default(),
            study: StudySettings::default(),
            compare: CompareSpec::default(),
            averaging: AveragingSpec::default(),
            detect: DetectSettings::default(),
        }
    }
}

impl RunConfig {
    /// Folds `seed` into the stage seeds and derived fields.
    fn resolve(&mut self) {
        if let Some(s) = self.seed {
            self.acquisition.seed = s;
            self.corpus_seed = s;
            self.train.seed = s;
            self.compare.seed = s;
            self.averaging.seed = s;
        }
        self.arch.n_aux = self.corpus.feature_set.len();
    }

    pub fn validate(&self) -> Result<()> {
        let section = |name: &str, r: otdr_core::Result<()>| {
            r.map_err(|e| {
                let msg = match e {
                    otdr_core::Error::InvalidArgument(m) => m,
                    other => other.to_string(),
                };
                Error::Config(format!("{name}: {msg}"))
            })
        };
        let violated = |name: &str, rule: &str| Err(Error::Config(format!("{name}: {rule}")));
        section("acquisition", self.acquisition.validate())?;
        section("grid", self.grid.validate())?;
        section("compare.grid", self.compare.grid.validate())?;
        section("averaging.acquisition", self.averaging.acquisition.validate())?;
        section("arch", self.arch.validate())?;
        section("train", self.train.validate())?;
        let lw = self.loss_weights;
        if [lw.alpha, lw.beta, lw.delta].iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return violated("loss_weights", "weights must be finite and >= 0");
        }
        if self.corpus.window_len < 2 {
            return violated("corpus", "window_len must be >= 2");
        }
        if self.study.model_seeds.is_empty() {
            return violated("study", "model_seeds must not be empty");
        }
        for (name, t) in [("study", self.study.threshold), ("detect", self.detect.threshold)] {
            if !(t > 0.0 && t < 1.0) {
                return violated(name, "threshold must lie in (0, 1)");
            }
        }
        if self.detect.stride == Some(0) {
            return violated("detect", "stride must be >= 1");
        }
        if !(self.compare.target_pfa > 0.0 && self.compare.target_pfa < 1.0) {
            return violated("compare", "target_pfa must lie in (0, 1)");
        }
        if self.averaging.n_avg.contains(&0) {
            return violated("averaging", "n_avg values must be >= 1");
        }
        Ok(())
    }

    pub fn study_plan(&self) -> StudyPlan {
        StudyPlan {
            grid: self.grid.clone(),
            corpus: self.corpus.clone(),
            corpus_seed: self.corpus_seed,
            arch: self.arch.clone(),
            train: self.train.clone(),
            loss_weights: self.loss_weights,
            model_seeds: self.study.model_seeds.clone(),
            threshold: self.study.threshold,
        }
    }
}

/// The effective configuration of a command and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedConfig {
    pub config: RunConfig,
    pub source: Option<PathBuf>,
    pub overrides: Vec<String>,
}

impl LoadedConfig {
    /// What manifests echo.
    pub fn manifest_value(&self) -> Value {
        serde_json::json!({
            "effective": self.config,
            "overrides": self.overrides,
        })
    }
}

/// The documented defaults as pretty JSON.
pub fn defaults_json() -> String {
    let mut s = serde_json::to_string_pretty(&RunConfig::default()).expect("defaults serialize");
    s.push('\n');
    s
}

/// Reads `path` (or nothing), applies `overrides` and `seed`, validates.
/// `sections` lists the top-level sections a bare leaf name is looked up
/// in first.
pub fn load_config(
    path: Option<&Path>,
    overrides: &[String],
    seed: Option<u64>,
    sections: &[&str],
) -> Result<LoadedConfig> {
    let text = match path {
        Some(p) => fsio::read_string(p).map_err(|e| Error::Config(e.to_string()))?,
        None => String::new(),
    };
    let origin = path.map_or("<defaults>".to_string(), |p| p.display().to_string());
    let config = parse_config_text(&text, &origin)?;
    let mut tree = serde_json::to_value(&config).expect("config serializes");
    for o in overrides {
        apply_override(&mut tree, o, sections)?;
    }
    let mut config: RunConfig = serde_path_to_error::deserialize(tree)
        .map_err(|e| describe(&e, "override"))?;
    if seed.is_some() {
        config.seed = seed;
    }
    config.resolve();
    config.validate()?;
    Ok(LoadedConfig {
        config,
        source: path.map(Path::to_path_buf),
        overrides: overrides.to_vec(),
    })
}

/// Strict parse; an empty document means all defaults. Errors carry the
/// key path, the line and column, and the closest known key.
pub fn parse_config_text(text: &str, origin: &str) -> Result<RunConfig> {
    let text = if text.trim().is_empty() { "{}" } else { text };
    let mut de = serde_json::Deserializer::from_str(text);
    let config: RunConfig =
        serde_path_to_error::deserialize(&mut de).map_err(|e| describe(&e, origin))?;
    de.end().map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    Ok(config)
}

fn describe(e: &serde_path_to_error::Error<serde_json::Error>, origin: &str) -> Error {
    let inner = e.inner().to_string();
    let path = e.path().to_string();
    let mut msg = if path == "." || path.is_empty() {
        format!("{origin}: {inner}")
    } else {
        format!("{origin}: at `{path}`: {inner}")
    };
    if let Some(s) = suggestion(&inner) {
        msg.push_str(&format!(" (did you mean `{s}`?)"));
    }
    Error::Config(msg)
}

/// For serde's "unknown field `x`, expected one of `a`, `b`" messages.
fn suggestion(message: &str) -> Option<String> {
    if !message.starts_with("unknown field") && !message.starts_with("unknown variant") {
        return None;
    }
    let quoted: Vec<&str> = message.split('`').skip(1).step_by(2).collect();
    let (unknown, candidates) = quoted.split_first()?;
    nearest(unknown, candidates.iter().copied())
}

fn nearest<'a>(word: &str, candidates: impl Iterator<Item = &'a str>) -> Option<String> {
    candidates
        .map(|c| (strsim::levenshtein(word, c), c))
        .filter(|(d, c)| *d <= (c.len().max(word.len()) / 3).max(2))
        .min()
        .map(|(_, c)| c.to_string())
}

/// Every object key path in the tree.
fn key_paths(v: &Value, prefix: &mut Vec<String>, out: &mut Vec<Vec<String>>) {
    if let Value::Object(map) = v {
        for (k, child) in map {
            prefix.push(k.clone());
            out.push(prefix.clone());
            key_paths(child, prefix, out);
            prefix.pop();
        }
    }
}

fn resolve_key(tree: &Value, key: &str, sections: &[&str]) -> Result<Vec<String>> {
    let mut all = Vec::new();
    key_paths(tree, &mut Vec::new(), &mut all);
    if key.contains('.') {
        let path: Vec<String> = key.split('.').map(str::to_string).collect();
        if all.contains(&path) {
            return Ok(path);
        }
        let parent = &path[..path.len() - 1];
        let siblings = all
            .iter()
            .filter(|p| p.len() == path.len() && p[..p.len() - 1] == *parent)
            .map(|p| p.last().unwrap().as_str());
        let hint = nearest(path.last().unwrap(), siblings)
            .map(|s| format!(" (did you mean `{}.{s}`?)", parent.join(".")))
            .unwrap_or_default();
        return Err(Error::Config(format!("override: unknown key `{key}`{hint}")));
    }
    if tree.get(key).is_some() {
        return Ok(vec![key.to_string()]);
    }
    let matches: Vec<&Vec<String>> = all.iter().filter(|p| p.last().unwrap() == key).collect();
    let preferred: Vec<&Vec<String>> = matches
        .iter()
        .copied()
        .filter(|p| sections.contains(&p[0].as_str()))
        .collect();
    match (preferred.as_slice(), matches.as_slice()) {
        ([one], _) | ([], [one]) => Ok((*one).clone()),
        ([], []) => {
            let hint = nearest(key, all.iter().map(|p| p.last().unwrap().as_str()))
                .map(|s| format!(" (did you mean `{s}`?)"))
                .unwrap_or_default();
            Err(Error::Config(format!("override: unknown key `{key}`{hint}")))
        }
        ([], several) | (several, _) => Err(Error::Config(format!(
            "override: `{key}` is ambiguous, use one of {}",
            several
                .iter()
                .map(|p| format!("`{}`", p.join(".")))
                .collect::<Vec<_>>()
                .join(", ")
        ))),
    }
}

/// Applies one `key=value` override; the value is read as JSON when it
/// parses and as a plain string otherwise.
pub fn apply_override(tree: &mut Value, assignment: &str, sections: &[&str]) -> Result<()> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
    let path = resolve_key(tree, key.trim(), sections)?;
    let raw = raw.trim();
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = tree;
    for k in &path {
        node = node
            .as_object_mut()
            .and_then(|m: &mut Map<String, Value>| m.get_mut(k))
            .expect("resolved path exists");
    }
    *node = value;
    Ok(())
}
