//! A corpus on disk: `manifest.json` plus `samples.csv`, one window per row.
//!
//! Row layout: `split,window_origin,snr_db,id_class,position_target,
//! reflectance_target,other_positions,aux_<name>...,x0..x<L-1>`. Missing
//! values are empty cells; `other_positions` is `;`-separated. Floats are
//! written in shortest round-trip form so a reload is exact.

use std::path::Path;

use otdr_core::dataset::{Corpus, FeatureSet, Split, Targets, WindowSample};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsio;

pub const CORPUS_FORMAT: &str = "otdr-corpus";
pub const CORPUS_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub format: String,
    pub version: u32,
    pub window_len: usize,
    pub feature_set: FeatureSet,
    pub reflectance_range: (f64, f64),
    pub sampling_interval_m: f64,
    pub pulse_width_samples: usize,
    pub n_windows: usize,
    /// Train, validation and test counts.
    pub split_counts: (usize, usize, usize),
    pub samples_sha256: String,
    /// Settings the corpus was generated from, when known.
    pub generator: Option<serde_json::Value>,
    pub tool_version: String,
}

fn header(corpus: &Corpus) -> String {
    let mut cols: Vec<String> = [
        "split",
        "window_origin",
        "snr_db",
        "id_class",
        "position_target",
        "reflectance_target",
        "other_positions",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(corpus.feature_set.features().iter().map(|f| format!("aux_{}", f.name())));
    cols.extend((0..corpus.window_len).map(|i| format!("x{i}")));
    cols.join(",")
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn encode_samples(corpus: &Corpus) -> Result<String> {
    if corpus.split_tags.len() != corpus.samples.len() {
        return Err(Error::Data("corpus is not split".into()));
    }
    let mut out = header(corpus);
    out.push('\n');
    for (s, split) in corpus.samples.iter().zip(&corpus.split_tags) {
        let t = s.targets.as_ref();
        let mut row = vec![
            split.name().to_string(),
            s.window_origin.to_string(),
            s.snr_db.to_string(),
            t.map(|t| t.id_class.to_string()).unwrap_or_default(),
            opt(t.and_then(|t| t.position_target)),
            opt(t.and_then(|t| t.reflectance_target)),
            t.map(|t| {
                t.other_positions
                    .iter()
                    .map(|p| p.to_string())
                    .collect::<Vec<_>>()
                    .join(";")
            })
            .unwrap_or_default(),
        ];
        row.extend(s.aux.iter().map(|v| v.to_string()));
        row.extend(s.features.iter().map(|v| v.to_string()));
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

fn parse_f64(cell: &str, what: &str, line: usize) -> Result<f64> {
    cell.parse()
        .map_err(|_| Error::Data(format!("{SAMPLES_FILE} line {line}: bad {what} `{cell}`")))
}

fn parse_opt(cell: &str, what: &str, line: usize) -> Result<Option<f64>> {
    if cell.is_empty() {
        Ok(None)
    } else {
        parse_f64(cell, what, line).map(Some)
    }
}

pub fn decode_samples(text: &str, m: &CorpusManifest) -> Result<(Vec<WindowSample>, Vec<Split>)> {
    let n_aux = m.feature_set.len();
    let width = 7 + n_aux + m.window_len;
    let mut lines = text.lines();
    let head = lines.next().unwrap_or_default();
    if head.split(',').count() != width {
        return Err(Error::Data(format!(
            "{SAMPLES_FILE}: header has {} columns, the manifest implies {width}",
            head.split(',').count()
        )));
    }
    let mut samples = Vec::with_capacity(m.n_windows);
    let mut tags = Vec::with_capacity(m.n_windows);
    for (i, line) in lines.enumerate() {
        let ln = i + 2;
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != width {
            return Err(Error::Data(format!(
                "{SAMPLES_FILE} line {ln}: {} columns, expected {width}",
                cells.len()
            )));
        }
        let split: Split = cells[0]
            .parse()
            .map_err(|e| Error::Data(format!("{SAMPLES_FILE} line {ln}: {e}")))?;
        let window_origin = cells[1]
            .parse()
            .map_err(|_| Error::Data(format!("{SAMPLES_FILE} line {ln}: bad window_origin")))?;
        let snr_db = parse_f64(cells[2], "snr_db", ln)?;
        let targets = match cells[3] {
            "" => None,
            c => {
                let id_class = c
                    .parse()
                    .map_err(|_| Error::Data(format!("{SAMPLES_FILE} line {ln}: bad id_class `{c}`")))?;
                let other_positions = if cells[6].is_empty() {
                    Vec::new()
                } else {
                    cells[6]
                        .split(';')
                        .map(|p| parse_f64(p, "other_positions", ln))
                        .collect::<Result<_>>()?
                };
                Some(Targets {
                    id_class,
                    position_target: parse_opt(cells[4], "position_target", ln)?,
                    reflectance_target: parse_opt(cells[5], "reflectance_target", ln)?,
                    other_positions,
                })
            }
        };
        let aux = cells[7..7 + n_aux]
            .iter()
            .map(|c| parse_f64(c, "aux value", ln))
            .collect::<Result<_>>()?;
        let features = cells[7 + n_aux..]
            .iter()
            .map(|c| parse_f64(c, "sample", ln))
            .collect::<Result<_>>()?;
        samples.push(WindowSample {
            features,
            aux,
            targets,
            window_origin,
            snr_db,
        });
        tags.push(split);
    }
    if samples.len() != m.n_windows {
        return Err(Error::Data(format!(
            "{SAMPLES_FILE}: {} windows, the manifest announces {}",
            samples.len(),
            m.n_windows
        )));
    }
    Ok((samples, tags))
}

/// Writes the corpus and returns its manifest.
pub fn write_corpus(dir: &Path, corpus: &Corpus, generator: Option<serde_json::Value>) -> Result<CorpusManifest> {
    let text = encode_samples(corpus)?;
    let manifest = CorpusManifest {
        format: CORPUS_FORMAT.into(),
        version: CORPUS_VERSION,
        window_len: corpus.window_len,
        feature_set: corpus.feature_set.clone(),
        reflectance_range: corpus.reflectance_range,
        sampling_interval_m: corpus.sampling_interval_m,
        pulse_width_samples: corpus.pulse_width_samples,
        n_windows: corpus.len(),
        split_counts: corpus.split_counts(),
        samples_sha256: fsio::sha256_hex(text.as_bytes()),
        generator,
        tool_version: crate::TOOL_VERSION.into(),
    };
    fsio::write_atomic(&dir.join(SAMPLES_FILE), text.as_bytes())?;
    fsio::write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

/// Loads and verifies a corpus directory.
pub fn read_corpus(dir: &Path) -> Result<(Corpus, CorpusManifest)> {
    let mpath = dir.join(MANIFEST_FILE);
    let manifest: CorpusManifest = serde_json::from_str(&fsio::read_string(&mpath)?)
        .map_err(|e| Error::Data(format!("{}: {e}", mpath.display())))?;
    if manifest.format != CORPUS_FORMAT || manifest.version != CORPUS_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported corpus format {} v{}",
            mpath.display(),
            manifest.format,
            manifest.version
        )));
    }
    let text = fsio::read_string(&dir.join(SAMPLES_FILE))?;
    if fsio::sha256_hex(text.as_bytes()) != manifest.samples_sha256 {
        return Err(Error::Data(format!(
            "{}: samples do not match the manifest checksum",
            dir.display()
        )));
    }
    let (samples, split_tags) = decode_samples(&text, &manifest)?;
    let corpus = Corpus {
        samples,
        split_tags,
        feature_set: manifest.feature_set.clone(),
        window_len: manifest.window_len,
        reflectance_range: manifest.reflectance_range,
        sampling_interval_m: manifest.sampling_interval_m,
        pulse_width_samples: manifest.pulse_width_samples,
    };
    Ok((corpus, manifest))
}
